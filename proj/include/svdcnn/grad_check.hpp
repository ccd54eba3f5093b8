#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "svdcnn/tensor.hpp"

namespace svdcnn {

template <typename Scalar>
using LossFn = std::function<Tensor<Scalar>(Tape<Scalar>&)>;

struct GradCheckOptions {
  // 0 checks every entry; otherwise a seeded random subset per input.
  Index max_entries_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  Index worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central differences.
///
/// The relative error per entry is |analytic - numeric| / max(|analytic|,
/// |numeric|, 1e-8); the report carries the maximum. `loss_fn` must rebuild
/// the loss from the current contents of `inputs` on every call. Inputs are
/// restored bit-for-bit afterwards; their gradients hold the analytic result.
template <typename Scalar>
GradCheckReport grad_check(const LossFn<Scalar>& loss_fn, std::span<Tensor<Scalar>> inputs,
                           Scalar eps, const GradCheckOptions& options = {});

}  // namespace svdcnn
