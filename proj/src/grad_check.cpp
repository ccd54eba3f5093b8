#include "svdcnn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace svdcnn {

namespace {

template <typename Scalar>
double evaluate(const LossFn<Scalar>& loss_fn) {
  Tape<Scalar> tape;
  tape.set_check_finite(true);
  const Tensor<Scalar> loss = loss_fn(tape);
  if (!loss.is_scalar()) throw StateError("grad_check: loss is not a scalar");
  return static_cast<double>(loss.item());
}

}  // namespace

template <typename Scalar>
GradCheckReport grad_check(const LossFn<Scalar>& loss_fn, std::span<Tensor<Scalar>> inputs,
                           Scalar eps, const GradCheckOptions& options) {
  if (!(eps > 0) || eps > Scalar(0.1)) throw ArgumentError("grad_check: eps must lie in (0, 0.1]");

  std::vector<bool> had_grad_flag;
  for (auto& t : inputs) {
    had_grad_flag.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }

  {
    Tape<Scalar> tape;
    tape.set_check_finite(true);
    const Tensor<Scalar> loss = loss_fn(tape);
    tape.backward(loss);
  }

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    Tensor<Scalar>& t = inputs[n];
    std::vector<Scalar> analytic = t.has_grad()
                                       ? std::vector<Scalar>(t.grad().begin(), t.grad().end())
                                       : std::vector<Scalar>(static_cast<std::size_t>(t.size()), 0);
    std::vector<Index> entries(static_cast<std::size_t>(t.size()));
    std::iota(entries.begin(), entries.end(), Index{0});
    if (options.max_entries_per_input > 0 &&
        options.max_entries_per_input < static_cast<Index>(entries.size())) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(static_cast<std::size_t>(options.max_entries_per_input));
    }

    auto values = t.mutable_data();
    for (Index e : entries) {
      const Scalar original = values[static_cast<std::size_t>(e)];
      values[static_cast<std::size_t>(e)] = original + eps;
      const double plus = evaluate(loss_fn);
      values[static_cast<std::size_t>(e)] = original - eps;
      const double minus = evaluate(loss_fn);
      values[static_cast<std::size_t>(e)] = original;

      const double numeric = (plus - minus) / (2.0 * static_cast<double>(eps));
      const double a = static_cast<double>(analytic[static_cast<std::size_t>(e)]);
      const double scale = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / scale;
      ++report.entries_checked;
      if (rel > report.max_rel_error || report.entries_checked == 1) {
        report.max_rel_error = std::max(rel, report.max_rel_error);
        if (rel >= report.max_rel_error) {
          report.worst_input = n;
          report.worst_entry = e;
          report.worst_analytic = a;
          report.worst_numeric = numeric;
        }
      }
    }
  }

  for (std::size_t n = 0; n < inputs.size(); ++n) inputs[n].set_requires_grad(had_grad_flag[n]);
  return report;
}

template GradCheckReport grad_check<float>(const LossFn<float>&, std::span<Tensor<float>>, float,
                                           const GradCheckOptions&);
template GradCheckReport grad_check<double>(const LossFn<double>&, std::span<Tensor<double>>,
                                            double, const GradCheckOptions&);

}  // namespace svdcnn
