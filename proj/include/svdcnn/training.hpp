#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "svdcnn/architecture.hpp"
#include "svdcnn/data.hpp"

namespace svdcnn {

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.001;
  Index batch_size = 64;
  int max_epochs = 100;
  std::uint64_t seed = 0;
  int eval_every = 1;

  void validate() const;
};

/// Mean over the batch of -log softmax(logits)[label]. logits [B x C].
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const std::int32_t> labels,
                             Tape<Scalar>* tape = nullptr);

/// Per-parameter velocity, zero until the first step.
template <typename Scalar>
struct OptimizerState {
  std::vector<std::vector<Scalar>> velocity;
};

/// g = grad + wd * p;  v = momentum * v + g;  p -= lr * v.
/// Every parameter must carry a gradient.
template <typename Scalar>
void sgd_step(std::span<Tensor<Scalar>> params, OptimizerState<Scalar>& state,
              const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;  // NaN for epochs without evaluation
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double initial_loss = 0.0;  // train-mode loss before the first update
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled mini-batch SGD for `config.max_epochs` epochs. Batches of one
/// sample are skipped (batch norm cannot normalize them). On return the model
/// holds the weights of the best-validating epoch and is in eval mode.
template <typename Scalar>
TrainResult train(Model<Scalar>& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Eval-mode argmax accuracy; ties go to the lowest class index.
template <typename Scalar>
double evaluate(Model<Scalar>& model, const Dataset& dataset, Index batch_size = 64);

/// Index of the largest entry in each row of [B x C] logits.
template <typename Scalar>
std::vector<std::int32_t> argmax_rows(const Tensor<Scalar>& logits);

}  // namespace svdcnn
