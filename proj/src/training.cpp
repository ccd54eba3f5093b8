#include "svdcnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace svdcnn {

void TrainConfig::validate() const {
  if (!(lr >= 0)) throw ArgumentError("lr must be non-negative");
  if (!(momentum >= 0 && momentum < 1)) throw ArgumentError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ArgumentError("weight_decay must be non-negative");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (max_epochs < 0) throw ArgumentError("max_epochs must be >= 0");
  if (eval_every < 1) throw ArgumentError("eval_every must be >= 1");
}

template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const std::int32_t> labels,
                             Tape<Scalar>* tape) {
  if (logits.rank() != 2) {
    throw ShapeError("cross_entropy: logits must be [B x C], got " + to_string(logits.shape()));
  }
  const Index batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<Index>(labels.size()) != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ArgumentError("cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                          std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }

  const Scalar* z = logits.data().data();
  std::vector<Scalar> probs(static_cast<std::size_t>(batch * classes));
  double total = 0;
  for (Index b = 0; b < batch; ++b) {
    const Scalar* row = z + b * classes;
    const Scalar peak = *std::max_element(row, row + classes);
    double norm = 0;
    for (Index c = 0; c < classes; ++c) norm += std::exp(static_cast<double>(row[c] - peak));
    for (Index c = 0; c < classes; ++c) {
      probs[static_cast<std::size_t>(b * classes + c)] =
          static_cast<Scalar>(std::exp(static_cast<double>(row[c] - peak)) / norm);
    }
    total += std::log(norm) - static_cast<double>(row[labels[static_cast<std::size_t>(b)]] - peak);
  }
  Tensor<Scalar> loss = Tensor<Scalar>::scalar(static_cast<Scalar>(total / static_cast<double>(batch)));

  if (recording(tape, logits)) {
    std::vector<std::int32_t> saved(labels.begin(), labels.end());
    tape->record("cross_entropy", loss,
                 [logits, probs = std::move(probs), saved = std::move(saved), batch,
                  classes](std::span<const Scalar> g) mutable {
                   auto dz = logits.grad_buffer();
                   const Scalar scale = g[0] / static_cast<Scalar>(batch);
                   for (Index b = 0; b < batch; ++b) {
                     for (Index c = 0; c < classes; ++c) {
                       const std::size_t i = static_cast<std::size_t>(b * classes + c);
                       const Scalar target = saved[static_cast<std::size_t>(b)] == c ? 1 : 0;
                       dz[i] += scale * (probs[i] - target);
                     }
                   }
                 });
  }
  return loss;
}

template <typename Scalar>
void sgd_step(std::span<Tensor<Scalar>> params, OptimizerState<Scalar>& state,
              const TrainConfig& config) {
  if (state.velocity.empty()) {
    for (const auto& p : params) state.velocity.emplace_back(static_cast<std::size_t>(p.size()), Scalar(0));
  }
  if (state.velocity.size() != params.size()) {
    throw StateError("sgd_step: optimizer state tracks " + std::to_string(state.velocity.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  const auto lr = static_cast<Scalar>(config.lr);
  const auto momentum = static_cast<Scalar>(config.momentum);
  const auto decay = static_cast<Scalar>(config.weight_decay);
  for (std::size_t n = 0; n < params.size(); ++n) {
    if (!params[n].has_grad()) {
      throw StateError("sgd_step: parameter #" + std::to_string(n) + " has no gradient");
    }
  }
  for (std::size_t n = 0; n < params.size(); ++n) {
    auto p = params[n].mutable_data();
    auto g = params[n].grad();
    auto& v = state.velocity[n];
    if (v.size() != p.size()) throw StateError("sgd_step: velocity shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] + (g[i] + decay * p[i]);
      p[i] -= lr * v[i];
    }
  }
}

template <typename Scalar>
std::vector<std::int32_t> argmax_rows(const Tensor<Scalar>& logits) {
  const Index batch = logits.dim(0), classes = logits.dim(1);
  std::vector<std::int32_t> out(static_cast<std::size_t>(batch));
  const Scalar* z = logits.data().data();
  for (Index b = 0; b < batch; ++b) {
    const Scalar* row = z + b * classes;
    out[static_cast<std::size_t>(b)] =
        static_cast<std::int32_t>(std::max_element(row, row + classes) - row);
  }
  return out;
}

template <typename Scalar>
double evaluate(Model<Scalar>& model, const Dataset& dataset, Index batch_size) {
  if (dataset.samples.empty()) throw ArgumentError("evaluate: empty dataset");
  const Mode previous = model.mode();
  model.set_mode(Mode::eval);
  Index correct = 0;
  for (const auto& batch : sequential_batches(dataset, batch_size)) {
    const auto predicted = argmax_rows(model.forward(batch.inputs));
    for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == batch.labels[i];
  }
  model.set_mode(previous);
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

namespace {

void check_compatible(const ArchitectureSpec& spec, const Dataset& data, const char* role) {
  if (data.samples.empty()) throw ArgumentError(std::string("train: empty ") + role + " set");
  if (data.n_classes != spec.n_classes) {
    throw ArgumentError(std::string("train: ") + role + " set has " +
                        std::to_string(data.n_classes) + " classes, model has " +
                        std::to_string(spec.n_classes));
  }
  if (data.seq_len != spec.seq_len) {
    throw ArgumentError(std::string("train: ") + role + " set sequence length " +
                        std::to_string(data.seq_len) + " differs from model's " +
                        std::to_string(spec.seq_len));
  }
}

}  // namespace

template <typename Scalar>
TrainResult train(Model<Scalar>& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  check_compatible(model.spec(), train_set, "training");
  check_compatible(model.spec(), val_set, "validation");

  TrainResult result;
  {
    // Measured on a replica so the running statistics of `model` stay untouched.
    constexpr std::size_t kProbeBatches = 4;
    Model<Scalar> probe = model.clone();
    probe.set_mode(Mode::train);
    double sum = 0;
    Index seen = 0;
    const auto batches = make_batches(train_set, config.batch_size, config.seed);
    for (std::size_t i = 0; i < batches.size() && i < kProbeBatches; ++i) {
      if (batches[i].inputs.batch < 2) continue;
      const auto loss = cross_entropy(probe.forward(batches[i].inputs),
                                      std::span<const std::int32_t>(batches[i].labels));
      sum += static_cast<double>(loss.item()) * static_cast<double>(batches[i].inputs.batch);
      seen += batches[i].inputs.batch;
    }
    result.initial_loss = seen ? sum / static_cast<double>(seen) : std::nan("");
  }

  OptimizerState<Scalar> optimizer;
  std::vector<Tensor<Scalar>> params = model.parameters();
  Model<Scalar> best = model.clone();
  result.best_val_accuracy = -1.0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    model.set_mode(Mode::train);
    const auto batches =
        make_batches(train_set, config.batch_size, config.seed + static_cast<std::uint64_t>(epoch));
    double loss_sum = 0;
    Index seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Batch& batch = batches[b];
      if (batch.inputs.batch < 2) continue;
      model.zero_grad();
      Tape<Scalar> tape;
      const auto loss = cross_entropy(model.forward(batch.inputs, &tape),
                                      std::span<const std::int32_t>(batch.labels), &tape);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite loss " << value << " at epoch " << epoch << ", batch " << b;
        throw TrainingError(msg.str(), epoch, b, value);
      }
      tape.backward(loss);
      sgd_step(std::span<Tensor<Scalar>>(params), optimizer, config);
      loss_sum += value * static_cast<double>(batch.inputs.batch);
      seen += batch.inputs.batch;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = seen ? loss_sum / static_cast<double>(seen) : std::nan("");
    record.val_accuracy = std::numeric_limits<double>::quiet_NaN();
    if (epoch % config.eval_every == 0 || epoch == config.max_epochs) {
      record.val_accuracy = evaluate(model, val_set, config.batch_size);
      if (record.val_accuracy > result.best_val_accuracy) {
        result.best_val_accuracy = record.val_accuracy;
        result.best_epoch = epoch;
        best = model.clone();
      }
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }

  model.zero_grad();
  if (result.best_epoch > 0) model = std::move(best);
  model.set_mode(Mode::eval);
  if (result.best_val_accuracy < 0) result.best_val_accuracy = 0;
  return result;
}

#define SVDCNN_INSTANTIATE_TRAINING(S)                                                         \
  template Tensor<S> cross_entropy<S>(const Tensor<S>&, std::span<const std::int32_t>,          \
                                      Tape<S>*);                                               \
  template void sgd_step<S>(std::span<Tensor<S>>, OptimizerState<S>&, const TrainConfig&);     \
  template std::vector<std::int32_t> argmax_rows<S>(const Tensor<S>&);                         \
  template double evaluate<S>(Model<S>&, const Dataset&, Index);                               \
  template TrainResult train<S>(Model<S>&, const Dataset&, const Dataset&, const TrainConfig&, \
                                const EpochCallback&);

SVDCNN_INSTANTIATE_TRAINING(float)
SVDCNN_INSTANTIATE_TRAINING(double)

}  // namespace svdcnn
