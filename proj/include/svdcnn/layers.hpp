#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svdcnn/ops.hpp"

namespace svdcnn {

enum class Mode { train, eval };

/// What a stored array is, for accounting and optimization. Buffers are
/// persisted but never learned.
enum class ParamCategory { embedding, conv, batchnorm, fc, buffer };

const char* to_string(ParamCategory category);

/// Row-major batch of character ids, [batch x length].
struct IndexBatch {
  Index batch = 0;
  Index length = 0;
  std::vector<std::int32_t> ids;
};

template <typename Scalar>
struct Embedding {
  Embedding() = default;
  Embedding(Index vocab_size, Index dim);

  Index vocab_size() const { return table.dim(0); }
  Index dim() const { return table.dim(1); }

  // [V x f0]; row 0 is the padding row and receives no gradient.
  Tensor<Scalar> table;

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    f(prefix + "table", ParamCategory::embedding, table);
  }
};

/// Single sequence -> [f0 x s].
template <typename Scalar>
Tensor<Scalar> embedding_forward(std::span<const std::int32_t> indices,
                                 const Embedding<Scalar>& embedding, Tape<Scalar>* tape = nullptr);

/// Batch -> [B x f0 x s].
template <typename Scalar>
Tensor<Scalar> embedding_forward(const IndexBatch& batch, const Embedding<Scalar>& embedding,
                                 Tape<Scalar>* tape = nullptr);

/// Per-channel normalization over batch and time.
template <typename Scalar>
struct BatchNorm {
  BatchNorm() = default;
  explicit BatchNorm(Index channels);

  Index channels() const { return gamma.dim(0); }

  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  Scalar eps = Scalar(1e-5);
  Mode mode = Mode::train;

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    f(prefix + "gamma", ParamCategory::batchnorm, gamma);
    f(prefix + "beta", ParamCategory::batchnorm, beta);
    f(prefix + "running_mean", ParamCategory::buffer, running_mean);
    f(prefix + "running_var", ParamCategory::buffer, running_var);
  }
};

// Train mode uses batch statistics (biased variance) and folds them into the
// running estimates (unbiased variance); eval mode uses the running estimates.
template <typename Scalar>
Tensor<Scalar> batchnorm_forward(const Tensor<Scalar>& input, BatchNorm<Scalar>& state,
                                 Tape<Scalar>* tape = nullptr);

// conv1d(padding 1, no bias) -> batch norm -> ReLU.
template <typename Scalar>
Tensor<Scalar> temporal_conv_layer(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                                   BatchNorm<Scalar>& bn, Tape<Scalar>* tape = nullptr);

// depthwise (padding 1) -> pointwise 1x1 -> batch norm -> ReLU.
template <typename Scalar>
Tensor<Scalar> tdsc_layer(const Tensor<Scalar>& input, const Tensor<Scalar>& depthwise,
                          const Tensor<Scalar>& pointwise, BatchNorm<Scalar>& bn,
                          Tape<Scalar>* tape = nullptr);

// Kernel 3, stride 2, zero padding 1: length L -> ceil(L / 2).
template <typename Scalar>
Tensor<Scalar> maxpool_halve(const Tensor<Scalar>& input, Tape<Scalar>* tape = nullptr);

// The k largest values per channel, kept in temporal order. Equal values
// prefer the earlier position.
template <typename Scalar>
Tensor<Scalar> kmax_pool(const Tensor<Scalar>& input, Index k, Tape<Scalar>* tape = nullptr);

// Mean over contiguous bins of L / out_len; L must be a multiple of out_len.
template <typename Scalar>
Tensor<Scalar> adaptive_avg_pool(const Tensor<Scalar>& input, Index out_len,
                                 Tape<Scalar>* tape = nullptr);

enum class ConvKind { standard, tdsc };

const char* to_string(ConvKind kind);

/// One depth unit: a kernel-3 temporal convolution, or a depthwise/pointwise
/// pair that counts as a single layer.
template <typename Scalar>
struct ConvLayer {
  static constexpr Index kKernel = 3;

  ConvLayer() = default;
  ConvLayer(ConvKind kind, Index in_channels, Index out_channels);

  Tensor<Scalar> forward(const Tensor<Scalar>& input, Tape<Scalar>* tape = nullptr);
  Index weight_count() const;

  ConvKind kind = ConvKind::standard;
  Index in_channels = 0;
  Index out_channels = 0;
  Tensor<Scalar> weight;     // standard: [Out x In x 3]; tdsc pointwise: [Out x In x 1]
  Tensor<Scalar> depthwise;  // tdsc only: [In x 3]
  BatchNorm<Scalar> bn;

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    if (kind == ConvKind::tdsc) {
      f(prefix + "depthwise", ParamCategory::conv, depthwise);
      f(prefix + "pointwise", ParamCategory::conv, weight);
    } else {
      f(prefix + "weight", ParamCategory::conv, weight);
    }
    bn.for_each_tensor(prefix + "bn.", f);
  }
};

/// Two conv layers (In -> Out, Out -> Out) around an additive shortcut. The
/// shortcut is a bias-free 1x1 projection when In != Out, identity otherwise.
template <typename Scalar>
struct ConvBlock {
  ConvBlock() = default;
  ConvBlock(ConvKind variant, Index in_channels, Index out_channels);

  Index in_channels() const { return first.in_channels; }
  Index out_channels() const { return second.out_channels; }
  bool has_projection() const { return projection.defined(); }

  /// Main-path weights only (no BN, no projection).
  Index main_weight_count() const { return first.weight_count() + second.weight_count(); }
  Index projection_weight_count() const { return has_projection() ? projection.size() : 0; }

  Tensor<Scalar> forward(const Tensor<Scalar>& input, Tape<Scalar>* tape = nullptr);

  ConvKind variant = ConvKind::standard;
  ConvLayer<Scalar> first;
  ConvLayer<Scalar> second;
  Tensor<Scalar> projection;  // [Out x In x 1] or undefined

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    first.for_each_tensor(prefix + "conv1.", f);
    second.for_each_tensor(prefix + "conv2.", f);
    if (has_projection()) f(prefix + "shortcut", ParamCategory::conv, projection);
  }
};

template <typename Scalar>
Tensor<Scalar> conv_block_forward(const Tensor<Scalar>& input, ConvBlock<Scalar>& block,
                                  Tape<Scalar>* tape = nullptr);

template <typename Scalar>
struct Linear {
  Linear() = default;
  Linear(Index in_features, Index out_features);

  Tensor<Scalar> forward(const Tensor<Scalar>& input, Tape<Scalar>* tape = nullptr) const {
    return affine(input, weight, bias, tape);
  }

  Tensor<Scalar> weight;  // [out x in]
  Tensor<Scalar> bias;    // [out]

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    f(prefix + "weight", ParamCategory::fc, weight);
    f(prefix + "bias", ParamCategory::fc, bias);
  }
};

}  // namespace svdcnn
