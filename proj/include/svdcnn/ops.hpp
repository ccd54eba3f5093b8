#pragma once

#include "svdcnn/tensor.hpp"

namespace svdcnn {

/// (batch, channels, length) view of a [C x L] or [B x C x L] feature map.
struct MapLayout {
  Index batch = 1;
  Index channels = 0;
  Index length = 0;
};

template <typename Scalar>
MapLayout map_layout(const Tensor<Scalar>& t, std::string_view op);

/// Shape of a feature map with the same batch convention as `like`.
template <typename Scalar>
Shape map_shape(const Tensor<Scalar>& like, Index channels, Index length);

// Temporal convolution, stride 1, zero padding.
// input [C_in x L] or [B x C_in x L], weight [C_out x C_in x K], bias [C_out]
// or undefined. Output length is L + 2*padding - K + 1.
template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, Index padding, Tape<Scalar>* tape = nullptr);

// One K-tap filter per channel; weight [C x K].
template <typename Scalar>
Tensor<Scalar> depthwise_conv1d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                                Index padding, Tape<Scalar>* tape = nullptr);

// weight * input + bias. input [N] or [B x N], weight [M x N], bias [M].
template <typename Scalar>
Tensor<Scalar> affine(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, Tape<Scalar>* tape = nullptr);

// Derivative at exactly 0 is 0.
template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input, Tape<Scalar>* tape = nullptr);

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Tape<Scalar>* tape = nullptr);

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& input, Tape<Scalar>* tape = nullptr);

// Rank-0 sum of all entries.
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& input, Tape<Scalar>* tape = nullptr);

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& input, Shape shape, Tape<Scalar>* tape = nullptr);

}  // namespace svdcnn
