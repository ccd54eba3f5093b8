#include "svdcnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace svdcnn {

const char* to_string(ParamCategory category) {
  switch (category) {
    case ParamCategory::embedding: return "embedding";
    case ParamCategory::conv: return "conv";
    case ParamCategory::batchnorm: return "batchnorm";
    case ParamCategory::fc: return "fc";
    case ParamCategory::buffer: return "buffer";
  }
  return "?";
}

const char* to_string(ConvKind kind) { return kind == ConvKind::tdsc ? "tdsc" : "standard"; }

// ---------------------------------------------------------------------------
// Embedding

template <typename Scalar>
Embedding<Scalar>::Embedding(Index vocab_size, Index dim) : table({vocab_size, dim}, true) {}

namespace {

template <typename Scalar>
void gather_rows(const Tensor<Scalar>& table, std::span<const std::int32_t> ids, Index position_base,
                 Scalar* out) {
  const Index vocab = table.dim(0), dim = table.dim(1), length = static_cast<Index>(ids.size());
  const Scalar* rows = table.data().data();
  for (Index t = 0; t < length; ++t) {
    const std::int32_t id = ids[static_cast<std::size_t>(t)];
    if (id < 0 || id >= vocab) {
      throw LookupError("embedding: index " + std::to_string(id) + " at position " +
                        std::to_string(position_base + t) + " outside [0, " +
                        std::to_string(vocab) + ")");
    }
    for (Index f = 0; f < dim; ++f) out[f * length + t] = rows[id * dim + f];
  }
}

template <typename Scalar>
Tensor<Scalar> embed(std::span<const std::int32_t> ids, Index batch, Index length,
                     const Embedding<Scalar>& embedding, Shape shape, Tape<Scalar>* tape) {
  const Index dim = embedding.dim();
  Tensor<Scalar> out(std::move(shape));
  Scalar* y = out.mutable_data().data();
  for (Index b = 0; b < batch; ++b) {
    gather_rows(embedding.table, ids.subspan(static_cast<std::size_t>(b * length),
                                             static_cast<std::size_t>(length)),
                b * length, y + b * dim * length);
  }
  if (recording(tape, embedding.table)) {
    std::vector<std::int32_t> saved(ids.begin(), ids.end());
    Tensor<Scalar> table = embedding.table;
    tape->record("embedding", out,
                 [table, saved = std::move(saved), batch, length, dim](
                     std::span<const Scalar> g) mutable {
                   auto dt = table.grad_buffer();
                   for (Index b = 0; b < batch; ++b) {
                     for (Index t = 0; t < length; ++t) {
                       const std::int32_t id = saved[static_cast<std::size_t>(b * length + t)];
                       if (id == 0) continue;  // padding row stays fixed
                       for (Index f = 0; f < dim; ++f) {
                         dt[static_cast<std::size_t>(id * dim + f)] +=
                             g[static_cast<std::size_t>((b * dim + f) * length + t)];
                       }
                     }
                   }
                 });
  }
  return out;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> embedding_forward(std::span<const std::int32_t> indices,
                                 const Embedding<Scalar>& embedding, Tape<Scalar>* tape) {
  const Index length = static_cast<Index>(indices.size());
  return embed(indices, 1, length, embedding, {embedding.dim(), length}, tape);
}

template <typename Scalar>
Tensor<Scalar> embedding_forward(const IndexBatch& batch, const Embedding<Scalar>& embedding,
                                 Tape<Scalar>* tape) {
  if (static_cast<Index>(batch.ids.size()) != batch.batch * batch.length) {
    throw ShapeError("embedding: index batch holds " + std::to_string(batch.ids.size()) +
                     " ids, expected " + std::to_string(batch.batch * batch.length));
  }
  return embed(std::span<const std::int32_t>(batch.ids), batch.batch, batch.length, embedding,
               {batch.batch, embedding.dim(), batch.length}, tape);
}

// ---------------------------------------------------------------------------
// Batch norm

template <typename Scalar>
BatchNorm<Scalar>::BatchNorm(Index channels)
    : gamma(Shape{channels}, std::vector<Scalar>(static_cast<std::size_t>(channels), Scalar(1)),
            true),
      beta(Shape{channels}, true),
      running_mean(Shape{channels}),
      running_var(Shape{channels}, std::vector<Scalar>(static_cast<std::size_t>(channels), Scalar(1))) {}

template <typename Scalar>
Tensor<Scalar> batchnorm_forward(const Tensor<Scalar>& input, BatchNorm<Scalar>& state,
                                 Tape<Scalar>* tape) {
  const MapLayout in = map_layout(input, "batchnorm");
  if (in.channels != state.channels()) {
    throw ShapeError("batchnorm: input has " + std::to_string(in.channels) +
                     " channels, state has " + std::to_string(state.channels()));
  }
  if (!(state.eps > 0)) throw ArgumentError("batchnorm: eps must be positive");

  const Index channels = in.channels, length = in.length, batch = in.batch;
  const Index count = batch * length;
  const bool train = state.mode == Mode::train;
  if (train && count < 2) {
    throw StateError("batchnorm: train mode needs at least 2 values per channel, got " +
                     std::to_string(count));
  }

  Tensor<Scalar> out(input.shape());
  std::vector<Scalar> xhat(static_cast<std::size_t>(input.size()));
  std::vector<Scalar> inv_std(static_cast<std::size_t>(channels));
  const Scalar* x = input.data().data();
  Scalar* y = out.mutable_data().data();
  auto gamma = state.gamma.data();
  auto beta = state.beta.data();
  auto rmean = state.running_mean.mutable_data();
  auto rvar = state.running_var.mutable_data();

  for (Index c = 0; c < channels; ++c) {
    double mean, var;
    if (train) {
      double s = 0, ss = 0;
      for (Index b = 0; b < batch; ++b) {
        const Scalar* xc = x + (b * channels + c) * length;
        for (Index t = 0; t < length; ++t) s += xc[t];
      }
      mean = s / static_cast<double>(count);
      for (Index b = 0; b < batch; ++b) {
        const Scalar* xc = x + (b * channels + c) * length;
        for (Index t = 0; t < length; ++t) ss += (xc[t] - mean) * (xc[t] - mean);
      }
      var = ss / static_cast<double>(count);
      const double m = static_cast<double>(state.momentum);
      rmean[c] = static_cast<Scalar>((1 - m) * rmean[c] + m * mean);
      rvar[c] = static_cast<Scalar>((1 - m) * rvar[c] +
                                    m * ss / static_cast<double>(count - 1));
    } else {
      mean = rmean[c];
      var = rvar[c];
    }
    const Scalar inv = static_cast<Scalar>(1.0 / std::sqrt(var + static_cast<double>(state.eps)));
    inv_std[static_cast<std::size_t>(c)] = inv;
    for (Index b = 0; b < batch; ++b) {
      const Index off = (b * channels + c) * length;
      for (Index t = 0; t < length; ++t) {
        const Scalar h = (x[off + t] - static_cast<Scalar>(mean)) * inv;
        xhat[static_cast<std::size_t>(off + t)] = h;
        y[off + t] = gamma[c] * h + beta[c];
      }
    }
  }

  if (recording(tape, input, state.gamma, state.beta)) {
    tape->record(
        "batchnorm", out,
        [input, gamma = state.gamma, beta = state.beta, xhat = std::move(xhat),
         inv_std = std::move(inv_std), train, batch, channels, length,
         count](std::span<const Scalar> g) mutable {
          auto gm = gamma.data();
          Scalar* dx = input.requires_grad() ? input.grad_buffer().data() : nullptr;
          Scalar* dgamma = gamma.requires_grad() ? gamma.grad_buffer().data() : nullptr;
          Scalar* dbeta = beta.requires_grad() ? beta.grad_buffer().data() : nullptr;
          for (Index c = 0; c < channels; ++c) {
            double sum_g = 0, sum_gh = 0;
            for (Index b = 0; b < batch; ++b) {
              const Index off = (b * channels + c) * length;
              for (Index t = 0; t < length; ++t) {
                sum_g += g[static_cast<std::size_t>(off + t)];
                sum_gh += g[static_cast<std::size_t>(off + t)] * xhat[static_cast<std::size_t>(off + t)];
              }
            }
            if (dgamma) dgamma[c] += static_cast<Scalar>(sum_gh);
            if (dbeta) dbeta[c] += static_cast<Scalar>(sum_g);
            if (!dx) continue;
            const Scalar scale = gm[c] * inv_std[static_cast<std::size_t>(c)];
            const double n = static_cast<double>(count);
            for (Index b = 0; b < batch; ++b) {
              const Index off = (b * channels + c) * length;
              for (Index t = 0; t < length; ++t) {
                const std::size_t i = static_cast<std::size_t>(off + t);
                if (train) {
                  dx[i] += static_cast<Scalar>(scale * (g[i] - sum_g / n - xhat[i] * sum_gh / n));
                } else {
                  dx[i] += scale * g[i];
                }
              }
            }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conv layers

template <typename Scalar>
Tensor<Scalar> temporal_conv_layer(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                                   BatchNorm<Scalar>& bn, Tape<Scalar>* tape) {
  const Index k = weight.rank() == 3 ? weight.dim(2) : 0;
  const Tensor<Scalar> conv = conv1d(input, weight, Tensor<Scalar>{}, (k - 1) / 2, tape);
  return relu(batchnorm_forward(conv, bn, tape), tape);
}

template <typename Scalar>
Tensor<Scalar> tdsc_layer(const Tensor<Scalar>& input, const Tensor<Scalar>& depthwise,
                          const Tensor<Scalar>& pointwise, BatchNorm<Scalar>& bn,
                          Tape<Scalar>* tape) {
  if (pointwise.rank() != 3 || pointwise.dim(2) != 1) {
    throw ShapeError("tdsc: pointwise weight must be [Out x In x 1], got " +
                     to_string(pointwise.shape()));
  }
  const Index k = depthwise.rank() == 2 ? depthwise.dim(1) : 0;
  const Tensor<Scalar> spatial = depthwise_conv1d(input, depthwise, (k - 1) / 2, tape);
  const Tensor<Scalar> mixed = conv1d(spatial, pointwise, Tensor<Scalar>{}, 0, tape);
  return relu(batchnorm_forward(mixed, bn, tape), tape);
}

template <typename Scalar>
ConvLayer<Scalar>::ConvLayer(ConvKind kind_, Index in, Index out)
    : kind(kind_), in_channels(in), out_channels(out), bn(out) {
  if (kind == ConvKind::tdsc) {
    depthwise = Tensor<Scalar>({in, kKernel}, true);
    weight = Tensor<Scalar>({out, in, 1}, true);
  } else {
    weight = Tensor<Scalar>({out, in, kKernel}, true);
  }
}

template <typename Scalar>
Tensor<Scalar> ConvLayer<Scalar>::forward(const Tensor<Scalar>& input, Tape<Scalar>* tape) {
  if (kind == ConvKind::tdsc) return tdsc_layer(input, depthwise, weight, bn, tape);
  return temporal_conv_layer(input, weight, bn, tape);
}

template <typename Scalar>
Index ConvLayer<Scalar>::weight_count() const {
  return weight.size() + (depthwise.defined() ? depthwise.size() : 0);
}

template <typename Scalar>
ConvBlock<Scalar>::ConvBlock(ConvKind variant_, Index in, Index out)
    : variant(variant_), first(variant_, in, out), second(variant_, out, out) {
  if (in != out) projection = Tensor<Scalar>({out, in, 1}, true);
}

template <typename Scalar>
Tensor<Scalar> ConvBlock<Scalar>::forward(const Tensor<Scalar>& input, Tape<Scalar>* tape) {
  const MapLayout in = map_layout(input, "conv_block");
  if (in.channels != in_channels()) {
    throw ShapeError("conv_block: input has " + std::to_string(in.channels) +
                     " channels, block expects " + std::to_string(in_channels()));
  }
  const Tensor<Scalar> main = second.forward(first.forward(input, tape), tape);
  const Tensor<Scalar> shortcut =
      has_projection() ? conv1d(input, projection, Tensor<Scalar>{}, 0, tape) : input;
  return add(main, shortcut, tape);
}

template <typename Scalar>
Tensor<Scalar> conv_block_forward(const Tensor<Scalar>& input, ConvBlock<Scalar>& block,
                                  Tape<Scalar>* tape) {
  return block.forward(input, tape);
}

template <typename Scalar>
Linear<Scalar>::Linear(Index in_features, Index out_features)
    : weight({out_features, in_features}, true), bias(Shape{out_features}, true) {}

// ---------------------------------------------------------------------------
// Pooling

template <typename Scalar>
Tensor<Scalar> maxpool_halve(const Tensor<Scalar>& input, Tape<Scalar>* tape) {
  const MapLayout in = map_layout(input, "maxpool_halve");
  if (in.length < 2) {
    throw ShapeError("maxpool_halve: need length >= 2, got " + std::to_string(in.length));
  }
  const Index rows = in.batch * in.channels, length = in.length;
  const Index l_out = (length + 1) / 2;
  Tensor<Scalar> out(map_shape(input, in.channels, l_out));
  std::vector<Index> argmax(static_cast<std::size_t>(rows * l_out));
  const Scalar* x = input.data().data();
  Scalar* y = out.mutable_data().data();
  for (Index r = 0; r < rows; ++r) {
    for (Index t = 0; t < l_out; ++t) {
      Scalar best = 0;
      Index best_at = -1;
      bool first = true;
      for (Index s = 2 * t - 1; s <= 2 * t + 1; ++s) {
        const bool inside = s >= 0 && s < length;
        const Scalar v = inside ? x[r * length + s] : Scalar(0);
        if (first || v > best) {
          best = v;
          best_at = inside ? s : -1;
          first = false;
        }
      }
      y[r * l_out + t] = best;
      argmax[static_cast<std::size_t>(r * l_out + t)] = best_at;
    }
  }
  if (recording(tape, input)) {
    tape->record("maxpool_halve", out,
                 [input, argmax = std::move(argmax), rows, length, l_out](
                     std::span<const Scalar> g) mutable {
                   Scalar* dx = input.grad_buffer().data();
                   for (Index r = 0; r < rows; ++r) {
                     for (Index t = 0; t < l_out; ++t) {
                       const Index s = argmax[static_cast<std::size_t>(r * l_out + t)];
                       if (s >= 0) dx[r * length + s] += g[static_cast<std::size_t>(r * l_out + t)];
                     }
                   }
                 });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> kmax_pool(const Tensor<Scalar>& input, Index k, Tape<Scalar>* tape) {
  const MapLayout in = map_layout(input, "kmax_pool");
  if (k < 1 || k > in.length) {
    throw ArgumentError("kmax_pool: k = " + std::to_string(k) + " must lie in [1, " +
                        std::to_string(in.length) + "]");
  }
  const Index rows = in.batch * in.channels, length = in.length;
  Tensor<Scalar> out(map_shape(input, in.channels, k));
  std::vector<Index> picked(static_cast<std::size_t>(rows * k));
  std::vector<Index> order(static_cast<std::size_t>(length));
  const Scalar* x = input.data().data();
  Scalar* y = out.mutable_data().data();
  for (Index r = 0; r < rows; ++r) {
    const Scalar* xr = x + r * length;
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [xr](Index a, Index b) {
      return xr[a] > xr[b] || (xr[a] == xr[b] && a < b);
    });
    std::sort(order.begin(), order.begin() + k);
    for (Index j = 0; j < k; ++j) {
      picked[static_cast<std::size_t>(r * k + j)] = order[static_cast<std::size_t>(j)];
      y[r * k + j] = xr[order[static_cast<std::size_t>(j)]];
    }
  }
  if (recording(tape, input)) {
    tape->record("kmax_pool", out,
                 [input, picked = std::move(picked), rows, length, k](
                     std::span<const Scalar> g) mutable {
                   Scalar* dx = input.grad_buffer().data();
                   for (Index r = 0; r < rows; ++r) {
                     for (Index j = 0; j < k; ++j) {
                       dx[r * length + picked[static_cast<std::size_t>(r * k + j)]] +=
                           g[static_cast<std::size_t>(r * k + j)];
                     }
                   }
                 });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> adaptive_avg_pool(const Tensor<Scalar>& input, Index out_len, Tape<Scalar>* tape) {
  const MapLayout in = map_layout(input, "adaptive_avg_pool");
  if (out_len < 1 || in.length % out_len != 0) {
    throw ArgumentError("adaptive_avg_pool: length " + std::to_string(in.length) +
                        " is not a multiple of out_len " + std::to_string(out_len));
  }
  const Index rows = in.batch * in.channels, length = in.length, bin = length / out_len;
  Tensor<Scalar> out(map_shape(input, in.channels, out_len));
  const Scalar* x = input.data().data();
  Scalar* y = out.mutable_data().data();
  for (Index r = 0; r < rows; ++r) {
    for (Index j = 0; j < out_len; ++j) {
      Scalar acc = 0;
      for (Index s = 0; s < bin; ++s) acc += x[r * length + j * bin + s];
      y[r * out_len + j] = acc / static_cast<Scalar>(bin);
    }
  }
  if (recording(tape, input)) {
    tape->record("adaptive_avg_pool", out,
                 [input, rows, length, out_len, bin](std::span<const Scalar> g) mutable {
                   Scalar* dx = input.grad_buffer().data();
                   const Scalar w = Scalar(1) / static_cast<Scalar>(bin);
                   for (Index r = 0; r < rows; ++r) {
                     for (Index j = 0; j < out_len; ++j) {
                       const Scalar gj = g[static_cast<std::size_t>(r * out_len + j)] * w;
                       for (Index s = 0; s < bin; ++s) dx[r * length + j * bin + s] += gj;
                     }
                   }
                 });
  }
  return out;
}

#define SVDCNN_INSTANTIATE_LAYERS(S)                                                            \
  template struct Embedding<S>;                                                                 \
  template struct BatchNorm<S>;                                                                 \
  template struct ConvLayer<S>;                                                                 \
  template struct ConvBlock<S>;                                                                 \
  template struct Linear<S>;                                                                    \
  template Tensor<S> embedding_forward<S>(std::span<const std::int32_t>, const Embedding<S>&,   \
                                          Tape<S>*);                                            \
  template Tensor<S> embedding_forward<S>(const IndexBatch&, const Embedding<S>&, Tape<S>*);    \
  template Tensor<S> batchnorm_forward<S>(const Tensor<S>&, BatchNorm<S>&, Tape<S>*);           \
  template Tensor<S> temporal_conv_layer<S>(const Tensor<S>&, const Tensor<S>&, BatchNorm<S>&,  \
                                            Tape<S>*);                                          \
  template Tensor<S> tdsc_layer<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,        \
                                   BatchNorm<S>&, Tape<S>*);                                    \
  template Tensor<S> maxpool_halve<S>(const Tensor<S>&, Tape<S>*);                              \
  template Tensor<S> kmax_pool<S>(const Tensor<S>&, Index, Tape<S>*);                           \
  template Tensor<S> adaptive_avg_pool<S>(const Tensor<S>&, Index, Tape<S>*);                   \
  template Tensor<S> conv_block_forward<S>(const Tensor<S>&, ConvBlock<S>&, Tape<S>*);

SVDCNN_INSTANTIATE_LAYERS(float)
SVDCNN_INSTANTIATE_LAYERS(double)

}  // namespace svdcnn
