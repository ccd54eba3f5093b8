#include "svdcnn/ops.hpp"

#include <algorithm>

namespace svdcnn {

template <typename Scalar>
MapLayout map_layout(const Tensor<Scalar>& t, std::string_view op) {
  if (t.rank() == 2) return {1, t.dim(0), t.dim(1)};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  throw ShapeError(std::string(op) + ": expected a [C x L] or [B x C x L] feature map, got " +
                   to_string(t.shape()));
}

template <typename Scalar>
Shape map_shape(const Tensor<Scalar>& like, Index channels, Index length) {
  if (like.rank() == 3) return {like.dim(0), channels, length};
  return {channels, length};
}

namespace {

// col(i*k + j, t) = x(i, t + j - padding), zero outside [0, L).
template <typename Scalar, typename In>
void im2col(const In& x, RowMatrix<Scalar>& col, Index k, Index padding) {
  const Index channels = x.rows(), length = x.cols(), l_out = col.cols();
  for (Index i = 0; i < channels; ++i) {
    for (Index j = 0; j < k; ++j) {
      Scalar* row = col.data() + (i * k + j) * l_out;
      const Scalar* src = x.data() + i * length;
      for (Index t = 0; t < l_out; ++t) {
        const Index s = t + j - padding;
        row[t] = (s >= 0 && s < length) ? src[s] : Scalar(0);
      }
    }
  }
}

template <typename Scalar, typename Out>
void col2im_add(const RowMatrix<Scalar>& col, Out&& dx, Index k, Index padding) {
  const Index channels = dx.rows(), length = dx.cols(), l_out = col.cols();
  for (Index i = 0; i < channels; ++i) {
    for (Index j = 0; j < k; ++j) {
      const Scalar* row = col.data() + (i * k + j) * l_out;
      Scalar* dst = dx.data() + i * length;
      for (Index t = 0; t < l_out; ++t) {
        const Index s = t + j - padding;
        if (s >= 0 && s < length) dst[s] += row[t];
      }
    }
  }
}

void require_same_shape(const Shape& a, const Shape& b, std::string_view op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, Index padding, Tape<Scalar>* tape) {
  const MapLayout in = map_layout(input, "conv1d");
  if (weight.rank() != 3) {
    throw ShapeError("conv1d: weight must be [C_out x C_in x K], got " + to_string(weight.shape()));
  }
  const Index c_out = weight.dim(0), c_in = weight.dim(1), k = weight.dim(2);
  if (c_in != in.channels) {
    throw ShapeError("conv1d: input has " + std::to_string(in.channels) +
                     " channels but weight expects C_in = " + std::to_string(c_in));
  }
  if (k % 2 == 0) throw ArgumentError("conv1d: kernel size must be odd, got " + std::to_string(k));
  if (padding < 0) throw ArgumentError("conv1d: negative padding");
  if (in.length + 2 * padding < k) {
    throw ShapeError("conv1d: input length " + std::to_string(in.length) +
                     " too short for kernel " + std::to_string(k));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
    throw ShapeError("conv1d: bias must be [" + std::to_string(c_out) + "], got " +
                     to_string(bias.shape()));
  }

  const Index l_out = in.length + 2 * padding - k + 1;
  const bool direct = (k == 1 && padding == 0);
  Tensor<Scalar> out(map_shape(input, c_out, l_out));
  const auto w = weight.matrix(c_out, c_in * k);
  RowMatrix<Scalar> col(direct ? 0 : c_in * k, direct ? 0 : l_out);
  for (Index b = 0; b < in.batch; ++b) {
    const auto x = input.matrix(in.channels, in.length, b * in.channels * in.length);
    auto y = out.mutable_matrix(c_out, l_out, b * c_out * l_out);
    if (direct) {
      y.noalias() = w * x;
    } else {
      im2col<Scalar>(x, col, k, padding);
      y.noalias() = w * col;
    }
    if (bias.defined()) y.colwise() += bias.vector();
  }

  if (recording(tape, input, weight, bias)) {
    tape->record("conv1d", out, [=](std::span<const Scalar> g) mutable {
      const auto w = weight.matrix(c_out, c_in * k);
      RowMatrix<Scalar> col(c_in * k, l_out), dcol;
      const bool want_w = weight.requires_grad();
      const bool want_x = input.requires_grad();
      const bool want_b = bias.defined() && bias.requires_grad();
      for (Index b = 0; b < in.batch; ++b) {
        ConstMatrixMap<Scalar> gy(g.data() + b * c_out * l_out, c_out, l_out);
        const Index x_off = b * in.channels * in.length;
        const auto x = input.matrix(in.channels, in.length, x_off);
        if (want_w) {
          auto dw = MatrixMap<Scalar>(weight.grad_buffer().data(), c_out, c_in * k);
          if (direct) {
            dw.noalias() += gy * x.transpose();
          } else {
            im2col<Scalar>(x, col, k, padding);
            dw.noalias() += gy * col.transpose();
          }
        }
        if (want_x) {
          MatrixMap<Scalar> dx(input.grad_buffer().data() + x_off, in.channels, in.length);
          if (direct) {
            dx.noalias() += w.transpose() * gy;
          } else {
            dcol.noalias() = w.transpose() * gy;
            col2im_add<Scalar>(dcol, dx, k, padding);
          }
        }
        if (want_b) VectorMap<Scalar>(bias.grad_buffer().data(), c_out) += gy.rowwise().sum();
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> depthwise_conv1d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                                Index padding, Tape<Scalar>* tape) {
  const MapLayout in = map_layout(input, "depthwise_conv1d");
  if (weight.rank() != 2) {
    throw ShapeError("depthwise_conv1d: weight must be [C x K], got " + to_string(weight.shape()));
  }
  if (weight.dim(0) != in.channels) {
    throw ShapeError("depthwise_conv1d: input has " + std::to_string(in.channels) +
                     " channels but weight has " + std::to_string(weight.dim(0)));
  }
  const Index k = weight.dim(1);
  if (k % 2 == 0) throw ArgumentError("depthwise_conv1d: kernel size must be odd");
  if (padding < 0) throw ArgumentError("depthwise_conv1d: negative padding");
  if (in.length + 2 * padding < k) throw ShapeError("depthwise_conv1d: input too short for kernel");

  const Index channels = in.channels, length = in.length;
  const Index l_out = length + 2 * padding - k + 1;
  Tensor<Scalar> out(map_shape(input, channels, l_out));
  const Scalar* x = input.data().data();
  const Scalar* w = weight.data().data();
  Scalar* y = out.mutable_data().data();
  for (Index b = 0; b < in.batch; ++b) {
    for (Index c = 0; c < channels; ++c) {
      const Scalar* xc = x + (b * channels + c) * length;
      const Scalar* wc = w + c * k;
      Scalar* yc = y + (b * channels + c) * l_out;
      for (Index t = 0; t < l_out; ++t) {
        Scalar acc = 0;
        for (Index j = 0; j < k; ++j) {
          const Index s = t + j - padding;
          if (s >= 0 && s < length) acc += wc[j] * xc[s];
        }
        yc[t] = acc;
      }
    }
  }

  if (recording(tape, input, weight)) {
    tape->record("depthwise_conv1d", out, [=](std::span<const Scalar> g) mutable {
      const Scalar* x = input.data().data();
      const Scalar* w = weight.data().data();
      Scalar* dx = input.requires_grad() ? input.grad_buffer().data() : nullptr;
      Scalar* dw = weight.requires_grad() ? weight.grad_buffer().data() : nullptr;
      for (Index b = 0; b < in.batch; ++b) {
        for (Index c = 0; c < channels; ++c) {
          const Index xo = (b * channels + c) * length;
          const Scalar* gc = g.data() + (b * channels + c) * l_out;
          for (Index t = 0; t < l_out; ++t) {
            for (Index j = 0; j < k; ++j) {
              const Index s = t + j - padding;
              if (s < 0 || s >= length) continue;
              if (dw) dw[c * k + j] += gc[t] * x[xo + s];
              if (dx) dx[xo + s] += gc[t] * w[c * k + j];
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> affine(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, Tape<Scalar>* tape) {
  if (input.rank() != 1 && input.rank() != 2) {
    throw ShapeError("affine: input must be [N] or [B x N], got " + to_string(input.shape()));
  }
  if (weight.rank() != 2) throw ShapeError("affine: weight must be [M x N]");
  const Index batch = input.rank() == 2 ? input.dim(0) : 1;
  const Index n = input.dim(-1), m = weight.dim(0);
  if (weight.dim(1) != n) {
    throw ShapeError("affine: input length " + std::to_string(n) + " does not match weight N = " +
                     std::to_string(weight.dim(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != m)) {
    throw ShapeError("affine: bias must be [" + std::to_string(m) + "]");
  }

  Tensor<Scalar> out(input.rank() == 2 ? Shape{batch, m} : Shape{m});
  auto y = out.mutable_matrix(batch, m);
  y.noalias() = input.matrix(batch, n) * weight.matrix(m, n).transpose();
  if (bias.defined()) y.rowwise() += bias.vector().transpose();

  if (recording(tape, input, weight, bias)) {
    tape->record("affine", out, [=](std::span<const Scalar> g) mutable {
      ConstMatrixMap<Scalar> gy(g.data(), batch, m);
      if (input.requires_grad()) {
        MatrixMap<Scalar>(input.grad_buffer().data(), batch, n).noalias() +=
            gy * weight.matrix(m, n);
      }
      if (weight.requires_grad()) {
        MatrixMap<Scalar>(weight.grad_buffer().data(), m, n).noalias() +=
            gy.transpose() * input.matrix(batch, n);
      }
      if (bias.defined() && bias.requires_grad()) {
        VectorMap<Scalar>(bias.grad_buffer().data(), m) += gy.colwise().sum().transpose();
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input, Tape<Scalar>* tape) {
  Tensor<Scalar> out(input.shape());
  auto x = input.data();
  auto y = out.mutable_data();
  std::transform(x.begin(), x.end(), y.begin(), [](Scalar v) { return v > 0 ? v : Scalar(0); });
  if (recording(tape, input)) {
    tape->record("relu", out, [input](std::span<const Scalar> g) mutable {
      auto x = input.data();
      auto dx = input.grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (x[i] > 0) dx[i] += g[i];
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Tape<Scalar>* tape) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape());
  auto y = out.mutable_data();
  auto x1 = a.data();
  auto x2 = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x1[i] + x2[i];
  if (recording(tape, a, b)) {
    tape->record("add", out, [a, b](std::span<const Scalar> g) mutable {
      accumulate_grad(a, g);
      accumulate_grad(b, g);
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& input, Tape<Scalar>* tape) {
  Tensor<Scalar> out(input.shape());
  auto x = input.data();
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * x[i];
  if (recording(tape, input)) {
    tape->record("square", out, [input](std::span<const Scalar> g) mutable {
      auto x = input.data();
      auto dx = input.grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += Scalar(2) * x[i] * g[i];
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& input, Tape<Scalar>* tape) {
  Scalar total = 0;
  for (Scalar v : input.data()) total += v;
  Tensor<Scalar> out = Tensor<Scalar>::scalar(total);
  if (recording(tape, input)) {
    tape->record("sum", out, [input](std::span<const Scalar> g) mutable {
      auto dx = input.grad_buffer();
      for (auto& v : dx) v += g[0];
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& input, Shape shape, Tape<Scalar>* tape) {
  if (numel(shape) != input.size()) {
    throw ShapeError("reshape: cannot view " + to_string(input.shape()) + " as " + to_string(shape));
  }
  std::vector<Scalar> values(input.data().begin(), input.data().end());
  Tensor<Scalar> out(std::move(shape), std::move(values));
  if (recording(tape, input)) {
    tape->record("reshape", out, [input](std::span<const Scalar> g) mutable {
      accumulate_grad(input, g);
    });
  }
  return out;
}

#define SVDCNN_INSTANTIATE_OPS(S)                                                              \
  template MapLayout map_layout<S>(const Tensor<S>&, std::string_view);                        \
  template Shape map_shape<S>(const Tensor<S>&, Index, Index);                                 \
  template Tensor<S> conv1d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Index,    \
                               Tape<S>*);                                                      \
  template Tensor<S> depthwise_conv1d<S>(const Tensor<S>&, const Tensor<S>&, Index, Tape<S>*); \
  template Tensor<S> affine<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,           \
                               Tape<S>*);                                                      \
  template Tensor<S> relu<S>(const Tensor<S>&, Tape<S>*);                                      \
  template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&, Tape<S>*);                     \
  template Tensor<S> square<S>(const Tensor<S>&, Tape<S>*);                                    \
  template Tensor<S> sum<S>(const Tensor<S>&, Tape<S>*);                                       \
  template Tensor<S> reshape<S>(const Tensor<S>&, Shape, Tape<S>*);

SVDCNN_INSTANTIATE_OPS(float)
SVDCNN_INSTANTIATE_OPS(double)

}  // namespace svdcnn
