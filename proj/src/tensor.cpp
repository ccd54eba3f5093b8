#include "svdcnn/tensor.hpp"

#include <cmath>
#include <sstream>

namespace svdcnn {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void validate_shape(const Shape& shape) {
  for (Index extent : shape) {
    if (extent <= 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  validate_shape(shape);
  impl_->data.assign(static_cast<std::size_t>(numel(shape)), Scalar(0));
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, std::vector<Scalar> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  validate_shape(shape);
  if (static_cast<Index>(values.size()) != numel(shape)) {
    throw ShapeError("tensor of shape " + to_string(shape) + " needs " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

template <typename Scalar>
typename Tensor<Scalar>::Impl& Tensor<Scalar>::checked() const {
  if (!impl_) throw StateError("access to an undefined tensor");
  return *impl_;
}

template <typename Scalar>
Index Tensor<Scalar>::dim(Index axis) const {
  const Shape& s = shape();
  if (axis < 0) axis += static_cast<Index>(s.size());
  if (axis < 0 || axis >= static_cast<Index>(s.size())) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return checked().data.front();
}

template <typename Scalar>
std::span<const Scalar> Tensor<Scalar>::grad() const {
  if (!has_grad()) throw StateError("tensor has no gradient");
  return checked().grad;
}

template <typename Scalar>
std::span<Scalar> Tensor<Scalar>::grad_buffer() const {
  Impl& impl = checked();
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), Scalar(0));
  return impl.grad;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::clone() const {
  return Tensor(shape(), checked().data, requires_grad());
}

template <typename Scalar>
void accumulate_grad(const Tensor<Scalar>& target, std::span<const Scalar> delta) {
  if (!target.defined() || !target.requires_grad()) return;
  auto g = target.grad_buffer();
  if (g.size() != delta.size()) throw ShapeError("gradient length mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

template <typename Scalar>
void Tape<Scalar>::record(std::string_view op, const Tensor<Scalar>& output, BackwardFn fn) {
  if (consumed_) throw StateError("cannot record onto a consumed tape");
  if (check_finite_) {
    for (Scalar v : output.data()) {
      if (!std::isfinite(v)) {
        throw NonFiniteError("non-finite value produced by op #" + std::to_string(entries_.size()) +
                                 " (" + std::string(op) + ")",
                             entries_.size());
      }
    }
  }
  Tensor<Scalar> out = output;
  out.set_requires_grad(true);
  entries_.push_back(Entry{std::string(op), std::move(out), std::move(fn)});
}

template <typename Scalar>
void Tape<Scalar>::backward(const Tensor<Scalar>& loss) {
  if (!loss.defined() || !loss.is_scalar()) {
    throw StateError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (consumed_) throw StateError("backward() already ran on this tape");
  if (entries_.empty()) throw StateError("backward() on an empty tape");
  consumed_ = true;

  Tensor<Scalar> seed = loss;
  if (!seed.requires_grad()) throw StateError("loss was not produced by recorded operations");
  seed.grad_buffer()[0] += Scalar(1);

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not reachable from the loss
    it->backward(it->output.grad());
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void accumulate_grad<float>(const Tensor<float>&, std::span<const float>);
template void accumulate_grad<double>(const Tensor<double>&, std::span<const double>);

}  // namespace svdcnn
