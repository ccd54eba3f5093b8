#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "svdcnn/errors.hpp"

namespace svdcnn {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;
template <typename Scalar>
using VectorMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
template <typename Scalar>
using ConstVectorMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of reals with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage, which is what
/// lets a Tape route gradients back to parameters. Use clone() for a deep copy.
/// Rank-0 tensors (empty shape) hold one value and act as scalars.
template <typename Scalar>
class Tensor {
 public:
  using value_type = Scalar;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<Scalar> values, bool requires_grad = false);

  static Tensor scalar(Scalar value) { return Tensor(Shape{}, std::vector<Scalar>{value}); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return checked().shape; }
  Index rank() const { return static_cast<Index>(shape().size()); }
  Index dim(Index axis) const;
  Index size() const { return static_cast<Index>(checked().data.size()); }
  bool is_scalar() const { return defined() && rank() == 0; }

  std::span<const Scalar> data() const { return checked().data; }
  std::span<Scalar> mutable_data() { return checked().data; }
  Scalar item() const;

  bool requires_grad() const { return checked().requires_grad; }
  void set_requires_grad(bool value) { checked().requires_grad = value; }

  bool has_grad() const { return !checked().grad.empty(); }
  /// Throws StateError when no gradient has been accumulated.
  std::span<const Scalar> grad() const;
  /// Gradient storage, zero-filled on first access. Gradients are the one
  /// thing a const handle may change.
  std::span<Scalar> grad_buffer() const;
  void zero_grad() const { checked().grad.clear(); }

  Tensor clone() const;
  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  ConstMatrixMap<Scalar> matrix(Index rows, Index cols, Index offset = 0) const {
    return ConstMatrixMap<Scalar>(checked().data.data() + offset, rows, cols);
  }
  MatrixMap<Scalar> mutable_matrix(Index rows, Index cols, Index offset = 0) {
    return MatrixMap<Scalar>(checked().data.data() + offset, rows, cols);
  }
  ConstVectorMap<Scalar> vector() const {
    return ConstVectorMap<Scalar>(checked().data.data(), size());
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<Scalar> data;
    std::vector<Scalar> grad;
    bool requires_grad = false;
  };

  Impl& checked() const;

  std::shared_ptr<Impl> impl_;
};

/// Ordered record of executed primitives for the reverse pass.
///
/// Entries are appended in execution order, so the log is topologically
/// sorted by construction. backward() may run once per tape.
template <typename Scalar>
class Tape {
 public:
  /// Receives the gradient of the loss with respect to the op's output.
  using BackwardFn = std::function<void(std::span<const Scalar>)>;

  void record(std::string_view op, const Tensor<Scalar>& output, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and replays entries in reverse. Gradients
  /// accumulate into every reachable requires_grad tensor.
  void backward(const Tensor<Scalar>& loss);

  std::size_t size() const noexcept { return entries_.size(); }
  bool consumed() const noexcept { return consumed_; }

  /// When set, record() rejects outputs holding NaN/Inf, naming the op index.
  void set_check_finite(bool value) noexcept { check_finite_ = value; }

 private:
  struct Entry {
    std::string op;
    Tensor<Scalar> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
  bool check_finite_ = false;
};

/// True when `tape` is live and at least one input needs a gradient.
template <typename Scalar, typename... Tensors>
bool recording(const Tape<Scalar>* tape, const Tensors&... inputs) {
  return tape != nullptr && ((inputs.defined() && inputs.requires_grad()) || ...);
}

/// Adds `delta` into the tensor's gradient buffer if it takes gradients.
template <typename Scalar>
void accumulate_grad(const Tensor<Scalar>& target, std::span<const Scalar> delta);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace svdcnn
