#include <doctest.h>

#include <cmath>
#include <random>

#include "svdcnn/grad_check.hpp"
#include "svdcnn/ops.hpp"

using namespace svdcnn;

namespace {

using T = Tensor<double>;

T random_tensor(Shape shape, std::mt19937_64& rng, bool grad = true) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = n(rng);
  return T(std::move(shape), std::move(v), grad);
}

// Weighted sum so every output entry gets a distinct upstream gradient.
T probe_loss(const T& y, const T& w, Tape<double>& tape) {
  return sum(square(add(y, w, &tape), &tape), &tape);
}

void check_close(std::span<const double> got, std::vector<double> want, double tol = 1e-12) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(tol));
}

}  // namespace

TEST_CASE("tensor basics") {
  T a({2, 3});
  CHECK(a.size() == 6);
  CHECK(a.dim(-1) == 3);
  CHECK_THROWS_AS(a.dim(2), ShapeError);
  CHECK_THROWS_AS(T({2, 0}), ShapeError);
  CHECK_THROWS_AS(T({2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(a.item(), ShapeError);
  CHECK(T::scalar(4.5).item() == 4.5);

  T alias = a;
  alias.mutable_data()[0] = 7;
  CHECK(a.data()[0] == 7);
  T deep = a.clone();
  deep.mutable_data()[0] = 1;
  CHECK(a.data()[0] == 7);
  CHECK_FALSE(deep.same_storage(a));
  CHECK_THROWS_AS(a.grad(), StateError);
}

TEST_CASE("tape rules") {
  T x({2}, {1.0, -2.0}, true);
  Tape<double> tape;
  auto y = square(x, &tape);
  CHECK_THROWS_AS(tape.backward(y), StateError);  // not a scalar
  auto loss = sum(y, &tape);
  tape.backward(loss);
  check_close(x.grad(), {2.0, -4.0});
  CHECK_THROWS_AS(tape.backward(loss), StateError);

  Tape<double> empty;
  CHECK_THROWS_AS(empty.backward(T::scalar(1.0)), StateError);
}

TEST_CASE("tape finite check names the op") {
  T x({2}, {1e200, 1.0}, true);
  Tape<double> tape;
  tape.set_check_finite(true);
  auto y = relu(x, &tape);
  try {
    square(y, &tape);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.op_index() == 1);
  }
}

TEST_CASE("conv1d examples") {
  T x({1, 4}, {1, 1, 1, 1});
  T w({1, 1, 3}, {1, 1, 1});
  check_close(conv1d(x, w, T(), 1).data(), {2, 3, 3, 2});

  T x2({1, 5}, {1, 2, 3, 4, 5});
  T w2({1, 1, 3}, {1, 0, -1});
  check_close(conv1d(x2, w2, T(Shape{1}, std::vector<double>{0.5}), 0).data(), {-1.5, -1.5, -1.5});

  CHECK_THROWS_AS(conv1d(x, T({1, 1, 2}), T(), 0), ArgumentError);
  CHECK_THROWS_AS(conv1d(x, w, T(), -1), ArgumentError);
  CHECK_THROWS_AS(conv1d(T({1, 2}), w, T(), 0), ShapeError);
  try {
    conv1d(T({2, 4}), w, T(), 1);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find('2') != std::string::npos);
    CHECK(what.find('1') != std::string::npos);
  }
}

TEST_CASE("conv1d matches a direct sum and is linear") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Index B = 2, Cin = 3, Cout = 2, L = 7, K = 3, P = trial % 2;
    T x = random_tensor({B, Cin, L}, rng, false);
    T x2 = random_tensor({B, Cin, L}, rng, false);
    T w = random_tensor({Cout, Cin, K}, rng, false);
    T bias = random_tensor({Cout}, rng, false);
    T y = conv1d(x, w, bias, P);
    const Index Lout = L + 2 * P - K + 1;
    REQUIRE(y.shape() == Shape{B, Cout, Lout});
    for (Index b = 0; b < B; ++b)
      for (Index o = 0; o < Cout; ++o)
        for (Index t = 0; t < Lout; ++t) {
          double acc = bias.data()[o];
          for (Index c = 0; c < Cin; ++c)
            for (Index j = 0; j < K; ++j) {
              const Index src = t + j - P;
              if (src >= 0 && src < L) acc += w.data()[(o * Cin + c) * K + j] * x.data()[(b * Cin + c) * L + src];
            }
          CHECK(y.data()[(b * Cout + o) * Lout + t] == doctest::Approx(acc).epsilon(1e-12));
        }

    // conv(a x + x2) = a conv(x) + conv(x2) without bias
    std::vector<double> mix(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.5 * mix[i] + x2.data()[i];
    T lhs = conv1d(T(x.shape(), mix), w, T(), P);
    T y1 = conv1d(x, w, T(), P), y2 = conv1d(x2, w, T(), P);
    for (Index i = 0; i < lhs.size(); ++i)
      CHECK(lhs.data()[i] == doctest::Approx(2.5 * y1.data()[i] + y2.data()[i]).epsilon(1e-10));
  }
}

TEST_CASE("depthwise conv equals block-diagonal conv") {
  T x({1, 3}, {1, 1, 1});
  check_close(depthwise_conv1d(x, T({1, 3}, {1, 1, 1}), 1).data(), {2, 3, 2});

  std::mt19937_64 rng(11);
  for (Index C = 1; C <= 4; ++C) {
    for (Index L = 3; L <= 8; L += 5) {
      T in = random_tensor({2, C, L}, rng, false);
      T dw = random_tensor({C, 3}, rng, false);
      T full({C, C, 3});
      for (Index c = 0; c < C; ++c)
        for (Index j = 0; j < 3; ++j) full.mutable_data()[(c * C + c) * 3 + j] = dw.data()[c * 3 + j];
      T a = depthwise_conv1d(in, dw, 1), b = conv1d(in, full, T(), 1);
      for (Index i = 0; i < a.size(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(depthwise_conv1d(T({2, 4}), T({3, 3}), 1), ShapeError);
}

TEST_CASE("affine, relu and reshape") {
  T x({2}, {1, 2});
  T w({2, 2}, {1, 2, 3, -2});
  T b({2}, {1, 0});
  check_close(affine(x, w, b).data(), {6, -1});
  CHECK_THROWS_AS(affine(T({3}), w, b), ShapeError);

  check_close(relu(T({3}, {-1, 0, 2})).data(), {0, 0, 2});
  T z({3}, {-1, 0, 2}, true);
  Tape<double> tape;
  tape.backward(sum(relu(z, &tape), &tape));
  check_close(z.grad(), {0, 0, 1});

  CHECK(reshape(T({2, 3}), {6}).shape() == Shape{6});
  CHECK_THROWS_AS(reshape(T({2, 3}), {4}), ShapeError);
  CHECK_THROWS_AS(add(T({2}), T({3})), ShapeError);
}

TEST_CASE("grad_check validates eps and restores inputs") {
  std::mt19937_64 rng(5);
  std::vector<T> inputs{random_tensor({3}, rng)};
  const std::vector<double> before(inputs[0].data().begin(), inputs[0].data().end());
  LossFn<double> f = [&](Tape<double>& tape) { return sum(square(inputs[0], &tape), &tape); };
  CHECK_THROWS_AS(grad_check(f, std::span<T>(inputs), 0.0), ArgumentError);
  CHECK_THROWS_AS(grad_check(f, std::span<T>(inputs), 0.5), ArgumentError);
  auto report = grad_check(f, std::span<T>(inputs), 1e-5);
  CHECK(report.max_rel_error < 1e-7);
  CHECK(report.entries_checked == 3);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(inputs[0].data()[i] == before[i]);
}

TEST_CASE("primitive gradients") {
  std::mt19937_64 rng(7);
  SUBCASE("conv1d") {
    std::vector<T> in{random_tensor({2, 3, 6}, rng), random_tensor({4, 3, 3}, rng), random_tensor({4}, rng)};
    T probe = random_tensor({2, 4, 6}, rng, false);
    LossFn<double> f = [&](Tape<double>& t) { return probe_loss(conv1d(in[0], in[1], in[2], 1, &t), probe, t); };
    CHECK(grad_check(f, std::span<T>(in), 1e-6).max_rel_error <= 1e-3);
  }
  SUBCASE("pointwise conv1d") {
    std::vector<T> in{random_tensor({2, 3, 5}, rng), random_tensor({4, 3, 1}, rng)};
    T probe = random_tensor({2, 4, 5}, rng, false);
    LossFn<double> f = [&](Tape<double>& t) { return probe_loss(conv1d(in[0], in[1], T(), 0, &t), probe, t); };
    CHECK(grad_check(f, std::span<T>(in), 1e-6).max_rel_error <= 1e-3);
  }
  SUBCASE("depthwise") {
    std::vector<T> in{random_tensor({2, 3, 6}, rng), random_tensor({3, 3}, rng)};
    T probe = random_tensor({2, 3, 6}, rng, false);
    LossFn<double> f = [&](Tape<double>& t) { return probe_loss(depthwise_conv1d(in[0], in[1], 1, &t), probe, t); };
    CHECK(grad_check(f, std::span<T>(in), 1e-6).max_rel_error <= 1e-3);
  }
  SUBCASE("affine") {
    std::vector<T> in{random_tensor({3, 5}, rng), random_tensor({2, 5}, rng), random_tensor({2}, rng)};
    T probe = random_tensor({3, 2}, rng, false);
    LossFn<double> f = [&](Tape<double>& t) { return probe_loss(affine(in[0], in[1], in[2], &t), probe, t); };
    CHECK(grad_check(f, std::span<T>(in), 1e-6).max_rel_error <= 1e-3);
  }
  SUBCASE("relu away from the kink") {
    T x({6}, {-1.5, -0.7, 0.3, 0.9, 1.2, -2.0}, true);
    std::vector<T> in{x};
    T probe = random_tensor({6}, rng, false);
    LossFn<double> f = [&](Tape<double>& t) { return probe_loss(relu(in[0], &t), probe, t); };
    CHECK(grad_check(f, std::span<T>(in), 1e-6).max_rel_error <= 1e-3);
  }
}
