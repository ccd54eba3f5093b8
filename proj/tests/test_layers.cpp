#include <doctest.h>

#include <algorithm>
#include <random>

#include "svdcnn/architecture.hpp"
#include "svdcnn/grad_check.hpp"
#include "svdcnn/training.hpp"

using namespace svdcnn;

namespace {

using T = Tensor<double>;

T random_tensor(Shape shape, std::mt19937_64& rng, bool grad = true) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = n(rng);
  return T(std::move(shape), std::move(v), grad);
}

T probe_loss(const T& y, const T& w, Tape<double>& tape) {
  return sum(square(add(y, w, &tape), &tape), &tape);
}

void check_close(std::span<const double> got, std::vector<double> want, double tol = 1e-9) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(tol));
}

void randomize_bn(BatchNorm<double>& bn, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (auto& g : bn.gamma.mutable_data()) g = u(rng);
  for (auto& b : bn.beta.mutable_data()) b = u(rng) - 1.0;
}

}  // namespace

TEST_CASE("embedding lookup") {
  Embedding<double> e(3, 2);
  auto t = e.table.mutable_data();
  std::vector<double> rows{0, 0, 3, 4, 1, 2};
  std::copy(rows.begin(), rows.end(), t.begin());
  std::vector<std::int32_t> ids{1, 2};
  auto y = embedding_forward(std::span<const std::int32_t>(ids), e);
  CHECK(y.shape() == Shape{2, 2});
  check_close(y.data(), {3, 1, 4, 2});

  std::vector<std::int32_t> bad{1, 3};
  try {
    embedding_forward(std::span<const std::int32_t>(bad), e);
    FAIL("expected LookupError");
  } catch (const LookupError& err) {
    CHECK(std::string(err.what()).find("position 1") != std::string::npos);
  }

  IndexBatch batch{2, 2, {1, 0, 2, 2}};
  auto yb = embedding_forward(batch, e);
  CHECK(yb.shape() == Shape{2, 2, 2});
  check_close(yb.data(), {3, 0, 4, 0, 1, 1, 2, 2});
}

TEST_CASE("embedding gradient skips the padding row") {
  Embedding<double> e(4, 3);
  std::mt19937_64 rng(1);
  e.table = random_tensor({4, 3}, rng);
  IndexBatch batch{2, 3, {0, 1, 2, 3, 0, 1}};
  T probe = random_tensor({2, 3, 3}, rng, false);
  Tape<double> tape;
  tape.backward(probe_loss(embedding_forward(batch, e, &tape), probe, tape));
  for (Index f = 0; f < 3; ++f) CHECK(e.table.grad()[static_cast<std::size_t>(f)] == 0.0);

  std::vector<T> in{e.table};
  LossFn<double> fn = [&](Tape<double>& t) { return probe_loss(embedding_forward(batch, e, &t), probe, t); };
  auto report = grad_check(fn, std::span<T>(in), 1e-6);
  // row 0 is excluded from the analytic gradient; check the others
  CHECK(report.max_rel_error == doctest::Approx(1.0));
  CHECK(report.worst_entry < 3);
}

TEST_CASE("batchnorm") {
  BatchNorm<double> bn(1);
  bn.eps = 1e-12;
  check_close(batchnorm_forward(T({1, 2}, {1, 3}), bn).data(), {-1, 1}, 1e-6);
  CHECK(bn.running_mean.data()[0] == doctest::Approx(0.2));
  CHECK(bn.running_var.data()[0] == doctest::Approx(0.9 + 0.1 * 2.0));

  bn.mode = Mode::eval;
  bn.running_mean.mutable_data()[0] = 2;
  bn.running_var.mutable_data()[0] = 4;
  check_close(batchnorm_forward(T({1, 2}, {0, 4}), bn).data(), {-1, 1}, 1e-6);

  BatchNorm<double> single(1);
  CHECK_THROWS_AS(batchnorm_forward(T({1, 1}, std::vector<double>{5}), single), StateError);
  CHECK_THROWS_AS(batchnorm_forward(T({2, 4}), single), ShapeError);

  // normalized output has zero mean and unit biased variance per channel
  std::mt19937_64 rng(2);
  BatchNorm<double> wide(3);
  T y = batchnorm_forward(random_tensor({4, 3, 5}, rng, false), wide);
  for (Index c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    for (Index b = 0; b < 4; ++b)
      for (Index t = 0; t < 5; ++t) s += y.data()[(b * 3 + c) * 5 + t];
    for (Index b = 0; b < 4; ++b)
      for (Index t = 0; t < 5; ++t) ss += std::pow(y.data()[(b * 3 + c) * 5 + t] - s / 20, 2);
    CHECK(s / 20 == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(ss / 20 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("pooling examples") {
  check_close(maxpool_halve(T({1, 4}, {1, 2, 3, 4})).data(), {2, 4});
  CHECK(maxpool_halve(T({2, 5})).dim(1) == 3);
  check_close(kmax_pool(T({1, 5}, {3, 1, 5, 2, 4}), 3).data(), {3, 5, 4});
  check_close(kmax_pool(T({1, 4}, {2, 2, 1, 2}), 2).data(), {2, 2});
  CHECK_THROWS_AS(kmax_pool(T({1, 4}), 5), ArgumentError);
  check_close(adaptive_avg_pool(T({1, 4}, {1, 2, 3, 4}), 2).data(), {1.5, 3.5});
  CHECK_THROWS_AS(adaptive_avg_pool(T({1, 6}), 4), ArgumentError);
}

TEST_CASE("kmax output is an order-preserving subsequence holding the k largest") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> small(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    const Index L = 8, k = 1 + trial % L;
    std::vector<double> v(static_cast<std::size_t>(L));
    for (auto& x : v) x = small(rng);
    T pooled = kmax_pool(T({1, L}, v), k);
    auto y = pooled.data();
    std::size_t pos = 0;
    for (double value : y) {
      while (pos < v.size() && v[pos] != value) ++pos;
      REQUIRE(pos < v.size());
      ++pos;
    }
    std::vector<double> sorted_in = v, sorted_out(y.begin(), y.end());
    std::sort(sorted_in.rbegin(), sorted_in.rend());
    std::sort(sorted_out.rbegin(), sorted_out.rend());
    for (Index i = 0; i < k; ++i) CHECK(sorted_out[static_cast<std::size_t>(i)] == sorted_in[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("average pooling preserves the mean") {
  std::mt19937_64 rng(4);
  T x = random_tensor({2, 3, 16}, rng, false);
  for (Index out : {1, 2, 4, 8, 16}) {
    T y = adaptive_avg_pool(x, out);
    CHECK(y.shape() == Shape{2, 3, out});
    const double mx = x.vector().mean(), my = y.vector().mean();
    CHECK(my == doctest::Approx(mx).epsilon(1e-12));
  }
}

TEST_CASE("layer gradients") {
  std::mt19937_64 rng(13);
  SUBCASE("batchnorm train") {
    BatchNorm<double> bn(3);
    randomize_bn(bn, rng);
    std::vector<T> in{random_tensor({2, 3, 5}, rng), bn.gamma, bn.beta};
    T probe = random_tensor({2, 3, 5}, rng, false);
    LossFn<double> f = [&](Tape<double>& t) { return probe_loss(batchnorm_forward(in[0], bn, &t), probe, t); };
    CHECK(grad_check(f, std::span<T>(in), 1e-6).max_rel_error <= 1e-3);
  }
  SUBCASE("batchnorm eval") {
    BatchNorm<double> bn(3);
    randomize_bn(bn, rng);
    bn.mode = Mode::eval;
    std::vector<T> in{random_tensor({2, 3, 5}, rng), bn.gamma, bn.beta};
    T probe = random_tensor({2, 3, 5}, rng, false);
    LossFn<double> f = [&](Tape<double>& t) { return probe_loss(batchnorm_forward(in[0], bn, &t), probe, t); };
    CHECK(grad_check(f, std::span<T>(in), 1e-6).max_rel_error <= 1e-3);
  }
  SUBCASE("maxpool") {
    std::vector<T> in{random_tensor({2, 3, 7}, rng)};
    T probe = random_tensor({2, 3, 4}, rng, false);
    LossFn<double> f = [&](Tape<double>& t) { return probe_loss(maxpool_halve(in[0], &t), probe, t); };
    CHECK(grad_check(f, std::span<T>(in), 1e-6).max_rel_error <= 1e-3);
  }
  SUBCASE("kmax") {
    std::vector<T> in{random_tensor({2, 3, 8}, rng)};
    T probe = random_tensor({2, 3, 3}, rng, false);
    LossFn<double> f = [&](Tape<double>& t) { return probe_loss(kmax_pool(in[0], 3, &t), probe, t); };
    CHECK(grad_check(f, std::span<T>(in), 1e-6).max_rel_error <= 1e-3);
  }
  SUBCASE("average pool") {
    std::vector<T> in{random_tensor({2, 3, 8}, rng)};
    T probe = random_tensor({2, 3, 2}, rng, false);
    LossFn<double> f = [&](Tape<double>& t) { return probe_loss(adaptive_avg_pool(in[0], 2, &t), probe, t); };
    CHECK(grad_check(f, std::span<T>(in), 1e-6).max_rel_error <= 1e-3);
  }
  SUBCASE("conv blocks") {
    for (ConvKind kind : {ConvKind::standard, ConvKind::tdsc}) {
      for (Index out : {3, 5}) {
        ConvBlock<double> block(kind, 3, out);
        std::vector<T> in{random_tensor({2, 3, 6}, rng)};
        block.for_each_tensor("", [&](const std::string&, ParamCategory cat, T& t) {
          if (cat == ParamCategory::buffer) return;
          if (cat == ParamCategory::conv) t = random_tensor(t.shape(), rng);
          in.push_back(t);
        });
        randomize_bn(block.first.bn, rng);
        randomize_bn(block.second.bn, rng);
        T probe = random_tensor({2, out, 6}, rng, false);
        LossFn<double> f = [&](Tape<double>& t) { return probe_loss(block.forward(in[0], &t), probe, t); };
        CHECK(grad_check(f, std::span<T>(in), 1e-6).max_rel_error <= 1e-3);
      }
    }
  }
  SUBCASE("cross entropy") {
    std::vector<T> in{random_tensor({3, 4}, rng)};
    std::vector<std::int32_t> labels{0, 3, 1};
    LossFn<double> f = [&](Tape<double>& t) {
      return cross_entropy(in[0], std::span<const std::int32_t>(labels), &t);
    };
    CHECK(grad_check(f, std::span<T>(in), 1e-6).max_rel_error <= 1e-3);
  }
}

TEST_CASE("conv block structure") {
  ConvBlock<float> same(ConvKind::standard, 64, 64);
  CHECK_FALSE(same.has_projection());
  ConvBlock<float> grow(ConvKind::standard, 64, 128);
  CHECK(grow.has_projection());
  CHECK(grow.projection_weight_count() == 8192);
  CHECK(ConvBlock<float>(ConvKind::standard, 128, 256).main_weight_count() == 294912);
  CHECK(ConvBlock<float>(ConvKind::tdsc, 128, 256).main_weight_count() == 99456);
  CHECK(ConvLayer<float>(ConvKind::tdsc, 128, 256).weight_count() == 33152);
  CHECK(ConvLayer<float>(ConvKind::standard, 16, 64).weight_count() == 3072);

  // identity shortcut: zeroed main path leaves y = x + relu(beta) = x
  ConvBlock<double> block(ConvKind::tdsc, 2, 2);
  std::mt19937_64 rng(1);
  T x = random_tensor({2, 2, 4}, rng, false);
  T y = block.forward(x);
  for (Index i = 0; i < x.size(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("end-to-end model gradient") {
  ArchitectureSpec spec;
  spec.seq_len = 32;
  spec.k = 4;  // 32 / 8 leaves 4 positions
  auto model = build_model<double>(spec, 21);
  auto corpus = synth_dataset(4, 4, 32, 8);
  IndexBatch inputs = sequential_batches(corpus, 2).front().inputs;
  std::vector<std::int32_t> labels{0, 1};
  std::vector<T> params = model.parameters();
  LossFn<double> f = [&](Tape<double>& t) {
    return cross_entropy(model.forward(inputs, &t), std::span<const std::int32_t>(labels), &t);
  };
  GradCheckOptions opts;
  opts.max_entries_per_input = 6;
  opts.seed = 3;
  auto report = grad_check(f, std::span<T>(params), 1e-5, opts);
  INFO("worst input " << report.worst_input << " entry " << report.worst_entry << " analytic "
                      << report.worst_analytic << " numeric " << report.worst_numeric);
  CHECK(report.max_rel_error <= 1e-3);
}
