#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "svdcnn/bench.hpp"
#include "svdcnn/checkpoint.hpp"

using namespace svdcnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "svdcnn_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

CheckpointError::Kind load_failure(const fs::path& p) {
  try {
    load_checkpoint(p);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("checkpoint unexpectedly loaded");
  return CheckpointError::Kind::io;
}

Clock scripted(std::vector<double> reads) {
  auto pos = std::make_shared<std::size_t>(0);
  auto values = std::make_shared<std::vector<double>>(std::move(reads));
  return Clock{[pos, values] { return (*values)[(*pos)++]; }, 1e-6};
}

}  // namespace

TEST_CASE("checkpoint roundtrip") {
  ArchitectureSpec spec;
  spec.seq_len = 64;
  auto model = build_model<float>(spec, 5);
  // move the running statistics off their defaults
  auto data = synth_dataset(8, 4, 64, 1);
  model.forward(sequential_batches(data, 8).front().inputs);
  model.set_mode(Mode::eval);

  const auto path = scratch("roundtrip.ckpt");
  std::vector<EpochRecord> history{{1, 1.25, 0.5}, {2, 0.75, 0.8}};
  save_checkpoint(model, path, 2, history);
  auto loaded = load_checkpoint(path);
  CHECK(loaded.model.spec() == spec);
  CHECK(loaded.model.mode() == Mode::eval);
  CHECK(loaded.epoch == 2);
  REQUIRE(loaded.history.size() == 2);
  CHECK(loaded.history[1].val_accuracy == 0.8);

  std::vector<Tensor<float>> a, b;
  model.for_each_tensor([&](const std::string&, ParamCategory, Tensor<float>& t) { a.push_back(t); });
  loaded.model.for_each_tensor([&](const std::string&, ParamCategory, Tensor<float>& t) { b.push_back(t); });
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(std::memcmp(a[i].data().data(), b[i].data().data(), a[i].data().size_bytes()) == 0);

  IndexBatch probe{2, 64, std::vector<std::int32_t>(128, 7)};
  auto x = model.forward(probe), y = loaded.model.forward(probe);
  CHECK(std::memcmp(x.data().data(), y.data().data(), x.data().size_bytes()) == 0);
}

TEST_CASE("checkpoint corruption is diagnosed") {
  ArchitectureSpec spec;
  spec.seq_len = 32;
  spec.k = 4;
  auto model = build_model<float>(spec, 1);
  const auto good = scratch("good.ckpt");
  save_checkpoint(model, good);
  const std::string bytes = slurp(good);
  const auto bad = scratch("bad.ckpt");
  using Kind = CheckpointError::Kind;

  CHECK(load_failure(scratch("missing.ckpt")) == Kind::io);

  std::string magic = bytes;
  magic[0] = 'X';
  spit(bad, magic);
  CHECK(load_failure(bad) == Kind::bad_magic);

  std::string version = bytes;
  version[4] = 9;
  spit(bad, version);
  CHECK(load_failure(bad) == Kind::bad_version);

  std::string depth = bytes;
  depth[10] = 13;  // second spec field, low byte
  spit(bad, depth);
  CHECK(load_failure(bad) == Kind::bad_spec);

  spit(bad, bytes.substr(0, bytes.size() / 2));
  CHECK(load_failure(bad) == Kind::truncated);

  std::string length = bytes;
  length[6 + 32] = static_cast<char>(length[6 + 32] + 1);  // first array length
  spit(bad, length);
  CHECK(load_failure(bad) == Kind::length_mismatch);

  spit(bad, bytes + "extra");
  CHECK(load_failure(bad) == Kind::trailing_data);
}

TEST_CASE("latency statistics with a scripted clock") {
  // warmup reads nothing; each rep reads start and stop
  auto stats = measure_latency([] {}, 3, 2, scripted({0, 1, 1, 3, 3, 6}));
  CHECK(stats.mean_ms == 2.0);
  CHECK(stats.std_ms == 1.0);
  CHECK(stats.reps == 3);
  CHECK(stats.warmup == 2);
  CHECK_FALSE(stats.coarse_timer);

  int calls = 0;
  measure_latency([&] { ++calls; }, 3, 2, scripted({0, 1, 1, 3, 3, 6}));
  CHECK(calls == 5);

  Clock coarse = scripted({0, 1, 1, 3, 3, 6});
  coarse.resolution_ms = 0.5;
  CHECK(measure_latency([] {}, 3, 0, coarse).coarse_timer);
  CHECK_THROWS_AS(measure_latency([] {}, 1, 0, scripted({0, 1})), ArgumentError);
}

TEST_CASE("latency ratio and records") {
  LatencyStats a, b;
  a.mean_ms = 1.0;
  b.mean_ms = 4.8;
  CHECK(latency_ratio(a, b) == doctest::Approx(0.21));
  a.mean_ms = 3.9;
  b.mean_ms = 24.7;
  CHECK(latency_ratio(a, b) == doctest::Approx(0.16));
  b.mean_ms = 0;
  CHECK_THROWS_AS(latency_ratio(a, b), ArgumentError);

  LatencyStats s;
  s.model = "svdcnn-9";
  s.depth = 9;
  s.mean_ms = 25.88;
  s.std_ms = 0.52;
  s.reps = 1000;
  s.warmup = 10;
  s.environment = "cpu";
  auto back = parse_record(to_record(s));
  CHECK(back.model == s.model);
  CHECK(back.mean_ms == s.mean_ms);
  CHECK(back.reps == 1000);
  CHECK(format_row(s).find("25.88 ms +/- 0.52") != std::string::npos);
  CHECK_THROWS_AS(parse_record("{\"model\": 3"), ArgumentError);
}

TEST_CASE("model latency needs eval mode") {
  ArchitectureSpec spec;
  spec.seq_len = 32;
  spec.k = 4;
  auto model = build_model<float>(spec, 0);
  std::vector<std::int32_t> input(32, 3);
  CHECK_THROWS_AS(measure_latency(model, std::span<const std::int32_t>(input), 5, 1), StateError);
  model.set_mode(Mode::eval);
  auto stats = measure_latency(model, std::span<const std::int32_t>(input), 5, 1);
  CHECK(stats.model == "svdcnn-9");
  CHECK(stats.reps == 5);
  CHECK(stats.mean_ms > 0);
}
