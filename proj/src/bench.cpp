#include "svdcnn/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "svdcnn/params.hpp"

namespace svdcnn {

Clock steady_clock() {
  using clock = std::chrono::steady_clock;
  auto now = [] {
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
  };
  double resolution = std::chrono::duration<double, std::milli>(clock::duration(1)).count();
  double smallest = 0;
  for (int i = 0; i < 64; ++i) {
    const double a = now();
    double b = now();
    while (b == a) b = now();
    smallest = (smallest == 0) ? b - a : std::min(smallest, b - a);
  }
  return {now, std::max(resolution, smallest)};
}

LatencyStats measure_latency(const std::function<void()>& run, int reps, int warmup,
                             const Clock& clock) {
  if (reps < 2) throw ArgumentError("measure_latency: reps must be >= 2");
  if (warmup < 0) throw ArgumentError("measure_latency: warmup must be >= 0");
  for (int i = 0; i < warmup; ++i) run();

  std::vector<double> samples(static_cast<std::size_t>(reps));
  for (auto& s : samples) {
    const double start = clock.now_ms();
    run();
    s = clock.now_ms() - start;
  }
  double mean = 0;
  for (double s : samples) mean += s;
  mean /= reps;
  double ss = 0;
  for (double s : samples) ss += (s - mean) * (s - mean);

  LatencyStats stats;
  stats.mean_ms = mean;
  stats.std_ms = std::sqrt(ss / (reps - 1));
  stats.reps = reps;
  stats.warmup = warmup;
  stats.coarse_timer = clock.resolution_ms > 0.01 * mean;
  return stats;
}

template <typename Scalar>
LatencyStats measure_latency(Model<Scalar>& model, std::span<const std::int32_t> input, int reps,
                             int warmup, const Clock& clock) {
  if (model.mode() != Mode::eval) throw StateError("measure_latency: model must be in eval mode");
  IndexBatch batch{1, static_cast<Index>(input.size()),
                   std::vector<std::int32_t>(input.begin(), input.end())};
  volatile Scalar sink = 0;
  LatencyStats stats = measure_latency([&] { sink = model.forward(batch).data()[0]; }, reps,
                                       warmup, clock);
  (void)sink;
  stats.model = model.spec().name();
  stats.depth = model.spec().depth;
  return stats;
}

double latency_ratio(const LatencyStats& a, const LatencyStats& b) {
  if (!(b.mean_ms > 0)) throw ArgumentError("latency_ratio: denominator mean must be positive");
  return round_half_up(a.mean_ms / b.mean_ms, 2);
}

std::string format_row(const LatencyStats& stats) {
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s depth %-3d %9.2f ms +/- %.2f  (%d reps, %d warmup)%s",
                stats.model.c_str(), stats.depth, stats.mean_ms, stats.std_ms, stats.reps,
                stats.warmup, stats.coarse_timer ? "  [coarse timer]" : "");
  return line;
}

std::string to_record(const LatencyStats& stats) {
  nlohmann::json j = {{"model", stats.model},       {"depth", stats.depth},
                      {"mean_ms", stats.mean_ms},   {"std_ms", stats.std_ms},
                      {"reps", stats.reps},         {"warmup", stats.warmup},
                      {"environment", stats.environment}, {"coarse_timer", stats.coarse_timer}};
  return j.dump();
}

LatencyStats parse_record(std::string_view record) {
  try {
    const auto j = nlohmann::json::parse(record);
    LatencyStats stats;
    stats.model = j.value("model", "");
    stats.depth = j.value("depth", 0);
    stats.mean_ms = j.at("mean_ms").get<double>();
    stats.std_ms = j.at("std_ms").get<double>();
    stats.reps = j.at("reps").get<int>();
    stats.warmup = j.value("warmup", 0);
    stats.environment = j.value("environment", "");
    stats.coarse_timer = j.value("coarse_timer", false);
    return stats;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed latency record: ") + e.what());
  }
}

template LatencyStats measure_latency<float>(Model<float>&, std::span<const std::int32_t>, int,
                                             int, const Clock&);
template LatencyStats measure_latency<double>(Model<double>&, std::span<const std::int32_t>, int,
                                              int, const Clock&);

}  // namespace svdcnn
