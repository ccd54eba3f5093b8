#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>

#include "svdcnn/architecture.hpp"

namespace svdcnn {

/// Time source in milliseconds plus the smallest step it can resolve.
struct Clock {
  std::function<double()> now_ms;
  double resolution_ms = 0.0;
};

/// std::chrono::steady_clock with an empirically measured resolution.
Clock steady_clock();

struct LatencyStats {
  std::string model;  // e.g. "svdcnn-9"
  int depth = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;  // sample standard deviation (n - 1)
  int reps = 0;
  int warmup = 0;
  std::string environment;
  bool coarse_timer = false;  // resolution above 1% of the mean
};

/// Runs `run` `warmup` times untimed, then `reps` timed times.
LatencyStats measure_latency(const std::function<void()>& run, int reps, int warmup,
                             const Clock& clock);

/// Single-instance eval-mode forward passes (no input quantization).
template <typename Scalar>
LatencyStats measure_latency(Model<Scalar>& model, std::span<const std::int32_t> input,
                             int reps = 1000, int warmup = 10, const Clock& clock = steady_clock());

/// a.mean / b.mean, rounded half-up to 2 places.
double latency_ratio(const LatencyStats& a, const LatencyStats& b);

/// "svdcnn-9  depth 9  25.88 ms +/- 0.52  (1000 reps)"
std::string format_row(const LatencyStats& stats);

/// One-line JSON record, and its inverse.
std::string to_record(const LatencyStats& stats);
LatencyStats parse_record(std::string_view record);

}  // namespace svdcnn
