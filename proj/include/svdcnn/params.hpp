#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "svdcnn/architecture.hpp"

namespace svdcnn {

using Count = std::int64_t;

// Closed-form weight counts (biases and batch norm excluded).

/// Temporal standard convolution: In * Out * K.
constexpr Count standard_conv_weights(Count in, Count out, Count kernel) { return in * out * kernel; }

/// Depthwise + pointwise pair: In * K + In * Out.
constexpr Count tdsc_weights(Count in, Count out, Count kernel) { return in * kernel + in * out; }

/// Two kernel-3 standard layers, In -> Out -> Out.
constexpr Count standard_block_weights(Count in, Count out) {
  return standard_conv_weights(in, out, 3) + standard_conv_weights(out, out, 3);
}

/// Two kernel-3 separable layers, In -> Out -> Out.
constexpr Count tdsc_block_weights(Count in, Count out) {
  return tdsc_weights(in, out, 3) + tdsc_weights(out, out, 3);
}

/// Classifier-head weights without biases: 512*k*h + h*h + h*n for the
/// k-max/FC head, 512*k*n for the average-pool head.
Count classifier_weights(const ArchitectureSpec& spec);

/// Percentage saved going from `before` to `after`, rounded half-up to 2 places.
double reduction_percent(Count before, Count after);

double round_half_up(double value, int decimals);

/// Millions, rounded half-up to 2 places.
double to_millions(Count count);

/// Binary megabytes at 4 bytes per parameter.
double storage_mb(Count parameters);

struct ParamReport {
  Count embedding = 0;
  Count conv = 0;       // stem, block convs (depthwise/pointwise), projections
  Count batchnorm = 0;  // gamma + beta
  Count fc = 0;         // weights + biases

  Count total() const { return embedding + conv + batchnorm + fc; }
  double storage_mb() const { return svdcnn::storage_mb(total()); }

  bool operator==(const ParamReport&) const = default;
};

/// Counts by walking every learned array of a built model.
template <typename Scalar>
ParamReport count_params(Model<Scalar>& model);

/// Same categories from the closed-form expressions above.
ParamReport closed_form_params(const ArchitectureSpec& spec);

/// One published value; `known_discrepancy` marks entries produced under a
/// counting convention this implementation does not reproduce.
struct ReferenceValue {
  double value = 0.0;
  bool known_discrepancy = false;
};

struct ReferenceRow {
  Family family = Family::svdcnn;
  int depth = 0;
  ReferenceValue conv_m;
  ReferenceValue fc_m;
  ReferenceValue total_m;
  ReferenceValue storage_mb;
};

/// Whitespace-separated rows `family depth conv_M fc_M total_M storage_MB`;
/// `#` starts a comment and a trailing `*` sets known_discrepancy.
std::vector<ReferenceRow> load_reference_table(const std::filesystem::path& path);
std::vector<ReferenceRow> parse_reference_table(const std::string& text);

/// A reference row holding `report` at table precision.
ReferenceRow reference_from(const ParamReport& report, Family family, int depth);

const ReferenceRow& find_reference(const std::vector<ReferenceRow>& table, Family family,
                                   int depth);

enum class CheckStatus { pass, flag, fail };

const char* to_string(CheckStatus status);

struct FieldCheck {
  std::string field;
  double measured = 0.0;  // at reference precision
  double reference = 0.0;
  double rel_diff = 0.0;
  CheckStatus status = CheckStatus::pass;
};

struct ReconcileReport {
  std::string config;
  double tolerance = 0.0;
  std::vector<FieldCheck> checks;

  bool passed() const;   // no field failed
  bool flagged() const;  // some known-discrepancy field exceeded tolerance
};

/// Compares a report against a reference row at the row's 2-decimal
/// precision. Out-of-tolerance fields fail unless the reference marks them as
/// a known discrepancy, in which case they are flagged.
ReconcileReport reconcile(const ParamReport& report, const ReferenceRow& reference,
                          double tolerance);

extern template ParamReport count_params<float>(Model<float>&);
extern template ParamReport count_params<double>(Model<double>&);

}  // namespace svdcnn
