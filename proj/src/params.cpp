#include "svdcnn/params.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace svdcnn {

Count classifier_weights(const ArchitectureSpec& spec) {
  const Count features = spec.head_features();
  if (spec.family == Family::vdcnn) {
    const Count h = spec.fc_hidden;
    return features * h + h * h + h * spec.n_classes;
  }
  return features * spec.n_classes;
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::floor(value * scale + 0.5) / scale;
}

double reduction_percent(Count before, Count after) {
  if (before <= 0) throw ArgumentError("reduction_percent: baseline must be positive");
  return round_half_up(100.0 * static_cast<double>(before - after) / static_cast<double>(before), 2);
}

double to_millions(Count count) { return round_half_up(static_cast<double>(count) / 1e6, 2); }

double storage_mb(Count parameters) {
  if (parameters < 0) throw ArgumentError("storage_mb: negative parameter count");
  return static_cast<double>(parameters) * 4.0 / (1024.0 * 1024.0);
}

template <typename Scalar>
ParamReport count_params(Model<Scalar>& model) {
  ParamReport report;
  model.for_each_tensor([&](const std::string&, ParamCategory category, Tensor<Scalar>& t) {
    switch (category) {
      case ParamCategory::embedding: report.embedding += t.size(); break;
      case ParamCategory::conv: report.conv += t.size(); break;
      case ParamCategory::batchnorm: report.batchnorm += t.size(); break;
      case ParamCategory::fc: report.fc += t.size(); break;
      case ParamCategory::buffer: break;
    }
  });
  return report;
}

ParamReport closed_form_params(const ArchitectureSpec& spec) {
  spec.validate();
  const bool separable = spec.family == Family::svdcnn;
  ParamReport report;
  report.embedding = spec.vocab_size * spec.embedding_dim;
  report.conv = standard_conv_weights(spec.embedding_dim, kStemChannels, 3);
  report.batchnorm = 2 * kStemChannels;

  const auto layout = depth_layout(spec.depth);
  Count in = kStemChannels;
  for (std::size_t level = 0; level < layout.size(); ++level) {
    const Count out = kLevelChannels[level];
    for (int b = 0; b < layout[level] / 2; ++b) {
      report.conv += separable ? tdsc_block_weights(in, out) : standard_block_weights(in, out);
      if (in != out) report.conv += in * out;  // 1x1 projection shortcut
      report.batchnorm += 2 * 2 * out;
      in = out;
    }
  }

  const Count biases =
      spec.family == Family::vdcnn ? 2 * spec.fc_hidden + spec.n_classes : spec.n_classes;
  report.fc = classifier_weights(spec) + biases;
  return report;
}

namespace {

ReferenceValue parse_value(const std::string& token, std::size_t line) {
  std::string digits = token;
  ReferenceValue value;
  if (!digits.empty() && digits.back() == '*') {
    value.known_discrepancy = true;
    digits.pop_back();
  }
  try {
    std::size_t used = 0;
    value.value = std::stod(digits, &used);
    if (used != digits.size()) throw std::invalid_argument(digits);
  } catch (const std::exception&) {
    throw ArgumentError("reference table line " + std::to_string(line) + ": bad value '" + token +
                        "'");
  }
  return value;
}

}  // namespace

std::vector<ReferenceRow> parse_reference_table(const std::string& text) {
  std::vector<ReferenceRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string token; fields >> token;) tokens.push_back(token);
    if (tokens.empty()) continue;
    if (tokens.size() != 6) {
      throw ArgumentError("reference table line " + std::to_string(number) +
                          ": expected 6 columns, got " + std::to_string(tokens.size()));
    }
    ReferenceRow row;
    row.family = parse_family(tokens[0]);
    try {
      row.depth = std::stoi(tokens[1]);
    } catch (const std::exception&) {
      throw ArgumentError("reference table line " + std::to_string(number) + ": bad depth");
    }
    row.conv_m = parse_value(tokens[2], number);
    row.fc_m = parse_value(tokens[3], number);
    row.total_m = parse_value(tokens[4], number);
    row.storage_mb = parse_value(tokens[5], number);
    rows.push_back(row);
  }
  return rows;
}

std::vector<ReferenceRow> load_reference_table(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw LookupError("cannot open reference table " + path.string());
  std::ostringstream text;
  text << file.rdbuf();
  return parse_reference_table(text.str());
}

ReferenceRow reference_from(const ParamReport& report, Family family, int depth) {
  ReferenceRow row;
  row.family = family;
  row.depth = depth;
  row.conv_m.value = to_millions(report.conv);
  row.fc_m.value = to_millions(report.fc);
  row.total_m.value = to_millions(report.total());
  row.storage_mb.value = round_half_up(report.storage_mb(), 2);
  return row;
}

const ReferenceRow& find_reference(const std::vector<ReferenceRow>& table, Family family,
                                   int depth) {
  for (const auto& row : table) {
    if (row.family == family && row.depth == depth) return row;
  }
  throw LookupError(std::string("no reference row for ") + to_string(family) + "-" +
                    std::to_string(depth));
}

const char* to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::flag: return "FLAG";
    case CheckStatus::fail: return "FAIL";
  }
  return "?";
}

bool ReconcileReport::passed() const {
  for (const auto& c : checks) {
    if (c.status == CheckStatus::fail) return false;
  }
  return true;
}

bool ReconcileReport::flagged() const {
  for (const auto& c : checks) {
    if (c.status == CheckStatus::flag) return true;
  }
  return false;
}

ReconcileReport reconcile(const ParamReport& report, const ReferenceRow& reference,
                          double tolerance) {
  if (!(tolerance >= 0)) throw ArgumentError("reconcile: tolerance must be non-negative");
  const ReferenceRow measured = reference_from(report, reference.family, reference.depth);
  ReconcileReport out;
  out.config = std::string(to_string(reference.family)) + "-" + std::to_string(reference.depth);
  out.tolerance = tolerance;

  auto check = [&](const char* field, const ReferenceValue& ours, const ReferenceValue& ref) {
    FieldCheck c;
    c.field = field;
    c.measured = ours.value;
    c.reference = ref.value;
    if (ref.value == 0.0) {
      c.rel_diff = ours.value == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      c.rel_diff = std::abs(ours.value - ref.value) / std::abs(ref.value);
    }
    // Both sides sit on a 0.01 grid; absorb representation noise.
    if (c.rel_diff <= tolerance + 1e-12) {
      c.status = CheckStatus::pass;
    } else {
      c.status = ref.known_discrepancy ? CheckStatus::flag : CheckStatus::fail;
    }
    out.checks.push_back(c);
  };
  check("conv_M", measured.conv_m, reference.conv_m);
  check("fc_M", measured.fc_m, reference.fc_m);
  check("total_M", measured.total_m, reference.total_m);
  check("storage_MB", measured.storage_mb, reference.storage_mb);
  return out;
}

template ParamReport count_params<float>(Model<float>&);
template ParamReport count_params<double>(Model<double>&);

}  // namespace svdcnn
