#include "svdcnn/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace svdcnn {

Vocabulary::Vocabulary(std::string_view alphabet) : alphabet_(alphabet) {
  lookup_.fill(0);
  for (std::size_t i = 0; i < alphabet_.size(); ++i) {
    const auto c = static_cast<unsigned char>(alphabet_[i]);
    if (lookup_[c] != 0) throw ArgumentError(std::string("duplicate symbol '") + alphabet_[i] + "'");
    lookup_[c] = static_cast<std::int32_t>(i + 1);
  }
  for (int c = 'A'; c <= 'Z'; ++c) {
    if (lookup_[static_cast<std::size_t>(c)] == 0) {
      lookup_[static_cast<std::size_t>(c)] = lookup_[static_cast<std::size_t>(c - 'A' + 'a')];
    }
  }
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary vocab;
  return vocab;
}

std::vector<std::int32_t> quantize(std::string_view text, const Vocabulary& vocab, Index length) {
  if (length < 1) throw ArgumentError("quantize: length must be >= 1");
  std::vector<std::int32_t> ids(static_cast<std::size_t>(length), 0);
  const std::size_t n = std::min(text.size(), ids.size());
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.index_of(text[i]);
  return ids;
}

namespace {

// Splits one CSV record starting at `pos`; advances `pos` and `line`.
std::vector<std::string> read_record(std::string_view text, std::size_t& pos, std::size_t& line) {
  std::vector<std::string> fields;
  std::string field;
  const std::size_t start_line = line;
  bool quoted = false, was_quoted = false;
  while (pos < text.size()) {
    const char c = text[pos];
    if (quoted) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field.push_back('"');
          pos += 2;
          continue;
        }
        quoted = false;
        ++pos;
        continue;
      }
      if (c == '\n') ++line;
      field.push_back(c);
      ++pos;
      continue;
    }
    if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
      ++pos;
      continue;
    }
    if (c == '\n' || c == '\r') {
      ++pos;
      if (c == '\r' && pos < text.size() && text[pos] == '\n') ++pos;
      ++line;
      fields.push_back(std::move(field));
      return fields;
    }
    if (c == '"') {
      if (!field.empty() || was_quoted) {
        throw IngestError("line " + std::to_string(start_line) + ": stray quote inside field",
                          start_line);
      }
      quoted = was_quoted = true;
      ++pos;
      continue;
    }
    if (was_quoted) {
      throw IngestError("line " + std::to_string(start_line) + ": text after closing quote",
                        start_line);
    }
    field.push_back(c);
    ++pos;
  }
  if (quoted) {
    throw IngestError("line " + std::to_string(start_line) + ": unterminated quoted field",
                      start_line);
  }
  fields.push_back(std::move(field));
  return fields;
}

}  // namespace

Dataset parse_csv(std::string_view text, Index n_classes, const Vocabulary& vocab, Index seq_len,
                  std::string provenance) {
  if (n_classes < 1) throw ArgumentError("parse_csv: n_classes must be >= 1");
  Dataset dataset;
  dataset.n_classes = n_classes;
  dataset.seq_len = seq_len;
  dataset.provenance = std::move(provenance);

  std::size_t pos = 0, line = 1;
  while (pos < text.size()) {
    const std::size_t record_line = line;
    const auto fields = read_record(text, pos, line);
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() < 2) {
      throw IngestError("line " + std::to_string(record_line) + ": expected class and text fields",
                        record_line);
    }
    const std::string& cls = fields[0];
    long long label = 0;
    const bool digits = !cls.empty() && std::all_of(cls.begin(), cls.end(), [](char ch) {
      return std::isdigit(static_cast<unsigned char>(ch));
    });
    if (!digits || cls.size() > 9) {
      throw IngestError("line " + std::to_string(record_line) + ": class '" + cls +
                            "' is not a positive integer",
                        record_line);
    }
    label = std::stoll(cls);
    if (label < 1 || label > n_classes) {
      throw IngestError("line " + std::to_string(record_line) + ": class " + cls +
                            " outside [1, " + std::to_string(n_classes) + "]",
                        record_line);
    }
    std::string joined = fields[1];
    for (std::size_t i = 2; i < fields.size(); ++i) {
      joined.push_back(' ');
      joined += fields[i];
    }
    dataset.samples.push_back({quantize(joined, vocab, seq_len), static_cast<std::int32_t>(label - 1)});
  }
  if (dataset.samples.empty()) throw IngestError(dataset.provenance + ": no records", 0);
  return dataset;
}

Dataset load_csv(const std::filesystem::path& path, Index n_classes, const Vocabulary& vocab,
                 Index seq_len) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IngestError("cannot open " + path.string(), 0);
  std::ostringstream text;
  text << file.rdbuf();
  return parse_csv(text.str(), n_classes, vocab, seq_len, path.string());
}

namespace {

std::vector<Batch> cut_batches(const Dataset& dataset, const std::vector<std::size_t>& order,
                               Index batch_size) {
  std::vector<Batch> batches;
  const Index length = dataset.seq_len;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
    Batch batch;
    batch.inputs.batch = static_cast<Index>(end - begin);
    batch.inputs.length = length;
    batch.inputs.ids.reserve(static_cast<std::size_t>(batch.inputs.batch * length));
    for (std::size_t i = begin; i < end; ++i) {
      const Sample& s = dataset.samples[order[i]];
      batch.inputs.ids.insert(batch.inputs.ids.end(), s.indices.begin(), s.indices.end());
      batch.labels.push_back(s.label);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace

std::vector<Batch> make_batches(const Dataset& dataset, Index batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw ArgumentError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(dataset.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return cut_batches(dataset, order, batch_size);
}

std::vector<Batch> sequential_batches(const Dataset& dataset, Index batch_size) {
  if (batch_size < 1) throw ArgumentError("sequential_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(dataset.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return cut_batches(dataset, order, batch_size);
}

Dataset synth_dataset(Index n, Index n_classes, Index seq_len, std::uint64_t seed) {
  if (n_classes < 1 || n_classes > 26) throw ArgumentError("synth_dataset: n_classes must be in [1, 26]");
  if (n < n_classes) throw ArgumentError("synth_dataset: need at least one sample per class");
  if (seq_len < 1) throw ArgumentError("synth_dataset: seq_len must be >= 1");

  constexpr double kMarkerRate = 0.4;
  const Vocabulary& vocab = Vocabulary::standard();
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution marker(kMarkerRate);
  std::uniform_int_distribution<int> letter(0, 25);

  Dataset dataset;
  dataset.n_classes = n_classes;
  dataset.seq_len = seq_len;
  dataset.provenance = "synthetic:seed=" + std::to_string(seed);
  std::string text(static_cast<std::size_t>(seq_len), ' ');
  for (Index i = 0; i < n; ++i) {
    const auto label = static_cast<std::int32_t>(i % n_classes);
    for (auto& c : text) c = static_cast<char>('a' + (marker(rng) ? label : letter(rng)));
    dataset.samples.push_back({quantize(text, vocab, seq_len), label});
  }
  return dataset;
}

}  // namespace svdcnn
