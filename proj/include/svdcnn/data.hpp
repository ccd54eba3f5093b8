#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "svdcnn/layers.hpp"

namespace svdcnn {

/// Lowercase letters, digits, 32 punctuation marks and newline.
inline constexpr std::string_view kDefaultAlphabet =
    "abcdefghijklmnopqrstuvwxyz0123456789-,;.!?:'\"/\\|_@#$%^&*~`+=<>()[]{}\n";

/// Character dictionary. Index 0 is padding; symbol i of the alphabet maps to
/// i + 1. Lookup lowercases ASCII and sends anything unknown to padding.
class Vocabulary {
 public:
  explicit Vocabulary(std::string_view alphabet = kDefaultAlphabet);

  static const Vocabulary& standard();

  /// Alphabet plus the padding entry.
  Index size() const { return static_cast<Index>(alphabet_.size()) + 1; }
  std::int32_t index_of(char c) const { return lookup_[static_cast<unsigned char>(c)]; }
  std::string_view alphabet() const { return alphabet_; }

 private:
  std::string alphabet_;
  std::array<std::int32_t, 256> lookup_{};
};

/// First `length` characters as ids, right-padded with 0.
std::vector<std::int32_t> quantize(std::string_view text, const Vocabulary& vocab, Index length);

struct Sample {
  std::vector<std::int32_t> indices;
  std::int32_t label = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  Index n_classes = 0;
  Index seq_len = 0;
  std::string provenance;

  Index size() const { return static_cast<Index>(samples.size()); }
};

/// Class-first CSV: column 1 is a 1-based class id, the remaining columns are
/// text joined with single spaces. Fields may be double-quoted with "" as an
/// escaped quote; quoted fields may span lines.
Dataset load_csv(const std::filesystem::path& path, Index n_classes, const Vocabulary& vocab,
                 Index seq_len);
Dataset parse_csv(std::string_view text, Index n_classes, const Vocabulary& vocab, Index seq_len,
                  std::string provenance = "<memory>");

struct Batch {
  IndexBatch inputs;
  std::vector<std::int32_t> labels;
};

/// One epoch: a seeded permutation cut into batches; the last may be short.
std::vector<Batch> make_batches(const Dataset& dataset, Index batch_size, std::uint64_t seed);

/// Every sample in order, in batches of `batch_size`.
std::vector<Batch> sequential_batches(const Dataset& dataset, Index batch_size);

/// Labels go round-robin over classes. Each character of a class-c text is the
/// letter 'a' + c with probability 0.4 and a uniform letter otherwise.
Dataset synth_dataset(Index n, Index n_classes, Index seq_len, std::uint64_t seed);

}  // namespace svdcnn
