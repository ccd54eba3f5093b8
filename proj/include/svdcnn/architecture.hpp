#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svdcnn/layers.hpp"

namespace svdcnn {

enum class Family { vdcnn, svdcnn };

const char* to_string(Family family);
Family parse_family(std::string_view name);

/// Feature-map widths of the four block levels.
inline constexpr std::array<Index, 4> kLevelChannels{64, 128, 256, 512};
inline constexpr Index kStemChannels = 64;
inline constexpr Index kPoolCount = 3;

std::span<const int> supported_depths();

/// Conv layers per level, ordered (64, 128, 256, 512). The stem adds one more.
std::array<int, 4> depth_layout(int depth);

struct ArchitectureSpec {
  Family family = Family::svdcnn;
  int depth = 9;
  Index seq_len = 1024;
  Index embedding_dim = 16;
  Index vocab_size = 70;
  Index n_classes = 4;
  Index fc_hidden = 2048;  // vdcnn head only
  Index k = 8;             // k-max / average-pool output length

  /// Throws ArgumentError naming the first offending field.
  void validate() const;

  Index final_length() const { return seq_len >> kPoolCount; }
  Index head_features() const { return kLevelChannels.back() * k; }
  std::string name() const;

  bool operator==(const ArchitectureSpec&) const = default;
};

struct StageShape {
  std::string stage;
  Index channels = 0;
  Index length = 0;
};

/// Per-sample (channels, length) recorded after each stage of a forward pass.
using ForwardTrace = std::vector<StageShape>;

/// Embedding, stem convolution, four block levels separated by halving pools,
/// and a classifier head (k-max + 3 FC for vdcnn, average pool + 1 FC for
/// svdcnn).
///
/// Move-only: layers hold shared tensor handles, so an implicit copy would
/// alias weights. clone() makes an independent replica.
template <typename Scalar>
class Model {
 public:
  explicit Model(const ArchitectureSpec& spec);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  Model clone() const;

  const ArchitectureSpec& spec() const { return spec_; }

  /// Stem plus every conv layer in the blocks; a depthwise/pointwise pair is one.
  int depth() const;

  Mode mode() const { return mode_; }
  void set_mode(Mode mode);

  /// Logits [B x n_classes]. Train mode needs B >= 2.
  Tensor<Scalar> forward(const IndexBatch& batch, Tape<Scalar>* tape = nullptr,
                         ForwardTrace* trace = nullptr);

  /// Every stored array, buffers included, in a fixed order.
  template <typename F>
  void for_each_tensor(F&& f) {
    embedding.for_each_tensor("embedding.", f);
    stem.for_each_tensor("stem.", f);
    for (std::size_t level = 0; level < levels.size(); ++level) {
      for (std::size_t b = 0; b < levels[level].size(); ++b) {
        levels[level][b].for_each_tensor(
            "level" + std::to_string(kLevelChannels[level]) + ".block" + std::to_string(b) + ".",
            f);
      }
    }
    for (std::size_t i = 0; i < classifier.size(); ++i) {
      classifier[i].for_each_tensor("fc" + std::to_string(i) + ".", f);
    }
  }

  /// Learned tensors only.
  std::vector<Tensor<Scalar>> parameters();

  void zero_grad();

  Embedding<Scalar> embedding;
  ConvLayer<Scalar> stem;
  std::array<std::vector<ConvBlock<Scalar>>, 4> levels;
  std::vector<Linear<Scalar>> classifier;

 private:
  ArchitectureSpec spec_;
  Mode mode_ = Mode::train;
};

/// Builds and initializes a model: fan-in scaled normal weights (gain sqrt(2)
/// where a ReLU follows, 1 on projections, 0.1 on the output layer), zero
/// padding row, gamma = 1, beta = 0, zero biases.
template <typename Scalar>
Model<Scalar> build_model(const ArchitectureSpec& spec, std::uint64_t seed);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace svdcnn
