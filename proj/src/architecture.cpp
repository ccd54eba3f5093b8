#include "svdcnn/architecture.hpp"

#include <cmath>
#include <random>

namespace svdcnn {

namespace {

constexpr std::array<int, 4> kDepths{9, 17, 29, 49};

std::string depth_list() {
  std::string out = "{";
  for (std::size_t i = 0; i < kDepths.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(kDepths[i]);
  }
  return out + "}";
}

}  // namespace

const char* to_string(Family family) { return family == Family::vdcnn ? "vdcnn" : "svdcnn"; }

Family parse_family(std::string_view name) {
  if (name == "vdcnn") return Family::vdcnn;
  if (name == "svdcnn") return Family::svdcnn;
  throw ArgumentError("unknown family '" + std::string(name) + "', expected vdcnn or svdcnn");
}

std::span<const int> supported_depths() { return kDepths; }

std::array<int, 4> depth_layout(int depth) {
  switch (depth) {
    case 9: return {2, 2, 2, 2};
    case 17: return {4, 4, 4, 4};
    case 29: return {10, 10, 4, 4};
    case 49: return {16, 16, 10, 6};
    default:
      throw ArgumentError("unsupported depth " + std::to_string(depth) + ", valid depths are " +
                          depth_list());
  }
}

void ArchitectureSpec::validate() const {
  depth_layout(depth);
  if (embedding_dim < 1) throw ArgumentError("embedding_dim must be >= 1");
  if (vocab_size < 1) throw ArgumentError("vocab_size must be >= 1");
  if (n_classes < 1) throw ArgumentError("n_classes must be >= 1");
  if (k < 1) throw ArgumentError("k must be >= 1");
  if (family == Family::vdcnn && fc_hidden < 1) throw ArgumentError("fc_hidden must be >= 1");
  if (seq_len < 8 || seq_len % 8 != 0) {
    throw ArgumentError("sequence length " + std::to_string(seq_len) +
                        " must be a positive multiple of 8");
  }
  if (final_length() % k != 0) {
    throw ArgumentError("final length " + std::to_string(final_length()) +
                        " must be a multiple of k = " + std::to_string(k));
  }
}

std::string ArchitectureSpec::name() const {
  return std::string(to_string(family)) + "-" + std::to_string(depth);
}

template <typename Scalar>
Model<Scalar>::Model(const ArchitectureSpec& spec) : spec_(spec) {
  spec_.validate();
  const ConvKind kind = spec.family == Family::svdcnn ? ConvKind::tdsc : ConvKind::standard;
  embedding = Embedding<Scalar>(spec.vocab_size, spec.embedding_dim);
  stem = ConvLayer<Scalar>(ConvKind::standard, spec.embedding_dim, kStemChannels);

  const auto layout = depth_layout(spec.depth);
  Index in = kStemChannels;
  for (std::size_t level = 0; level < levels.size(); ++level) {
    const Index out = kLevelChannels[level];
    for (int b = 0; b < layout[level] / 2; ++b) {
      levels[level].emplace_back(kind, in, out);
      in = out;
    }
  }

  if (spec.family == Family::vdcnn) {
    classifier.emplace_back(spec.head_features(), spec.fc_hidden);
    classifier.emplace_back(spec.fc_hidden, spec.fc_hidden);
    classifier.emplace_back(spec.fc_hidden, spec.n_classes);
  } else {
    classifier.emplace_back(spec.head_features(), spec.n_classes);
  }
  set_mode(Mode::train);
}

template <typename Scalar>
Model<Scalar> Model<Scalar>::clone() const {
  Model copy(spec_);
  std::vector<Tensor<Scalar>> src;
  // for_each_tensor is non-const; the tensors are only read here.
  const_cast<Model*>(this)->for_each_tensor(
      [&](const std::string&, ParamCategory, Tensor<Scalar>& t) { src.push_back(t); });
  std::size_t i = 0;
  copy.for_each_tensor([&](const std::string&, ParamCategory, Tensor<Scalar>& t) {
    auto from = src[i++].data();
    std::copy(from.begin(), from.end(), t.mutable_data().begin());
  });
  copy.set_mode(mode_);
  return copy;
}

template <typename Scalar>
int Model<Scalar>::depth() const {
  int layers = 1;
  for (const auto& level : levels) layers += 2 * static_cast<int>(level.size());
  return layers;
}

template <typename Scalar>
void Model<Scalar>::set_mode(Mode mode) {
  mode_ = mode;
  stem.bn.mode = mode;
  for (auto& level : levels) {
    for (auto& block : level) {
      block.first.bn.mode = mode;
      block.second.bn.mode = mode;
    }
  }
}

template <typename Scalar>
Tensor<Scalar> Model<Scalar>::forward(const IndexBatch& batch, Tape<Scalar>* tape,
                                      ForwardTrace* trace) {
  if (batch.batch < 1) throw ShapeError("forward: empty batch");
  if (batch.length != spec_.seq_len) {
    throw ShapeError("forward: sequences have length " + std::to_string(batch.length) +
                     ", model expects " + std::to_string(spec_.seq_len));
  }
  if (mode_ == Mode::train && batch.batch < 2) {
    throw StateError("forward: train mode batch norm needs a batch of at least 2");
  }
  auto note = [&](const char* stage, const Tensor<Scalar>& t) {
    if (trace) trace->push_back({stage, t.dim(1), t.dim(2)});
  };

  Tensor<Scalar> x = embedding_forward(batch, embedding, tape);
  note("embedding", x);
  x = stem.forward(x, tape);
  note("stem", x);
  static constexpr const char* kLevelNames[] = {"level64", "level128", "level256", "level512"};
  for (std::size_t level = 0; level < levels.size(); ++level) {
    if (level > 0) x = maxpool_halve(x, tape);
    for (auto& block : levels[level]) x = block.forward(x, tape);
    note(kLevelNames[level], x);
  }

  x = spec_.family == Family::vdcnn ? kmax_pool(x, spec_.k, tape)
                                    : adaptive_avg_pool(x, spec_.k, tape);
  note("pooled", x);
  x = reshape(x, {batch.batch, spec_.head_features()}, tape);
  for (std::size_t i = 0; i < classifier.size(); ++i) {
    x = classifier[i].forward(x, tape);
    if (i + 1 < classifier.size()) x = relu(x, tape);
  }
  return x;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> Model<Scalar>::parameters() {
  std::vector<Tensor<Scalar>> out;
  for_each_tensor([&](const std::string&, ParamCategory category, Tensor<Scalar>& t) {
    if (category != ParamCategory::buffer) out.push_back(t);
  });
  return out;
}

template <typename Scalar>
void Model<Scalar>::zero_grad() {
  for_each_tensor([](const std::string&, ParamCategory, Tensor<Scalar>& t) { t.zero_grad(); });
}

namespace {

template <typename Scalar>
void fill_normal(Tensor<Scalar>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.mutable_data()) v = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
void init_conv_layer(ConvLayer<Scalar>& layer, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(layer.in_channels);
  if (layer.kind == ConvKind::tdsc) {
    fill_normal(layer.depthwise, 1.0 / std::sqrt(double(ConvLayer<Scalar>::kKernel)), rng);
    fill_normal(layer.weight, std::sqrt(2.0 / fan_in), rng);
  } else {
    fill_normal(layer.weight, std::sqrt(2.0 / (fan_in * ConvLayer<Scalar>::kKernel)), rng);
  }
}

}  // namespace

constexpr double kOutputGain = 0.1;

template <typename Scalar>
Model<Scalar> build_model(const ArchitectureSpec& spec, std::uint64_t seed) {
  Model<Scalar> model(spec);
  std::mt19937_64 rng(seed);

  fill_normal(model.embedding.table, 1.0, rng);
  auto table = model.embedding.table.mutable_data();
  std::fill(table.begin(), table.begin() + spec.embedding_dim, Scalar(0));

  init_conv_layer(model.stem, rng);
  for (auto& level : model.levels) {
    for (auto& block : level) {
      init_conv_layer(block.first, rng);
      init_conv_layer(block.second, rng);
      if (block.has_projection()) {
        fill_normal(block.projection, 1.0 / std::sqrt(double(block.in_channels())), rng);
      }
    }
  }
  for (std::size_t i = 0; i < model.classifier.size(); ++i) {
    auto& fc = model.classifier[i];
    const bool hidden = i + 1 < model.classifier.size();
    const double fan_in = static_cast<double>(fc.weight.dim(1));
    // A small output layer keeps the untrained loss near ln(n_classes).
    fill_normal(fc.weight, (hidden ? std::sqrt(2.0) : kOutputGain) / std::sqrt(fan_in), rng);
  }
  return model;
}

template class Model<float>;
template class Model<double>;
template Model<float> build_model<float>(const ArchitectureSpec&, std::uint64_t);
template Model<double> build_model<double>(const ArchitectureSpec&, std::uint64_t);

}  // namespace svdcnn
