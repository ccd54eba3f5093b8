#include "svdcnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace svdcnn {

namespace {

using Kind = CheckpointError::Kind;

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buffer_.insert(buffer_.end(), p, p + n);
  }
  template <typename U>
  void uint(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buffer_.push_back(static_cast<unsigned char>(value >> (8 * i)));
    }
  }
  void f32(float value) { uint(std::bit_cast<std::uint32_t>(value)); }
  void f64(double value) { uint(std::bit_cast<std::uint64_t>(value)); }
  const std::vector<unsigned char>& buffer() const { return buffer_; }

 private:
  std::vector<unsigned char> buffer_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> data) : data_(std::move(data)) {}

  void bytes(void* out, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  template <typename U>
  U uint(const char* what) {
    need(sizeof(U), what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(U(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return value;
  }
  float f32(const char* what) { return std::bit_cast<float>(uint<std::uint32_t>(what)); }
  double f64(const char* what) { return std::bit_cast<double>(uint<std::uint64_t>(what)); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(Model<float>& model, const std::filesystem::path& path, int epoch,
                     const std::vector<EpochRecord>& history) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.uint<std::uint16_t>(kCheckpointVersion);
  const ArchitectureSpec& spec = model.spec();
  for (Index field : {Index(spec.family), Index(spec.depth), spec.seq_len, spec.embedding_dim,
                      spec.vocab_size, spec.n_classes, spec.fc_hidden, spec.k}) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(field));
  }
  model.for_each_tensor([&](const std::string&, ParamCategory, Tensor<float>& t) {
    w.uint<std::uint64_t>(static_cast<std::uint64_t>(t.size()));
    for (float v : t.data()) w.f32(v);
  });
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(epoch));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(history.size()));
  for (const auto& r : history) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(r.epoch));
    w.f64(r.train_loss);
    w.f64(r.val_accuracy);
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw CheckpointError(Kind::io, "cannot write checkpoint " + path.string());
  file.write(reinterpret_cast<const char*>(w.buffer().data()),
             static_cast<std::streamsize>(w.buffer().size()));
  if (!file) throw CheckpointError(Kind::io, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError(Kind::io, "cannot open checkpoint " + path.string());
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(file), {}));

  char magic[4];
  r.bytes(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw CheckpointError(Kind::bad_magic, path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = r.uint<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::bad_version,
                          "unsupported checkpoint version " + std::to_string(version));
  }

  std::uint32_t fields[8];
  for (auto& f : fields) f = r.uint<std::uint32_t>("spec");
  if (fields[0] > 1) throw CheckpointError(Kind::bad_spec, "checkpoint has an unknown family");
  ArchitectureSpec spec;
  spec.family = static_cast<Family>(fields[0]);
  spec.depth = static_cast<int>(fields[1]);
  spec.seq_len = fields[2];
  spec.embedding_dim = fields[3];
  spec.vocab_size = fields[4];
  spec.n_classes = fields[5];
  spec.fc_hidden = fields[6];
  spec.k = fields[7];
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::bad_spec, std::string("checkpoint spec invalid: ") + e.what());
  }

  Checkpoint out{Model<float>(spec), 0, {}};
  out.model.for_each_tensor([&](const std::string& name, ParamCategory, Tensor<float>& t) {
    const auto length = r.uint<std::uint64_t>("array length");
    if (length != static_cast<std::uint64_t>(t.size())) {
      throw CheckpointError(Kind::length_mismatch,
                            "array " + name + " has length " + std::to_string(length) +
                                ", expected " + std::to_string(t.size()));
    }
    for (auto& v : t.mutable_data()) v = r.f32("array data");
  });
  out.epoch = static_cast<int>(r.uint<std::uint32_t>("epoch"));
  const auto n = r.uint<std::uint32_t>("history length");
  for (std::uint32_t i = 0; i < n; ++i) {
    EpochRecord rec;
    rec.epoch = static_cast<int>(r.uint<std::uint32_t>("history"));
    rec.train_loss = r.f64("history");
    rec.val_accuracy = r.f64("history");
    out.history.push_back(rec);
  }
  if (r.remaining() != 0) {
    throw CheckpointError(Kind::trailing_data,
                          std::to_string(r.remaining()) + " unexpected bytes after checkpoint");
  }
  out.model.set_mode(Mode::eval);
  return out;
}

}  // namespace svdcnn
