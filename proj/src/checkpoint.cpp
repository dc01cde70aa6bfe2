#include "protoco/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace protoco {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'P', 'T', 'C', 'O'};

class Writer {
 public:
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

  template <typename T>
  void le(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }

  std::vector<std::uint8_t> take() { return std::move(out_); }
  const std::vector<std::uint8_t>& data() const { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::span<const std::uint8_t> bytes(std::size_t n) {
    if (n > b_.size() - pos_) throw CheckpointError("checkpoint: truncated payload");
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  template <typename T>
  T le() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    auto s = bytes(sizeof(U));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(s[i]) << (8 * i);
    return std::bit_cast<T>(u);
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> b) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, b.data(), static_cast<uInt>(b.size()));
  return static_cast<std::uint32_t>(crc);
}

std::array<int*, 7> config_fields(ModelConfig& c) {
  return {&c.vocab_size, &c.d_model, &c.n_heads, &c.d_ff, &c.n_encoder_layers, &c.n_decoder_layers, &c.max_seq_len};
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model) {
  Writer w;
  w.bytes(kMagic);
  w.le<std::uint32_t>(kCheckpointVersion);
  ModelConfig cfg = model.config();
  for (int* f : config_fields(cfg)) w.le<std::uint32_t>(static_cast<std::uint32_t>(*f));

  std::map<std::string, const Tensor*> all;
  for (const auto& [name, t] : model.params().base) all[name] = &t;
  for (const auto& [name, t] : model.params().ia3) all[name] = &t;
  w.le<std::uint32_t>(static_cast<std::uint32_t>(all.size()));
  for (const auto& [name, t] : all) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes({reinterpret_cast<const std::uint8_t*>(name.data()), name.size()});
    w.le<std::uint32_t>(2);
    w.le<std::uint64_t>(static_cast<std::uint64_t>(t->rows()));
    w.le<std::uint64_t>(static_cast<std::uint64_t>(t->cols()));
    const Matrix& m = t->value();
    for (Index i = 0; i < m.size(); ++i) w.le<double>(m.data()[i]);
  }
  w.le<std::uint32_t>(crc32_of(w.data()));
  return w.take();
}

Model deserialize_model(std::span<const std::uint8_t> bytes, std::optional<int> expected_vocab_size) {
  constexpr std::size_t kHeader = 4 + 4 + 7 * 4 + 4;
  if (bytes.size() < kHeader + 4) throw CheckpointError("checkpoint: truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw CheckpointError("checkpoint: bad magic bytes");

  const auto body = bytes.first(bytes.size() - 4);
  Reader trailer(bytes.last(4));
  if (trailer.le<std::uint32_t>() != crc32_of(body)) throw CheckpointError("checkpoint: checksum mismatch");

  Reader r(body);
  r.bytes(4);
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig cfg;
  for (int* f : config_fields(cfg)) *f = static_cast<int>(r.le<std::uint32_t>());
  if (expected_vocab_size && *expected_vocab_size != cfg.vocab_size) {
    throw CheckpointError("checkpoint: config mismatch, vocab_size " + std::to_string(cfg.vocab_size) +
                          " but tokenizer has " + std::to_string(*expected_vocab_size));
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }

  const Model skeleton(cfg, 0);
  ModelParameters params;
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.le<std::uint32_t>();
    const auto name_bytes = r.bytes(name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    if (r.le<std::uint32_t>() != 2) throw CheckpointError("checkpoint: tensor '" + name + "' is not rank 2");
    const auto rows = r.le<std::uint64_t>();
    const auto cols = r.le<std::uint64_t>();
    if (rows > (1u << 24) || cols > (1u << 24)) throw CheckpointError("checkpoint: implausible shape for '" + name + "'");
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = r.le<double>();
    auto& group = skeleton.params().is_ia3(name) ? params.ia3 : params.base;
    if (!group.emplace(name, Tensor(std::move(m))).second) {
      throw CheckpointError("checkpoint: duplicate tensor '" + name + "'");
    }
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes after tensors");
  try {
    Model model(cfg, std::move(params));
    model.params().set_tuning_mode(TuningMode::Peft);
    return model;
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, std::optional<int> expected_vocab_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes, expected_vocab_size);
}

}  // namespace protoco
