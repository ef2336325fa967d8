#include "eqm/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "eqm/error.hpp"

namespace eqm {

static_assert(std::endian::native == std::endian::little, "checkpoint io assumes little-endian");

namespace {

constexpr char kMagic[8] = {'E', 'Q', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::size_t kDigestBytes = 32;

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T pod() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > size_ - pos_) throw ValidationError("checkpoint is truncated");
    const std::uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == size_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void write_group(Writer& w, const ParameterSet& set) {
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(set.size()));
  for (const auto& [name, t] : set.entries()) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.pod<std::uint64_t>(d);
    w.bytes(t.values().data(), t.numel() * sizeof(double));
  }
}

ParameterSet read_group(Reader& r) {
  ParameterSet set;
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.pod<std::uint32_t>();
    std::string name(reinterpret_cast<const char*>(r.take(len)), len);
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) throw ValidationError("checkpoint tensor '" + name + "' has rank " + std::to_string(rank));
    ad::Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = r.pod<std::uint64_t>();
      if (d != 0 && numel > (std::size_t{1} << 40) / d) throw ValidationError("checkpoint tensor too large");
      numel *= d;
    }
    std::vector<double> values(numel);
    std::memcpy(values.data(), r.take(numel * sizeof(double)), numel * sizeof(double));
    if (set.contains(name)) throw ValidationError("checkpoint repeats tensor '" + name + "'");
    set.add(std::move(name), ad::Tensor(std::move(shape), std::move(values)));
  }
  return set;
}

std::array<std::uint8_t, kDigestBytes> sha256(const std::uint8_t* data, std::size_t n) {
  std::array<std::uint8_t, kDigestBytes> out{};
  unsigned int len = 0;
  if (EVP_Digest(data, n, out.data(), &len, EVP_sha256(), nullptr) != 1 || len != kDigestBytes) {
    throw std::runtime_error("SHA-256 failed");
  }
  return out;
}

}  // namespace

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  const auto d = sha256(bytes.data(), bytes.size());
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (auto b : d) {
    s += hex[b >> 4];
    s += hex[b & 15];
  }
  return s;
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  const std::string config = to_json(ckpt.config);
  w.pod<std::uint64_t>(config.size());
  w.bytes(config.data(), config.size());
  w.pod<std::uint64_t>(ckpt.step);
  write_group(w, ckpt.params);
  write_group(w, ckpt.adam_m);
  write_group(w, ckpt.adam_v);
  const auto digest = sha256(w.out.data(), w.out.size());
  w.bytes(digest.data(), digest.size());
  return std::move(w.out);
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 + kDigestBytes ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("not a checkpoint file (bad magic)");
  }
  const std::size_t body = bytes.size() - kDigestBytes;
  const auto digest = sha256(bytes.data(), body);
  Reader r(bytes.data() + sizeof(kMagic), body - sizeof(kMagic));
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  if (std::memcmp(digest.data(), bytes.data() + body, kDigestBytes) != 0) {
    throw ValidationError("checkpoint digest mismatch (file is corrupt)");
  }
  Checkpoint c;
  const auto config_len = r.pod<std::uint64_t>();
  const auto* p = r.take(config_len);
  c.config = run_config_from_json(std::string(reinterpret_cast<const char*>(p), config_len));
  c.step = r.pod<std::uint64_t>();
  c.params = read_group(r);
  c.adam_m = read_group(r);
  c.adam_v = read_group(r);
  if (!r.done()) throw ValidationError("checkpoint has trailing bytes");
  // Validates names and shapes against the config.
  (void)c.model();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

Trainer make_trainer(const RunConfig& config) {
  return make_trainer(config, GradientFieldModel::init(config.model));
}

Trainer make_trainer(const RunConfig& config, GradientFieldModel model) {
  config.validate();
  LabeledPoints data = training_set(config);
  return Trainer(std::move(model), config.objective, config.optimizer, std::move(data.points),
                 std::move(data.labels), config.train.batch_size, config.seeds.train);
}

Trainer resume_trainer(const Checkpoint& ckpt) {
  Trainer t = make_trainer(ckpt.config, ckpt.model());
  if (ckpt.step > 0) t.mutable_optimizer().restore(ckpt.step, ckpt.adam_m, ckpt.adam_v);
  return t;
}

Checkpoint snapshot(const RunConfig& config, const Trainer& trainer) {
  return {config, trainer.steps_done(), trainer.model().parameters(),
          trainer.optimizer().first_moment(), trainer.optimizer().second_moment()};
}

GradientFieldModel init_from(const ModelConfig& target, const ParameterSet& source) {
  GradientFieldModel model = GradientFieldModel::init(target);
  const auto& want = model.parameters().entries();
  for (const auto& [name, t] : want) {
    if (!source.contains(name)) {
      throw ValidationError("init-from: source has no tensor '" + name + "'");
    }
    const auto& s = source.get(name);
    if (s.shape() != t.shape()) {
      throw ValidationError("init-from: shape mismatch for '" + name + "': source " +
                            ad::shape_to_string(s.shape()) + ", target " +
                            ad::shape_to_string(t.shape()));
    }
  }
  if (source.size() != want.size()) {
    for (const auto& [name, t] : source.entries()) {
      if (!model.parameters().contains(name)) {
        throw ValidationError("init-from: target has no tensor '" + name + "'");
      }
    }
  }
  for (const auto& [name, t] : want) model.set_parameter(name, source.get(name));
  return model;
}

}  // namespace eqm
