#include "wsnn/harness/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <type_traits>

#include "wsnn/errors.hpp"

namespace wsnn::harness {

namespace {

constexpr char kMagic[4] = {'W', 'S', 'N', 'N'};
constexpr size_t kMaxNameLen = 1u << 16;
constexpr uint8_t kMaxRank = 8;

// dtype codes of the on-disk format.
template <typename T>
struct DtypeCode;
template <>
struct DtypeCode<float> : std::integral_constant<uint8_t, 0> {};
template <>
struct DtypeCode<double> : std::integral_constant<uint8_t, 1> {};
template <>
struct DtypeCode<int64_t> : std::integral_constant<uint8_t, 2> {};
template <>
struct DtypeCode<uint8_t> : std::integral_constant<uint8_t, 3> {};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// The raw element bytes are memcpy'd, so the format's little-endian promise
// holds only on little-endian hosts; assert that rather than byte-swapping.
static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

template <typename T>
void append_tensor(std::string& out, const std::string& name,
                   const Tensor<T>& t) {
  if (name.size() > kMaxNameLen) throw IoError("tensor name too long: " + name);
  if (t.rank() > kMaxRank) throw IoError("tensor rank too large: " + name);
  put_u32(out, static_cast<uint32_t>(name.size()));
  out.append(name);
  out.push_back(static_cast<char>(DtypeCode<T>::value));
  out.push_back(static_cast<char>(t.rank()));
  for (size_t d = 0; d < t.rank(); ++d) {
    if (t.shape()[d] > 0xffffffffull) throw IoError("tensor dim too large: " + name);
    put_u32(out, static_cast<uint32_t>(t.shape()[d]));
  }
  const size_t bytes = t.size() * sizeof(T);
  const size_t at = out.size();
  out.resize(at + bytes);
  std::memcpy(out.data() + at, t.data(), bytes);
}

// Bounded little-endian reader over the loaded file image.
class Reader {
 public:
  Reader(const char* data, size_t n) : data_(data), n_(n) {}

  size_t remaining() const { return n_ - pos_; }

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    pos_ += 4;
    return v;
  }

  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(data_[pos_++]);
  }

  std::string bytes(size_t n) {
    need(n);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }

  void raw(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, data_ + pos_, n);
    pos_ += n;
  }

 private:
  void need(size_t n) const {
    if (n_ - pos_ < n) throw IoError("checkpoint record overruns file");
  }

  const char* data_;
  size_t n_;
  size_t pos_ = 0;
};

template <typename T>
NamedTensor read_tensor_body(Reader& r, std::string name, uint8_t rank) {
  std::vector<size_t> shape(rank);
  size_t total = 1;
  for (auto& d : shape) {
    d = r.u32();
    if (d != 0 && total > (1ull << 33) / d)
      throw IoError("checkpoint tensor too large: " + name);
    total *= d;
  }
  Tensor<T> t(shape);
  r.raw(t.data(), t.size() * sizeof(T));
  return NamedTensor{std::move(name), std::move(t)};
}

// Pull a reserved meta entry out of the record list, if present.
template <typename T>
bool take_meta_scalar(std::vector<NamedTensor>& ts, const std::string& name,
                      T& out) {
  for (auto it = ts.begin(); it != ts.end(); ++it) {
    if (it->name != name) continue;
    const auto* t = std::get_if<Tensor<T>>(&it->data);
    if (t == nullptr || t->size() != 1)
      throw IoError("malformed checkpoint meta entry: " + name);
    out = t->data()[0];
    ts.erase(it);
    return true;
  }
  return false;
}

bool take_meta_string(std::vector<NamedTensor>& ts, const std::string& name,
                      std::string& out) {
  for (auto it = ts.begin(); it != ts.end(); ++it) {
    if (it->name != name) continue;
    const auto* t = std::get_if<Tensor<uint8_t>>(&it->data);
    if (t == nullptr) throw IoError("malformed checkpoint meta entry: " + name);
    out.assign(reinterpret_cast<const char*>(t->data()), t->size());
    ts.erase(it);
    return true;
  }
  return false;
}

Tensor<uint8_t> string_tensor(const std::string& s) {
  Tensor<uint8_t> t({s.size()});
  std::memcpy(t.data(), s.data(), s.size());
  return t;
}

}  // namespace

uint32_t crc32(const void* data, size_t n, uint32_t seed) {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = seed ^ 0xffffffffu;
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xff] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void Checkpoint::add(const std::string& name, Tensor<float> t) {
  tensors.push_back({name, std::move(t)});
}
void Checkpoint::add(const std::string& name, Tensor<double> t) {
  tensors.push_back({name, std::move(t)});
}
void Checkpoint::add(const std::string& name, Tensor<int64_t> t) {
  tensors.push_back({name, std::move(t)});
}
void Checkpoint::add(const std::string& name, Tensor<uint8_t> t) {
  tensors.push_back({name, std::move(t)});
}

void checkpoint_save(const Checkpoint& cp, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kCheckpointVersion);

  append_tensor(out, "meta/model_name", string_tensor(cp.model_name));
  append_tensor(out, "meta/config_hash", string_tensor(cp.config_hash));
  Tensor<int64_t> epoch({1});
  epoch.data()[0] = cp.epoch;
  append_tensor(out, "meta/epoch", epoch);
  Tensor<double> best({1});
  best.data()[0] = cp.best_metric;
  append_tensor(out, "meta/best_metric", best);

  for (const auto& nt : cp.tensors) {
    if (nt.name.rfind("meta/", 0) == 0)
      throw IoError("tensor name collides with reserved meta/ prefix: " +
                    nt.name);
    std::visit([&](const auto& t) { append_tensor(out, nt.name, t); }, nt.data);
  }

  put_u32(out, crc32(out.data(), out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to checkpoint: " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string blob((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());

  if (blob.size() < 4 || std::memcmp(blob.data(), kMagic, 4) != 0)
    throw CheckpointMagicError("not a WSNN checkpoint: " + path);
  if (blob.size() < 12)
    throw CheckpointMagicError("checkpoint truncated below header size: " +
                               path);

  Reader header(blob.data() + 4, blob.size() - 4);
  const uint32_t version = header.u32();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError(
        "unsupported checkpoint version " + std::to_string(version) +
        " (expected " + std::to_string(kCheckpointVersion) + "): " + path);

  const size_t body = blob.size() - 4;
  uint32_t stored = 0;
  std::memcpy(&stored, blob.data() + body, 4);
  if (crc32(blob.data(), body) != stored)
    throw CheckpointIntegrityError("checkpoint CRC mismatch: " + path);

  Reader r(blob.data() + 8, body - 8);
  Checkpoint cp;
  while (r.remaining() > 0) {
    const uint32_t name_len = r.u32();
    if (name_len > kMaxNameLen)
      throw IoError("checkpoint tensor name too long");
    std::string name = r.bytes(name_len);
    const uint8_t dtype = r.u8();
    const uint8_t rank = r.u8();
    if (rank > kMaxRank) throw IoError("checkpoint tensor rank too large");
    switch (dtype) {
      case 0:
        cp.tensors.push_back(read_tensor_body<float>(r, std::move(name), rank));
        break;
      case 1:
        cp.tensors.push_back(
            read_tensor_body<double>(r, std::move(name), rank));
        break;
      case 2:
        cp.tensors.push_back(
            read_tensor_body<int64_t>(r, std::move(name), rank));
        break;
      case 3:
        cp.tensors.push_back(
            read_tensor_body<uint8_t>(r, std::move(name), rank));
        break;
      default:
        throw IoError("unknown checkpoint dtype code " + std::to_string(dtype));
    }
  }

  take_meta_string(cp.tensors, "meta/model_name", cp.model_name);
  take_meta_string(cp.tensors, "meta/config_hash", cp.config_hash);
  take_meta_scalar<int64_t>(cp.tensors, "meta/epoch", cp.epoch);
  take_meta_scalar<double>(cp.tensors, "meta/best_metric", cp.best_metric);
  return cp;
}

void store_model(Checkpoint& cp, nn::Layer<float>& model) {
  for (const auto& p : model.params()) cp.add("param/" + p.name, *p.value);
  for (const auto& s : model.state()) cp.add("state/" + s.name, *s.tensor);
}

namespace {

void load_into(const Checkpoint& cp, const std::string& name,
               Tensor<float>& dst) {
  const NamedTensor* nt = cp.find(name);
  if (nt == nullptr) throw IoError("checkpoint is missing tensor: " + name);
  const auto* t = std::get_if<Tensor<float>>(&nt->data);
  if (t == nullptr) throw IoError("checkpoint tensor has wrong dtype: " + name);
  if (t->shape() != dst.shape())
    throw ShapeError("checkpoint tensor shape mismatch: " + name);
  dst = *t;
}

}  // namespace

void load_model(const Checkpoint& cp, nn::Layer<float>& model) {
  for (const auto& p : model.params()) load_into(cp, "param/" + p.name, *p.value);
  for (const auto& s : model.state()) load_into(cp, "state/" + s.name, *s.tensor);
}

void store_optimizer(Checkpoint& cp,
                     const std::vector<optim::ParamGroup<float>>& groups,
                     const optim::Schedule& sched) {
  Tensor<int64_t> t({1});
  t.data()[0] = static_cast<int64_t>(sched.t);
  cp.add("opt/t", std::move(t));
  for (const auto& g : groups) {
    // Slots stay rank-0 until the first step allocates them.
    if (g.velocity.rank() > 0) cp.add("opt/" + g.name + "/velocity", g.velocity);
    if (g.m.rank() > 0) cp.add("opt/" + g.name + "/m", g.m);
    if (g.v.rank() > 0) cp.add("opt/" + g.name + "/v", g.v);
  }
}

void load_optimizer(const Checkpoint& cp,
                    std::vector<optim::ParamGroup<float>>& groups,
                    optim::Schedule& sched) {
  if (const NamedTensor* t = cp.find("opt/t")) {
    const auto* v = std::get_if<Tensor<int64_t>>(&t->data);
    if (v == nullptr || v->size() != 1) throw IoError("malformed opt/t entry");
    sched.t = static_cast<uint64_t>(v->data()[0]);
  }
  for (auto& g : groups) {
    const auto maybe = [&](const std::string& slot, Tensor<float>& dst) {
      const NamedTensor* nt = cp.find("opt/" + g.name + "/" + slot);
      if (nt == nullptr) return;
      const auto* t = std::get_if<Tensor<float>>(&nt->data);
      if (t == nullptr || t->shape() != g.value->shape())
        throw IoError("malformed optimizer slot for " + g.name);
      dst = *t;
    };
    maybe("velocity", g.velocity);
    maybe("m", g.m);
    maybe("v", g.v);
  }
}

}  // namespace wsnn::harness
