#include <string>

#include "sphcast/binio.hpp"
#include "sphcast/dataset.hpp"
#include "sphcast/models.hpp"

// Layout (little-endian):
//   "KYCK" u32 version
//   str config_text, registry block (as in dataset files), str phase,
//   u64 step, u64 phase_step, u64 array count, then per array:
//   str name, u32 rank, u64 dims[rank], f64 values[prod(dims)]

namespace sphcast {

namespace {

constexpr char kMagic[4] = {'K', 'Y', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return &t;
  return nullptr;
}

std::size_t Checkpoint::count_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& a : arrays) n += a.first.compare(0, prefix.size(), prefix) == 0;
  return n;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.str(c.config_text);
  write_registry(w, c.registry);
  w.str(c.phase);
  w.u64(c.step);
  w.u64(c.phase_step);
  w.u64(c.arrays.size());
  for (const auto& [name, t] : c.arrays) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape) w.u64(d);
    for (double v : t.data) w.f64(v);
  }
  return w.data();
}

Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes, const std::string& what) {
  ByteReader r(std::move(bytes), what);
  r.magic(kMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  Checkpoint c;
  c.config_text = r.str();
  c.registry = read_registry(r);
  c.phase = r.str();
  c.step = r.u64();
  c.phase_step = r.u64();
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError(what + ": array " + name + " has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (d && count > r.remaining() / 8 / d) throw FormatError(what + ": array " + name + " exceeds file size");
      count *= d;
    }
    if (count > r.remaining() / 8) throw FormatError(what + ": array " + name + " exceeds file size");
    Tensor t(shape);
    for (auto& v : t.data) v = r.f64();
    c.arrays.emplace_back(std::move(name), std::move(t));
  }
  if (r.remaining()) throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return c;
}

void write_checkpoint(const Checkpoint& c, const std::string& path) {
  ByteWriter w;
  const auto bytes = encode_checkpoint(c);
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path), path); }

void export_store(const ParamStore& store, const std::string& prefix, Checkpoint& c) {
  for (const auto& e : store.params()) c.arrays.emplace_back(prefix + e.name, e.var.value());
  for (const auto& [name, t] : store.buffers()) c.arrays.emplace_back(prefix + name, t);
}

void import_store(ParamStore& store, const std::string& prefix, const Checkpoint& c) {
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    const Tensor* t = c.find(prefix + name);
    if (!t) throw FormatError("checkpoint lacks array " + prefix + name);
    if (t->shape != shape) {
      throw FormatError("checkpoint array " + prefix + name + " has shape " + shape_str(t->shape) + ", model expects " +
                        shape_str(shape));
    }
    return *t;
  };
  for (const auto& e : store.params()) store.assign(e.name, fetch(e.name, e.var.shape()));
  for (auto& [name, t] : store.buffers()) t = fetch(name, t.shape);
}

}  // namespace sphcast
