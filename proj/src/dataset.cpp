#include "sphcast/dataset.hpp"

#include <cmath>

namespace sphcast {

namespace {
constexpr char kMagic[4] = {'K', 'Y', 'W', 'X'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

Tensor Dataset::sample(std::size_t i) const {
  if (i >= samples()) throw std::out_of_range("sample " + std::to_string(i) + " out of range");
  Tensor t(Shape{channels(), grid.size()});
  const float* src = values.data() + i * sample_size();
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = src[k];
  return t;
}

void Dataset::append(std::int64_t time, const Tensor& state) {
  if (state.shape != Shape{channels(), grid.size()}) {
    throw ShapeError("dataset append: state " + shape_str(state.shape) + " does not match " +
                     std::to_string(channels()) + " channels on the grid");
  }
  if (!times.empty() && time != times.back() + static_cast<std::int64_t>(timestep)) {
    throw std::invalid_argument("dataset append: timestamps must advance by the timestep");
  }
  times.push_back(time);
  for (double v : state.data) values.push_back(static_cast<float>(v));
}

void write_registry(ByteWriter& w, const VariableRegistry& reg) {
  w.u32(static_cast<std::uint32_t>(reg.size()));
  for (const auto& v : reg.vars()) {
    w.str(v.name);
    w.u8(static_cast<std::uint8_t>(v.role));
    w.str(v.unit);
    w.f64(v.mean);
    w.f64(v.std);
    w.f64(v.weight);
  }
  w.u64(reg.checksum());
}

VariableRegistry read_registry(ByteReader& r) {
  const std::uint32_t n = r.u32();
  if (n > 100000) throw FormatError(r.what() + ": implausible variable count " + std::to_string(n));
  std::vector<VariableSpec> vars(n);
  for (auto& v : vars) {
    v.name = r.str();
    const std::uint8_t role = r.u8();
    if (role > 3) throw FormatError(r.what() + ": unknown role " + std::to_string(role) + " for " + v.name);
    v.role = static_cast<Role>(role);
    v.unit = r.str();
    v.mean = r.f64();
    v.std = r.f64();
    v.weight = r.f64();
  }
  VariableRegistry reg;
  try {
    reg = VariableRegistry(std::move(vars));
  } catch (const std::invalid_argument& e) {
    throw FormatError(r.what() + ": invalid registry: " + e.what());
  }
  if (r.u64() != reg.checksum()) throw FormatError(r.what() + ": registry checksum mismatch");
  return reg;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(ds.grid.n_lat()));
  w.u32(static_cast<std::uint32_t>(ds.grid.n_lon()));
  write_registry(w, ds.registry);
  w.u64(ds.samples());
  w.u32(ds.timestep);
  for (auto t : ds.times) w.i64(t);
  if (ds.values.size() != ds.samples() * ds.sample_size()) throw std::logic_error("dataset payload size inconsistent");
  for (float v : ds.values) w.f32(v);
  return w.data();
}

Dataset decode_dataset(std::vector<std::uint8_t> bytes, const std::string& what) {
  ByteReader r(std::move(bytes), what);
  r.magic(kMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  Dataset ds;
  const std::uint32_t n_lat = r.u32();
  const std::uint32_t n_lon = r.u32();
  try {
    ds.grid = Grid(n_lat, n_lon);
  } catch (const ShapeError& e) {
    throw FormatError(what + ": " + e.what());
  }
  ds.registry = read_registry(r);
  const std::uint64_t n = r.u64();
  ds.timestep = r.u32();
  if (ds.timestep == 0) throw FormatError(what + ": zero timestep");
  if (n > r.remaining() / 8) throw FormatError(what + ": sample count exceeds file size");
  ds.times.resize(n);
  for (auto& t : ds.times) t = r.i64();
  for (std::size_t i = 1; i < n; ++i) {
    if (ds.times[i] != ds.times[i - 1] + static_cast<std::int64_t>(ds.timestep)) {
      throw FormatError(what + ": timestamps not increasing by the timestep at sample " + std::to_string(i));
    }
  }
  const std::uint64_t expected = n * ds.sample_size() * 4;
  if (r.remaining() != expected) {
    throw FormatError(what + ": payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                      std::to_string(expected));
  }
  ds.values.resize(n * ds.sample_size());
  for (auto& v : ds.values) v = r.f32();
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  ByteWriter w;
  const auto bytes = encode_dataset(ds);
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

Dataset read_dataset(const std::string& path) {
  return decode_dataset(read_file(path), path);
}

Tensor climatology(const Dataset& ds, std::size_t begin, std::size_t end) {
  if (begin >= end || end > ds.samples()) throw std::invalid_argument("climatology window is empty or out of range");
  Tensor acc(Shape{ds.channels(), ds.grid.size()});
  for (std::size_t i = begin; i < end; ++i) {
    const float* src = ds.values.data() + i * ds.sample_size();
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += src[k];
  }
  const double inv = 1.0 / static_cast<double>(end - begin);
  for (auto& v : acc.data) v *= inv;
  return acc;
}

void update_registry_stats(Dataset& ds) {
  if (ds.samples() == 0) throw std::invalid_argument("cannot compute statistics of an empty dataset");
  const std::size_t P = ds.grid.size();
  const std::size_t nl = ds.grid.n_lon();
  for (std::size_t c = 0; c < ds.channels(); ++c) {
    double s1 = 0.0;
    double s2 = 0.0;
    for (std::size_t i = 0; i < ds.samples(); ++i) {
      const float* src = ds.values.data() + i * ds.sample_size() + c * P;
      for (std::size_t p = 0; p < P; ++p) {
        const double w = ds.grid.cell_weight(p / nl);
        s1 += w * src[p];
        s2 += w * static_cast<double>(src[p]) * src[p];
      }
    }
    const double n = static_cast<double>(ds.samples());
    const double mean = s1 / n;
    const double var = std::max(0.0, s2 / n - mean * mean);
    ds.registry.set_stats(c, mean, var > 0.0 ? std::sqrt(var) : 1.0);
  }
}

}  // namespace sphcast
