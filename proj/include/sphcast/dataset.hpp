#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sphcast/binio.hpp"
#include "sphcast/grid.hpp"
#include "sphcast/registry.hpp"

namespace sphcast {

constexpr std::uint32_t kTimestepSeconds = 21600;

/// In-memory dataset. Values are kept as float32 exactly as stored on disk,
/// laid out (sample, channel, point) over the registry's stored channels
/// (all but the temporal auxiliaries, which are recomputed on demand).
struct Dataset {
  Grid grid;
  VariableRegistry registry;
  std::uint32_t timestep = kTimestepSeconds;
  std::vector<std::int64_t> times;
  std::vector<float> values;

  std::size_t samples() const { return times.size(); }
  std::size_t channels() const { return registry.n_stored(); }
  std::size_t sample_size() const { return channels() * grid.size(); }

  /// (stored channels, points) in physical units.
  Tensor sample(std::size_t i) const;
  /// Appends a state, rounding to float32; times must advance by `timestep`.
  void append(std::int64_t time, const Tensor& state);
};

void write_registry(ByteWriter& w, const VariableRegistry& reg);
VariableRegistry read_registry(ByteReader& r);

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::vector<std::uint8_t> bytes, const std::string& what = "dataset");
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

/// Per-channel, per-point mean over samples [begin, end).
Tensor climatology(const Dataset& ds, std::size_t begin, std::size_t end);

/// Area-weighted mean and std of every stored channel over all samples,
/// written into the dataset's registry.
void update_registry_stats(Dataset& ds);

}  // namespace sphcast
