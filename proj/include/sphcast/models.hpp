#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sphcast/attention.hpp"
#include "sphcast/blocks.hpp"
#include "sphcast/objectives.hpp"
#include "sphcast/registry.hpp"

namespace sphcast {

struct ModelConfig {
  std::size_t n_lat = 32;
  std::vector<std::size_t> widths{32, 48, 64, 96};  // generator, one per level
  std::size_t pairs = 2;                            // block pairs per level and pass
  std::size_t head_dim = 16;
  std::size_t window_hi_h = 4, window_hi_w = 8;     // levels 0 and 1
  std::size_t window_lo_h = 8, window_lo_w = 16;    // coarser levels
  std::size_t mlp_ratio = 2;
  std::vector<std::size_t> d_widths{16, 24, 32, 48, 64};  // discriminator, per level down to 2x4
  std::vector<std::size_t> dilations{1, 2, 4};
  double dilation_activation = 0.75;
  double spectral_cap = 2.0;
  double leaky_slope = 0.2;
};

/// Everything the generator needs from the data that is not learned: the
/// registry (normalization), the lag-1 increment scales and the static fields.
struct ModelContext {
  VariableRegistry registry;
  std::vector<double> increment_scale;  // sigma(v, 1) of iterated variables, normalized units
  Tensor static_fields;                 // (static channels, points), physical units
};

/// Raised when a state handed to or produced by a model is not finite.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Generator {
 public:
  Generator(const ModelConfig& cfg, const ModelContext& ctx, std::uint64_t seed);
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  /// x: normalized iterated channels (n_iter, P); aux_temporal: normalized
  /// temporal auxiliaries (4, P). Returns normalized predicted channels.
  ad::Var forward(const ad::Var& x, const Tensor& aux_temporal) const;
  /// Forward with one decoder skip connection replaced by zeros (wiring check).
  ad::Var forward_without_skip(const ad::Var& x, const Tensor& aux_temporal, std::size_t level) const;
  /// Raw head output: normalized increments for iterated rows (already scaled
  /// by sigma(v, 1)), normalized values for output-only rows.
  ad::Var head(const ad::Var& x, const Tensor& aux_temporal, long skip_off = -1) const;

  /// Normalized temporal auxiliaries at a valid time.
  Tensor temporal_aux(std::int64_t time) const;

  const Grid& grid() const { return grid_; }
  const ModelConfig& config() const { return cfg_; }
  const VariableRegistry& registry() const { return reg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  struct SphBlock {
    ad::Var ln_g, ln_b, a, b, w1, b1, w2, b2;
  };
  struct SwinBlock {
    ad::Var ln1_g, ln1_b, ln2_g, ln2_b, m1, c1, m2, c2;
    AttentionWeights att;
    bool shifted = false;
  };
  struct Level {
    Grid grid;
    std::size_t width = 0;
    std::size_t heads = 1;
    std::unique_ptr<SphericalFilterMaps> maps;
    std::unique_ptr<WindowPlan> plain, shifted;
    LinearMapPtr down, up;  // down: this -> next coarser; up: next coarser -> this
  };
  ad::Var sph_block(const ad::Var& x, const SphBlock& p, const Level& lv) const;
  ad::Var swin_block(const ad::Var& x, const SwinBlock& p, const Level& lv) const;
  void make_group(std::size_t level, const std::string& tag, Rng& rng);

  ModelConfig cfg_;
  VariableRegistry reg_;
  Grid grid_;
  ParamStore store_;
  std::vector<Level> levels_;
  // groups_[g] are the block pairs of one (level, pass); order: enc 0..n-2, bottom, dec n-2..0
  std::vector<std::vector<std::pair<SphBlock, SwinBlock>>> groups_;
  ad::Var w_in_, b_in_, head_ln_g_, head_ln_b_, w_out_, b_out_;
  std::vector<ad::Var> w_down_, w_up_, w_merge_;
  // buffers g.static (normalized static fields) and g.scale (n_pred, 1) hold the data-derived constants
};

struct DiscriminatorOutput {
  ad::Var logit;        // raw pre-sigmoid logit
  ad::Var probability;  // sigmoid of the logit clamped to [-30, 30]
};

class Discriminator {
 public:
  Discriminator(const ModelConfig& cfg, const VariableRegistry& reg, std::uint64_t seed);
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  /// prev, next: normalized predicted channels (n_pred, P).
  DiscriminatorOutput forward(const ad::Var& prev, const ad::Var& next, bool naive = false) const;
  /// One power-iteration step for every capped weight (training mode only).
  void update_spectral_norms() { spectral_power_step(store_); }

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  struct Level {
    Grid grid;
    std::size_t width = 0;
    std::unique_ptr<SphericalFilterMaps> maps;
    std::unique_ptr<GridConvPlan> plan;
    LinearMapPtr down;
    ad::Var a, b, dil;
    Weight w_sph, w_conv, w_down;
    ad::Var b_sph, b_conv, b_down;
  };
  ModelConfig cfg_;
  Grid grid_;
  ParamStore store_;
  std::vector<Level> levels_;
  Weight w_in_, w_haar_, w_head_;
  ad::Var b_in_, b_haar_, b_head_;
  LinearMapPtr haar_;
};

/// Weather state in physical units: registry predicted channels
/// (iterated, then output-only) at one valid time.
struct WeatherState {
  std::int64_t time = 0;
  Tensor fields;
};

/// One model step in physical units. Output-only channels of `state` are ignored.
WeatherState generator_step(const Generator& g, const WeatherState& state);
/// k successive steps; element i is the state after i + 1 steps.
std::vector<WeatherState> rollout(const Generator& g, const WeatherState& state0, std::size_t k);

/// Pulls sample i of a dataset as a WeatherState.
WeatherState state_from_sample(const struct Dataset& ds, std::size_t i);

// ---- checkpoints ----------------------------------------------------------

struct Checkpoint {
  std::string config_text;
  VariableRegistry registry;
  std::string phase;
  std::uint64_t step = 0;        // global generator step counter
  std::uint64_t phase_step = 0;  // step within the phase
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor* find(const std::string& name) const;
  std::size_t count_prefix(const std::string& prefix) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes, const std::string& what = "checkpoint");
void write_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

/// Appends every parameter and buffer of `store` under `prefix`.
void export_store(const ParamStore& store, const std::string& prefix, Checkpoint& c);
/// Loads all parameters and buffers of `store` from `prefix`; throws on any
/// missing name or shape mismatch.
void import_store(ParamStore& store, const std::string& prefix, const Checkpoint& c);

}  // namespace sphcast
