#pragma once

#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sphcast/config.hpp"
#include "sphcast/dataset.hpp"
#include "sphcast/models.hpp"
#include "sphcast/objectives.hpp"

namespace sphcast {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ModelConfig model_config(const Config& cfg, std::size_t n_lat);

struct PhaseSpec {
  std::string id;               // "1", "2", "2a", "3", "4"
  std::size_t rollout = 1;      // autoregressive steps T
  bool adversarial = false;     // generator sees L_adv
  bool train_d = false;         // discriminator updated in this phase
  std::size_t d_per_g = 0;
  std::size_t steps = 0;
  bool replay = false;
};

/// Phases selected by `schedule` with budgets from the config.
std::vector<PhaseSpec> schedule_phases(const Config& cfg);
/// Throws unless `ids` is 1,2,3,4 or 1,2a.
void validate_phase_order(const std::vector<std::string>& ids);

class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore& store, double lr, double beta1, double beta2, double eps);
  /// One update; grads in store.params() order.
  void step(ParamStore& store, const std::vector<Tensor>& grads);
  std::uint64_t steps() const { return t_; }
  void export_state(const std::string& prefix, Checkpoint& c) const;
  void import_state(const std::string& prefix, const Checkpoint& c);

 private:
  double lr_ = 0, b1_ = 0, b2_ = 0, eps_ = 0;
  std::uint64_t t_ = 0;
  std::vector<std::string> names_;
  std::vector<Tensor> m_, v_;
};

/// A model-predicted state kept for later reuse as a training start.
struct ReplayEntry {
  Tensor state;             // normalized predicted channels
  std::size_t lead = 1;     // steps since the ground-truth anchor
  std::size_t anchor = 0;   // dataset sample index of the anchor
  double weight = 1.0;      // regression-loss multiplier once sampled
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  /// Appends, evicting the oldest entry at capacity. Entries with lead 0 or
  /// non-finite values are rejected (returns false).
  bool push(ReplayEntry e);
  /// Up to n distinct entries, uniformly without replacement, marked with
  /// weight = multiplier. Empty buffer gives an empty result.
  std::vector<ReplayEntry> sample(std::size_t n, Rng& rng, double multiplier) const;
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<ReplayEntry>& entries() const { return items_; }

 private:
  std::size_t capacity_;
  std::deque<ReplayEntry> items_;
};

struct LogRecord {
  std::uint64_t step = 0;
  std::string phase;
  std::string name;
  double value = 0.0;
};

/// `step,phase,loss_name,value` with a round-trippable value.
std::string format_log(const LogRecord& r);

/// A training start: either ground truth (lead 0) or a replayed prediction.
struct Example {
  Tensor start;             // normalized predicted channels
  std::size_t anchor = 0;
  std::size_t lead = 0;
  double weight = 1.0;
};

class Trainer {
 public:
  /// `ds` must outlive the trainer. With an empty out_dir nothing is written.
  Trainer(Config cfg, const Dataset& ds, const SigmaTable& sigma);

  /// Runs every phase of the schedule. Writes phase_<id>.ckpt after each phase
  /// and final.ckpt at the end; on a non-finite loss writes last_good.ckpt and
  /// throws TrainingError.
  void run();
  void run_phase(const PhaseSpec& phase);

  Checkpoint checkpoint(const std::string& phase, std::uint64_t phase_step) const;

  /// Generator objective for one example; exposed for tests. Values are
  /// written to `parts` (l_mse, l_adv, l_g).
  ad::Var generator_objective(const PhaseSpec& phase, const Example& ex, std::map<std::string, double>* parts = nullptr);
  Example truth_example(std::size_t anchor) const;
  /// Normalized predicted channels of a training sample.
  const Tensor& truth(std::size_t i) const { return truth_.at(i); }

  const std::vector<LogRecord>& log() const { return log_; }
  /// Called with every record as it is logged.
  void set_log_sink(std::function<void(const LogRecord&)> sink) { sink_ = std::move(sink); }
  Generator& generator() { return *g_; }
  const Discriminator* discriminator() const { return d_.get(); }
  std::size_t discriminator_parameter_count() const { return d_ ? d_->params().scalar_count() : 0; }
  ReplayBuffer& replay() { return replay_; }
  const Config& config() const { return cfg_; }
  std::size_t train_samples() const { return n_train_; }
  std::uint64_t generator_steps() const { return g_step_; }

 private:
  void d_step(const PhaseSpec& phase);
  void g_step(const PhaseSpec& phase);
  void record(const std::string& phase, const std::string& name, double value);
  void fail(const std::string& phase, const std::string& what);
  const Tensor& aux(std::size_t sample);
  Tensor g_predict(const Tensor& start, std::int64_t time);

  Config cfg_;
  const Dataset& ds_;
  SigmaTable sigma_;
  std::size_t n_train_ = 0;
  std::vector<Tensor> truth_;
  std::map<std::size_t, Tensor> aux_;
  std::unique_ptr<Generator> g_;
  std::unique_ptr<Discriminator> d_;
  Adam adam_g_, adam_d_;
  ReplayBuffer replay_;
  Rng rng_;
  std::vector<LogRecord> log_;
  std::function<void(const LogRecord&)> sink_;
  std::uint64_t g_step_ = 0;
  std::string phase_id_;
  std::uint64_t phase_step_ = 0;
  std::string out_dir_;
  std::ofstream metrics_;
  double alpha_, gamma_;
  bool literal_pair_ = false;
};

/// Rebuilds a generator from a checkpoint for inference.
std::unique_ptr<Generator> load_generator(const Checkpoint& c);

}  // namespace sphcast
