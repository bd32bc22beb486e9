#include "sphcast/config.hpp"

#include <charconv>
#include <set>
#include <sstream>

#include "sphcast/binio.hpp"

namespace sphcast {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config default_config() {
  Config c;
  c.entries_ = {
      // data
      {"dataset", "data.kywx", "training dataset file"},
      {"stats", "stats.kyst", "statistics file from `sphcast stats`"},
      {"out_dir", "run", "directory for checkpoints and the metrics log"},
      {"train_fraction", "0.75", "leading fraction of samples used for training; the rest is held out"},
      {"seed", "1", "seed for initialization and sampling"},
      // model
      {"n_lat", "0", "grid rows; 0 takes the dataset grid"},
      {"widths", "32,48,64,96", "generator channels per level (four levels)"},
      {"pairs", "2", "spherical-conv + attention block pairs per level and pass"},
      {"head_dim", "16", "attention channels per head"},
      {"window_hi", "4,8", "attention window (rows,cols) on the two finest levels"},
      {"window_lo", "8,16", "attention window on coarser levels, clipped to the level grid"},
      {"mlp_ratio", "2", "hidden width factor of attention-block MLPs"},
      {"d_widths", "16,24,32,48,64", "discriminator channels per level down to 2x4"},
      {"dilations", "1,2,4", "longitude dilations of discriminator grid convolutions"},
      {"dilation_activation", "0.75", "dilation d is active where 1/cos(lat) >= this * d"},
      {"spectral_cap", "2", "upper bound on discriminator weight spectral norms"},
      // schedule
      {"schedule", "adversarial", "adversarial (phases 1,2,3,4) or legacy (phases 1,2a)"},
      {"steps_1", "2000", "generator steps in phase 1"},
      {"steps_2", "200", "generator steps in phase 2"},
      {"steps_2a", "1000", "generator steps in phase 2a"},
      {"steps_3", "2000", "generator steps in phase 3"},
      {"steps_4", "1000", "generator steps in phase 4"},
      {"rollout_steps", "4", "autoregressive steps T in phases 2a and 4"},
      {"d_per_g", "4", "discriminator updates per generator update in phases 3 and 4"},
      {"d_per_g_2", "1", "discriminator updates per generator update in phase 2"},
      {"adv_pair", "consecutive", "adversarial pair: consecutive (k-1, k) or literal (k-1, 1)"},
      // objectives and optimizer
      {"alpha", "0.05", "adversarial weight in the generator loss"},
      {"gamma", "0.1", "R1 coefficient (penalty enters as gamma/2)"},
      {"lr_g", "2e-4", "generator learning rate"},
      {"lr_d", "1e-4", "discriminator learning rate"},
      {"beta1", "0.9", "Adam first-moment decay"},
      {"beta2", "0.99", "Adam second-moment decay"},
      {"adam_eps", "1e-8", "Adam denominator offset"},
      // replay
      {"replay_capacity", "256", "replay buffer entries"},
      {"replay_prob", "0.5", "probability that a phase-4 example starts from the replay buffer"},
      {"replay_multiplier", "0.25", "regression-loss weight of replayed examples"},
      // bookkeeping
      {"log_every", "1", "write metrics every n generator steps"},
  };
  return c;
}

Config Config::parse(const std::string& text, const std::string& what) {
  Config c = default_config();
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  for (int no = 1; std::getline(in, line); ++no) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = what + ":" + std::to_string(no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected `key = value`");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    if (!c.has(key)) throw ConfigError(where + "unknown key `" + key + "`");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key `" + key + "`");
    c.set(key, value);
  }
  return c;
}

Config Config::load(const std::string& path) {
  const auto bytes = read_file(path);
  return parse(std::string(bytes.begin(), bytes.end()), path);
}

bool Config::has(const std::string& key) const {
  for (const auto& e : entries_)
    if (e.key == key) return true;
  return false;
}

Config::Entry& Config::find(const std::string& key) {
  for (auto& e : entries_)
    if (e.key == key) return e;
  throw ConfigError("unknown config key `" + key + "`");
}

const Config::Entry& Config::find(const std::string& key) const {
  for (const auto& e : entries_)
    if (e.key == key) return e;
  throw ConfigError("unknown config key `" + key + "`");
}

void Config::set(const std::string& key, const std::string& value) { find(key).value = value; }

const std::string& Config::str(const std::string& key) const { return find(key).value; }

double Config::num(const std::string& key) const {
  const std::string& v = str(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key `" + key + "`: `" + v + "` is not a number");
}

long Config::integer(const std::string& key) const {
  const std::string& v = str(key);
  long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key `" + key + "`: `" + v + "` is not an integer");
  }
  return out;
}

std::size_t Config::count(const std::string& key) const {
  const long v = integer(key);
  if (v < 0) throw ConfigError("config key `" + key + "` must be non-negative");
  return static_cast<std::size_t>(v);
}

bool Config::flag(const std::string& key) const {
  const std::string& v = str(key);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config key `" + key + "`: `" + v + "` is not a boolean");
}

std::vector<std::size_t> Config::counts(const std::string& key) const {
  std::vector<std::size_t> out;
  std::istringstream in(str(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
      throw ConfigError("config key `" + key + "`: `" + str(key) + "` is not a list of counts");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("config key `" + key + "` is empty");
  return out;
}

std::string Config::dump(bool with_docs) const {
  std::ostringstream out;
  for (const auto& e : entries_) {
    if (with_docs) out << "# " << e.doc << "\n";
    out << e.key << " = " << e.value << "\n";
  }
  return out.str();
}

}  // namespace sphcast
