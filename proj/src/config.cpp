#include "nebp/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace nebp {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class KeyValues {
 public:
  explicit KeyValues(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(n) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty() || key.find('.') == std::string::npos) {
        throw ValidationError("config line " + std::to_string(n) + ": key must be section.name");
      }
      if (!values_.emplace(key, value).second) throw ValidationError("duplicate config key: " + key);
    }
  }

  const std::string& take(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("missing config key: " + key);
    taken_.emplace(*it);
    values_.erase(it);
    return taken_.at(key);
  }

  double real(const std::string& key) {
    const std::string& s = take(key);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ValidationError("config key " + key + ": not a number: '" + s + "'");
    }
    return v;
  }

  long long integer(const std::string& key) {
    const std::string& s = take(key);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ValidationError("config key " + key + ": not an integer: '" + s + "'");
    }
    return v;
  }

  bool boolean(const std::string& key) {
    const std::string& s = take(key);
    if (s == "true") return true;
    if (s == "false") return false;
    throw ValidationError("config key " + key + ": expected true or false");
  }

  Roi roi(const std::string& key) {
    std::istringstream in(take(key));
    Roi r;
    std::string tok[4];
    for (auto& t : tok) in >> t;
    std::string extra;
    if (tok[3].empty() || (in >> extra)) throw ValidationError("config key " + key + ": expected x_min x_max y_min y_max");
    double v[4];
    for (int k = 0; k < 4; ++k) {
      const auto [ptr, ec] = std::from_chars(tok[k].data(), tok[k].data() + tok[k].size(), v[k]);
      if (ec != std::errc() || ptr != tok[k].data() + tok[k].size()) {
        throw ValidationError("config key " + key + ": not a number: '" + tok[k] + "'");
      }
    }
    r.x_min = v[0];
    r.x_max = v[1];
    r.y_min = v[2];
    r.y_max = v[3];
    return r;
  }

  void finish() const {
    if (!values_.empty()) throw ValidationError("unknown config key: " + values_.begin()->first);
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> taken_;
};

std::string roi_text(const Roi& r) {
  return format_double(r.x_min) + " " + format_double(r.x_max) + " " + format_double(r.y_min) + " " +
         format_double(r.y_max);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

RunConfig default_run_config() { return RunConfig{}; }

RunConfig parse_config(const std::string& text) {
  KeyValues kv(text);
  RunConfig c;

  c.sim.n_frames = static_cast<int>(kv.integer("sim.n_frames"));
  c.sim.initial_objects = static_cast<int>(kv.integer("sim.initial_objects"));
  c.sim.birth_rate = kv.real("sim.birth_rate");
  c.sim.p_s = kv.real("sim.survival_prob");
  c.sim.p_d = kv.real("sim.detection_prob");
  c.sim.clutter_rate = kv.real("sim.clutter_rate");
  c.sim.q = kv.real("sim.process_noise");
  c.sim.meas_cov = kv.real("sim.meas_variance") * Mat4::Identity();
  c.sim.roi = kv.roi("sim.roi");
  c.sim.v_max = kv.real("sim.v_max");
  c.sim.dt = kv.real("sim.dt");
  c.sim.shape_dim = static_cast<int>(kv.integer("sim.shape_dim"));
  c.sim.shape_noise = kv.real("sim.shape_noise");
  c.sim.clutter_shape_offset = kv.real("sim.clutter_shape_offset");
  c.sim.measure_velocity = kv.boolean("sim.measure_velocity");

  c.model.p_d = kv.real("model.detection_prob");
  c.model.p_s = kv.real("model.survival_prob");
  c.model.mu_fa = kv.real("model.clutter_rate");
  c.model.mu_n = kv.real("model.birth_rate");
  c.model.roi = kv.roi("model.roi");
  c.model.v_max = kv.real("model.v_max");
  c.model.q = kv.real("model.process_noise");
  c.model.meas_cov = kv.real("model.meas_variance") * Mat4::Identity();
  c.model.t_dec = kv.real("model.t_dec");
  c.model.t_dec_new = kv.real("model.t_dec_new");
  c.model.t_pru = kv.real("model.t_pru");
  c.model.dt = kv.real("model.dt");
  c.model.measure_velocity = kv.boolean("model.measure_velocity");

  c.train.epsilon = kv.real("train.epsilon");
  c.train.t_dist = kv.real("train.t_dist");
  c.train.learning_rate = kv.real("train.learning_rate");
  c.train.epochs = static_cast<int>(kv.integer("train.epochs"));
  c.train.adam_beta1 = kv.real("train.adam_beta1");
  c.train.adam_beta2 = kv.real("train.adam_beta2");
  c.train.adam_eps = kv.real("train.adam_eps");

  c.gnn.hidden = kv.integer("gnn.hidden");
  c.gnn.motion_features = kv.integer("gnn.motion_features");
  c.gnn.shape_features = kv.integer("gnn.shape_features");
  c.gnn.descriptor_dim = kv.integer("gnn.descriptor_dim");
  c.gnn.rounds = static_cast<int>(kv.integer("gnn.rounds"));
  c.gnn.position_scale = kv.real("gnn.position_scale");
  c.gnn.velocity_scale = kv.real("gnn.velocity_scale");

  c.eval.t_dist = kv.real("eval.t_dist");
  c.eval.n_thresholds = static_cast<int>(kv.integer("eval.n_thresholds"));
  kv.finish();

  if (auto e = validate(c.sim); !e.empty()) throw ValidationError("sim config: " + e.front());
  if (auto e = validate(c.model); !e.empty()) throw ValidationError("model config: " + e.front());
  if (auto e = validate(c.train); !e.empty()) throw ValidationError("train config: " + e.front());
  if (c.gnn.hidden < 1 || c.gnn.motion_features < 1 || c.gnn.shape_features < 1 ||
      c.gnn.descriptor_dim < 1 || c.gnn.rounds < 1 || !(c.gnn.position_scale > 0.0) ||
      !(c.gnn.velocity_scale > 0.0)) {
    throw ValidationError("gnn config: sizes and scales must be positive");
  }
  if (!(c.eval.t_dist > 0.0) || c.eval.n_thresholds < 1) {
    throw ValidationError("eval config: t_dist and n_thresholds must be positive");
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_config_text(const RunConfig& c) {
  std::ostringstream o;
  auto line = [&](const std::string& k, const std::string& v) { o << k << " = " << v << "\n"; };
  auto real = [&](const std::string& k, double v) { line(k, format_double(v)); };
  auto integer = [&](const std::string& k, long long v) { line(k, std::to_string(v)); };

  o << "# simulator\n";
  integer("sim.n_frames", c.sim.n_frames);
  integer("sim.initial_objects", c.sim.initial_objects);
  real("sim.birth_rate", c.sim.birth_rate);
  real("sim.survival_prob", c.sim.p_s);
  real("sim.detection_prob", c.sim.p_d);
  real("sim.clutter_rate", c.sim.clutter_rate);
  real("sim.process_noise", c.sim.q);
  real("sim.meas_variance", c.sim.meas_cov(0, 0));
  line("sim.roi", roi_text(c.sim.roi));
  real("sim.v_max", c.sim.v_max);
  real("sim.dt", c.sim.dt);
  integer("sim.shape_dim", c.sim.shape_dim);
  real("sim.shape_noise", c.sim.shape_noise);
  real("sim.clutter_shape_offset", c.sim.clutter_shape_offset);
  line("sim.measure_velocity", c.sim.measure_velocity ? "true" : "false");

  o << "\n# tracker model\n";
  real("model.detection_prob", c.model.p_d);
  real("model.survival_prob", c.model.p_s);
  real("model.clutter_rate", c.model.mu_fa);
  real("model.birth_rate", c.model.mu_n);
  line("model.roi", roi_text(c.model.roi));
  real("model.v_max", c.model.v_max);
  real("model.process_noise", c.model.q);
  real("model.meas_variance", c.model.meas_cov(0, 0));
  real("model.t_dec", c.model.t_dec);
  real("model.t_dec_new", c.model.t_dec_new);
  real("model.t_pru", c.model.t_pru);
  real("model.dt", c.model.dt);
  line("model.measure_velocity", c.model.measure_velocity ? "true" : "false");

  o << "\n# training\n";
  real("train.epsilon", c.train.epsilon);
  real("train.t_dist", c.train.t_dist);
  real("train.learning_rate", c.train.learning_rate);
  integer("train.epochs", c.train.epochs);
  real("train.adam_beta1", c.train.adam_beta1);
  real("train.adam_beta2", c.train.adam_beta2);
  real("train.adam_eps", c.train.adam_eps);

  o << "\n# enhancement network\n";
  integer("gnn.hidden", c.gnn.hidden);
  integer("gnn.motion_features", c.gnn.motion_features);
  integer("gnn.shape_features", c.gnn.shape_features);
  integer("gnn.descriptor_dim", c.gnn.descriptor_dim);
  integer("gnn.rounds", c.gnn.rounds);
  real("gnn.position_scale", c.gnn.position_scale);
  real("gnn.velocity_scale", c.gnn.velocity_scale);

  o << "\n# evaluation\n";
  real("eval.t_dist", c.eval.t_dist);
  integer("eval.n_thresholds", c.eval.n_thresholds);
  return o.str();
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
  config.sim.seed = seed;
  config.train.seed = seed;
}

}  // namespace nebp
