// SPDX-License-Identifier: Apache-2.0
// ExperimentConfig <-> INI text. Every field is listed once in visit_fields.
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ntn/harness.hpp"

namespace ntn::harness {

namespace {

constexpr double kDeg = geometry::kPi / 180.0;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

// Field binding with a display scale (degrees for angles).
struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <class F>
void visit_fields(ExperimentConfig& c, F&& f) {
  auto num = [&](const std::string& key, double& ref, double scale = 1.0) {
    f(Field{key, [&ref, scale] { return format_double(ref / scale); },
            [&ref, scale](const std::string& s) { ref = std::stod(s) * scale; }});
  };
  auto integer = [&](const std::string& key, int& ref) {
    f(Field{key, [&ref] { return std::to_string(ref); }, [&ref](const std::string& s) { ref = std::stoi(s); }});
  };
  auto longint = [&](const std::string& key, long& ref) {
    f(Field{key, [&ref] { return std::to_string(ref); }, [&ref](const std::string& s) { ref = std::stol(s); }});
  };
  auto text = [&](const std::string& key, std::string& ref) {
    f(Field{key, [&ref] { return ref; }, [&ref](const std::string& s) { ref = s; }});
  };
  auto ints = [&](const std::string& key, std::vector<int>& ref) {
    f(Field{key, [&ref] { return join(ref); }, [&ref](const std::string& s) { ref = split_ints(s); }});
  };

  f(Field{"experiment.scheme", [&c] { return scheme_name(c.scheme); },
          [&c](const std::string& s) { c.scheme = parse_scheme(s); }});
  f(Field{"experiment.seed", [&c] { return std::to_string(c.seed); },
          [&c](const std::string& s) { c.seed = std::stoull(s); }});
  longint("experiment.slots", c.slots);
  text("experiment.output_dir", c.output_dir);
  text("experiment.tag", c.tag);

  auto& e = c.env;
  num("orbit.altitude", e.orbit.altitude);
  num("orbit.inclination_deg", e.orbit.inclination, kDeg);
  num("orbit.initial_phase_deg", e.orbit.initial_phase, kDeg);
  num("orbit.earth_radius", e.orbit.earth_radius);
  num("orbit.slot_duration", e.orbit.slot_duration);
  num("ue.latitude_deg", e.ue_latitude, kDeg);
  num("ue.longitude_deg", e.ue_longitude, kDeg);
  num("ue.min_elevation_deg", e.min_elevation, kDeg);
  num("link.carrier", e.carrier);
  num("link.tx_power_dbw", e.tx_power_dbw);
  num("link.tx_gain_dbi", e.tx_gain_dbi);
  num("link.rx_gain_dbi", e.rx_gain_dbi);
  num("link.noise_temperature", e.noise.noise_temperature);
  num("link.rb_bandwidth", e.noise.rb_bandwidth);
  num("link.symbol_duration", e.symbol_duration);
  integer("array.tx_nx", e.tx_nx);
  integer("array.tx_ny", e.tx_ny);
  integer("array.rx_nx", e.rx_nx);
  integer("array.rx_ny", e.rx_ny);
  integer("scatter.paths", e.scatter.paths);
  num("scatter.k_factor_db", e.scatter.k_factor_db);
  num("scatter.angle_jitter_deg", e.scatter.angle_jitter, kDeg);
  num("scatter.max_excess_delay", e.scatter.max_excess_delay);
  integer("resources.total_rbs", e.total_rbs);
  integer("resources.groups", e.groups);
  integer("control.cycle", e.cycle);
  num("control.delta_deg", e.delta, kDeg);
  integer("control.high_step_max", e.high_step_max);
  integer("control.low_step_max", e.low_step_max);
  num("control.eta", e.eta);
  integer("control.fifo_length", e.fifo_length);
  num("demand.mean", e.demand_mean);
  num("demand.unit", e.demand_unit);

  auto& d = c.drl;
  integer("drl.n_bar", d.n_bar);
  num("drl.kl_limit", d.trpo.kl_limit);
  integer("drl.cg_iters", d.trpo.cg_iters);
  num("drl.backtrack_coeff", d.trpo.backtrack_coeff);
  integer("drl.backtrack_steps", d.trpo.backtrack_steps);
  num("drl.cg_damping", d.trpo.cg_damping);
  num("drl.discount_low", d.trpo.discount);
  num("drl.discount_high", d.discount_high);
  num("drl.learning_rate", d.adam.lr);
  num("drl.reward_scale", d.reward_scale);
  ints("drl.actor_trunk", d.actor_trunk);
  ints("drl.actor_head", d.actor_head);
  ints("drl.value_low", d.value_low);
  ints("drl.value_high", d.value_high);
  integer("drl.batch_size", d.batch_size);
  integer("drl.high_batch_size", d.high_batch_size);
  integer("drl.critic_steps", d.critic_steps);
  integer("drl.low_memory", d.low_memory);
  integer("drl.high_memory", d.high_memory);
  num("drl.termination_eps", d.termination_eps);
  integer("drl.element_bytes", d.element_bytes);
  text("drl.message_log", d.message_log);

  auto& b = c.baseline;
  integer("baseline.grid_points", b.grid.points);
  integer("baseline.fixed_count", b.fixed_count);
  num("baseline.mab_exploration", b.mab_exploration);
  num("baseline.mab_usage_cost", b.mab_usage_cost);
}

}  // namespace

void apply_config_text(ExperimentConfig& cfg, const std::string& ini_text) {
  boost::property_tree::ptree pt;
  std::istringstream in(ini_text);
  try {
    boost::property_tree::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  std::set<std::string> known;
  visit_fields(cfg, [&](const Field& f) {
    known.insert(f.key);
    if (auto v = pt.get_optional<std::string>(f.key)) {
      try {
        f.set(*v);
      } catch (const std::invalid_argument&) {
        throw std::invalid_argument("bad value for " + f.key + ": " + *v);
      }
    }
  });
  for (const auto& [section, body] : pt)
    for (const auto& [key, value] : body) {
      (void)value;
      if (!known.count(section + "." + key)) throw std::invalid_argument("unknown config key: " + section + "." + key);
    }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg;
  apply_config_text(cfg, ss.str());
  cfg.validate();
  return cfg;
}

std::string config_to_ini(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  std::string out, section;
  visit_fields(c, [&](const Field& f) {
    const auto dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      out += (out.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get() + "\n";
  });
  return out;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  nlohmann::json j;
  visit_fields(c, [&](const Field& f) {
    const auto dot = f.key.find('.');
    const std::string v = f.get();
    // Numbers and booleans keep their JSON type; everything else stays a string.
    nlohmann::json typed = nlohmann::json::parse(v, nullptr, false);
    if (typed.is_discarded() || typed.is_string() || typed.is_structured()) typed = v;
    j[f.key.substr(0, dot)][f.key.substr(dot + 1)] = typed;
  });
  return j;
}

}  // namespace ntn::harness
