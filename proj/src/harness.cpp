// SPDX-License-Identifier: Apache-2.0
#include "ntn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ntn::harness {

namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<Scheme, std::string>>& scheme_table() {
  static const std::vector<std::pair<Scheme, std::string>> t{
      {Scheme::proposed, "proposed"},     {Scheme::single_estimation, "single_estimation"},
      {Scheme::independent, "independent"}, {Scheme::bfs_greedy, "bfs_greedy"},
      {Scheme::bfs_fixed, "bfs_fixed"},   {Scheme::bfs_mab, "bfs_mab"},
      {Scheme::pbu_greedy, "pbu_greedy"}, {Scheme::pbu_fixed, "pbu_fixed"},
      {Scheme::pbu_mab, "pbu_mab"}};
  return t;
}

std::string g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string scheme_name(Scheme s) {
  for (const auto& [k, v] : scheme_table())
    if (k == s) return v;
  throw std::invalid_argument("unknown scheme");
}

Scheme parse_scheme(const std::string& s) {
  for (const auto& [k, v] : scheme_table())
    if (v == s) return k;
  throw std::invalid_argument("unknown scheme: " + s);
}

std::vector<Scheme> all_schemes() {
  std::vector<Scheme> out;
  for (const auto& [k, v] : scheme_table()) out.push_back(k);
  return out;
}

bool is_learning(Scheme s) {
  return s == Scheme::proposed || s == Scheme::single_estimation || s == Scheme::independent;
}

std::string ExperimentConfig::cell_name() const {
  std::string n = scheme_name(scheme) + "_seed" + std::to_string(seed);
  if (is_learning(scheme)) n += "_nbar" + std::to_string(drl.n_bar);
  if (!tag.empty()) n += "_" + tag;
  return n;
}

void ExperimentConfig::validate() const {
  if (slots < 0) throw std::invalid_argument("slot budget must be non-negative");
  env.validate();
  drl.validate();
  if (baseline.fixed_count < 1 || baseline.fixed_count > env.groups)
    throw std::invalid_argument("fixed RB count out of range");
  if (baseline.grid.points < 2) throw std::invalid_argument("beam grid needs at least two points");
}

std::vector<double> MetricSeries::column(double MetricRecord::*field) const {
  std::vector<double> out;
  out.reserve(rows_.size());
  for (const auto& r : rows_) out.push_back(r.*field);
  return out;
}

std::string csv_header() {
  return "slot,episode,episode_slot,reward_high,reward_low,throughput,demand,capacity,rb_groups,satisfactory_error,"
         "elevation";
}

std::string csv_row(const MetricRecord& r) {
  std::string s = std::to_string(r.slot) + "," + std::to_string(r.episode) + "," + std::to_string(r.episode_slot);
  for (double v : {r.reward_high, r.reward_low, r.throughput, r.demand, r.capacity}) s += "," + g9(v);
  s += "," + std::to_string(r.rb_groups);
  s += "," + g9(r.satisfactory_error) + "," + g9(r.elevation);
  return s;
}

void write_csv(const fs::path& path, const MetricSeries& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# ntn-metrics v" << kCsvVersion << "\n" << csv_header() << "\n";
  for (const auto& r : s.rows()) out << csv_row(r) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

MetricSeries read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  MetricSeries s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("slot,", 0) == 0) continue;
    std::stringstream ss(line);
    std::string f;
    std::vector<std::string> c;
    while (std::getline(ss, f, ',')) c.push_back(f);
    if (c.size() != 11) throw std::runtime_error("malformed row in " + path.string());
    MetricRecord r;
    r.slot = std::stol(c[0]);
    r.episode = std::stol(c[1]);
    r.episode_slot = std::stol(c[2]);
    r.reward_high = std::stod(c[3]);
    r.reward_low = std::stod(c[4]);
    r.throughput = std::stod(c[5]);
    r.demand = std::stod(c[6]);
    r.capacity = std::stod(c[7]);
    r.rb_groups = std::stoi(c[8]);
    r.satisfactory_error = std::stod(c[9]);
    r.elevation = std::stod(c[10]);
    s.append(r);
  }
  return s;
}

std::vector<double> moving_average(const std::vector<double>& x, long window) {
  if (window < 1) throw std::invalid_argument("window must be at least 1");
  const size_t n = x.size(), w = static_cast<size_t>(window);
  // Window sum = suffix of the previous block + prefix of the current block,
  // both plain forward/backward sums: no subtraction, so an all-zero window is exactly 0.
  std::vector<double> prefix(n), suffix(n);
  for (size_t i = 0; i < n; ++i) prefix[i] = (i % w == 0) ? x[i] : prefix[i - 1] + x[i];
  for (size_t i = n; i-- > 0;) suffix[i] = (i % w == w - 1 || i + 1 == n) ? x[i] : suffix[i + 1] + x[i];
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    const size_t count = std::min(w, i + 1);
    const size_t lo = i + 1 - count;
    const double sum = (lo % w == 0) ? prefix[i] : suffix[lo] + prefix[i];
    out[i] = sum / static_cast<double>(count);
  }
  return out;
}

double convergence_sd(const std::vector<double>& x, long window) {
  if (window < 1 || window > static_cast<long>(x.size())) throw std::invalid_argument("window must be within the series");
  const auto begin = x.end() - window;
  double mean = 0.0;
  for (auto it = begin; it != x.end(); ++it) mean += *it;
  mean /= static_cast<double>(window);
  double var = 0.0;
  for (auto it = begin; it != x.end(); ++it) var += (*it - mean) * (*it - mean);
  return std::sqrt(var / static_cast<double>(window));
}

std::vector<double> utility_scores(const std::vector<UtilityAttributes>& schemes, const std::vector<double>& weights) {
  if (weights.size() != 3) throw std::invalid_argument("utility needs three weights");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("utility weights must be nonnegative");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw std::invalid_argument("utility weights must sum to 1");
  std::vector<double> out(schemes.size(), 0.0);
  if (schemes.empty()) return out;
  const std::vector<double UtilityAttributes::*> fields{&UtilityAttributes::satisfactory_error,
                                                          &UtilityAttributes::rb_groups, &UtilityAttributes::complexity};
  for (size_t k = 0; k < fields.size(); ++k) {
    double lo = schemes[0].*fields[k], hi = lo;
    for (const auto& s : schemes) {
      lo = std::min(lo, s.*fields[k]);
      hi = std::max(hi, s.*fields[k]);
    }
    const double range = hi - lo;
    for (size_t i = 0; i < schemes.size(); ++i)
      out[i] += weights[k] * (range > 0.0 ? (schemes[i].*fields[k] - lo) / range : 0.0);
  }
  return out;
}

double utility_score(const UtilityAttributes& a, const std::vector<double>& weights,
                     const std::vector<UtilityAttributes>& context) {
  std::vector<UtilityAttributes> all = context;
  all.push_back(a);
  return utility_scores(all, weights).back();
}

double complexity(Scheme s, int T, int n_bar, int grid_points, double max_angle_deg) {
  if (T < 1 || n_bar < 1) throw std::invalid_argument("T and n_bar must be positive");
  switch (s) {
    case Scheme::bfs_greedy:
    case Scheme::bfs_fixed:
    case Scheme::bfs_mab: return std::pow(static_cast<double>(grid_points), 4);
    case Scheme::pbu_greedy:
    case Scheme::pbu_fixed:
    case Scheme::pbu_mab: return std::log2(max_angle_deg);
    default: {
      // UE beam pairs times satellite beam steps per slot, plus the
      // satellite's rollout over 9 * 31 actions for n_bar cycles, once per cycle.
      const drl::HighActionSpace space;
      return 49.0 * 9.0 / T + static_cast<double>(space.size()) * n_bar / T;
    }
  }
}

namespace {

MetricRecord to_record(const env::SlotRecord& r, double reward_high) {
  MetricRecord m;
  m.slot = r.slot;
  m.episode = r.episode;
  m.episode_slot = r.episode_slot;
  m.reward_high = reward_high;
  m.reward_low = r.reward_low;
  m.throughput = r.throughput;
  m.demand = r.demand;
  m.capacity = r.capacity;
  m.rb_groups = r.rb_groups;
  m.satisfactory_error = std::abs(r.omega);
  m.elevation = r.elevation;
  return m;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

nlohmann::json summarize(const ExperimentConfig& cfg, const MetricSeries& s) {
  nlohmann::json j;
  j["scheme"] = scheme_name(cfg.scheme);
  j["seed"] = cfg.seed;
  j["slots"] = s.size();
  j["csv_version"] = kCsvVersion;
  const auto rl = s.column(&MetricRecord::reward_low);
  const auto rh = s.column(&MetricRecord::reward_high);
  const auto th = s.column(&MetricRecord::throughput);
  const auto se = s.column(&MetricRecord::satisfactory_error);
  std::vector<double> groups;
  for (const auto& r : s.rows()) groups.push_back(r.rb_groups);
  j["mean_reward_low"] = mean_of(rl);
  j["mean_reward_high"] = mean_of(rh);
  j["mean_throughput"] = mean_of(th);
  j["mean_satisfactory_error"] = mean_of(se);
  j["mean_rb_groups"] = mean_of(groups);
  j["final_ma_reward_low"] = s.size() ? moving_average(rl, kRewardWindow).back() : 0.0;
  j["final_ma_reward_high"] = s.size() ? moving_average(rh, kRewardWindow).back() : 0.0;
  j["final_ma_throughput"] = s.size() ? moving_average(th, kThroughputWindow).back() : 0.0;
  j["convergence_sd_reward_low"] = s.size() ? convergence_sd(rl, std::min<long>(kSdWindow, s.size())) : 0.0;
  j["complexity"] = complexity(cfg.scheme, cfg.env.cycle, cfg.drl.n_bar, cfg.baseline.grid.points);
  j["utility_inputs"] = {{"satisfactory_error", j["mean_satisfactory_error"]},
                         {"rb_groups", j["mean_rb_groups"]},
                         {"complexity", j["complexity"]}};
  if (is_learning(cfg.scheme) && cfg.scheme != Scheme::independent) {
    j["comm_elements_per_cycle"] = drl::comm_elements(cfg.env.cycle, cfg.env.total_rbs, cfg.drl.n_bar);
    j["comm_bytes_per_cycle"] =
        drl::comm_overhead(cfg.env.cycle, cfg.env.total_rbs, cfg.drl.n_bar, cfg.drl.element_bytes);
  } else {
    j["comm_elements_per_cycle"] = 0;
    j["comm_bytes_per_cycle"] = 0;
  }
  return j;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write) {
  cfg.validate();
  ExperimentResult res;
  const auto t0 = std::chrono::steady_clock::now();
  auto cb = [&](const env::SlotRecord& r, double rh) { res.series.append(to_record(r, rh)); };
  nlohmann::json training;
  if (is_learning(cfg.scheme)) {
    drl::DrlConfig d = cfg.drl;
    d.mode = cfg.scheme == Scheme::proposed            ? drl::Mode::proposed
             : cfg.scheme == Scheme::single_estimation ? drl::Mode::single_estimation
                                                       : drl::Mode::independent;
    drl::Trainer trainer(cfg.env, d, cfg.seed);
    const auto st = trainer.run(cfg.slots, cb);
    training = {{"episodes", st.episodes},
                {"cycles", st.cycles},
                {"trpo_accepted", st.trpo_accepted},
                {"trpo_rejected", st.trpo_rejected},
                {"trpo_aborted", st.trpo_aborted},
                {"kl_violations", st.kl_violations},
                {"surrogate_violations", st.surrogate_violations},
                {"rejected_modified", st.rejected_modified},
                {"max_accepted_kl", st.max_accepted_kl},
                {"downlink_messages", st.downlink_messages},
                {"uplink_messages", st.uplink_messages},
                {"exchanged_elements", st.exchanged_elements},
                {"element_mismatches", st.element_mismatches},
                {"terminated_early", st.terminated_early}};
  } else {
    baselines::BaselineConfig b = cfg.baseline;
    switch (cfg.scheme) {
      case Scheme::bfs_greedy: b.beam = baselines::BeamScheme::bfs; b.rb = baselines::RbScheme::greedy; break;
      case Scheme::bfs_fixed: b.beam = baselines::BeamScheme::bfs; b.rb = baselines::RbScheme::fixed; break;
      case Scheme::bfs_mab: b.beam = baselines::BeamScheme::bfs; b.rb = baselines::RbScheme::mab; break;
      case Scheme::pbu_greedy: b.beam = baselines::BeamScheme::pbu; b.rb = baselines::RbScheme::greedy; break;
      case Scheme::pbu_fixed: b.beam = baselines::BeamScheme::pbu; b.rb = baselines::RbScheme::fixed; break;
      default: b.beam = baselines::BeamScheme::pbu; b.rb = baselines::RbScheme::mab; break;
    }
    baselines::BaselineRunner runner(cfg.env, b, cfg.seed);
    runner.run(cfg.slots, cb);
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.summary = summarize(cfg, res.series);
  if (!training.is_null()) res.summary["training"] = training;
  res.summary["config"] = config_to_json(cfg);

  if (write) {
    const fs::path dir = cfg.output_dir.empty() ? output_root() : fs::path(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    const std::string base = cfg.cell_name();
    write_csv(dir / (base + ".csv"), res.series);
    auto dump = [](const fs::path& p, const nlohmann::json& j) {
      std::ofstream out(p, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + p.string());
      out << j.dump(2) << "\n";
    };
    dump(dir / (base + ".json"), res.summary);
    dump(dir / (base + ".time.json"), {{"wall_seconds", res.wall_seconds}});
  }
  return res;
}

nlohmann::json run_sweep(const SweepSpec& spec) {
  nlohmann::json agg;
  std::map<std::string, std::vector<nlohmann::json>> by_scheme;
  std::vector<int> nbars = spec.n_bars.empty() ? std::vector<int>{spec.base.drl.n_bar} : spec.n_bars;
  for (Scheme s : spec.schemes)
    for (int nb : nbars) {
      if (!is_learning(s) && nb != nbars.front()) continue;
      for (auto seed : spec.seeds) {
        ExperimentConfig c = spec.base;
        c.scheme = s;
        c.seed = seed;
        c.drl.n_bar = nb;
        const auto r = run_experiment(c);
        std::string key = scheme_name(s);
        if (is_learning(s)) key += "_nbar" + std::to_string(nb);
        by_scheme[key].push_back(r.summary);
      }
    }
  for (const auto& [key, cells] : by_scheme) {
    nlohmann::json e;
    for (const char* m : {"final_ma_reward_low", "final_ma_throughput", "mean_throughput", "mean_reward_low",
                          "mean_satisfactory_error", "mean_rb_groups", "convergence_sd_reward_low"}) {
      double s = 0.0;
      std::vector<double> per;
      for (const auto& c : cells) {
        per.push_back(c[m].get<double>());
        s += per.back();
      }
      e[m] = {{"mean", s / static_cast<double>(cells.size())}, {"per_seed", per}};
    }
    e["complexity"] = cells.front()["complexity"];
    e["seeds"] = cells.size();
    agg["schemes"][key] = e;
  }
  const fs::path dir = spec.base.output_dir.empty() ? output_root() : fs::path(spec.base.output_dir);
  fs::create_directories(dir);
  std::ofstream out(dir / "sweep.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "sweep.json").string());
  out << agg.dump(2) << "\n";
  return agg;
}

fs::path output_root() {
  const char* v = std::getenv("NTN_OUTPUT_ROOT");
  return (v && *v) ? fs::path(v) : fs::path("out");
}

}  // namespace ntn::harness
