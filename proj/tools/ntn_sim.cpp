// SPDX-License-Identifier: Apache-2.0
// ntn_sim: run cells and sweeps, check the tabular theory, score utilities.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "ntn/harness.hpp"
#include "ntn/tabular.hpp"

namespace h = ntn::harness;

namespace {

struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::string scheme;
  long seed = -1;
  long slots = -1;
  int n_bar = -1;
  int cycle = -1;
  int rbs = -1;
  std::string out;
  std::string tag;
  std::string message_log;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_file, "INI file with [section] key = value entries")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "Override one config key, e.g. drl.n_bar=4 (repeatable)");
    app->add_option("--scheme", scheme, "Scheme name");
    app->add_option("--seed", seed, "Seed");
    app->add_option("--slots", slots, "Slot budget");
    app->add_option("--n-bar", n_bar, "Rollout depth in cycles");
    app->add_option("--cycle", cycle, "Satellite control cycle T in slots");
    app->add_option("--rbs", rbs, "Total resource blocks M");
    app->add_option("--out", out, "Output directory (default: $NTN_OUTPUT_ROOT or ./out)");
    app->add_option("--tag", tag, "Suffix for output file names");
    app->add_option("--message-log", message_log, "JSON-lines log of exchanged messages");
  }

  h::ExperimentConfig build() const {
    h::ExperimentConfig cfg;
    if (!config_file.empty()) cfg = h::load_config(config_file);
    for (const auto& kv : sets) {
      const auto dot = kv.find('.');
      const auto eq = kv.find('=');
      if (dot == std::string::npos || eq == std::string::npos || dot > eq)
        throw std::invalid_argument("--set expects section.key=value, got " + kv);
      h::apply_config_text(cfg, "[" + kv.substr(0, dot) + "]\n" + kv.substr(dot + 1) + "\n");
    }
    if (!scheme.empty()) cfg.scheme = h::parse_scheme(scheme);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (slots >= 0) cfg.slots = slots;
    if (n_bar > 0) cfg.drl.n_bar = n_bar;
    if (cycle > 0) cfg.env.cycle = cycle;
    if (rbs > 0) cfg.env.total_rbs = rbs;
    if (!out.empty()) cfg.output_dir = out;
    if (!tag.empty()) cfg.tag = tag;
    if (!message_log.empty()) cfg.drl.message_log = message_log;
    cfg.validate();
    return cfg;
  }
};

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LEO satellite / UE two-time-scale control simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run one (scheme, seed) cell");
  ConfigFlags run_flags;
  run_flags.attach(run);
  bool dump_config = false;
  run->add_flag("--print-config", dump_config, "Print the resolved config as INI and exit");

  auto* sweep = app.add_subcommand("sweep", "Run a scheme x seed grid");
  ConfigFlags sweep_flags;
  sweep_flags.attach(sweep);
  std::string sweep_schemes = "all", sweep_seeds = "1,2,3", sweep_nbars;
  sweep->add_option("--schemes", sweep_schemes, "Comma-separated schemes or 'all'");
  sweep->add_option("--seeds", sweep_seeds, "Comma-separated seeds");
  sweep->add_option("--n-bars", sweep_nbars, "Comma-separated rollout depths for learning schemes");

  auto* verify = app.add_subcommand("verify", "Run the tabular theory checks");
  ntn::tabular::SuiteConfig suite;
  verify->add_option("--seeds", suite.iterate_seeds, "Iterate seeds");
  verify->add_option("--steps", suite.iterate_steps, "Iterate steps per seed");
  verify->add_option("--delta", suite.delta, "Confidence parameter of the bound");
  verify->add_option("--lemma-pairs", suite.lemma_pairs, "Random policy pairs per instance");
  verify->add_option("--stages", suite.prop_stages, "Sequential-update stages");

  auto* util = app.add_subcommand("utility", "Weighted-sum utility over cell summaries");
  std::vector<std::string> summaries;
  std::vector<double> weights{1.0 / 3, 1.0 / 3, 1.0 / 3};
  util->add_option("summaries", summaries, "Cell summary JSON files")->required()->check(CLI::ExistingFile);
  util->add_option("-w,--weights", weights, "Weights for (satisfactory error, RB groups, complexity)")->expected(3);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = run_flags.build();
      if (dump_config) {
        std::cout << h::config_to_ini(cfg);
        return 0;
      }
      const auto res = h::run_experiment(cfg);
      std::cout << res.summary.dump(2) << "\n";
    } else if (*sweep) {
      h::SweepSpec spec;
      spec.base = sweep_flags.build();
      if (sweep_schemes == "all") {
        spec.schemes = h::all_schemes();
      } else {
        for (const auto& s : split(sweep_schemes)) spec.schemes.push_back(h::parse_scheme(s));
      }
      for (const auto& s : split(sweep_seeds)) spec.seeds.push_back(std::stoull(s));
      for (const auto& s : split(sweep_nbars)) spec.n_bars.push_back(std::stoi(s));
      std::cout << h::run_sweep(spec).dump(2) << "\n";
    } else if (*verify) {
      const auto r = ntn::tabular::run_theory_suite(suite);
      nlohmann::json j{{"iterate",
                        {{"seeds", r.seeds},
                         {"within_bounds", r.within_bounds},
                         {"policies_settled", r.policies_settled},
                         {"worst_error_H", r.worst_error_H},
                         {"bound_H", r.bound_H},
                         {"worst_error_L", r.worst_error_L},
                         {"bound_L", r.bound_L},
                         {"worst_n0", r.worst_n0},
                         {"martingale_ok", r.martingale_ok},
                         {"seconds", r.iterate_seconds}}},
                       {"lemma", {{"checks", r.lemma_checks}, {"violations", r.lemma_violations},
                                  {"min_slack_H", r.lemma_min_slack_H}, {"min_slack_L", r.lemma_min_slack_L}}},
                       {"sequential",
                        {{"runs", r.prop_runs},
                         {"monotone", r.prop_monotone},
                         {"converged", r.prop_converged},
                         {"worst_drop", r.prop_worst_drop},
                         {"worst_gap", r.prop_worst_gap}}}};
      std::cout << j.dump(2) << "\n";
    } else if (*util) {
      std::vector<h::UtilityAttributes> attrs;
      std::vector<std::string> names;
      for (const auto& p : summaries) {
        std::ifstream in(p);
        const auto j = nlohmann::json::parse(in);
        if (!j.contains("utility_inputs")) {
          std::cerr << "skipping " << p << ": not a cell summary\n";
          continue;
        }
        const auto& u = j.at("utility_inputs");
        attrs.push_back({u.at("satisfactory_error").get<double>(), u.at("rb_groups").get<double>(),
                         u.at("complexity").get<double>()});
        names.push_back(j.at("scheme").get<std::string>());
      }
      const auto scores = h::utility_scores(attrs, weights);
      for (size_t i = 0; i < scores.size(); ++i) std::printf("%-20s %.6f\n", names[i].c_str(), scores[i]);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
