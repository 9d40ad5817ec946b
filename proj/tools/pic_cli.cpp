// Command-line front end: train, evaluate, verify, gradcheck, plot, sweep.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "pic/harness.hpp"
#include "pic/plots.hpp"
#include "pic/verify.hpp"

using namespace pic;

namespace {

struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string algo, env, complexity, eval_mode, out;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> steps, eval_interval, eval_episodes;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_file, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Override a config key, key=value (repeatable)");
    cmd->add_option("--algo", algo, "dqn, sac, nsac, dqn-repeat, sac-repeat, dqn-ip, sac-ip, nsac-ip");
    cmd->add_option("--env", env, "linetrack or twoway-mini");
    cmd->add_option("--complexity", complexity, "simple or complex");
    cmd->add_option("--seeds", seeds, "Training seeds");
    cmd->add_option("--steps", steps, "Total environment steps per seed");
    cmd->add_option("--eval-interval", eval_interval, "Environment steps between evaluations");
    cmd->add_option("--eval-episodes", eval_episodes, "Episodes per evaluation");
    cmd->add_option("--eval-mode", eval_mode, "sample or greedy")->check(CLI::IsMember({"sample", "greedy"}));
    cmd->add_option("-o,--out", out, "Output directory");
  }

  ExperimentConfig build() const {
    nlohmann::json doc = nlohmann::json::object();
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      try {
        doc = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw Error(config_file + ": " + e.what());
      }
    }
    auto c = ExperimentConfig::from_json(doc);
    std::vector<std::string> sets;
    if (!algo.empty()) sets.push_back("algo=" + algo);
    if (!env.empty()) sets.push_back("env=" + env);
    if (!complexity.empty()) sets.push_back("complexity=" + complexity);
    if (!eval_mode.empty()) sets.push_back("eval_mode=" + eval_mode);
    if (!out.empty()) sets.push_back("output_dir=" + nlohmann::json(out).dump());
    if (!seeds.empty()) sets.push_back("seeds=" + nlohmann::json(seeds).dump());
    if (steps) sets.push_back("total_steps=" + std::to_string(*steps));
    if (eval_interval) sets.push_back("eval_interval=" + std::to_string(*eval_interval));
    if (eval_episodes) sets.push_back("eval_episodes=" + std::to_string(*eval_episodes));
    sets.insert(sets.end(), overrides.begin(), overrides.end());
    for (const auto& s : sets) c.apply_override(s);
    return c;
  }
};

void print_final_rows(const RunSummary& summary) {
  for (const auto& run : summary.runs) {
    if (run.failure) {
      std::printf("seed %llu FAILED at step %zu: %s\n", static_cast<unsigned long long>(run.seed),
                  run.rows.back().env_step, run.failure->c_str());
      continue;
    }
    const auto& r = run.rows.back();
    std::printf("seed %llu step %zu return %.3f +/- %.3f oscillation %.4f mu %.4f\n",
                static_cast<unsigned long long>(run.seed), r.env_step, r.mean_return, r.std_return,
                r.oscillation_ratio, r.mean_mu_pic);
  }
}

int run_suites(const std::vector<std::string>& suites, const VerifyOptions& options) {
  std::vector<std::string> names = suites;
  if (names.empty() || std::find(names.begin(), names.end(), "all") != names.end()) names = verify_suite_names();
  bool ok = true;
  for (const auto& name : names) {
    const auto report = run_verify_suite(name, options);
    print_report(std::cout, report);
    ok = ok && report.passed();
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy inertia controller experiments"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  auto* train = app.add_subcommand("train", "Train every seed and write CSV logs, checkpoints and an aggregate");
  train_flags.attach(train);
  bool print_config = false;
  train->add_flag("--print-config", print_config, "Print the resolved config and exit");

  std::string run_dir, eval_mode_override;
  std::uint64_t eval_seed_arg = 0, ckpt_seed = 0;
  std::size_t eval_episodes_arg = 20;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a saved checkpoint");
  evaluate_cmd->add_option("run_dir", run_dir, "Directory written by train")->required()->check(CLI::ExistingDirectory);
  evaluate_cmd->add_option("--seed", ckpt_seed, "Training seed of the checkpoint");
  evaluate_cmd->add_option("--episodes", eval_episodes_arg, "Evaluation episodes");
  evaluate_cmd->add_option("--eval-seed", eval_seed_arg, "Seed for the evaluation episodes");
  evaluate_cmd->add_option("--eval-mode", eval_mode_override, "sample or greedy")
      ->check(CLI::IsMember({"sample", "greedy"}));

  std::vector<std::string> suites;
  VerifyOptions verify_options;
  auto* verify = app.add_subcommand("verify", "Run property suites; exits nonzero on any failure");
  verify->add_option("suites", suites, "tabular, gradcheck, reduction, theorem1, lemma1, npi-monotone or all");
  verify->add_option("--seeds", verify_options.seeds, "Seeds per check (0 keeps the suite default)");
  verify->add_option("--base-seed", verify_options.base_seed, "First seed");

  VerifyOptions grad_options;
  auto* gradcheck = app.add_subcommand("gradcheck", "Same as verify gradcheck");
  gradcheck->add_option("--seeds", grad_options.seeds, "Seeds per check");

  std::vector<std::string> plot_dirs;
  PlotOptions plot_options;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "Write SVG charts and plot data from run directories");
  plot->add_option("run_dirs", plot_dirs, "One or more run directories (one line each)")->required();
  plot->add_option("--metric", plot_options.metrics, "CSV column to plot (repeatable)");
  plot->add_option("--band", plot_options.band_factor, "Band half-width in standard deviations");
  plot->add_option("-o,--out", plot_out, "Output directory (default: the first run directory)");

  ConfigFlags sweep_flags;
  std::vector<std::string> axes;
  auto* sweep = app.add_subcommand("sweep", "Train over the cartesian product of hyperparameter values");
  sweep_flags.attach(sweep);
  sweep->add_option("--axis", axes, "key=v1,v2,... (repeatable)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto config = train_flags.build();
      if (print_config) {
        std::cout << config.to_json().dump(2) << '\n';
        return 0;
      }
      const auto summary = run_training(config);
      print_final_rows(summary);
      std::printf("logs written to %s\n", config.output_dir.c_str());
      return summary.ok() ? 0 : 1;
    }
    if (*evaluate_cmd) {
      std::ifstream in(std::filesystem::path(run_dir) / "config.json");
      if (!in) throw Error("no config.json in " + run_dir);
      auto config = ExperimentConfig::from_json(nlohmann::json::parse(in));
      const auto ckpt = std::filesystem::path(run_dir) / ("checkpoint_seed_" + std::to_string(ckpt_seed) + ".json");
      auto agent = load_checkpoint(config, ckpt);
      auto env = make_training_env(config);
      ActMode mode = config.eval_mode;
      if (!eval_mode_override.empty()) mode = eval_mode_override == "greedy" ? ActMode::greedy : ActMode::sample;
      if (config.algo.starts_with("dqn")) mode = ActMode::greedy;
      const auto seed = evaluate_cmd->count("--eval-seed") ? eval_seed_arg : ckpt_seed + config.eval_seed_offset;
      const auto r = evaluate(*agent, *env, eval_episodes_arg, seed, mode);
      std::printf("mean_return %.6f std_return %.6f oscillation_ratio %.6f mean_mu_pic %.6f\n", r.mean_return,
                  r.std_return, r.oscillation_ratio, r.mean_mu);
      return 0;
    }
    if (*verify) return run_suites(suites, verify_options);
    if (*gradcheck) return run_suites({"gradcheck"}, grad_options);
    if (*plot) {
      plot_options.out_dir = plot_out;
      std::vector<std::filesystem::path> dirs(plot_dirs.begin(), plot_dirs.end());
      for (const auto& p : emit_plots(dirs, plot_options)) std::printf("wrote %s\n", p.c_str());
      return 0;
    }
    if (*sweep) {
      const auto base = sweep_flags.build();
      std::vector<SweepAxis> parsed;
      for (const auto& a : axes) parsed.push_back(SweepAxis::parse(a));
      bool ok = true;
      for (const auto& point : expand_sweep(base, parsed)) {
        std::printf("== %s\n", point.name.c_str());
        const auto summary = run_training(point.config);
        print_final_rows(summary);
        ok = ok && summary.ok();
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
