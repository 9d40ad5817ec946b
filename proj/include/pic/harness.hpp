#pragma once

// Training and evaluation protocol, metric logging and run aggregation.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pic/agent.hpp"
#include "pic/baselines.hpp"
#include "pic/envs.hpp"
#include "pic/nsac.hpp"

namespace pic {

/// Flat hyperparameter set shared by all algorithms; each agent reads the
/// fields it uses. Defaults are the shipped desk-scale settings.
struct Hyperparameters {
  std::vector<std::size_t> hidden{64, 64};
  double gamma = 0.99;
  double alpha_core = 0.1;
  double alpha_mix = 0.01;
  double lr = 3e-4;  // actor, critics and DQN
  double lr_pic = 3e-4;
  double sigma = 0.002;
  double sigma_mix = 0.002;
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 200000;
  std::size_t update_every = 2;
  std::size_t mix_update_every = 2;
  std::size_t target_interval = 10000;
  double epsilon_start = 1.0;
  double epsilon_floor = 0.1;
  double epsilon_decay = 5e-6;
  double mu0 = 0.0;
  std::vector<std::size_t> repeats{1, 2, 4, 8};
  double penalty = -0.05;

  SacConfig sac() const;
  NsacConfig nsac() const;
  DqnConfig dqn() const;
};

struct ExperimentConfig {
  /// dqn, sac, nsac, dqn-repeat, sac-repeat, dqn-ip, sac-ip or nsac-ip.
  std::string algo = "nsac";
  std::string env = "twoway-mini";
  std::string complexity = "complex";
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t total_steps = 100000;
  std::size_t eval_interval = 5000;
  std::size_t eval_episodes = 20;
  ActMode eval_mode = ActMode::sample;
  /// Evaluation episodes use seed + offset, never the training streams.
  std::uint64_t eval_seed_offset = 10007;
  std::string output_dir = "runs";
  bool checkpoint_buffer = false;
  Hyperparameters hp;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& doc);
  /// "key=value" where value is JSON (numbers, arrays, true) or a bare string.
  /// Hyperparameters are addressed by their own names.
  void apply_override(const std::string& assignment);
};

bool is_known_algo(const std::string& algo);

/// The environment the agent interacts with during training, wrappers included.
std::unique_ptr<Env> make_training_env(const ExperimentConfig& config);
std::unique_ptr<Agent> make_agent(const ExperimentConfig& config, const Env& env, std::uint64_t seed);

struct EvalResult {
  double mean_return = 0.0;
  double std_return = 0.0;  // population std over episodes
  double oscillation_ratio = 0.0;
  /// Mean inertia weight over steps with a previous action; NaN without one.
  double mean_mu = std::numeric_limits<double>::quiet_NaN();
};

/// Rolls out n_episodes without learning. The env is switched to evaluation
/// mode, returns are undiscounted base rewards and oscillation is measured on
/// the executed base actions. Episode i resets with a seed derived from
/// (seed, i); action draws come from their own stream of `seed`.
EvalResult evaluate(Agent& agent, Env& env, std::size_t n_episodes, std::uint64_t seed, ActMode mode);

struct MetricsRecord {
  static constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
  std::size_t env_step = 0;
  double mean_return = kNan;
  double std_return = kNan;
  double oscillation_ratio = kNan;
  double mean_mu_pic = kNan;
  double loss_core_q = kNan;
  double loss_core_pi = kNan;
  double loss_mix_q = kNan;
  double loss_pic = kNan;
  double epsilon = kNan;
};

inline constexpr const char* kCsvHeader =
    "env_step,mean_return,std_return,oscillation_ratio,mean_mu_pic,loss_core_q,loss_core_pi,loss_mix_q,loss_pic,"
    "epsilon";
inline constexpr std::size_t kCsvValueColumns = 9;

/// Value columns of a record in header order (env_step excluded).
std::vector<double> record_values(const MetricsRecord& r);
MetricsRecord record_from_values(std::size_t env_step, const std::vector<double>& values);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& rows);
/// Throws naming the file and line on any malformed row.
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

struct AggregateRow {
  std::size_t env_step = 0;
  std::size_t seeds = 0;
  std::vector<double> mean, std;  // per value column; NaN entries are skipped
};
/// Rows are matched on env_step; steps not present in every run are dropped.
std::vector<AggregateRow> aggregate(const std::vector<std::vector<MetricsRecord>>& runs);
void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> read_aggregate_csv(const std::filesystem::path& path);

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> rows;
  /// Set when the run aborted; the last row then holds the failing step.
  std::optional<std::string> failure;
  std::unique_ptr<Agent> agent;
};

/// One seed of the protocol: evaluation at step 0 and after every
/// eval_interval env steps. Loss columns average the updates since the
/// previous row. Errors abort the seed and are recorded, not thrown.
SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed);

struct RunSummary {
  std::vector<SeedRun> runs;
  std::vector<AggregateRow> aggregate;
  bool ok() const;
};

/// Runs all seeds (in parallel when OpenMP threads are available) and writes
/// config.json, seed_<s>.csv, checkpoint_seed_<s>.json and aggregate.csv to
/// output_dir. Nothing is written when output_dir is empty.
RunSummary run_training(const ExperimentConfig& config);

/// Recovers the agent saved by run_training for one seed.
std::unique_ptr<Agent> load_checkpoint(const ExperimentConfig& config, const std::filesystem::path& path);

/// One swept key: "mu0=0,0.1,0.3". Commas inside brackets stay with their
/// value, so "hidden=[32,32],[64,64]" has two values.
struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
  static SweepAxis parse(const std::string& text);
};

struct SweepPoint {
  std::string name;  // "mu0=0.1,alpha_mix=0.01"
  ExperimentConfig config;
};

/// Cartesian product of the axes, each point writing to its own
/// subdirectory of base.output_dir.
std::vector<SweepPoint> expand_sweep(const ExperimentConfig& base, const std::vector<SweepAxis>& axes);

/// Fraction of switches in one episode's action sequence; 0 for fewer than
/// two actions.
double episode_oscillation(const std::vector<std::size_t>& actions);

}  // namespace pic
