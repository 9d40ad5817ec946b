#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "pic/harness.hpp"
#include "pic/plots.hpp"
#include "pic/verify.hpp"

using namespace pic;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("pic_test_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Agent with a fixed action rule and no learning.
class ScriptedAgent : public Agent {
 public:
  explicit ScriptedAgent(std::function<std::size_t(Rng&)> rule) : rule_(std::move(rule)) {}
  std::size_t act(std::span<const double>, PrevAction, Rng& rng, ActMode) override { return rule_(rng); }
  std::optional<LossRecord> train_step(std::size_t) override { return std::nullopt; }
  nlohmann::json checkpoint(bool) const override { return nlohmann::json::object(); }
  void restore(const nlohmann::json&) override {}
  std::uint64_t state_checksum() const override { return 0; }

 private:
  std::function<std::size_t(Rng&)> rule_;
};

ExperimentConfig tiny_config(const std::string& algo) {
  ExperimentConfig c;
  c.algo = algo;
  c.env = "linetrack";
  c.seeds = {3};
  c.total_steps = 600;
  c.eval_interval = 200;
  c.eval_episodes = 2;
  c.output_dir = "";
  c.hp.hidden = {16, 16};
  c.hp.batch_size = 16;
  return c;
}

}  // namespace

TEST_CASE("config json round trip keeps every field") {
  ExperimentConfig c;
  c.algo = "sac-ip";
  c.seeds = {7, 9};
  c.total_steps = 1234;
  c.eval_mode = ActMode::greedy;
  c.hp.hidden = {8, 4};
  c.hp.mu0 = 0.3;
  c.hp.repeats = {1, 3};
  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hp.mu0 == 0.3);
  CHECK(back.eval_mode == ActMode::greedy);
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"algoo", "sac"}}), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"hyperparameters", {{"learning_rate", 1}}}}), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"algo", "ppo"}}), Error);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"hyperparameters", {{"mu0", 1.5}}}}), Error);
}

TEST_CASE("overrides address top-level and hyperparameter keys") {
  ExperimentConfig c;
  c.apply_override("algo=dqn");
  c.apply_override("seeds=[1,2]");
  c.apply_override("alpha_mix=0.001");
  c.apply_override("hidden=[32,32]");
  CHECK(c.algo == "dqn");
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(c.hp.alpha_mix == 0.001);
  CHECK(c.hp.hidden == std::vector<std::size_t>{32, 32});
  CHECK_THROWS_AS(c.apply_override("nonsense=1"), Error);
  CHECK_THROWS_AS(c.apply_override("no_equals_sign"), Error);
}

TEST_CASE("metrics csv round trips including nan") {
  const auto dir = scratch_dir("csv");
  std::vector<MetricsRecord> rows(2);
  rows[0].env_step = 0;
  rows[0].mean_return = 1.0 / 3.0;
  rows[1].env_step = 5000;
  rows[1].mean_return = -2.5e-17;
  rows[1].oscillation_ratio = 0.125;
  rows[1].loss_pic = 1e300;
  write_metrics_csv(dir / "a.csv", rows);
  const auto back = read_metrics_csv(dir / "a.csv");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].env_step == rows[i].env_step);
    const auto a = record_values(rows[i]), b = record_values(back[i]);
    for (std::size_t c = 0; c < a.size(); ++c) {
      if (std::isnan(a[c])) CHECK(std::isnan(b[c]));
      else CHECK(a[c] == b[c]);
    }
  }
}

TEST_CASE("malformed csv row names the line") {
  const auto dir = scratch_dir("bad_csv");
  std::ofstream(dir / "bad.csv") << kCsvHeader << "\n0,1,2,3,4,5,6,7,8,9\n5,1,2\n";
  try {
    read_metrics_csv(dir / "bad.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::ofstream(dir / "bad2.csv") << kCsvHeader << "\n0,1,x,3,4,5,6,7,8,9\n";
  CHECK_THROWS_WITH_AS(read_metrics_csv(dir / "bad2.csv"), doctest::Contains("line 2"), Error);
}

TEST_CASE("aggregate matches a direct recomputation") {
  std::vector<std::vector<MetricsRecord>> runs(3);
  const double returns[3] = {1.0, 4.0, 10.0};
  for (int s = 0; s < 3; ++s)
    for (std::size_t step : {0u, 100u}) {
      MetricsRecord r;
      r.env_step = step;
      r.mean_return = returns[s] + static_cast<double>(step);
      r.loss_pic = s == 1 ? MetricsRecord::kNan : 2.0 * s;
      runs[static_cast<std::size_t>(s)].push_back(r);
    }
  MetricsRecord extra;
  extra.env_step = 200;
  runs[0].push_back(extra);  // not in every run, dropped
  const auto agg = aggregate(runs);
  REQUIRE(agg.size() == 2);
  const double mean = 5.0, var = (16.0 + 1.0 + 25.0) / 3.0;
  CHECK(std::abs(agg[1].mean[0] - (mean + 100.0)) < 1e-12);
  CHECK(std::abs(agg[1].std[0] - std::sqrt(var)) < 1e-12);
  // loss_pic: seeds 0 and 2 only -> values 0 and 4
  CHECK(std::abs(agg[0].mean[7] - 2.0) < 1e-12);
  CHECK(std::abs(agg[0].std[7] - 2.0) < 1e-12);
  CHECK(agg[0].seeds == 3);

  const auto dir = scratch_dir("agg");
  write_aggregate_csv(dir / "aggregate.csv", agg);
  const auto back = read_aggregate_csv(dir / "aggregate.csv");
  REQUIRE(back.size() == agg.size());
  CHECK(std::abs(back[1].std[0] - agg[1].std[0]) < 1e-12);
}

TEST_CASE("zero training steps gives only the step 0 row") {
  auto c = tiny_config("sac");
  c.total_steps = 0;
  const auto run = run_seed(c, 0);
  REQUIRE_FALSE(run.failure);
  REQUIRE(run.rows.size() == 1);
  CHECK(run.rows[0].env_step == 0);
  CHECK(std::isnan(run.rows[0].loss_core_q));
}

TEST_CASE("rows land on every evaluation interval") {
  for (const std::string algo : {"sac", "nsac", "dqn", "sac-repeat", "nsac-ip"}) {
    CAPTURE(algo);
    const auto run = run_seed(tiny_config(algo), 1);
    REQUIRE_FALSE(run.failure);
    REQUIRE(run.rows.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(run.rows[i].env_step == 200 * i);
    CHECK(run.rows[3].oscillation_ratio >= 0.0);
    CHECK(run.rows[3].oscillation_ratio <= 1.0);
  }
}

TEST_CASE("same config and seed give identical logs") {
  auto c = tiny_config("nsac");
  const auto d1 = scratch_dir("det1"), d2 = scratch_dir("det2");
  c.output_dir = d1.string();
  REQUIRE(run_training(c).ok());
  c.output_dir = d2.string();
  REQUIRE(run_training(c).ok());
  CHECK(slurp(d1 / "seed_3.csv") == slurp(d2 / "seed_3.csv"));
  CHECK(slurp(d1 / "checkpoint_seed_3.json") == slurp(d2 / "checkpoint_seed_3.json"));
  CHECK(fs::exists(d1 / "aggregate.csv"));
  CHECK(fs::exists(d1 / "config.json"));
}

TEST_CASE("checkpoint reload evaluates identically") {
  auto c = tiny_config("nsac");
  const auto dir = scratch_dir("ckpt");
  c.output_dir = dir.string();
  c.checkpoint_buffer = true;  // the checksum covers the buffer size
  auto summary = run_training(c);
  REQUIRE(summary.ok());
  auto loaded = load_checkpoint(c, dir / "checkpoint_seed_3.json");
  CHECK(loaded->state_checksum() == summary.runs[0].agent->state_checksum());
  auto env = make_training_env(c);
  const auto a = evaluate(*summary.runs[0].agent, *env, 3, 42, ActMode::sample);
  const auto b = evaluate(*loaded, *env, 3, 42, ActMode::sample);
  CHECK(a.mean_return == b.mean_return);
  CHECK(a.oscillation_ratio == b.oscillation_ratio);
}

TEST_CASE("evaluation leaves the agent untouched") {
  auto c = tiny_config("nsac");
  auto run = run_seed(c, 2);
  REQUIRE_FALSE(run.failure);
  const auto before = run.agent->state_checksum();
  auto env = make_training_env(c);
  const auto e = evaluate(*run.agent, *env, 5, 11, ActMode::sample);
  CHECK(run.agent->state_checksum() == before);
  CHECK(e.mean_mu >= 0.0);
  CHECK(e.mean_mu <= 1.0);
}

TEST_CASE("oscillation of scripted agents") {
  auto env = make_env("twoway-mini", "complex");
  ScriptedAgent constant([](Rng&) { return std::size_t{0}; });
  CHECK(evaluate(constant, *env, 5, 1, ActMode::sample).oscillation_ratio == 0.0);
  CHECK(std::isnan(evaluate(constant, *env, 1, 1, ActMode::sample).mean_mu));

  // A fresh uniform draw from 3 actions differs from the last one with probability 2/3.
  auto track = make_env("linetrack", "simple");
  ScriptedAgent uniform([](Rng& rng) { return static_cast<std::size_t>(rng() % 3); });
  const auto e = evaluate(uniform, *track, 200, 5, ActMode::sample);
  CHECK(std::abs(e.oscillation_ratio - 2.0 / 3.0) < 0.01);
}

TEST_CASE("episode oscillation edge cases") {
  CHECK(episode_oscillation({}) == 0.0);
  CHECK(episode_oscillation({4}) == 0.0);
  CHECK(episode_oscillation({0, 1, 0, 1}) == 1.0);
  CHECK(episode_oscillation({2, 2, 2, 1}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("plots collapse the band for one seed and write one chart per metric") {
  const auto dir = scratch_dir("plots");
  std::vector<MetricsRecord> rows(3);
  for (std::size_t i = 0; i < 3; ++i) {
    rows[i].env_step = 10 * i;
    rows[i].mean_return = static_cast<double>(i);
    rows[i].oscillation_ratio = 0.5;
  }
  write_metrics_csv(dir / "seed_0.csv", rows);
  const auto s = load_series(dir, "mean_return", 1.0);
  REQUIRE(s.x.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s.lower[i] == s.mean[i]);
    CHECK(s.upper[i] == s.mean[i]);
  }
  const auto written = emit_plots({dir}, {});
  CHECK(written.size() == 2);
  for (const auto& p : written) CHECK(slurp(p).find("<polyline") != std::string::npos);
  CHECK(fs::exists(dir / "oscillation_ratio.csv"));
  CHECK_THROWS_AS(metric_column("no_such_metric"), Error);
}

TEST_CASE("sweep expands the cartesian product") {
  ExperimentConfig base;
  base.output_dir = "out";
  const auto a = SweepAxis::parse("mu0=0,0.2");
  const auto b = SweepAxis::parse("hidden=[32,32],[64,64]");
  CHECK(b.values.size() == 2);
  const auto points = expand_sweep(base, {a, b});
  REQUIRE(points.size() == 4);
  CHECK(points[3].config.hp.mu0 == 0.2);
  CHECK(points[3].config.hp.hidden == std::vector<std::size_t>{64, 64});
  CHECK(points[3].name == "mu0=0.2,hidden=[64,64]");
  CHECK(fs::path(points[0].config.output_dir).parent_path() == "out");
  CHECK_THROWS_AS(SweepAxis::parse("mu0="), Error);
}

TEST_CASE("verify suites run and report") {
  for (const auto& name : verify_suite_names()) {
    CAPTURE(name);
    const auto report = run_verify_suite(name, {1, 0});
    CHECK(report.passed());
    std::ostringstream out;
    print_report(out, report);
    CHECK(out.str().find("PASS") != std::string::npos);
  }
  CHECK_THROWS_AS(run_verify_suite("nope"), Error);
}
