#include "pic/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pic/mdp.hpp"

namespace pic {

namespace {

constexpr std::uint64_t kEnvStream = 3000;
constexpr std::uint64_t kActStream = 2000;
constexpr std::uint64_t kEvalActStream = 4000;

const std::vector<std::string> kAlgos{"dqn", "sac", "nsac", "dqn-repeat", "sac-repeat", "dqn-ip", "sac-ip", "nsac-ip"};

std::string base_algo(const std::string& algo) { return algo.substr(0, algo.find('-')); }
bool has_suffix(const std::string& algo, const std::string& suffix) {
  return algo.size() > suffix.size() && algo.ends_with("-" + suffix);
}

std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t stream, std::size_t episode) {
  return derive_rng(seed, stream + 7919 * (episode + 1))();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& where) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw Error(where + ": cannot parse '" + s + "' as a number");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::string> value_column_names() {
  auto names = split_csv(kCsvHeader);
  names.erase(names.begin());
  return names;
}

}  // namespace

// ------------------------------------------------------------------- config

SacConfig Hyperparameters::sac() const {
  SacConfig c;
  c.hidden = hidden;
  c.gamma = gamma;
  c.alpha = alpha_core;
  c.lr_critic = c.lr_actor = lr;
  c.sigma = sigma;
  c.batch_size = batch_size;
  c.buffer_capacity = buffer_capacity;
  c.update_every = update_every;
  return c;
}

NsacConfig Hyperparameters::nsac() const {
  NsacConfig c;
  c.core = sac();
  c.alpha_mix = alpha_mix;
  c.lr_mix_critic = lr;
  c.lr_pic = lr_pic;
  c.sigma_mix = sigma_mix;
  c.mix_update_every = mix_update_every;
  c.mu0 = mu0;
  return c;
}

DqnConfig Hyperparameters::dqn() const {
  DqnConfig c;
  c.hidden = hidden;
  c.gamma = gamma;
  c.lr = lr;
  c.batch_size = batch_size;
  c.buffer_capacity = buffer_capacity;
  c.update_every = update_every;
  c.target_interval = target_interval;
  c.epsilon = {epsilon_start, epsilon_floor, epsilon_decay};
  return c;
}

bool is_known_algo(const std::string& algo) {
  return std::find(kAlgos.begin(), kAlgos.end(), algo) != kAlgos.end();
}

void ExperimentConfig::validate() const {
  if (!is_known_algo(algo)) throw Error("unknown algo '" + algo + "'");
  if (algo == "nsac-repeat") throw Error("nsac has no repetition variant");
  make_env(env, complexity);  // throws on unknown names
  if (seeds.empty()) throw Error("at least one seed is required");
  if (eval_interval == 0) throw Error("eval_interval must be positive");
  if (eval_episodes == 0) throw Error("eval_episodes must be positive");
  if (hp.batch_size == 0 || hp.update_every == 0 || hp.mix_update_every == 0)
    throw Error("batch_size and update intervals must be positive");
  if (!(hp.gamma > 0.0 && hp.gamma < 1.0)) throw Error("gamma must lie in (0, 1)");
  if (!(hp.mu0 >= 0.0 && hp.mu0 <= 1.0)) throw Error("mu0 must lie in [0, 1]");
  if (hp.repeats.empty() || std::find(hp.repeats.begin(), hp.repeats.end(), 0u) != hp.repeats.end())
    throw Error("repeats must be positive and nonempty");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json h{{"hidden", hp.hidden},
                   {"gamma", hp.gamma},
                   {"alpha_core", hp.alpha_core},
                   {"alpha_mix", hp.alpha_mix},
                   {"lr", hp.lr},
                   {"lr_pic", hp.lr_pic},
                   {"sigma", hp.sigma},
                   {"sigma_mix", hp.sigma_mix},
                   {"batch_size", hp.batch_size},
                   {"buffer_capacity", hp.buffer_capacity},
                   {"update_every", hp.update_every},
                   {"mix_update_every", hp.mix_update_every},
                   {"target_interval", hp.target_interval},
                   {"epsilon_start", hp.epsilon_start},
                   {"epsilon_floor", hp.epsilon_floor},
                   {"epsilon_decay", hp.epsilon_decay},
                   {"mu0", hp.mu0},
                   {"repeats", hp.repeats},
                   {"penalty", hp.penalty}};
  return {{"algo", algo},
          {"env", env},
          {"complexity", complexity},
          {"seeds", seeds},
          {"total_steps", total_steps},
          {"eval_interval", eval_interval},
          {"eval_episodes", eval_episodes},
          {"eval_mode", eval_mode == ActMode::greedy ? "greedy" : "sample"},
          {"eval_seed_offset", eval_seed_offset},
          {"output_dir", output_dir},
          {"checkpoint_buffer", checkpoint_buffer},
          {"hyperparameters", h}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error("config must be a JSON object");
  ExperimentConfig c;
  auto full = c.to_json();
  for (const auto& [key, value] : doc.items()) {
    if (!full.contains(key)) throw Error("unknown config key '" + key + "'");
    if (key == "hyperparameters") {
      if (!value.is_object()) throw Error("hyperparameters must be an object");
      for (const auto& [hk, hv] : value.items()) {
        if (!full["hyperparameters"].contains(hk)) throw Error("unknown hyperparameter '" + hk + "'");
        full["hyperparameters"][hk] = hv;
      }
    } else {
      full[key] = value;
    }
  }
  try {
    c.algo = full.at("algo").get<std::string>();
    c.env = full.at("env").get<std::string>();
    c.complexity = full.at("complexity").get<std::string>();
    c.seeds = full.at("seeds").get<std::vector<std::uint64_t>>();
    c.total_steps = full.at("total_steps").get<std::size_t>();
    c.eval_interval = full.at("eval_interval").get<std::size_t>();
    c.eval_episodes = full.at("eval_episodes").get<std::size_t>();
    const auto mode = full.at("eval_mode").get<std::string>();
    if (mode != "sample" && mode != "greedy") throw Error("eval_mode must be sample or greedy");
    c.eval_mode = mode == "greedy" ? ActMode::greedy : ActMode::sample;
    c.eval_seed_offset = full.at("eval_seed_offset").get<std::uint64_t>();
    c.output_dir = full.at("output_dir").get<std::string>();
    c.checkpoint_buffer = full.at("checkpoint_buffer").get<bool>();
    const auto& h = full.at("hyperparameters");
    auto& p = c.hp;
    p.hidden = h.at("hidden").get<std::vector<std::size_t>>();
    p.gamma = h.at("gamma").get<double>();
    p.alpha_core = h.at("alpha_core").get<double>();
    p.alpha_mix = h.at("alpha_mix").get<double>();
    p.lr = h.at("lr").get<double>();
    p.lr_pic = h.at("lr_pic").get<double>();
    p.sigma = h.at("sigma").get<double>();
    p.sigma_mix = h.at("sigma_mix").get<double>();
    p.batch_size = h.at("batch_size").get<std::size_t>();
    p.buffer_capacity = h.at("buffer_capacity").get<std::size_t>();
    p.update_every = h.at("update_every").get<std::size_t>();
    p.mix_update_every = h.at("mix_update_every").get<std::size_t>();
    p.target_interval = h.at("target_interval").get<std::size_t>();
    p.epsilon_start = h.at("epsilon_start").get<double>();
    p.epsilon_floor = h.at("epsilon_floor").get<double>();
    p.epsilon_decay = h.at("epsilon_decay").get<double>();
    p.mu0 = h.at("mu0").get<double>();
    p.repeats = h.at("repeats").get<std::vector<std::size_t>>();
    p.penalty = h.at("penalty").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

void ExperimentConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json patch;
  if (to_json().contains(key))
    patch[key] = value;
  else
    patch["hyperparameters"][key] = value;
  auto doc = to_json();
  doc.merge_patch(patch);
  *this = from_json(doc);
}

// ------------------------------------------------------------------ factory

std::unique_ptr<Env> make_training_env(const ExperimentConfig& config) {
  auto env = make_env(config.env, config.complexity);
  if (has_suffix(config.algo, "repeat"))
    return std::make_unique<RepetitionWrapper>(std::move(env), RepetitionActionSpace{0, config.hp.repeats},
                                               config.hp.gamma);
  if (has_suffix(config.algo, "ip")) return std::make_unique<PenaltyWrapper>(std::move(env), config.hp.penalty);
  return env;
}

std::unique_ptr<Agent> make_agent(const ExperimentConfig& config, const Env& env, std::uint64_t seed) {
  const auto base = base_algo(config.algo);
  const auto d = env.state_dim(), n = env.action_count();
  if (base == "dqn") return std::make_unique<DqnAgent>(d, n, config.hp.dqn(), seed);
  if (base == "sac") return std::make_unique<SacAgent>(d, n, config.hp.sac(), seed);
  if (base == "nsac") return std::make_unique<NsacAgent>(d, n, config.hp.nsac(), seed);
  throw Error("unknown algo '" + config.algo + "'");
}

// --------------------------------------------------------------- evaluation

double episode_oscillation(const std::vector<std::size_t>& actions) {
  return actions.size() < 2 ? 0.0 : oscillation_ratio(actions);
}

EvalResult evaluate(Agent& agent, Env& env, std::size_t n_episodes, std::uint64_t seed, ActMode mode) {
  if (n_episodes == 0) throw Error("evaluate needs at least one episode");
  env.set_training(false);
  std::vector<double> returns, ratios;
  double mu_sum = 0.0;
  std::size_t mu_count = 0;
  for (std::size_t i = 0; i < n_episodes; ++i) {
    auto rng = derive_rng(seed, kEvalActStream + i);
    auto state = env.reset(episode_seed(seed, kEnvStream, i));
    PrevAction prev;
    std::vector<std::size_t> executed;
    double ret = 0.0;
    for (;;) {
      if (prev) {
        if (auto mu = agent.inertia(state, prev)) {
          mu_sum += *mu;
          ++mu_count;
        }
      }
      const auto a = agent.act(state, prev, rng, mode);
      auto r = env.step(a);
      ret += r.raw_reward;
      executed.insert(executed.end(), r.executed_actions.begin(), r.executed_actions.end());
      state = std::move(r.state);
      prev = a;
      if (r.done()) break;
    }
    returns.push_back(ret);
    ratios.push_back(episode_oscillation(executed));
  }
  env.set_training(true);
  const double n = static_cast<double>(n_episodes);
  EvalResult out;
  out.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double var = 0.0;
  for (double r : returns) var += (r - out.mean_return) * (r - out.mean_return);
  out.std_return = std::sqrt(var / n);
  out.oscillation_ratio = std::accumulate(ratios.begin(), ratios.end(), 0.0) / n;
  if (mu_count) out.mean_mu = mu_sum / static_cast<double>(mu_count);
  return out;
}

// ---------------------------------------------------------------------- CSV

std::vector<double> record_values(const MetricsRecord& r) {
  return {r.mean_return, r.std_return, r.oscillation_ratio, r.mean_mu_pic, r.loss_core_q,
          r.loss_core_pi, r.loss_mix_q,  r.loss_pic,          r.epsilon};
}

MetricsRecord record_from_values(std::size_t env_step, const std::vector<double>& v) {
  if (v.size() != kCsvValueColumns) throw Error("metrics record needs " + std::to_string(kCsvValueColumns) + " values");
  return {env_step, v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.env_step;
    for (double v : record_values(r)) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw Error(path.string() + ": line 1: unexpected header");
  std::vector<MetricsRecord> rows;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const std::string where = path.string() + ": line " + std::to_string(lineno);
    const auto cells = split_csv(line);
    if (cells.size() != kCsvValueColumns + 1)
      throw Error(where + ": expected " + std::to_string(kCsvValueColumns + 1) + " fields, got " +
                  std::to_string(cells.size()));
    const double step = parse_double(cells[0], where);
    if (!(step >= 0.0) || step != std::floor(step)) throw Error(where + ": env_step must be a nonnegative integer");
    std::vector<double> values;
    for (std::size_t i = 1; i < cells.size(); ++i) values.push_back(parse_double(cells[i], where));
    rows.push_back(record_from_values(static_cast<std::size_t>(step), values));
  }
  return rows;
}

std::vector<AggregateRow> aggregate(const std::vector<std::vector<MetricsRecord>>& runs) {
  std::vector<AggregateRow> out;
  if (runs.empty()) return out;
  for (const auto& first : runs.front()) {
    std::vector<std::vector<double>> per_seed;
    for (const auto& run : runs) {
      auto it = std::find_if(run.begin(), run.end(), [&](const MetricsRecord& r) { return r.env_step == first.env_step; });
      if (it == run.end()) break;
      per_seed.push_back(record_values(*it));
    }
    if (per_seed.size() != runs.size()) continue;
    AggregateRow row;
    row.env_step = first.env_step;
    row.seeds = runs.size();
    for (std::size_t c = 0; c < kCsvValueColumns; ++c) {
      double sum = 0.0, sq = 0.0;
      std::size_t n = 0;
      for (const auto& v : per_seed)
        if (!std::isnan(v[c])) {
          sum += v[c];
          ++n;
        }
      const double mean = n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
      for (const auto& v : per_seed)
        if (!std::isnan(v[c])) sq += (v[c] - mean) * (v[c] - mean);
      row.mean.push_back(mean);
      row.std.push_back(n ? std::sqrt(sq / static_cast<double>(n)) : std::numeric_limits<double>::quiet_NaN());
    }
    out.push_back(std::move(row));
  }
  return out;
}

void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "env_step,seeds";
  for (const auto& name : value_column_names()) out << ',' << name << "_mean," << name << "_std";
  out << '\n';
  for (const auto& r : rows) {
    out << r.env_step << ',' << r.seeds;
    for (std::size_t c = 0; c < kCsvValueColumns; ++c) out << ',' << format_double(r.mean[c]) << ',' << format_double(r.std[c]);
    out << '\n';
  }
}

std::vector<AggregateRow> read_aggregate_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<AggregateRow> rows;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const std::string where = path.string() + ": line " + std::to_string(lineno);
    const auto cells = split_csv(line);
    if (cells.size() != 2 + 2 * kCsvValueColumns) throw Error(where + ": wrong number of fields");
    AggregateRow r;
    r.env_step = static_cast<std::size_t>(parse_double(cells[0], where));
    r.seeds = static_cast<std::size_t>(parse_double(cells[1], where));
    for (std::size_t c = 0; c < kCsvValueColumns; ++c) {
      r.mean.push_back(parse_double(cells[2 + 2 * c], where));
      r.std.push_back(parse_double(cells[3 + 2 * c], where));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// ----------------------------------------------------------------- training

namespace {

struct LossAccumulator {
  double sum[4] = {0, 0, 0, 0};
  std::size_t count[4] = {0, 0, 0, 0};

  void add(const LossRecord& r) {
    const double v[4] = {r.core_q, r.core_pi, r.mix_q, r.pic};
    for (int i = 0; i < 4; ++i)
      if (!std::isnan(v[i])) {
        sum[i] += v[i];
        ++count[i];
      }
  }
  double mean(int i) const { return count[i] ? sum[i] / static_cast<double>(count[i]) : MetricsRecord::kNan; }
  void fill(MetricsRecord& row) const {
    row.loss_core_q = mean(0);
    row.loss_core_pi = mean(1);
    row.loss_mix_q = mean(2);
    row.loss_pic = mean(3);
  }
};

}  // namespace

SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  std::size_t env_step = 0;
  try {
    config.validate();
    auto env = make_training_env(config);
    auto eval_env = env->clone();
    run.agent = make_agent(config, *env, seed);
    auto& agent = *run.agent;
    const bool is_dqn = base_algo(config.algo) == "dqn";
    const ActMode eval_mode = is_dqn ? ActMode::greedy : config.eval_mode;
    const std::uint64_t eval_seed = seed + config.eval_seed_offset;

    LossAccumulator losses;
    auto record = [&](std::size_t step) {
      const auto e = evaluate(agent, *eval_env, config.eval_episodes, eval_seed, eval_mode);
      MetricsRecord row;
      row.env_step = step;
      row.mean_return = e.mean_return;
      row.std_return = e.std_return;
      row.oscillation_ratio = e.oscillation_ratio;
      row.mean_mu_pic = e.mean_mu;
      losses.fill(row);
      row.epsilon = agent.epsilon();
      run.rows.push_back(row);
      losses = {};
    };

    record(0);
    auto act_rng = derive_rng(seed, kActStream);
    std::size_t episode = 0, decisions = 0, next_eval = config.eval_interval;
    auto state = env->reset(episode_seed(seed, kEnvStream, episode));
    PrevAction prev;
    while (env_step < config.total_steps) {
      const auto a = agent.act(state, prev, act_rng, ActMode::sample);
      auto r = env->step(a);
      agent.observe({state, prev, a, r.reward, r.state, r.terminal});
      env_step += r.env_steps;
      ++decisions;
      // Updates are scheduled per agent decision so that repetition agents
      // see the same update-to-sample ratio as the others.
      if (auto l = agent.train_step(decisions)) losses.add(*l);
      if (r.done()) {
        state = env->reset(episode_seed(seed, kEnvStream, ++episode));
        prev.reset();
      } else {
        state = std::move(r.state);
        prev = a;
      }
      while (env_step >= next_eval && next_eval <= config.total_steps) {
        record(next_eval);
        next_eval += config.eval_interval;
      }
    }
  } catch (const std::exception& e) {
    run.failure = e.what();
    MetricsRecord row;
    row.env_step = env_step;
    run.rows.push_back(row);
  }
  return run;
}

bool RunSummary::ok() const {
  return std::none_of(runs.begin(), runs.end(), [](const SeedRun& r) { return r.failure.has_value(); });
}

RunSummary run_training(const ExperimentConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  const fs::path dir = config.output_dir;
  if (!dir.empty()) {
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << config.to_json().dump(2) << '\n';
  }
  RunSummary summary;
  summary.runs.resize(config.seeds.size());
  const auto n = static_cast<std::ptrdiff_t>(config.seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& run = summary.runs[static_cast<std::size_t>(i)];
    run = run_seed(config, config.seeds[static_cast<std::size_t>(i)]);
    if (dir.empty()) continue;
    const auto tag = std::to_string(run.seed);
    write_metrics_csv(dir / ("seed_" + tag + ".csv"), run.rows);
    if (run.failure)
      std::ofstream(dir / ("seed_" + tag + ".error")) << *run.failure << '\n';
    else if (run.agent)
      std::ofstream(dir / ("checkpoint_seed_" + tag + ".json")) << run.agent->checkpoint(config.checkpoint_buffer).dump();
  }
  std::vector<std::vector<MetricsRecord>> rows;
  for (const auto& r : summary.runs) rows.push_back(r.rows);
  summary.aggregate = aggregate(rows);
  if (!dir.empty()) write_aggregate_csv(dir / "aggregate.csv", summary.aggregate);
  return summary;
}

SweepAxis SweepAxis::parse(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
    throw Error("sweep axis '" + text + "' is not key=v1,v2,...");
  SweepAxis axis;
  axis.key = text.substr(0, eq);
  std::string cur;
  int depth = 0;
  for (char c : text.substr(eq + 1)) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      axis.values.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  axis.values.push_back(cur);
  for (const auto& v : axis.values)
    if (v.empty()) throw Error("sweep axis '" + text + "' has an empty value");
  return axis;
}

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& base, const std::vector<SweepAxis>& axes) {
  std::vector<SweepPoint> points{{"", base}};
  for (const auto& axis : axes) {
    std::vector<SweepPoint> next;
    for (const auto& p : points)
      for (const auto& v : axis.values) {
        SweepPoint q = p;
        q.config.apply_override(axis.key + "=" + v);
        q.name += (q.name.empty() ? "" : ",") + axis.key + "=" + v;
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  for (auto& p : points) p.config.output_dir = (std::filesystem::path(base.output_dir) / p.name).string();
  return points;
}

std::unique_ptr<Agent> load_checkpoint(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  const auto env = make_training_env(config);
  auto agent = make_agent(config, *env, 0);
  if (doc.value("algo", "") != base_algo(config.algo))
    throw Error(path.string() + ": checkpoint is not a " + base_algo(config.algo) + " agent");
  agent->restore(doc);
  return agent;
}

}  // namespace pic
