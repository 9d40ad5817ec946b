#include "pic/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pic/kernels.hpp"

namespace pic {
namespace {

constexpr double kSumTol = 1e-12;

std::string describe(const char* what, double deviation) {
  std::ostringstream os;
  os.precision(17);
  os << what << " (deviation " << deviation << ")";
  return os.str();
}

double sum(std::span<const double> xs) { return std::accumulate(xs.begin(), xs.end(), 0.0); }

void check_distribution(std::span<const double> row, const std::string& name) {
  for (double p : row)
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error(name + " has a negative or non-finite entry");
  const double dev = std::abs(sum(row) - 1.0);
  if (dev > kSumTol) throw Error(describe((name + " does not sum to 1").c_str(), dev));
}

std::size_t sample_initial_state(const MdpSpec& spec, Rng& rng) { return sample_categorical(spec.rho0, rng); }

std::size_t step_limit(const MdpSpec& spec, std::optional<std::size_t> max_steps) {
  if (max_steps) return *max_steps;
  if (spec.horizon) return *spec.horizon + 1;
  throw Error("sample_trajectory: MDP has no horizon and no max_steps was given");
}

// Below this many table entries the OpenMP fork costs more than the sweep.
constexpr std::size_t kParallelThreshold = 4096;

void backup(const MdpSpec& spec, std::span<const double> v_next, kernels::NextValueLayout layout, double gamma,
            double reward_scale, std::span<double> w, bool parallel) {
  if (parallel && w.size() * spec.n_states >= kParallelThreshold)
    kernels::backup_omp(spec, v_next, layout, gamma, reward_scale, w);
  else
    kernels::backup_serial(spec, v_next, layout, gamma, reward_scale, w);
}

void expectation(std::span<const double> policy, std::span<const double> w, std::size_t n_states,
                 std::size_t n_actions, std::size_t slots, kernels::ExpectationTerms terms, std::span<double> v,
                 bool parallel) {
  if (parallel && v.size() * n_actions >= kParallelThreshold)
    kernels::expectation_omp(policy, w, n_states, n_actions, slots, terms, v);
  else
    kernels::expectation_serial(policy, w, n_states, n_actions, slots, terms, v);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Shared evaluation driver. `slots` = 1 for state-only policies, n_actions + 1
// for augmented ones. Returns w (the q table over [s][a]) and v.
struct RawValues {
  std::vector<double> w;
  std::vector<double> v;
};

RawValues evaluate(const MdpSpec& spec, std::span<const double> policy, std::size_t slots, double alpha,
                   const EvalOptions& opts) {
  if (alpha < 0.0) throw Error("policy evaluation: alpha must be nonnegative");
  const std::size_t S = spec.n_states, A = spec.n_actions;
  const kernels::NextValueLayout layout{slots, slots > 1};
  const kernels::ExpectationTerms terms{alpha, false};
  RawValues out{std::vector<double>(S * A, 0.0), std::vector<double>(S * slots, 0.0)};
  std::vector<double> v_next(S * slots, 0.0);

  if (opts.finite_horizon) {
    if (!spec.horizon) throw Error("finite-horizon evaluation requires a horizon");
    for (std::size_t t = *spec.horizon + 1; t-- > 0;) {
      backup(spec, v_next, layout, spec.gamma, 1.0, out.w, opts.parallel);
      expectation(policy, out.w, S, A, slots, terms, out.v, opts.parallel);
      std::swap(out.v, v_next);
    }
    std::swap(out.v, v_next);
    return out;
  }

  if (!(opts.tol > 0.0)) throw Error("policy evaluation: tol must be positive");
  if (!(spec.gamma < 1.0)) throw Error("discounted evaluation requires gamma < 1");
  // Sup-norm residual r bounds the distance to the fixed point by gamma r / (1 - gamma).
  const double threshold = opts.tol * (1.0 - spec.gamma);
  double residual = 0.0;
  for (std::size_t sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    backup(spec, out.v, layout, spec.gamma, 1.0, out.w, opts.parallel);
    expectation(policy, out.w, S, A, slots, terms, v_next, opts.parallel);
    residual = max_abs_diff(v_next, out.v);
    std::swap(out.v, v_next);
    if (residual <= threshold || spec.gamma == 0.0) {
      backup(spec, out.v, layout, spec.gamma, 1.0, out.w, opts.parallel);
      return out;
    }
  }
  std::ostringstream os;
  os.precision(6);
  os << "policy evaluation did not converge after " << opts.max_sweeps << " sweeps (residual " << residual << ")";
  throw Error(os.str());
}

}  // namespace

bool MdpSpec::has_terminals() const { return std::find(terminal.begin(), terminal.end(), true) != terminal.end(); }

MdpSpec validate_mdp(MdpSpec spec) {
  const std::size_t S = spec.n_states, A = spec.n_actions;
  if (S == 0 || A == 0) throw Error("MDP must have at least one state and one action");
  if (spec.transition.size() != S * A * S) throw Error("transition tensor has the wrong size");
  if (spec.reward.size() != S * A) throw Error("reward table has the wrong size");
  if (spec.rho0.size() != S) throw Error("rho0 has the wrong size");
  if (!spec.terminal.empty() && spec.terminal.size() != S) throw Error("terminal flags have the wrong size");
  if (!(spec.gamma >= 0.0 && spec.gamma < 1.0)) throw Error("gamma must lie in [0, 1)");
  if (spec.horizon && *spec.horizon == 0) throw Error("horizon must be positive");
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      std::ostringstream name;
      name << "transition row (s=" << s << ", a=" << a << ")";
      check_distribution(spec.next_row(s, a), name.str());
      if (!std::isfinite(spec.r(s, a))) throw Error("reward (s=" + std::to_string(s) + ") is not finite");
      if (spec.is_terminal(s)) {
        if (spec.next_row(s, a)[s] != 1.0) throw Error("terminal state " + std::to_string(s) + " is not absorbing");
        if (spec.r(s, a) != 0.0) throw Error("terminal state " + std::to_string(s) + " has nonzero reward");
      }
    }
  }
  check_distribution(spec.rho0, "rho0");
  return spec;
}

nlohmann::json mdp_to_json(const MdpSpec& spec) {
  nlohmann::json t = nlohmann::json::array();
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    nlohmann::json per_action = nlohmann::json::array();
    for (std::size_t a = 0; a < spec.n_actions; ++a) {
      const auto row = spec.next_row(s, a);
      per_action.push_back(std::vector<double>(row.begin(), row.end()));
    }
    t.push_back(std::move(per_action));
  }
  nlohmann::json r = nlohmann::json::array();
  for (std::size_t s = 0; s < spec.n_states; ++s)
    r.push_back(std::vector<double>(spec.reward.begin() + s * spec.n_actions,
                                    spec.reward.begin() + (s + 1) * spec.n_actions));
  nlohmann::json doc = {{"n_states", spec.n_states}, {"n_actions", spec.n_actions}, {"transition", t},
                        {"reward", r},               {"rho0", spec.rho0},           {"gamma", spec.gamma}};
  doc["horizon"] = spec.horizon ? nlohmann::json(*spec.horizon) : nlohmann::json(nullptr);
  if (spec.has_terminals()) {
    std::vector<std::size_t> idx;
    for (std::size_t s = 0; s < spec.n_states; ++s)
      if (spec.terminal[s]) idx.push_back(s);
    doc["terminal"] = idx;
  }
  return doc;
}

MdpSpec mdp_from_json(const nlohmann::json& doc) {
  MdpSpec spec;
  try {
    spec.n_states = doc.at("n_states").get<std::size_t>();
    spec.n_actions = doc.at("n_actions").get<std::size_t>();
    const auto& t = doc.at("transition");
    if (t.size() != spec.n_states) throw Error("transition: expected one entry per state");
    for (const auto& per_action : t) {
      if (per_action.size() != spec.n_actions) throw Error("transition: expected one row per action");
      for (const auto& row : per_action) {
        if (row.size() != spec.n_states) throw Error("transition: row length must equal n_states");
        for (const auto& p : row) spec.transition.push_back(p.get<double>());
      }
    }
    const auto& r = doc.at("reward");
    if (r.size() != spec.n_states) throw Error("reward: expected one row per state");
    for (const auto& row : r) {
      if (row.size() != spec.n_actions) throw Error("reward: row length must equal n_actions");
      for (const auto& x : row) spec.reward.push_back(x.get<double>());
    }
    spec.rho0 = doc.at("rho0").get<std::vector<double>>();
    spec.gamma = doc.at("gamma").get<double>();
    if (doc.contains("horizon") && !doc["horizon"].is_null()) spec.horizon = doc["horizon"].get<std::size_t>();
    if (doc.contains("terminal")) {
      spec.terminal.assign(spec.n_states, false);
      for (const auto& s : doc["terminal"]) spec.terminal.at(s.get<std::size_t>()) = true;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed MDP document: ") + e.what());
  }
  return validate_mdp(std::move(spec));
}

TabularPolicy TabularPolicy::uniform(std::size_t n_states, std::size_t n_actions) {
  return {n_states, n_actions, std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions))};
}

AugmentedTabularPolicy AugmentedTabularPolicy::from_core(const TabularPolicy& core) {
  AugmentedTabularPolicy out{core.n_states, core.n_actions, {}};
  out.probs.reserve(core.n_states * out.slots() * core.n_actions);
  for (std::size_t s = 0; s < core.n_states; ++s)
    for (std::size_t k = 0; k < out.slots(); ++k) {
      const auto row = core.row(s);
      out.probs.insert(out.probs.end(), row.begin(), row.end());
    }
  return out;
}

void validate_policy(const TabularPolicy& policy) {
  if (policy.probs.size() != policy.n_states * policy.n_actions) throw Error("policy table has the wrong size");
  for (std::size_t s = 0; s < policy.n_states; ++s)
    check_distribution(policy.row(s), "policy row (s=" + std::to_string(s) + ")");
}

void validate_policy(const AugmentedTabularPolicy& policy) {
  if (policy.probs.size() != policy.n_states * policy.slots() * policy.n_actions)
    throw Error("augmented policy table has the wrong size");
  for (std::size_t s = 0; s < policy.n_states; ++s)
    for (std::size_t k = 0; k < policy.slots(); ++k)
      check_distribution(policy.row(s, k),
                         "augmented policy row (s=" + std::to_string(s) + ", prev=" + std::to_string(k) + ")");
}

std::vector<std::size_t> Trajectory::actions() const {
  std::vector<std::size_t> out;
  out.reserve(steps.size());
  for (const auto& st : steps) out.push_back(st.action);
  return out;
}

std::vector<double> Trajectory::rewards() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& st : steps) out.push_back(st.reward);
  return out;
}

Trajectory sample_trajectory(const MdpSpec& spec, const TabularPolicyFn& policy, Rng& rng,
                             std::optional<std::size_t> max_steps) {
  const std::size_t limit = step_limit(spec, max_steps);
  Trajectory traj;
  traj.steps.reserve(limit);
  std::size_t s = sample_initial_state(spec, rng);
  PrevAction prev;
  for (std::size_t t = 0; t < limit; ++t) {
    if (spec.is_terminal(s)) break;
    const std::size_t a = policy(s, prev, rng);
    if (a >= spec.n_actions) throw Error("policy returned an out-of-range action");
    traj.steps.push_back({s, a, spec.r(s, a)});
    s = sample_categorical(spec.next_row(s, a), rng);
    prev = a;
  }
  return traj;
}

Trajectory sample_trajectory(const MdpSpec& spec, const AugmentedTabularPolicy& policy, Rng& rng,
                             std::optional<std::size_t> max_steps) {
  if (policy.n_states != spec.n_states || policy.n_actions != spec.n_actions)
    throw Error("sample_trajectory: policy shape does not match the MDP");
  return sample_trajectory(
      spec,
      [&policy](std::size_t s, PrevAction prev, Rng& r) {
        return sample_categorical(policy.row(s, prev_slot(prev, policy.n_actions)), r);
      },
      rng, max_steps);
}

double discounted_return(std::span<const double> rewards, double gamma) {
  double g = 0.0, discount = 1.0;
  for (double r : rewards) {
    g += discount * r;
    discount *= gamma;
  }
  return g;
}

double discounted_return(const Trajectory& traj, double gamma) { return discounted_return(traj.rewards(), gamma); }

double oscillation_ratio(std::span<const std::size_t> actions) {
  if (actions.size() < 2) throw Error("oscillation ratio is undefined for fewer than two actions");
  std::size_t switches = 0;
  for (std::size_t t = 1; t < actions.size(); ++t)
    if (actions[t] != actions[t - 1]) ++switches;
  return static_cast<double>(switches) / static_cast<double>(actions.size() - 1);
}

double oscillation_ratio(const Trajectory& traj) { return oscillation_ratio(traj.actions()); }

OscillationEstimate oscillation_ratio_policy(const MdpSpec& spec, const AugmentedTabularPolicy& policy,
                                             std::size_t n_episodes, std::uint64_t seed,
                                             std::optional<std::size_t> max_steps) {
  if (n_episodes == 0) throw Error("oscillation_ratio_policy: n_episodes must be at least 1");
  std::vector<double> ratios(n_episodes);
  const auto n = static_cast<std::ptrdiff_t>(n_episodes);
  bool failed = false;
  std::string message;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      Rng rng = derive_rng(seed, static_cast<std::uint64_t>(i));
      ratios[static_cast<std::size_t>(i)] = oscillation_ratio(sample_trajectory(spec, policy, rng, max_steps));
    } catch (const std::exception& e) {
#pragma omp critical
      {
        failed = true;
        message = e.what();
      }
    }
  }
  if (failed) throw Error(message);
  OscillationEstimate est;
  est.mean = sum(ratios) / static_cast<double>(n_episodes);
  double ss = 0.0;
  for (double x : ratios) ss += (x - est.mean) * (x - est.mean);
  est.std = std::sqrt(ss / static_cast<double>(n_episodes));
  return est;
}

CoreValues exact_core_evaluation(const MdpSpec& spec, const TabularPolicy& policy, double alpha,
                                 const EvalOptions& opts) {
  if (policy.n_states != spec.n_states || policy.n_actions != spec.n_actions)
    throw Error("policy shape does not match the MDP");
  auto raw = evaluate(spec, policy.probs, 1, alpha, opts);
  return {spec.n_states, spec.n_actions, std::move(raw.w), std::move(raw.v)};
}

AugmentedValues exact_policy_evaluation(const MdpSpec& spec, const AugmentedTabularPolicy& policy, double alpha,
                                        const EvalOptions& opts) {
  if (policy.n_states != spec.n_states || policy.n_actions != spec.n_actions)
    throw Error("policy shape does not match the MDP");
  auto raw = evaluate(spec, policy.probs, spec.n_actions + 1, alpha, opts);
  AugmentedValues out{spec.n_states, spec.n_actions, {}, std::move(raw.v)};
  // The augmented Q does not depend on the previous action: r(s,a) + gamma E V(s', a).
  out.q.reserve(spec.n_states * out.slots() * spec.n_actions);
  for (std::size_t s = 0; s < spec.n_states; ++s)
    for (std::size_t k = 0; k < out.slots(); ++k)
      out.q.insert(out.q.end(), raw.w.begin() + s * spec.n_actions, raw.w.begin() + (s + 1) * spec.n_actions);
  return out;
}

double exact_return(const MdpSpec& spec, const AugmentedTabularPolicy& policy, double alpha,
                    const EvalOptions& opts) {
  const auto values = exact_policy_evaluation(spec, policy, alpha, opts);
  double j = 0.0;
  for (std::size_t s = 0; s < spec.n_states; ++s) j += spec.rho0[s] * values.v_at(s, spec.n_actions);
  return j;
}

double exact_core_return(const MdpSpec& spec, const TabularPolicy& policy, double alpha, const EvalOptions& opts) {
  const auto values = exact_core_evaluation(spec, policy, alpha, opts);
  double j = 0.0;
  for (std::size_t s = 0; s < spec.n_states; ++s) j += spec.rho0[s] * values.v[s];
  return j;
}

double exact_oscillation(const MdpSpec& spec, const AugmentedTabularPolicy& policy,
                         std::optional<std::size_t> horizon) {
  const auto T = horizon ? horizon : spec.horizon;
  if (!T) throw Error("exact_oscillation requires a finite horizon");
  if (*T == 0) throw Error("exact_oscillation requires a horizon of at least 1");
  if (spec.has_terminals()) throw Error("exact_oscillation requires an MDP without terminal states");
  const std::size_t S = spec.n_states, A = spec.n_actions, slots = A + 1;
  // O_t(s, prev): expected number of switches from step t to T.
  std::vector<double> next(S * slots, 0.0), cur(S * slots, 0.0), w(S * A, 0.0);
  const kernels::NextValueLayout layout{slots, true};
  for (std::size_t t = *T + 1; t-- > 0;) {
    kernels::backup_serial(spec, next, layout, 1.0, 0.0, w);
    kernels::expectation_serial(policy.probs, w, S, A, slots, {0.0, true}, cur);
    std::swap(cur, next);
  }
  double switches = 0.0;
  for (std::size_t s = 0; s < S; ++s) switches += spec.rho0[s] * next[s * slots + A];
  return switches / static_cast<double>(*T);
}

MdpSpec garnet(const GarnetParams& p) {
  if (p.n_states == 0 || p.n_actions == 0) throw Error("garnet: need at least one state and action");
  if (p.branching < 1 || p.branching > p.n_states) throw Error("garnet: branching must lie in [1, n_states]");
  if (!(p.reward_sparsity >= 0.0 && p.reward_sparsity <= 1.0)) throw Error("garnet: sparsity must lie in [0, 1]");
  Rng rng = derive_rng(p.seed, 0x6a7e7);
  MdpSpec spec;
  spec.n_states = p.n_states;
  spec.n_actions = p.n_actions;
  spec.gamma = p.gamma;
  spec.horizon = p.horizon;
  spec.transition.assign(p.n_states * p.n_actions * p.n_states, 0.0);
  spec.reward.assign(p.n_states * p.n_actions, 0.0);
  std::vector<std::size_t> idx(p.n_states);
  std::exponential_distribution<double> expo(1.0);
  for (std::size_t s = 0; s < p.n_states; ++s) {
    for (std::size_t a = 0; a < p.n_actions; ++a) {
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t i = 0; i < p.branching; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, p.n_states - 1);
        std::swap(idx[i], idx[pick(rng)]);
      }
      // Dirichlet(1, ..., 1) via normalized exponentials.
      std::vector<double> weights(p.branching);
      for (auto& x : weights) x = std::max(expo(rng), 1e-300);
      const double total = sum(weights);
      double* row = spec.transition.data() + (s * p.n_actions + a) * p.n_states;
      for (std::size_t i = 0; i < p.branching; ++i) row[idx[i]] = weights[i] / total;
      const double r = uniform01(rng);
      const bool zero = uniform01(rng) < p.reward_sparsity;
      spec.reward[s * p.n_actions + a] = zero ? 0.0 : r;
    }
  }
  spec.rho0.assign(p.n_states, 1.0 / static_cast<double>(p.n_states));
  return validate_mdp(std::move(spec));
}

MdpSpec garnet(std::size_t n_states, std::size_t n_actions, std::size_t branching, double reward_sparsity,
               std::uint64_t seed) {
  return garnet(GarnetParams{n_states, n_actions, branching, reward_sparsity, seed, 0.9, std::nullopt});
}

}  // namespace pic
