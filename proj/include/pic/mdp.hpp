#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "pic/common.hpp"

namespace pic {

/// Finite MDP with a tabular transition tensor laid out [state][action][next].
/// An empty `terminal` vector means no terminal states. Terminal states must be
/// absorbing with zero reward.
struct MdpSpec {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> transition;
  std::vector<double> reward;
  std::vector<double> rho0;
  double gamma = 0.9;
  std::optional<std::size_t> horizon;
  std::vector<bool> terminal;

  std::span<const double> next_row(std::size_t s, std::size_t a) const {
    return {transition.data() + (s * n_actions + a) * n_states, n_states};
  }
  double r(std::size_t s, std::size_t a) const { return reward[s * n_actions + a]; }
  bool is_terminal(std::size_t s) const { return !terminal.empty() && terminal[s]; }
  bool has_terminals() const;
};

/// Throws pic::Error naming the first violated invariant.
MdpSpec validate_mdp(MdpSpec spec);

nlohmann::json mdp_to_json(const MdpSpec& spec);
MdpSpec mdp_from_json(const nlohmann::json& doc);

/// pi(a | s), rows of length n_actions.
struct TabularPolicy {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> probs;

  static TabularPolicy uniform(std::size_t n_states, std::size_t n_actions);
  std::span<const double> row(std::size_t s) const { return {probs.data() + s * n_actions, n_actions}; }
  std::span<double> row(std::size_t s) { return {probs.data() + s * n_actions, n_actions}; }
};

/// Slot index of a previous action in augmented tables; the null action
/// occupies slot n_actions.
inline std::size_t prev_slot(PrevAction prev, std::size_t n_actions) {
  return prev ? *prev : n_actions;
}

/// pi(a | s, a_prev) with n_actions + 1 previous-action slots per state.
struct AugmentedTabularPolicy {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> probs;

  static AugmentedTabularPolicy from_core(const TabularPolicy& core);
  std::size_t slots() const { return n_actions + 1; }
  std::span<const double> row(std::size_t s, std::size_t slot) const {
    return {probs.data() + (s * slots() + slot) * n_actions, n_actions};
  }
  std::span<double> row(std::size_t s, std::size_t slot) {
    return {probs.data() + (s * slots() + slot) * n_actions, n_actions};
  }
};

/// Throws if any row is not a distribution within 1e-12.
void validate_policy(const TabularPolicy& policy);
void validate_policy(const AugmentedTabularPolicy& policy);

struct TrajectoryStep {
  std::size_t state;
  std::size_t action;
  double reward;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  std::vector<std::size_t> actions() const;
  std::vector<double> rewards() const;
};

using TabularPolicyFn = std::function<std::size_t(std::size_t state, PrevAction prev, Rng& rng)>;

/// Samples s_0..s_T. The horizon (or `max_steps` when the MDP has none) bounds
/// the number of steps at horizon + 1. Entering a terminal state ends the episode.
Trajectory sample_trajectory(const MdpSpec& spec, const AugmentedTabularPolicy& policy, Rng& rng,
                             std::optional<std::size_t> max_steps = std::nullopt);
Trajectory sample_trajectory(const MdpSpec& spec, const TabularPolicyFn& policy, Rng& rng,
                             std::optional<std::size_t> max_steps = std::nullopt);

double discounted_return(std::span<const double> rewards, double gamma);
double discounted_return(const Trajectory& traj, double gamma);

/// Fraction of steps t in 1..T where a_t != a_{t-1}.
double oscillation_ratio(std::span<const std::size_t> actions);
double oscillation_ratio(const Trajectory& traj);

struct OscillationEstimate {
  double mean = 0.0;
  double std = 0.0;  // population std of the per-episode ratios
};

/// Mean of per-episode oscillation ratios, the (sum_i c_i / n_i) / n estimator.
/// Episode i draws from derive_rng(seed, i) so results do not depend on the
/// number of OpenMP threads.
OscillationEstimate oscillation_ratio_policy(const MdpSpec& spec, const AugmentedTabularPolicy& policy,
                                             std::size_t n_episodes, std::uint64_t seed,
                                             std::optional<std::size_t> max_steps = std::nullopt);

struct EvalOptions {
  double tol = 1e-10;
  std::size_t max_sweeps = 100000;
  /// Backward induction over the MDP's horizon instead of the discounted fixed point.
  bool finite_horizon = false;
  bool parallel = true;
};

/// Soft values of a state-only policy: q [s][a], v [s].
struct CoreValues {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> q;
  std::vector<double> v;
  double q_at(std::size_t s, std::size_t a) const { return q[s * n_actions + a]; }
};

/// Soft values over the augmented chain: q [s][slot][a], v [s][slot].
struct AugmentedValues {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> q;
  std::vector<double> v;
  std::size_t slots() const { return n_actions + 1; }
  double q_at(std::size_t s, std::size_t slot, std::size_t a) const {
    return q[(s * slots() + slot) * n_actions + a];
  }
  double v_at(std::size_t s, std::size_t slot) const { return v[s * slots() + slot]; }
};

CoreValues exact_core_evaluation(const MdpSpec& spec, const TabularPolicy& policy, double alpha,
                                 const EvalOptions& opts = {});
AugmentedValues exact_policy_evaluation(const MdpSpec& spec, const AugmentedTabularPolicy& policy,
                                        double alpha, const EvalOptions& opts = {});

/// J = sum_s rho0(s) V(s, null). alpha > 0 gives the entropy-regularized objective.
double exact_return(const MdpSpec& spec, const AugmentedTabularPolicy& policy, double alpha = 0.0,
                    const EvalOptions& opts = {});
double exact_core_return(const MdpSpec& spec, const TabularPolicy& policy, double alpha = 0.0,
                         const EvalOptions& opts = {});

/// Exact expected oscillation ratio over T+1 actions, computed with gamma = 1
/// by backward induction on the augmented chain. Uses the MDP horizon unless
/// `horizon` overrides it.
double exact_oscillation(const MdpSpec& spec, const AugmentedTabularPolicy& policy,
                         std::optional<std::size_t> horizon = std::nullopt);

struct GarnetParams {
  std::size_t n_states = 5;
  std::size_t n_actions = 3;
  std::size_t branching = 2;
  double reward_sparsity = 0.0;
  std::uint64_t seed = 0;
  double gamma = 0.9;
  std::optional<std::size_t> horizon;
};

MdpSpec garnet(const GarnetParams& params);
MdpSpec garnet(std::size_t n_states, std::size_t n_actions, std::size_t branching, double reward_sparsity,
               std::uint64_t seed);

}  // namespace pic
