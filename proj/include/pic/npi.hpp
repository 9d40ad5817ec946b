#pragma once

// Exact tabular soft policy iteration, nested policy iteration over a policy
// core and an inertia weight table, and the improvement-gate bookkeeping that
// keeps the nested updates monotone.

#include <cstddef>
#include <optional>
#include <vector>

#include "pic/mdp.hpp"

namespace pic {

/// mu(s, prev) for every state and previous-action slot. The null slot is
/// unused (the mixed policy equals the core there) and is kept at zero.
struct MuTable {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> mu;

  static MuTable zeros(std::size_t n_states, std::size_t n_actions);
  std::size_t slots() const { return n_actions + 1; }
  double at(std::size_t s, std::size_t slot) const { return mu[s * slots() + slot]; }
  double& at(std::size_t s, std::size_t slot) { return mu[s * slots() + slot]; }
  double max() const;
};

AugmentedTabularPolicy make_mixed_policy(const TabularPolicy& core, const MuTable& mu);

/// Grid {0, step, 2 step, ..., 1}.
std::vector<double> make_mu_grid(double step);

/// Softmax of q(s, .) / alpha per state; alpha = 0 gives the greedy policy
/// with ties resolved toward the lowest action index.
TabularPolicy soft_policy_improvement(const CoreValues& q, double alpha);

struct SpiConfig {
  std::size_t max_iters = 1000;
  /// Stop when no policy entry moves by more than this.
  double policy_tol = 1e-8;
  EvalOptions eval;
};

struct SpiResult {
  TabularPolicy policy;
  CoreValues values;
  std::vector<double> j_history;  // entropy-regularized objective of every evaluated policy
  std::size_t iterations = 0;
};

SpiResult soft_policy_iteration(const MdpSpec& spec, double alpha, const SpiConfig& config = {},
                                std::optional<TabularPolicy> initial = std::nullopt);

/// Per (s, prev) grid search for the mu maximizing
///   E_{a ~ mixed}[q_aug(s, prev, a)] + alpha_mix H(mixed),
/// ties toward the smaller mu. `cap` restricts the grid to mu <= cap. When
/// `incumbent` is given its value is always a candidate, which makes the step a
/// soft policy improvement.
MuTable outer_mu_improvement(const MdpSpec& spec, const TabularPolicy& core, const AugmentedValues& q_aug,
                             double alpha_mix, const std::vector<double>& mu_grid,
                             std::optional<double> cap = std::nullopt, const MuTable* incumbent = nullptr);

struct Lemma1Params {
  double n_factor = 8.0;
  double c0 = 1.0;
  double series_sum = 1.0;
};

/// sum_{t=0}^{T} t gamma^t, or gamma / (1 - gamma)^2 when the horizon is unbounded.
double lemma1_series(double gamma, std::optional<std::size_t> horizon);

/// Upper bound on |advantage| over the new core and the old mixed policy,
/// scaled by `safety`.
double estimate_c0(const CoreValues& core_new, const AugmentedValues& mixed_old, double safety = 1.1);

struct GateResult {
  bool passed = false;
  double bound = 0.0;            // largest admissible mu
  double min_improvement = 0.0;  // min over (s, a) of q_core_new - q_core_old
};

GateResult lemma1_gate(const CoreValues& q_core_old, const CoreValues& q_core_new, const MuTable& mu,
                       const Lemma1Params& params);

struct NpiConfig {
  double alpha_core = 0.1;
  double alpha_mix = 0.01;
  std::size_t outer_iters = 10;
  std::size_t inner_iters = 1;
  std::vector<double> mu_grid = make_mu_grid(0.05);
  double eval_tol = 1e-10;
  bool enforce_gate = true;
  bool freeze_mu_zero = false;
  double n_factor = 8.0;
  double c0_safety = 1.1;
  /// Used for the oscillation history when the MDP has no horizon.
  std::size_t oscillation_horizon = 100;
};

struct GateRecord {
  GateResult gate;
  bool inner_accepted = false;
  /// min over (s, prev, a) of (Q_mid - Q_old) - (1 - 4/N) min_improvement;
  /// only meaningful when the gate passed.
  double lemma_margin = 0.0;
};

struct NpiResult {
  TabularPolicy core;
  MuTable mu;
  std::vector<double> j_history;   // initial policy, then after every outer iteration
  std::vector<double> xi_history;  // exact oscillation ratio, same indexing
  std::vector<GateRecord> gates;
};

NpiResult nested_policy_iteration(const MdpSpec& spec, const NpiConfig& config);

struct Theorem1Report {
  MuTable mu;
  double xi_core = 0.0;
  double xi_best = 0.0;
  double j_core = 0.0;
  double j_best = 0.0;
  bool strict_reduction = false;
};

/// Greedy coordinate search over per-(s, prev) grid assignments for the
/// smallest oscillation ratio whose return is within `j_tol` of the core's.
/// Oscillation uses gamma = 1 over `horizon` (or the MDP's); return uses the
/// MDP's discount. The all-zero assignment is always feasible.
Theorem1Report theorem1_oracle(const MdpSpec& spec, const TabularPolicy& core, const std::vector<double>& mu_grid,
                               std::optional<std::size_t> horizon = std::nullopt, double j_tol = 1e-9,
                               std::size_t max_sweeps = 4);

}  // namespace pic
