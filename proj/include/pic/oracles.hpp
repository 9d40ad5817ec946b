#pragma once

// Independent reference computations used by the test suites and the
// `verify` command. None of these share code paths with the routines they
// check.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "pic/mdp.hpp"

namespace pic::oracles {

/// Solves the soft Bellman equations for Q over the augmented chain as one
/// dense linear system in the S*A unknowns Q(s, a):
///   Q(s,a) = r(s,a) + gamma sum_s' P(s'|s,a) sum_b pi(b|s',a) (Q(s',b) - alpha log pi(b|s',a)).
std::vector<double> augmented_q_linear_solve(const MdpSpec& spec, const AugmentedTabularPolicy& policy,
                                             double alpha);

/// Same for a state-only policy.
std::vector<double> core_q_linear_solve(const MdpSpec& spec, const TabularPolicy& policy, double alpha);

/// Soft value iteration V(s) = alpha log sum_a exp(Q(s,a) / alpha) to a
/// sup-norm residual below `tol`.
std::vector<double> soft_value_iteration(const MdpSpec& spec, double alpha, double tol = 1e-13);

/// Expected state visitation counts over steps 0..T-1 under a policy, by
/// propagating the state distribution forward on the augmented chain.
std::vector<double> expected_visits(const MdpSpec& spec, const AugmentedTabularPolicy& policy, std::size_t steps);

/// Central differences of a scalar function with respect to every entry of
/// `params`, restoring each entry afterwards.
std::vector<double> central_difference(const std::function<double()>& f, std::span<double> params, double h);

/// |a - n| / max(|a|, |n|, scale_floor), the largest over all entries.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double scale_floor = 1e-6);

}  // namespace pic::oracles
