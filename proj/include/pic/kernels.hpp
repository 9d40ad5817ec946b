#pragma once

// Data-parallel inner loops of tabular evaluation. Every kernel has a serial
// reference and an OpenMP variant with identical per-row arithmetic, so the
// two agree bitwise for any thread count.

#include <cmath>
#include <cstddef>
#include <span>

#include "pic/mdp.hpp"

namespace pic::kernels {

/// Layout of the value vector read by a Bellman backup.
struct NextValueLayout {
  std::size_t stride = 1;          // entries per next state
  bool indexed_by_action = false;  // read v[s' * stride + a] instead of v[s' * stride]
};

/// w[s][a] = reward_scale * r(s,a) + gamma * sum_s' P(s'|s,a) v_next(s', .)
void backup_serial(const MdpSpec& spec, std::span<const double> v_next, NextValueLayout layout,
                   double gamma, double reward_scale, std::span<double> w);
void backup_omp(const MdpSpec& spec, std::span<const double> v_next, NextValueLayout layout,
                double gamma, double reward_scale, std::span<double> w);

/// Per-row policy expectation over `slots` rows per state:
///   v[s][k] = sum_a pi(a|s,k) (w[s][a] - alpha log pi(a|s,k) + switch_cost(k, a))
/// where switch_cost is 1 when `count_switches`, k < n_actions and a != k.
struct ExpectationTerms {
  double alpha = 0.0;
  bool count_switches = false;
};

void expectation_serial(std::span<const double> policy, std::span<const double> w, std::size_t n_states,
                        std::size_t n_actions, std::size_t slots, ExpectationTerms terms, std::span<double> v);
void expectation_omp(std::span<const double> policy, std::span<const double> w, std::size_t n_states,
                     std::size_t n_actions, std::size_t slots, ExpectationTerms terms, std::span<double> v);

/// -p log p with 0 log 0 = 0.
inline double entropy_term(double p) { return p > 0.0 ? -p * std::log(p) : 0.0; }

}  // namespace pic::kernels
