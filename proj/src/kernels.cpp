#include "pic/kernels.hpp"

#include <cmath>

namespace pic::kernels {
namespace {

inline double backup_entry(const MdpSpec& spec, std::span<const double> v_next, NextValueLayout layout,
                           double gamma, double reward_scale, std::size_t s, std::size_t a) {
  const auto row = spec.next_row(s, a);
  const std::size_t offset = layout.indexed_by_action ? a : 0;
  double expected = 0.0;
  for (std::size_t s2 = 0; s2 < spec.n_states; ++s2) {
    if (row[s2] == 0.0) continue;
    expected += row[s2] * v_next[s2 * layout.stride + offset];
  }
  const double reward = reward_scale == 0.0 ? 0.0 : reward_scale * spec.r(s, a);
  return reward + gamma * expected;
}

inline double expectation_row(std::span<const double> policy, std::span<const double> w, std::size_t n_actions,
                              std::size_t slots, ExpectationTerms terms, std::size_t s, std::size_t k) {
  const double* pi = policy.data() + (s * slots + k) * n_actions;
  const double* ws = w.data() + s * n_actions;
  double acc = 0.0;
  for (std::size_t a = 0; a < n_actions; ++a) {
    const double p = pi[a];
    if (p <= 0.0) continue;
    double term = p * ws[a];
    if (terms.alpha != 0.0) term += terms.alpha * entropy_term(p);
    if (terms.count_switches && k < n_actions && a != k) term += p;
    acc += term;
  }
  return acc;
}

}  // namespace

void backup_serial(const MdpSpec& spec, std::span<const double> v_next, NextValueLayout layout, double gamma,
                   double reward_scale, std::span<double> w) {
  for (std::size_t s = 0; s < spec.n_states; ++s)
    for (std::size_t a = 0; a < spec.n_actions; ++a)
      w[s * spec.n_actions + a] = backup_entry(spec, v_next, layout, gamma, reward_scale, s, a);
}

void backup_omp(const MdpSpec& spec, std::span<const double> v_next, NextValueLayout layout, double gamma,
                double reward_scale, std::span<double> w) {
  const auto n = static_cast<std::ptrdiff_t>(spec.n_states * spec.n_actions);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i) / spec.n_actions;
    const auto a = static_cast<std::size_t>(i) % spec.n_actions;
    w[static_cast<std::size_t>(i)] = backup_entry(spec, v_next, layout, gamma, reward_scale, s, a);
  }
}

void expectation_serial(std::span<const double> policy, std::span<const double> w, std::size_t n_states,
                        std::size_t n_actions, std::size_t slots, ExpectationTerms terms, std::span<double> v) {
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t k = 0; k < slots; ++k)
      v[s * slots + k] = expectation_row(policy, w, n_actions, slots, terms, s, k);
}

void expectation_omp(std::span<const double> policy, std::span<const double> w, std::size_t n_states,
                     std::size_t n_actions, std::size_t slots, ExpectationTerms terms, std::span<double> v) {
  const auto n = static_cast<std::ptrdiff_t>(n_states * slots);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i) / slots;
    const auto k = static_cast<std::size_t>(i) % slots;
    v[static_cast<std::size_t>(i)] = expectation_row(policy, w, n_actions, slots, terms, s, k);
  }
}

}  // namespace pic::kernels
