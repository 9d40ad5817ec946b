#include "pic/oracles.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace pic::oracles {
namespace {

double neg_alpha_log(double alpha, double p) { return alpha == 0.0 || p <= 0.0 ? 0.0 : -alpha * std::log(p); }

// Shared solver: `row(s2, a)` gives the policy row used at next state s2 when
// the action just taken was a.
template <typename RowFn>
std::vector<double> q_linear_solve(const MdpSpec& spec, double alpha, RowFn row) {
  const std::size_t S = spec.n_states, A = spec.n_actions, n = S * A;
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      const auto i = static_cast<Eigen::Index>(s * A + a);
      double b = spec.r(s, a);
      const auto next = spec.next_row(s, a);
      for (std::size_t s2 = 0; s2 < S; ++s2) {
        if (next[s2] == 0.0) continue;
        const auto pi = row(s2, a);
        for (std::size_t b2 = 0; b2 < A; ++b2) {
          if (pi[b2] == 0.0) continue;
          lhs(i, static_cast<Eigen::Index>(s2 * A + b2)) -= spec.gamma * next[s2] * pi[b2];
          b += spec.gamma * next[s2] * pi[b2] * neg_alpha_log(alpha, pi[b2]);
        }
      }
      rhs(i) = b;
    }
  }
  const Eigen::VectorXd q = lhs.partialPivLu().solve(rhs);
  return {q.data(), q.data() + q.size()};
}

}  // namespace

std::vector<double> augmented_q_linear_solve(const MdpSpec& spec, const AugmentedTabularPolicy& policy,
                                             double alpha) {
  return q_linear_solve(spec, alpha, [&](std::size_t s2, std::size_t a) { return policy.row(s2, a); });
}

std::vector<double> core_q_linear_solve(const MdpSpec& spec, const TabularPolicy& policy, double alpha) {
  return q_linear_solve(spec, alpha, [&](std::size_t s2, std::size_t) { return policy.row(s2); });
}

std::vector<double> soft_value_iteration(const MdpSpec& spec, double alpha, double tol) {
  const std::size_t S = spec.n_states, A = spec.n_actions;
  std::vector<double> v(S, 0.0), q(A);
  for (std::size_t iter = 0; iter < 10'000'000; ++iter) {
    double residual = 0.0;
    std::vector<double> next(S);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        double e = 0.0;
        const auto row = spec.next_row(s, a);
        for (std::size_t s2 = 0; s2 < S; ++s2) e += row[s2] * v[s2];
        q[a] = spec.r(s, a) + spec.gamma * e;
      }
      const double top = *std::max_element(q.begin(), q.end());
      double z = 0.0;
      for (double x : q) z += std::exp((x - top) / alpha);
      next[s] = top + alpha * std::log(z);
      residual = std::max(residual, std::abs(next[s] - v[s]));
    }
    v = std::move(next);
    if (residual < tol) break;
  }
  return v;
}

std::vector<double> expected_visits(const MdpSpec& spec, const AugmentedTabularPolicy& policy, std::size_t steps) {
  const std::size_t S = spec.n_states, A = spec.n_actions, slots = A + 1;
  std::vector<double> dist(S * slots, 0.0), visits(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) dist[s * slots + A] = spec.rho0[s];
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> next(S * slots, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t k = 0; k < slots; ++k) {
        const double mass = dist[s * slots + k];
        if (mass == 0.0) continue;
        visits[s] += mass;
        const auto pi = policy.row(s, k);
        for (std::size_t a = 0; a < A; ++a) {
          const auto row = spec.next_row(s, a);
          for (std::size_t s2 = 0; s2 < S; ++s2) next[s2 * slots + a] += mass * pi[a] * row[s2];
        }
      }
    }
    dist = std::move(next);
  }
  return visits;
}

std::vector<double> central_difference(const std::function<double()>& f, std::span<double> params, double h) {
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = f();
    params[i] = saved - h;
    const double down = f();
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double scale_floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), scale_floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

}  // namespace pic::oracles
