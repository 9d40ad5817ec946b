#include "pic/npi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pic/kernels.hpp"
#include "pic/mixed_policy.hpp"

namespace pic {
namespace {

double mixed_objective(std::span<const double> mixed, const AugmentedValues& q, std::size_t s, std::size_t slot,
                       double alpha) {
  double obj = 0.0;
  for (std::size_t a = 0; a < mixed.size(); ++a) {
    obj += mixed[a] * q.q_at(s, slot, a);
    if (alpha != 0.0) obj += alpha * kernels::entropy_term(mixed[a]);
  }
  return obj;
}

bool strictly_better(double candidate, double incumbent) {
  if (std::isinf(incumbent)) return candidate > incumbent;
  return candidate > incumbent + 1e-12 * std::max(1.0, std::abs(incumbent));
}

}  // namespace

MuTable MuTable::zeros(std::size_t n_states, std::size_t n_actions) {
  return {n_states, n_actions, std::vector<double>(n_states * (n_actions + 1), 0.0)};
}

double MuTable::max() const { return mu.empty() ? 0.0 : *std::max_element(mu.begin(), mu.end()); }

AugmentedTabularPolicy make_mixed_policy(const TabularPolicy& core, const MuTable& mu) {
  if (mu.n_states != core.n_states || mu.n_actions != core.n_actions) throw Error("mu table shape mismatch");
  AugmentedTabularPolicy out{core.n_states, core.n_actions,
                             std::vector<double>(core.n_states * (core.n_actions + 1) * core.n_actions)};
  for (std::size_t s = 0; s < core.n_states; ++s)
    for (std::size_t k = 0; k < out.slots(); ++k) {
      const PrevAction prev = k < core.n_actions ? PrevAction(k) : std::nullopt;
      mix_into(core.row(s), prev, mu.at(s, k), out.row(s, k));
    }
  return out;
}

std::vector<double> make_mu_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw Error("mu grid step must lie in (0, 1]");
  std::vector<double> grid;
  const auto n = static_cast<std::size_t>(std::llround(1.0 / step));
  for (std::size_t i = 0; i <= n; ++i) grid.push_back(std::min(1.0, static_cast<double>(i) * step));
  return grid;
}

TabularPolicy soft_policy_improvement(const CoreValues& q, double alpha) {
  if (alpha < 0.0) throw Error("soft_policy_improvement: alpha must be nonnegative");
  TabularPolicy out{q.n_states, q.n_actions, std::vector<double>(q.n_states * q.n_actions, 0.0)};
  for (std::size_t s = 0; s < q.n_states; ++s) {
    const std::span<const double> qs(q.q.data() + s * q.n_actions, q.n_actions);
    auto row = out.row(s);
    if (alpha == 0.0) {
      row[argmax(qs)] = 1.0;
      continue;
    }
    const double top = *std::max_element(qs.begin(), qs.end());
    double z = 0.0;
    for (std::size_t a = 0; a < q.n_actions; ++a) z += row[a] = std::exp((qs[a] - top) / alpha);
    for (auto& p : row) p /= z;
  }
  return out;
}

SpiResult soft_policy_iteration(const MdpSpec& spec, double alpha, const SpiConfig& config,
                                std::optional<TabularPolicy> initial) {
  SpiResult result;
  result.policy = initial ? std::move(*initial) : TabularPolicy::uniform(spec.n_states, spec.n_actions);
  const auto objective = [&](const CoreValues& v) {
    double j = 0.0;
    for (std::size_t s = 0; s < spec.n_states; ++s) j += spec.rho0[s] * v.v[s];
    return j;
  };
  result.values = exact_core_evaluation(spec, result.policy, alpha, config.eval);
  result.j_history.push_back(objective(result.values));
  double delta = std::numeric_limits<double>::infinity();
  while (result.iterations < config.max_iters) {
    auto next = soft_policy_improvement(result.values, alpha);
    delta = 0.0;
    for (std::size_t i = 0; i < next.probs.size(); ++i)
      delta = std::max(delta, std::abs(next.probs[i] - result.policy.probs[i]));
    result.policy = std::move(next);
    result.values = exact_core_evaluation(spec, result.policy, alpha, config.eval);
    result.j_history.push_back(objective(result.values));
    ++result.iterations;
    if (delta <= config.policy_tol) return result;
  }
  std::ostringstream os;
  os << "soft policy iteration did not converge after " << config.max_iters << " iterations (residual " << delta
     << ")";
  throw Error(os.str());
}

MuTable outer_mu_improvement(const MdpSpec& spec, const TabularPolicy& core, const AugmentedValues& q_aug,
                             double alpha_mix, const std::vector<double>& mu_grid, std::optional<double> cap,
                             const MuTable* incumbent) {
  if (mu_grid.empty()) throw Error("mu grid must be nonempty");
  const std::size_t S = spec.n_states, A = spec.n_actions;
  MuTable out = MuTable::zeros(S, A);
  std::vector<double> mixed(A);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t k = 0; k < A; ++k) {
      std::vector<double> candidates;
      for (double g : mu_grid)
        if (!cap || g <= *cap) candidates.push_back(g);
      if (incumbent && (!cap || incumbent->at(s, k) <= *cap)) candidates.push_back(incumbent->at(s, k));
      if (candidates.empty()) candidates.push_back(0.0);
      std::sort(candidates.begin(), candidates.end());
      double best_mu = candidates.front();
      double best = -std::numeric_limits<double>::infinity();
      for (double mu : candidates) {
        mix_into(core.row(s), k, mu, mixed);
        const double obj = mixed_objective(mixed, q_aug, s, k, alpha_mix);
        if (strictly_better(obj, best)) {
          best = obj;
          best_mu = mu;
        }
      }
      out.at(s, k) = best_mu;
    }
  }
  return out;
}

double lemma1_series(double gamma, std::optional<std::size_t> horizon) {
  if (!horizon) {
    if (!(gamma < 1.0)) throw Error("unbounded horizon requires gamma < 1");
    return gamma / ((1.0 - gamma) * (1.0 - gamma));
  }
  double total = 0.0, discount = 1.0;
  for (std::size_t t = 0; t <= *horizon; ++t) {
    total += static_cast<double>(t) * discount;
    discount *= gamma;
  }
  return total;
}

double estimate_c0(const CoreValues& core_new, const AugmentedValues& mixed_old, double safety) {
  double c0 = 0.0;
  for (std::size_t s = 0; s < core_new.n_states; ++s)
    for (std::size_t a = 0; a < core_new.n_actions; ++a)
      c0 = std::max(c0, std::abs(core_new.q_at(s, a) - core_new.v[s]));
  for (std::size_t s = 0; s < mixed_old.n_states; ++s)
    for (std::size_t k = 0; k < mixed_old.slots(); ++k)
      for (std::size_t a = 0; a < mixed_old.n_actions; ++a)
        c0 = std::max(c0, std::abs(mixed_old.q_at(s, k, a) - mixed_old.v_at(s, k)));
  return std::max(safety * c0, std::numeric_limits<double>::min());
}

GateResult lemma1_gate(const CoreValues& q_core_old, const CoreValues& q_core_new, const MuTable& mu,
                       const Lemma1Params& params) {
  if (q_core_old.q.size() != q_core_new.q.size()) throw Error("lemma1_gate: Q tables differ in shape");
  if (params.n_factor < 4.0) throw Error("lemma1_gate: N must be at least 4");
  GateResult out;
  out.min_improvement = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q_core_old.q.size(); ++i)
    out.min_improvement = std::min(out.min_improvement, q_core_new.q[i] - q_core_old.q[i]);
  out.bound = out.min_improvement / (params.n_factor * params.c0 * params.series_sum);
  out.passed = true;
  for (std::size_t s = 0; s < mu.n_states; ++s)
    for (std::size_t k = 0; k < mu.n_actions; ++k)
      if (!(mu.at(s, k) <= out.bound)) out.passed = false;
  return out;
}

NpiResult nested_policy_iteration(const MdpSpec& spec, const NpiConfig& config) {
  EvalOptions eval;
  eval.tol = config.eval_tol;
  const auto xi_horizon = spec.horizon ? *spec.horizon : config.oscillation_horizon;
  const double series = lemma1_series(spec.gamma, spec.horizon);

  NpiResult result;
  result.core = TabularPolicy::uniform(spec.n_states, spec.n_actions);
  result.mu = MuTable::zeros(spec.n_states, spec.n_actions);
  auto record = [&] {
    const auto mixed = make_mixed_policy(result.core, result.mu);
    result.j_history.push_back(exact_return(spec, mixed, config.alpha_mix, eval));
    result.xi_history.push_back(exact_oscillation(spec, mixed, xi_horizon));
  };
  record();

  for (std::size_t outer = 0; outer < config.outer_iters; ++outer) {
    const auto core_old = exact_core_evaluation(spec, result.core, config.alpha_core, eval);
    const auto mixed_old = exact_policy_evaluation(spec, make_mixed_policy(result.core, result.mu),
                                                   config.alpha_mix, eval);

    TabularPolicy candidate = result.core;
    CoreValues core_new = core_old;
    for (std::size_t inner = 0; inner < config.inner_iters; ++inner) {
      candidate = soft_policy_improvement(core_new, config.alpha_core);
      core_new = exact_core_evaluation(spec, candidate, config.alpha_core, eval);
    }

    GateRecord rec;
    const Lemma1Params params{config.n_factor, estimate_c0(core_new, mixed_old, config.c0_safety), series};
    rec.gate = lemma1_gate(core_old, core_new, result.mu, params);
    rec.inner_accepted = !config.enforce_gate || rec.gate.passed;
    if (rec.inner_accepted) result.core = std::move(candidate);

    const auto mid = exact_policy_evaluation(spec, make_mixed_policy(result.core, result.mu), config.alpha_mix, eval);
    if (rec.gate.passed) {
      const double floor = (1.0 - 4.0 / config.n_factor) * rec.gate.min_improvement;
      rec.lemma_margin = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < mid.q.size(); ++i)
        rec.lemma_margin = std::min(rec.lemma_margin, mid.q[i] - mixed_old.q[i] - floor);
    }
    result.gates.push_back(rec);

    if (!config.freeze_mu_zero)
      result.mu = outer_mu_improvement(spec, result.core, mid, config.alpha_mix, config.mu_grid, std::nullopt,
                                       &result.mu);
    record();
  }
  return result;
}

Theorem1Report theorem1_oracle(const MdpSpec& spec, const TabularPolicy& core, const std::vector<double>& mu_grid,
                               std::optional<std::size_t> horizon, double j_tol, std::size_t max_sweeps) {
  EvalOptions eval;
  eval.parallel = false;
  const auto measure = [&](const MuTable& mu) {
    const auto mixed = make_mixed_policy(core, mu);
    return std::pair{exact_oscillation(spec, mixed, horizon), exact_return(spec, mixed, 0.0, eval)};
  };

  Theorem1Report report;
  report.mu = MuTable::zeros(spec.n_states, spec.n_actions);
  std::tie(report.xi_core, report.j_core) = measure(report.mu);
  report.xi_best = report.xi_core;
  report.j_best = report.j_core;

  const auto feasible = [&](double xi, double j) { return xi <= report.xi_core + 1e-12 && j >= report.j_core - j_tol; };
  const auto preferred = [&](double xi, double j) {
    if (xi < report.xi_best - 1e-14) return true;
    return std::abs(xi - report.xi_best) <= 1e-14 && j > report.j_best + 1e-12;
  };

  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    bool improved = false;
    for (std::size_t s = 0; s < spec.n_states; ++s) {
      for (std::size_t k = 0; k < spec.n_actions; ++k) {
        for (double g : mu_grid) {
          if (g == report.mu.at(s, k)) continue;
          MuTable trial = report.mu;
          trial.at(s, k) = g;
          const auto [xi, j] = measure(trial);
          if (feasible(xi, j) && preferred(xi, j)) {
            report.mu = std::move(trial);
            report.xi_best = xi;
            report.j_best = j;
            improved = true;
          }
        }
      }
    }
    if (!improved) break;
  }
  report.strict_reduction = report.xi_best < report.xi_core - 1e-12;
  return report;
}

}  // namespace pic
