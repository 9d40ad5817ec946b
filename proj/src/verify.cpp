#include "pic/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <iomanip>
#include <limits>

#include "pic/baselines.hpp"
#include "pic/envs.hpp"
#include "pic/mdp.hpp"
#include "pic/npi.hpp"
#include "pic/nsac.hpp"
#include "pic/oracles.hpp"

namespace pic {

namespace {

/// Accumulates per-seed error measures for one check.
class Tally {
 public:
  Tally(std::string name, double tolerance) { result_.check = std::move(name), result_.tolerance = tolerance; }
  void add(double measure) {
    ++result_.seeds;
    if (measure <= result_.tolerance) ++result_.pass_count;
    if (std::isnan(measure))
      result_.worst_violation = measure;
    else if (!std::isnan(result_.worst_violation))
      result_.worst_violation = std::max(result_.worst_violation, measure);
  }
  CheckResult result() const { return result_; }

 private:
  CheckResult result_;
};

std::size_t count_or(const VerifyOptions& o, std::size_t fallback) { return o.seeds ? o.seeds : fallback; }

TabularPolicy random_core(std::size_t n_states, std::size_t n_actions, Rng& rng) {
  TabularPolicy p{n_states, n_actions, std::vector<double>(n_states * n_actions)};
  std::exponential_distribution<double> expo(1.0);
  for (std::size_t s = 0; s < n_states; ++s) {
    double z = 0.0;
    for (auto& x : p.row(s)) z += x = expo(rng) + 1e-3;
    for (auto& x : p.row(s)) x /= z;
  }
  return p;
}

MuTable random_mu(std::size_t n_states, std::size_t n_actions, Rng& rng) {
  auto mu = MuTable::zeros(n_states, n_actions);
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t k = 0; k < n_actions; ++k) mu.at(s, k) = uniform01(rng);
  return mu;
}

MdpSpec single_state(std::size_t n_actions, double gamma, std::size_t horizon) {
  MdpSpec spec;
  spec.n_states = 1;
  spec.n_actions = n_actions;
  spec.transition.assign(n_actions, 1.0);
  spec.reward.assign(n_actions, 1.0);
  spec.rho0 = {1.0};
  spec.gamma = gamma;
  spec.horizon = horizon;
  return validate_mdp(spec);
}

// ------------------------------------------------------------------ tabular

VerifyReport tabular_suite(const VerifyOptions& o) {
  const std::size_t n = count_or(o, 20);
  Tally eval0("evaluation-alpha0-vs-linear-solve", 1e-6), eval1("evaluation-alpha0.1-vs-linear-solve", 1e-6);
  Tally spi("soft-policy-iteration-vs-soft-value-iteration", 1e-6);
  Tally canon("oscillation-canonical-sequences", 0.0), mc("exact-oscillation-vs-monte-carlo", 3.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t seed = o.base_seed + i;
    Rng rng = derive_rng(seed, 1);
    const std::size_t S = 3 + seed % 8, A = 2 + seed % 3;  // at most 10 states
    const auto spec = garnet(S, A, std::min<std::size_t>(2, S), 0.0, seed);
    const auto policy = make_mixed_policy(random_core(S, A, rng), random_mu(S, A, rng));
    for (double alpha : {0.0, 0.1}) {
      const auto values = exact_policy_evaluation(spec, policy, alpha);
      const auto q = oracles::augmented_q_linear_solve(spec, policy, alpha);
      double err = 0.0;
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t k = 0; k <= A; ++k)
          for (std::size_t a = 0; a < A; ++a) err = std::max(err, std::abs(values.q_at(s, k, a) - q[s * A + a]));
      (alpha == 0.0 ? eval0 : eval1).add(err);
    }
    const auto solved = soft_policy_iteration(spec, 0.1);
    const auto v_star = oracles::soft_value_iteration(spec, 0.1);
    double err = 0.0;
    for (std::size_t s = 0; s < S; ++s) err = std::max(err, std::abs(solved.values.v[s] - v_star[s]));
    spi.add(err);
  }

  const std::vector<std::size_t> constant{2, 2, 2, 2}, alternating{0, 1, 0, 1, 0}, mixed{0, 0, 1, 1, 0};
  canon.add(std::abs(oscillation_ratio(constant) - 0.0));
  canon.add(std::abs(oscillation_ratio(alternating) - 1.0));
  canon.add(std::abs(oscillation_ratio(mixed) - 0.5));

  // Measured in standard errors of the Monte Carlo mean.
  const std::size_t mc_policies = std::min<std::size_t>(n, 10), episodes = 20000;
  for (std::size_t i = 0; i < mc_policies; ++i) {
    const std::uint64_t seed = o.base_seed + i;
    Rng rng = derive_rng(seed, 2);
    const auto spec = garnet(GarnetParams{4, 3, 2, 0.0, seed, 0.9, 30});
    const auto policy = make_mixed_policy(random_core(4, 3, rng), random_mu(4, 3, rng));
    const double exact = exact_oscillation(spec, policy);
    const auto est = oscillation_ratio_policy(spec, policy, episodes, seed + 100);
    const double se = est.std / std::sqrt(static_cast<double>(episodes));
    mc.add(se > 0.0 ? std::abs(est.mean - exact) / se : (est.mean == exact ? 0.0 : 1e300));
  }
  return {"tabular", {eval0.result(), eval1.result(), spi.result(), canon.result(), mc.result()}};
}

// ---------------------------------------------------------------- gradcheck

double gradient_error(nn::DenseNet& net, const nn::Grads& analytic, const std::function<double()>& loss) {
  std::vector<double> flat = net.flat_parameters();
  const auto numeric = oracles::central_difference(
      [&] {
        net.set_flat_parameters(flat);
        return loss();
      },
      flat, 1e-5);
  net.set_flat_parameters(flat);
  return oracles::max_relative_error(analytic.flatten(), numeric);
}

Batch random_batch(std::size_t n, std::size_t state_dim, std::size_t n_actions, Rng& rng) {
  ReplayBuffer buffer(n, state_dim);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) {
    Transition t;
    for (std::size_t k = 0; k < state_dim; ++k) {
      t.state.push_back(2.0 * uniform01(rng) - 1.0);
      t.next_state.push_back(2.0 * uniform01(rng) - 1.0);
    }
    t.prev = i % 4 == 0 ? PrevAction{} : PrevAction(rng() % n_actions);
    t.action = rng() % n_actions;
    t.reward = uniform01(rng);
    t.terminal = i % 5 == 0;
    buffer.push(t);
    idx.push_back(i);
  }
  return buffer.gather(idx);
}

VerifyReport gradcheck_suite(const VerifyOptions& o) {
  const std::size_t n = count_or(o, 3);
  constexpr double kTol = 1e-4;
  Tally c1("core-critic1", kTol), c2("core-critic2", kTol), actor("core-actor", kTol), m1("mix-critic1", kTol),
      m2("mix-critic2", kTol), pic("inertia-controller", kTol), dqn("dqn-td", kTol), stop("inertia-stop-gradient", 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t seed = o.base_seed + i;
    Rng rng = derive_rng(seed, 3);
    NsacConfig config;
    config.core.hidden = {8, 8};
    config.core.buffer_capacity = 100;
    config.mu0 = 0.2;
    NsacAgent agent(4, 3, config, seed);
    const auto batch = random_batch(12, 4, 3, rng);

    const auto critic = agent.core.critic_loss(batch);
    const auto critic_loss = [&] { return agent.core.critic_loss(batch).loss; };
    c1.add(gradient_error(agent.core.critic1, critic.critic1, critic_loss));
    c2.add(gradient_error(agent.core.critic2, critic.critic2, critic_loss));
    actor.add(gradient_error(agent.core.actor, agent.core.actor_loss(batch).actor,
                             [&] { return agent.core.actor_loss(batch).loss; }));
    const auto mix = agent.mix_critic_loss(batch);
    const auto mix_loss = [&] { return agent.mix_critic_loss(batch).loss; };
    m1.add(gradient_error(agent.mix1, mix.mix1, mix_loss));
    m2.add(gradient_error(agent.mix2, mix.mix2, mix_loss));
    const auto pl = agent.pic_loss(batch);
    pic.add(gradient_error(agent.pic, pl.pic, [&] { return agent.pic_loss(batch).loss; }));
    double leak = 0.0;
    for (const auto* g : {&pl.actor, &pl.critic1, &pl.critic2, &pl.mix1, &pl.mix2})
      if (!g->empty()) leak = std::max(leak, g->max_abs());
    stop.add(leak);

    DqnConfig dc;
    dc.hidden = {8, 8};
    dc.buffer_capacity = 100;
    DqnAgent d(4, 3, dc, seed);
    // Decorrelate the target so the max over next actions is not degenerate.
    auto tp = d.target.flat_parameters();
    for (auto& x : tp) x += 0.1 * (uniform01(rng) - 0.5);
    d.target.set_flat_parameters(tp);
    dqn.add(gradient_error(d.q, d.td_loss(batch).critic1, [&] { return d.td_loss(batch).loss; }));
  }
  return {"gradcheck",
          {c1.result(), c2.result(), actor.result(), m1.result(), m2.result(), pic.result(), dqn.result(),
           stop.result()}};
}

// ---------------------------------------------------------------- reduction

std::vector<LossRecord> drive(Agent& agent, Env& env, std::size_t updates, std::uint64_t seed) {
  std::vector<LossRecord> losses;
  Rng rng = derive_rng(seed, 5);
  std::size_t episode = 0;
  auto state = env.reset(derive_rng(seed, 6 + episode)());
  PrevAction prev;
  for (std::size_t t = 1; losses.size() < updates; ++t) {
    const auto a = agent.act(state, prev, rng, ActMode::sample);
    auto r = env.step(a);
    agent.observe({state, prev, a, r.reward, r.state, r.terminal});
    if (auto rec = agent.train_step(t)) losses.push_back(*rec);
    prev = a;
    state = r.state;
    if (r.done()) {
      state = env.reset(derive_rng(seed, 6 + ++episode)());
      prev.reset();
    }
  }
  return losses;
}

bool same_bits(double a, double b) {
  return std::memcmp(&a, &b, sizeof a) == 0 || (std::isnan(a) && std::isnan(b));
}

VerifyReport reduction_suite(const VerifyOptions& o) {
  const std::size_t n = count_or(o, 1);
  Tally bitwise("nsac-mu0-equals-sac-bitwise", 0.0), outer_idle("nsac-mu0-outer-losses-absent", 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t seed = o.base_seed + i;
    NsacConfig config;
    config.core.hidden = {32, 32};
    config.mu_clamp = 0.0;
    config.outer_updates = false;
    LineTrack e1, e2;
    NsacAgent nsac(e1.state_dim(), e1.action_count(), config, seed);
    SacAgent sac(e2.state_dim(), e2.action_count(), config.core, seed);
    const auto ln = drive(nsac, e1, 1000, seed), ls = drive(sac, e2, 1000, seed);
    std::size_t mismatches = 0, outer = 0;
    for (std::size_t k = 0; k < ln.size(); ++k) {
      if (!same_bits(ln[k].core_q, ls[k].core_q) || !same_bits(ln[k].core_pi, ls[k].core_pi)) ++mismatches;
      if (!std::isnan(ln[k].mix_q) || !std::isnan(ln[k].pic)) ++outer;
    }
    bitwise.add(static_cast<double>(mismatches));
    outer_idle.add(static_cast<double>(outer));
  }
  return {"reduction", {bitwise.result(), outer_idle.result()}};
}

// ----------------------------------------------------------------- theorem1

VerifyReport theorem1_suite(const VerifyOptions& o) {
  const std::size_t n = count_or(o, 100);
  Tally witness("symmetric-witness", 0.0), xi("xi-not-above-core", 1e-12), j("return-not-below-core", 1e-9);
  {
    const auto spec = single_state(2, 0.9, 100);
    const auto r = theorem1_oracle(spec, TabularPolicy::uniform(1, 2), {0.0, 0.5});
    witness.add(std::max({std::abs(r.xi_core - 0.5), std::abs(r.xi_best - 0.25), std::abs(r.j_best - r.j_core)}));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t seed = o.base_seed + i;
    Rng rng = derive_rng(seed, 7);
    const auto spec = garnet(GarnetParams{4, 3, 2, 0.0, seed, 0.9, 20});
    const auto r = theorem1_oracle(spec, random_core(4, 3, rng), make_mu_grid(0.25));
    xi.add(r.xi_best - r.xi_core);
    j.add(r.j_core - r.j_best);
  }
  return {"theorem1", {witness.result(), xi.result(), j.result()}};
}

// ------------------------------------------------------- lemma1 and npi

NpiConfig gated_config() {
  NpiConfig c;
  // The gate certifies improvement only when both iterations share one objective.
  c.alpha_core = c.alpha_mix = 0.1;
  c.outer_iters = 10;
  c.enforce_gate = true;
  c.n_factor = 8.0;
  return c;
}

MdpSpec npi_garnet(std::uint64_t seed) { return garnet(GarnetParams{6, 3, 2, 0.0, seed, 0.9, std::nullopt}); }

VerifyReport lemma1_suite(const VerifyOptions& o) {
  const std::size_t n = count_or(o, 20);
  Tally margin("intermediate-improvement", 1e-8), at_bound("intermediate-improvement-at-bound", 1e-8);
  Tally homog("bound-homogeneity", 1e-9);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t seed = o.base_seed + i;
    const auto result = nested_policy_iteration(npi_garnet(seed), gated_config());
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& rec : result.gates)
      if (rec.gate.passed) worst = std::max(worst, -rec.lemma_margin);
    margin.add(std::isinf(worst) ? 0.0 : worst);

    // The gate inside NPI rarely admits a grid value above zero, so also
    // place mu exactly at the bound with a random stochastic old core.
    {
      const auto spec = npi_garnet(seed);
      Rng rng = derive_rng(seed, 8);
      const double alpha = 0.1;
      const auto core_old = random_core(spec.n_states, spec.n_actions, rng);
      const auto q_old = exact_core_evaluation(spec, core_old, alpha);
      const auto core_new = soft_policy_improvement(q_old, alpha);
      const auto q_new = exact_core_evaluation(spec, core_new, alpha);
      auto mu = MuTable::zeros(spec.n_states, spec.n_actions);
      const auto mixed_old_values = [&](const MuTable& m) {
        return exact_policy_evaluation(spec, make_mixed_policy(core_old, m), alpha);
      };
      // C0 depends on mu through the old mixed values; two passes settle it.
      GateResult gate;
      for (int pass = 0; pass < 2; ++pass) {
        const Lemma1Params params{8.0, estimate_c0(q_new, mixed_old_values(mu)), lemma1_series(spec.gamma, std::nullopt)};
        gate = lemma1_gate(q_old, q_new, MuTable::zeros(spec.n_states, spec.n_actions), params);
        for (std::size_t s = 0; s < spec.n_states; ++s)
          for (std::size_t k = 0; k < spec.n_actions; ++k) mu.at(s, k) = std::max(0.0, gate.bound);
      }
      const auto old_q = mixed_old_values(mu);
      const auto mid_q = exact_policy_evaluation(spec, make_mixed_policy(core_new, mu), alpha);
      const double floor = (1.0 - 4.0 / 8.0) * gate.min_improvement;
      double w = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < mid_q.q.size(); ++i) w = std::max(w, floor - (mid_q.q[i] - old_q.q[i]));
      at_bound.add(w);
    }

    // Scaling rewards and temperature by c scales improvement and C0 by c.
    const auto base = npi_garnet(seed);
    double rel = 0.0, reference = 0.0;
    for (double c : {1.0, 0.5, 3.0}) {
      auto spec = base;
      for (auto& r : spec.reward) r *= c;
      const double alpha = 0.1 * c;
      const auto core_old = TabularPolicy::uniform(spec.n_states, spec.n_actions);
      const auto q_old = exact_core_evaluation(spec, core_old, alpha);
      const auto q_new = exact_core_evaluation(spec, soft_policy_improvement(q_old, alpha), alpha);
      const auto mixed_old = exact_policy_evaluation(spec, AugmentedTabularPolicy::from_core(core_old), alpha);
      const Lemma1Params params{8.0, estimate_c0(q_new, mixed_old), lemma1_series(spec.gamma, std::nullopt)};
      const double bound = lemma1_gate(q_old, q_new, MuTable::zeros(spec.n_states, spec.n_actions), params).bound;
      if (c == 1.0)
        reference = bound;
      else
        rel = std::max(rel, std::abs(bound - reference) / std::max(std::abs(reference), 1e-300));
    }
    homog.add(rel);
  }
  return {"lemma1", {margin.result(), at_bound.result(), homog.result()}};
}

VerifyReport npi_monotone_suite(const VerifyOptions& o) {
  const std::size_t n = count_or(o, 20);
  Tally mono("j-non-decreasing", 1e-8);
  for (std::size_t i = 0; i < n; ++i) {
    const auto result = nested_policy_iteration(npi_garnet(o.base_seed + i), gated_config());
    double worst = 0.0;
    for (std::size_t k = 1; k < result.j_history.size(); ++k)
      worst = std::max(worst, result.j_history[k - 1] - result.j_history[k]);
    mono.add(worst);
  }
  return {"npi-monotone", {mono.result()}};
}

}  // namespace

bool VerifyReport::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed(); });
}

const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names{"tabular", "gradcheck", "reduction", "theorem1", "lemma1", "npi-monotone"};
  return names;
}

VerifyReport run_verify_suite(const std::string& suite, const VerifyOptions& options) {
  if (suite == "tabular") return tabular_suite(options);
  if (suite == "gradcheck") return gradcheck_suite(options);
  if (suite == "reduction") return reduction_suite(options);
  if (suite == "theorem1") return theorem1_suite(options);
  if (suite == "lemma1") return lemma1_suite(options);
  if (suite == "npi-monotone") return npi_monotone_suite(options);
  throw Error("unknown verify suite '" + suite + "'");
}

void print_report(std::ostream& out, const VerifyReport& report) {
  const auto flags = out.flags();
  for (const auto& c : report.checks)
    out << "suite=" << report.suite << " check=" << c.check << " seeds=" << c.seeds << " pass_count=" << c.pass_count
        << " worst_violation=" << std::setprecision(6) << c.worst_violation << " tolerance=" << c.tolerance
        << " status=" << (c.passed() ? "PASS" : "FAIL") << '\n';
  out.flags(flags);
}

}  // namespace pic
