#include <doctest.h>

#include <cmath>

#include "agent_helpers.hpp"
#include "pic/envs.hpp"
#include "pic/nsac.hpp"

using namespace pic;

namespace {

NsacConfig small_config() {
  NsacConfig c;
  c.core.hidden = {8, 8};
  c.core.batch_size = 8;
  c.core.buffer_capacity = 1000;
  return c;
}

/// One linear layer per network so every output is set by its bias.
NsacConfig linear_config() {
  NsacConfig c = small_config();
  c.core.hidden = {};
  c.core.gamma = 0.9;
  c.core.alpha = 0.1;
  return c;
}

Batch single_transition(double reward, bool terminal, PrevAction prev = 1) {
  ReplayBuffer b(1, 1);
  b.push({{0.3}, prev, 0, reward, {0.7}, terminal});
  return b.gather({0});
}

std::vector<LossRecord> drive(Agent& agent, Env& env, std::size_t steps, std::uint64_t seed) {
  std::vector<LossRecord> losses;
  Rng rng(seed);
  auto state = env.reset(seed);
  PrevAction prev;
  for (std::size_t t = 1; t <= steps; ++t) {
    const auto a = agent.act(state, prev, rng, ActMode::sample);
    auto r = env.step(a);
    agent.observe({state, prev, a, r.reward, r.state, r.terminal});
    if (auto rec = agent.train_step(t)) losses.push_back(*rec);
    prev = a;
    state = r.state;
    if (r.done()) {
      state = env.reset(seed + t);
      prev.reset();
    }
  }
  return losses;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0 || (std::isnan(a) && std::isnan(b)); }

}  // namespace

TEST_CASE("replay buffer ring semantics") {
  ReplayBuffer buffer(3, 1);
  for (int i = 0; i < 5; ++i) buffer.push({{double(i)}, std::nullopt, 0, double(i), {0.0}, false});
  CHECK(buffer.size() == 3);
  std::vector<double> rewards;
  for (std::size_t i = 0; i < 3; ++i) rewards.push_back(buffer.at(i).reward);
  std::sort(rewards.begin(), rewards.end());
  CHECK(rewards == std::vector<double>{2.0, 3.0, 4.0});
  CHECK_THROWS_AS(buffer.push({{0.0, 1.0}, std::nullopt, 0, 0.0, {0.0}, false}), Error);
  const auto back = ReplayBuffer::from_json(nlohmann::json::parse(buffer.to_json().dump()));
  CHECK(back.at(1).reward == buffer.at(1).reward);
}

TEST_CASE("replay sampling is uniform") {
  const std::size_t n = 100, draws = 1000000;
  ReplayBuffer buffer(n, 1);
  for (std::size_t i = 0; i < n; ++i) buffer.push({{0.0}, std::nullopt, 0, 0.0, {0.0}, false});
  Rng rng(5);
  std::vector<double> counts(n, 0.0);
  for (auto i : buffer.sample_indices(draws, rng)) counts[i] += 1.0;
  const double expected = double(draws) / n;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 99 degrees of freedom: the 0.99 quantile is 134.64.
  CHECK(chi2 < 134.64);
}

TEST_CASE("core critic loss by hand") {
  NsacAgent agent(1, 2, linear_config(), 1);
  test::constant_layer(agent.core.actor, {0.0, 0.0});
  test::constant_layer(agent.core.target1, {1.0, 2.0});
  test::constant_layer(agent.core.target2, {1.5, 0.5});
  test::constant_layer(agent.core.critic1, {0.5, 0.0});
  test::constant_layer(agent.core.critic2, {1.0, 1.0});
  CHECK(agent.core.critic_loss(single_transition(1.0, false)).loss ==
        doctest::Approx(1.0374256749759683).epsilon(1e-12));

  test::constant_layer(agent.core.critic1, {1.0, 0.0});
  CHECK(agent.core.critic_loss(single_transition(1.0, true)).loss == 0.0);

  agent.core.config.gamma = 0.0;
  test::constant_layer(agent.core.critic2, {0.25, 0.0});
  CHECK(agent.core.critic_loss(single_transition(0.25, false)).loss == doctest::Approx(0.5 * 0.75 * 0.75));
}

TEST_CASE("mixed critic loss by hand") {
  auto config = linear_config();
  config.alpha_mix = 0.01;
  config.mu_clamp = 0.5;
  NsacAgent agent(1, 2, config, 1);
  test::constant_layer(agent.core.actor, {0.0, 0.0});
  test::constant_layer(agent.mix_target1, {1.0, 2.0});
  test::constant_layer(agent.mix_target2, {1.5, 0.5});
  test::constant_layer(agent.mix1, {0.5, 0.0});
  test::constant_layer(agent.mix2, {1.0, 1.0});
  CHECK(agent.mix_critic_loss(single_transition(1.0, false)).loss == doctest::Approx(1.149433472711761).epsilon(1e-12));
  test::constant_layer(agent.mix1, {1.0, 0.0});
  CHECK(agent.mix_critic_loss(single_transition(1.0, true)).loss == 0.0);
}

TEST_CASE("mixed critic reduces to the core critic when mu is zero") {
  auto config = small_config();
  config.mu_clamp = 0.0;
  config.alpha_mix = config.core.alpha;
  NsacAgent agent(4, 3, config, 2);
  // Copy core critics into the mixed critics with zero weight on the one-hot inputs.
  const auto widen = [](const nn::DenseNet& core, nn::DenseNet& mixed) {
    for (std::size_t l = 0; l < core.layers().size(); ++l) {
      auto& m = mixed.layers()[l];
      const auto& c = core.layers()[l];
      m.b = c.b;
      if (l == 0) {
        m.w.setZero();
        m.w.leftCols(c.w.cols()) = c.w;
      } else {
        m.w = c.w;
      }
    }
  };
  widen(agent.core.critic1, agent.mix1);
  widen(agent.core.critic2, agent.mix2);
  widen(agent.core.target1, agent.mix_target1);
  widen(agent.core.target2, agent.mix_target2);
  Rng rng(3);
  const auto batch = test::random_batch(16, 4, 3, rng);
  CHECK(std::abs(agent.mix_critic_loss(batch).loss - agent.core.critic_loss(batch).loss) < 1e-12);
}

TEST_CASE("all losses match central differences") {
  Rng rng(4);
  auto config = small_config();
  config.mu0 = 0.2;
  NsacAgent agent(4, 3, config, 7);
  const auto batch = test::random_batch(12, 4, 3, rng);

  const auto critic = agent.core.critic_loss(batch);
  CHECK(test::gradient_error(agent.core.critic1, critic.critic1, [&] { return agent.core.critic_loss(batch).loss; }) < 1e-4);
  CHECK(test::gradient_error(agent.core.critic2, critic.critic2, [&] { return agent.core.critic_loss(batch).loss; }) < 1e-4);

  const auto actor = agent.core.actor_loss(batch);
  CHECK(test::gradient_error(agent.core.actor, actor.actor, [&] { return agent.core.actor_loss(batch).loss; }) < 1e-4);

  const auto mix = agent.mix_critic_loss(batch);
  CHECK(test::gradient_error(agent.mix1, mix.mix1, [&] { return agent.mix_critic_loss(batch).loss; }) < 1e-4);
  CHECK(test::gradient_error(agent.mix2, mix.mix2, [&] { return agent.mix_critic_loss(batch).loss; }) < 1e-4);

  const auto pic = agent.pic_loss(batch);
  CHECK(pic.pic.max_abs() > 0.0);
  CHECK(test::gradient_error(agent.pic, pic.pic, [&] { return agent.pic_loss(batch).loss; }) < 1e-4);
}

TEST_CASE("stop-gradient contract") {
  Rng rng(5);
  NsacAgent agent(4, 3, small_config(), 8);
  const auto batch = test::random_batch(8, 4, 3, rng);
  const auto pic = agent.pic_loss(batch);
  CHECK(pic.actor.empty());
  CHECK(pic.critic1.empty());
  CHECK(pic.mix1.empty());
  CHECK(pic.mix2.empty());
  const auto core = agent.core.critic_loss(batch);
  CHECK(core.pic.empty());

  const auto actor_before = agent.core.actor.flat_parameters();
  const auto critic_before = agent.core.critic1.flat_parameters();
  const auto target_before = agent.core.target1.flat_parameters();
  const auto pic_before = agent.pic.flat_parameters();
  agent.outer_update(batch);
  CHECK(agent.core.actor.flat_parameters() == actor_before);
  CHECK(agent.core.critic1.flat_parameters() == critic_before);
  CHECK(agent.core.target1.flat_parameters() == target_before);
  CHECK(agent.pic.flat_parameters() != pic_before);

  const auto pic_after = agent.pic.flat_parameters();
  const auto mix_target = agent.mix_target1.flat_parameters();
  agent.core.update(batch);
  CHECK(agent.pic.flat_parameters() == pic_after);
  CHECK(agent.mix_target1.flat_parameters() == mix_target);
}

TEST_CASE("target networks move only by the soft update") {
  Rng rng(6);
  NsacAgent agent(4, 3, small_config(), 9);
  const auto batch = test::random_batch(8, 4, 3, rng);
  auto expected = agent.core.target1;
  agent.core.update(batch);
  nn::soft_update(expected, agent.core.critic1, agent.core.config.sigma);
  CHECK(expected.flat_parameters() == agent.core.target1.flat_parameters());
}

TEST_CASE("loss directions") {
  Rng rng(7);
  SUBCASE("flat Q with no entropy gives a zero actor gradient") {
    auto config = small_config();
    config.core.alpha = 0.0;
    NsacAgent agent(4, 3, config, 1);
    test::constant_layer(agent.core.critic1, {1.0, 1.0, 1.0});
    test::constant_layer(agent.core.critic2, {1.0, 1.0, 1.0});
    CHECK(agent.core.actor_loss(test::random_batch(8, 4, 3, rng)).actor.max_abs() < 1e-15);
  }
  SUBCASE("actor step raises the preferred action") {
    auto config = small_config();
    config.core.alpha = 0.01;
    NsacAgent agent(4, 3, config, 1);
    test::constant_layer(agent.core.critic1, {0.0, 5.0, 0.0});
    test::constant_layer(agent.core.critic2, {0.0, 5.0, 0.0});
    const auto batch = test::random_batch(8, 4, 3, rng);
    const double before = agent.core.policy(batch.state).row(1).mean();
    const auto loss = agent.core.actor_loss(batch);
    nn::adam_step(agent.core.actor, loss.actor, 1e-2, agent.core.adam_actor);
    CHECK(agent.core.policy(batch.state).row(1).mean() > before);
  }
  SUBCASE("Q favoring the previous action pushes mu up") {
    auto config = small_config();
    config.alpha_mix = 1e-6;
    NsacAgent agent(1, 2, config, 1);
    test::constant_layer(agent.mix1, {3.0, 0.0});
    test::constant_layer(agent.mix2, {3.0, 0.0});
    const auto grads = agent.pic_loss(single_transition(0.0, false, 0));
    CHECK(grads.pic.b.back()(0) < 0.0);  // descent raises the pre-tanh output
  }
  SUBCASE("flat Q with entropy pushes mu toward the uniform mixture") {
    auto config = small_config();
    config.alpha_mix = 0.1;
    NsacAgent agent(1, 2, config, 1);
    test::constant_layer(agent.core.actor, {0.0, 0.0});
    test::constant_layer(agent.mix1, {1.0, 1.0});
    test::constant_layer(agent.mix2, {1.0, 1.0});
    const auto grads = agent.pic_loss(single_transition(0.0, false, 0));
    CHECK(grads.pic.b.back()(0) > 0.0);
  }
}

TEST_CASE("act semantics") {
  Rng rng(8);
  auto config = small_config();
  config.mu_clamp = 1.0;
  NsacAgent sticky(4, 3, config, 1);
  const std::vector<double> s{0.1, 0.2, 0.3, 0.4};
  for (int i = 0; i < 200; ++i) CHECK(sticky.act(s, 2, rng, ActMode::sample) == 2);

  NsacAgent agent(4, 3, small_config(), 1);
  const nn::Matrix col = Eigen::Map<const nn::Vector>(s.data(), 4);
  const std::vector<PrevAction> none{std::nullopt};
  CHECK(agent.mixed_policy(col, none) == agent.core.policy(col));
  CHECK_FALSE(agent.inertia(s, std::nullopt).has_value());
  const std::vector<PrevAction> one{PrevAction(1)};
  const nn::Vector mixed = agent.mixed_policy(col, one);
  CHECK(agent.act(s, 1, rng, ActMode::greedy) ==
        argmax(std::span<const double>(mixed.data(), static_cast<std::size_t>(mixed.size()))));
  const double m = *agent.inertia(s, 1);
  CHECK(m >= 0.0);
  CHECK(m <= 1.0);

  auto floored = small_config();
  floored.mu0 = 0.6;
  NsacAgent bounded(4, 3, floored, 1);
  CHECK(*bounded.inertia(s, 0) >= 0.6);
}

TEST_CASE("train_step schedule and warm-up") {
  LineTrack env;
  NsacAgent agent(2, 3, small_config(), 3);
  Rng rng(1);
  auto state = env.reset(1);
  for (std::size_t t = 1; t < 8; ++t) {
    const auto r = env.step(1);
    agent.observe({state, std::nullopt, 1, r.reward, r.state, r.terminal});
    state = r.state;
    const auto before = agent.state_checksum();
    CHECK_FALSE(agent.train_step(t).has_value());
    CHECK(agent.state_checksum() == before);
  }
  const auto r = env.step(1);
  agent.observe({state, std::nullopt, 1, r.reward, r.state, r.terminal});
  CHECK_FALSE(agent.train_step(9).has_value());
  const auto rec = agent.train_step(10);
  REQUIRE(rec.has_value());
  CHECK(std::isfinite(rec->core_q));
  CHECK(std::isfinite(rec->core_pi));
  CHECK(std::isfinite(rec->mix_q));
  CHECK(std::isfinite(rec->pic));
}

TEST_CASE("identical seeds give identical loss records") {
  LineTrack e1, e2;
  NsacAgent a(2, 3, small_config(), 4), b(2, 3, small_config(), 4);
  const auto la = drive(a, e1, 200, 11), lb = drive(b, e2, 200, 11);
  REQUIRE(la.size() == lb.size());
  CHECK(la.size() > 50);
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(same_bits(la[i].core_q, lb[i].core_q));
    CHECK(same_bits(la[i].pic, lb[i].pic));
  }
}

TEST_CASE("NSAC with mu clamped to zero and no outer updates is SAC") {
  auto config = small_config();
  config.mu_clamp = 0.0;
  config.outer_updates = false;
  LineTrack e1, e2;
  NsacAgent nsac(2, 3, config, 5);
  SacAgent sac(2, 3, config.core, 5);
  const auto ln = drive(nsac, e1, 300, 21), ls = drive(sac, e2, 300, 21);
  REQUIRE(ln.size() == ls.size());
  for (std::size_t i = 0; i < ln.size(); ++i) {
    CHECK(same_bits(ln[i].core_q, ls[i].core_q));
    CHECK(same_bits(ln[i].core_pi, ls[i].core_pi));
    CHECK(std::isnan(ln[i].mix_q));
  }
}

TEST_CASE("checkpoint restores a run exactly") {
  LineTrack env;
  NsacAgent agent(2, 3, small_config(), 6);
  drive(agent, env, 100, 31);
  const auto doc = nlohmann::json::parse(agent.checkpoint(true).dump());
  NsacAgent restored(2, 3, small_config(), 999);
  restored.restore(doc);
  CHECK(restored.state_checksum() == agent.state_checksum());
  LineTrack e1, e2;
  const auto la = drive(agent, e1, 100, 41), lb = drive(restored, e2, 100, 41);
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(same_bits(la[i].core_q, lb[i].core_q));
    CHECK(same_bits(la[i].mix_q, lb[i].mix_q));
    CHECK(same_bits(la[i].pic, lb[i].pic));
  }
}

TEST_CASE("losses reject empty batches") {
  NsacAgent agent(4, 3, small_config(), 1);
  Batch empty;
  CHECK_THROWS_AS(agent.core.critic_loss(empty), Error);
  CHECK_THROWS_AS(agent.pic_loss(empty), Error);
}
