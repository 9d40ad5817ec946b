#include <doctest.h>

#include <cmath>

#include "agent_helpers.hpp"
#include "pic/baselines.hpp"
#include "pic/envs.hpp"

using namespace pic;

namespace {

DqnConfig small_dqn() {
  DqnConfig c;
  c.hidden = {8, 8};
  c.batch_size = 8;
  c.buffer_capacity = 1000;
  return c;
}

Batch single_transition(double reward, bool terminal) {
  ReplayBuffer b(1, 1);
  b.push({{0.3}, std::nullopt, 0, reward, {0.7}, terminal});
  return b.gather({0});
}

}  // namespace

TEST_CASE("epsilon schedule") {
  const EpsilonSchedule eps;
  CHECK(eps(0) == 1.0);
  CHECK(eps(179999) > 0.1);
  CHECK(eps(180000) == 0.1);
  CHECK(eps(10000000) == 0.1);
  for (std::size_t u = 1; u < 200000; u += 997) CHECK(eps(u) <= eps(u - 1));
}

TEST_CASE("DQN TD loss by hand") {
  auto c = small_dqn();
  c.hidden = {};
  c.gamma = 0.9;
  DqnAgent agent(1, 2, c, 1);
  test::constant_layer(agent.target, {1.0, 2.0});
  test::constant_layer(agent.q, {0.5, 0.0});
  CHECK(agent.td_loss(single_transition(1.0, false)).loss == doctest::Approx(2.6449999999999996).epsilon(1e-12));
  test::constant_layer(agent.q, {1.0, 0.0});
  CHECK(agent.td_loss(single_transition(1.0, true)).loss == 0.0);
  agent.config.gamma = 0.0;
  test::constant_layer(agent.q, {0.0, 0.0});
  CHECK(agent.td_loss(single_transition(0.5, false)).loss == doctest::Approx(0.125));
}

TEST_CASE("DQN TD loss matches central differences") {
  Rng rng(2);
  DqnAgent agent(4, 3, small_dqn(), 3);
  const auto batch = test::random_batch(12, 4, 3, rng);
  const auto loss = agent.td_loss(batch);
  CHECK(test::gradient_error(agent.q, loss.critic1, [&] { return agent.td_loss(batch).loss; }) < 1e-4);
}

TEST_CASE("DQN hard target copies on schedule") {
  auto c = small_dqn();
  c.target_interval = 3;
  DqnAgent agent(4, 3, c, 4);
  Rng rng(5);
  const auto batch = test::random_batch(8, 4, 3, rng);
  const auto initial = agent.target.flat_parameters();
  agent.update(batch);
  agent.update(batch);
  CHECK(agent.target.flat_parameters() == initial);
  agent.update(batch);
  CHECK(agent.target.flat_parameters() == agent.q.flat_parameters());
  agent.update(batch);
  CHECK(agent.target.flat_parameters() != agent.q.flat_parameters());
}

TEST_CASE("DQN acting") {
  DqnAgent agent(2, 3, small_dqn(), 6);
  Rng rng(7);
  const std::vector<double> s{0.2, 0.4};
  const auto greedy = agent.act(s, std::nullopt, rng, ActMode::greedy);
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 3000; ++i) ++counts[agent.act(s, std::nullopt, rng, ActMode::sample)];
  for (int c : counts) CHECK(c > 800);  // epsilon starts at 1
  for (int i = 0; i < 20; ++i) CHECK(agent.act(s, std::nullopt, rng, ActMode::greedy) == greedy);
  CHECK(agent.epsilon() == 1.0);
}

TEST_CASE("DQN checkpoint restores a run exactly") {
  LineTrack env;
  DqnAgent agent(2, 3, small_dqn(), 8);
  Rng rng(1);
  auto state = env.reset(1);
  for (std::size_t t = 1; t <= 60; ++t) {
    const auto a = agent.act(state, std::nullopt, rng, ActMode::sample);
    const auto r = env.step(a);
    agent.observe({state, std::nullopt, a, r.reward, r.state, r.terminal});
    agent.train_step(t);
    state = r.state;
  }
  DqnAgent restored(2, 3, small_dqn(), 99);
  restored.restore(nlohmann::json::parse(agent.checkpoint(true).dump()));
  CHECK(restored.state_checksum() == agent.state_checksum());
  CHECK(restored.updates() == agent.updates());
  for (std::size_t t = 62; t < 80; t += 2) CHECK(agent.train_step(t)->core_q == restored.train_step(t)->core_q);
}

TEST_CASE("discrete SAC concentrates on the best action at low temperature") {
  SacConfig c;
  c.hidden = {8};
  c.alpha = 1e-4;
  c.batch_size = 8;
  c.buffer_capacity = 100;
  SacAgent agent(4, 3, c, 1);
  test::constant_layer(agent.core.critic1, {0.0, 1.0, 0.5});
  test::constant_layer(agent.core.critic2, {0.0, 1.0, 0.5});
  Rng rng(2);
  const auto batch = test::random_batch(8, 4, 3, rng);
  for (int i = 0; i < 500; ++i) {
    const auto loss = agent.core.actor_loss(batch);
    nn::adam_step(agent.core.actor, loss.actor, 1e-2, agent.core.adam_actor);
  }
  CHECK(agent.core.policy(batch.state).row(1).minCoeff() > 0.99);
}

TEST_CASE("discrete SAC losses match central differences") {
  Rng rng(3);
  SacConfig c;
  c.hidden = {8, 8};
  SacAgent agent(4, 3, c, 2);
  const auto batch = test::random_batch(10, 4, 3, rng);
  const auto critic = agent.core.critic_loss(batch);
  CHECK(test::gradient_error(agent.core.critic1, critic.critic1, [&] { return agent.core.critic_loss(batch).loss; }) < 1e-4);
  const auto actor = agent.core.actor_loss(batch);
  CHECK(test::gradient_error(agent.core.actor, actor.actor, [&] { return agent.core.actor_loss(batch).loss; }) < 1e-4);
}
