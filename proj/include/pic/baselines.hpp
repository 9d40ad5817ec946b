#pragma once

// Value-based baseline: DQN with experience replay, a hard-copied target
// network and a linearly decaying exploration rate.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "pic/agent.hpp"
#include "pic/nn.hpp"
#include "pic/nsac.hpp"

namespace pic {

struct EpsilonSchedule {
  double start = 1.0;
  double floor = 0.1;
  double decay_per_update = 5e-6;

  double operator()(std::size_t updates) const {
    return std::max(floor, start - decay_per_update * static_cast<double>(updates));
  }
};

struct DqnConfig {
  std::vector<std::size_t> hidden{64, 64};
  double gamma = 0.99;
  double lr = 3e-4;
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 200000;
  std::size_t update_every = 2;
  std::size_t target_interval = 10000;
  EpsilonSchedule epsilon;
};

class DqnAgent : public Agent {
 public:
  DqnAgent(std::size_t state_dim, std::size_t n_actions, const DqnConfig& config, std::uint64_t seed);

  /// Sample mode is epsilon-greedy at the current schedule value; greedy mode
  /// never explores.
  std::size_t act(std::span<const double> state, PrevAction prev, Rng& rng, ActMode mode) override;
  std::optional<LossRecord> train_step(std::size_t env_step) override;
  double epsilon() const override { return config.epsilon(updates_); }
  nlohmann::json checkpoint(bool include_buffer) const override;
  void restore(const nlohmann::json& doc) override;
  std::uint64_t state_checksum() const override;

  /// Mean 0.5 (Q(s,a) - [r + gamma (1 - terminal) max_b Q_target(s',b)])^2.
  LossResult td_loss(const Batch& batch) const;
  double update(const Batch& batch);
  std::size_t updates() const { return updates_; }

  DqnConfig config;
  std::size_t n_actions = 0;
  nn::DenseNet q, target;
  nn::AdamState adam;

 private:
  std::size_t updates_ = 0;
  Rng train_rng_;
};

}  // namespace pic
