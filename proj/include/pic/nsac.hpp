#pragma once

// Discrete soft actor-critic core and the nested agent that wraps it with an
// inertia controller and a mixed-policy critic.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "pic/agent.hpp"
#include "pic/nn.hpp"

namespace pic {

struct SacConfig {
  std::vector<std::size_t> hidden{64, 64};
  double gamma = 0.99;
  double alpha = 0.1;  // core temperature
  double lr_critic = 3e-4;
  double lr_actor = 3e-4;
  double sigma = 0.002;  // target rate
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 200000;
  std::size_t update_every = 2;
};

/// Gradients of one loss for every parameter set it could touch. Sets the
/// loss does not differentiate are left empty.
struct LossResult {
  double loss = 0.0;
  nn::Grads critic1, critic2, actor;
  nn::Grads mix1, mix2, pic;
};

/// Network ids for derive_rng, fixed so that every agent initializes a given
/// network identically from the same seed.
enum NetId : std::uint64_t { kActorId = 1, kCritic1Id, kCritic2Id, kMix1Id, kMix2Id, kPicId, kDqnId };
inline constexpr std::uint64_t kTrainStream = 1000;

class SacCore {
 public:
  SacCore() = default;
  SacCore(std::size_t state_dim, std::size_t n_actions, const SacConfig& config, std::uint64_t seed);

  /// pi_core(.|s) per column.
  nn::Matrix policy(const nn::Matrix& states) const { return actor.forward(states); }

  /// Sum over the twins of mean 0.5 (Q_i(s,a) - y)^2 with the soft target built
  /// from the target critics and the current policy.
  LossResult critic_loss(const Batch& batch) const;
  /// Mean over states of pi^T [alpha log pi - min_i Q_i].
  LossResult actor_loss(const Batch& batch) const;
  /// Critics, then actor, then the target soft update.
  LossRecord update(const Batch& batch);

  nlohmann::json to_json() const;
  void from_json(const nlohmann::json& doc);
  std::uint64_t hash(std::uint64_t h) const;

  SacConfig config;
  std::size_t n_actions = 0;
  nn::DenseNet actor, critic1, critic2, target1, target2;
  nn::AdamState adam_actor, adam_critic1, adam_critic2;
};

/// Discrete SAC without inertia.
class SacAgent : public Agent {
 public:
  SacAgent(std::size_t state_dim, std::size_t n_actions, const SacConfig& config, std::uint64_t seed);

  std::size_t act(std::span<const double> state, PrevAction prev, Rng& rng, ActMode mode) override;
  std::optional<LossRecord> train_step(std::size_t env_step) override;
  nlohmann::json checkpoint(bool include_buffer) const override;
  void restore(const nlohmann::json& doc) override;
  std::uint64_t state_checksum() const override;

  SacCore core;

 private:
  Rng train_rng_;
};

struct NsacConfig {
  SacConfig core;
  double alpha_mix = 0.01;
  double lr_mix_critic = 3e-4;
  double lr_pic = 3e-4;
  double sigma_mix = 0.002;
  std::size_t mix_update_every = 2;
  double mu0 = 0.0;
  bool outer_updates = true;
  /// Forces the inertia weight to this value everywhere.
  std::optional<double> mu_clamp;
};

class NsacAgent : public Agent {
 public:
  NsacAgent(std::size_t state_dim, std::size_t n_actions, const NsacConfig& config, std::uint64_t seed);

  std::size_t act(std::span<const double> state, PrevAction prev, Rng& rng, ActMode mode) override;
  std::optional<double> inertia(std::span<const double> state, PrevAction prev) const override;
  std::optional<LossRecord> train_step(std::size_t env_step) override;
  nlohmann::json checkpoint(bool include_buffer) const override;
  void restore(const nlohmann::json& doc) override;
  std::uint64_t state_checksum() const override;

  /// mu per column of [state; onehot(prev)], after the lower bound.
  nn::Vector mu(const nn::Matrix& state_prev) const;
  /// Mixed policy per column; null previous actions give the core.
  nn::Matrix mixed_policy(const nn::Matrix& states, std::span<const PrevAction> prev) const;

  /// Soft Bellman residual of the mixed critics; the target evaluates the
  /// mixed policy at (s', a) with the target critics.
  LossResult mix_critic_loss(const Batch& batch) const;
  /// Mean over (s, prev) of mixed^T [alpha_mix log mixed - min_i Q_mix,i];
  /// only the inertia network is differentiated.
  LossResult pic_loss(const Batch& batch) const;

  /// Mixed critics, then the inertia network, then the target soft update.
  LossRecord outer_update(const Batch& batch);

  NsacConfig config;
  SacCore core;
  nn::DenseNet pic, mix1, mix2, mix_target1, mix_target2;
  nn::AdamState adam_pic, adam_mix1, adam_mix2;

 private:
  Rng train_rng_;
};

}  // namespace pic
