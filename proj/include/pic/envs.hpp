#pragma once

// Desk-scale environments with a common episodic interface.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "pic/common.hpp"

namespace pic {

struct StepResult {
  std::vector<double> state;
  double reward = 0.0;
  /// Undiscounted, unshaped sum of base rewards; what evaluation reports.
  double raw_reward = 0.0;
  bool terminal = false;
  /// Episode ended by the step limit; not a terminal state for bootstrapping.
  bool truncated = false;
  /// Base environment steps consumed (more than one under action repetition).
  std::size_t env_steps = 1;
  /// Base actions actually executed, in order.
  std::vector<std::size_t> executed_actions;

  bool done() const { return terminal || truncated; }
};

class Env {
 public:
  virtual ~Env() = default;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_count() const = 0;
  virtual std::size_t max_episode_steps() const = 0;
  virtual std::vector<double> reset(std::uint64_t seed) = 0;
  /// Throws if the episode has already ended.
  virtual StepResult step(std::size_t action) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
  /// Wrappers that shape training rewards turn the shaping off when false.
  virtual void set_training(bool) {}
};

/// Shared step counting and end-of-episode bookkeeping.
class EpisodicEnv : public Env {
 public:
  explicit EpisodicEnv(std::size_t max_steps) : max_steps_(max_steps) {}
  std::size_t max_episode_steps() const override { return max_steps_; }
  std::size_t steps_taken() const { return t_; }

 protected:
  void begin_episode() {
    t_ = 0;
    done_ = false;
  }
  /// Validates the action and the episode state; call at the top of step().
  void check_step(std::size_t action) const;
  /// Marks the end of a step and fills the limit flags.
  void finish_step(StepResult& out);

 private:
  std::size_t max_steps_;
  std::size_t t_ = 0;
  bool done_ = true;
};

struct LineTrackConfig {
  int length = 20;
  double drift_prob = 0.1;
  /// In track lengths; applied to both observed positions.
  double noise_std = 0.1;
  double reward_scale = 1.0;
  std::size_t episode_steps = 100;
};

/// A paddle tracks a randomly drifting target on a 1-D track from noisy
/// observations. Actions: 0 down, 1 stay, 2 up.
class LineTrack : public EpisodicEnv {
 public:
  explicit LineTrack(LineTrackConfig config = {});
  std::size_t state_dim() const override { return 2; }
  std::size_t action_count() const override { return 3; }
  std::vector<double> reset(std::uint64_t seed) override;
  StepResult step(std::size_t action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<LineTrack>(*this); }

  int agent() const { return agent_; }
  int target() const { return target_; }
  /// Places agent and target directly; for tests.
  void set_positions(int agent, int target);
  const LineTrackConfig& config() const { return config_; }

 private:
  std::vector<double> observe();

  LineTrackConfig config_;
  Rng rng_;
  int agent_ = 0;
  int target_ = 0;
};

struct TwoWayMiniConfig {
  int view_ahead = 30;
  int view_behind = 10;
  /// Per-step spawn probabilities at the far edge of the view.
  double slow_spawn_rate = 0.05;
  double oncoming_spawn_rate = 0.05;
  int slow_speed = 1;
  int oncoming_speed = 2;
  double high_velocity_reward = 0.8;
  double left_lane_reward = 0.2;
  double collision_reward = 0.0;
  double left_lane_constraint = 1.0;
  /// Left-lane bonus steps per unit of the constraint.
  std::size_t left_lane_unit_steps = 20;
  std::size_t nearest_k = 4;
  std::size_t episode_steps = 100;

  static TwoWayMiniConfig preset(const std::string& complexity);
};

/// Two-lane road: lane 0 carries slow same-direction traffic, lane 1 carries
/// oncoming traffic. Actions: 0 keep, 1 left, 2 right, 3 accel, 4 decel.
class TwoWayMini : public EpisodicEnv {
 public:
  struct Vehicle {
    int lane = 0;
    long x = 0;
    int speed = 0;  // signed, cells per step
  };

  explicit TwoWayMini(TwoWayMiniConfig config = {});
  std::size_t state_dim() const override { return 3 + 4 * config_.nearest_k; }
  std::size_t action_count() const override { return 5; }
  std::vector<double> reset(std::uint64_t seed) override;
  StepResult step(std::size_t action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<TwoWayMini>(*this); }

  std::vector<double> state_vector() const;
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  int ego_lane() const { return lane_; }
  int ego_speed() const { return speed_; }
  long ego_x() const { return x_; }
  std::size_t left_budget() const { return left_budget_; }
  std::size_t spawned() const { return spawned_; }
  std::size_t despawned() const { return despawned_; }
  const TwoWayMiniConfig& config() const { return config_; }

  /// Replaces the ego state and traffic; for tests.
  void set_scene(int lane, int speed, std::vector<Vehicle> vehicles);

 private:
  void spawn(int lane, long x);
  bool free_near(int lane, long x, long gap) const;

  TwoWayMiniConfig config_;
  Rng rng_;
  int lane_ = 0;
  int speed_ = 2;
  long x_ = 0;
  std::size_t left_budget_ = 0;
  std::vector<Vehicle> vehicles_;
  std::size_t spawned_ = 0;
  std::size_t despawned_ = 0;
};

/// Augmented action space A x Re; index = base + |A| * repeat_index.
struct RepetitionActionSpace {
  std::size_t base_actions = 0;
  std::vector<std::size_t> repeats{1, 2, 4, 8};

  std::size_t size() const { return base_actions * repeats.size(); }
  std::size_t encode(std::size_t base, std::size_t repeat_index) const;
  std::pair<std::size_t, std::size_t> decode(std::size_t index) const;  // (base action, repeat count)
};

/// One augmented step runs the base action k times, stopping early when the
/// episode ends, and returns sum_j gamma^j r_j.
class RepetitionWrapper : public Env {
 public:
  RepetitionWrapper(std::unique_ptr<Env> base, RepetitionActionSpace space, double gamma);
  RepetitionWrapper(const RepetitionWrapper& other);

  std::size_t state_dim() const override { return base_->state_dim(); }
  std::size_t action_count() const override { return space_.size(); }
  std::size_t max_episode_steps() const override { return base_->max_episode_steps(); }
  std::vector<double> reset(std::uint64_t seed) override { return base_->reset(seed); }
  StepResult step(std::size_t action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<RepetitionWrapper>(*this); }
  void set_training(bool training) override { base_->set_training(training); }
  const RepetitionActionSpace& space() const { return space_; }

 private:
  std::unique_ptr<Env> base_;
  RepetitionActionSpace space_;
  double gamma_;
};

/// Adds `penalty` to the reward whenever the action differs from the previous
/// one, during training only.
class PenaltyWrapper : public Env {
 public:
  PenaltyWrapper(std::unique_ptr<Env> base, double penalty = -0.05);
  PenaltyWrapper(const PenaltyWrapper& other);

  std::size_t state_dim() const override { return base_->state_dim(); }
  std::size_t action_count() const override { return base_->action_count(); }
  std::size_t max_episode_steps() const override { return base_->max_episode_steps(); }
  std::vector<double> reset(std::uint64_t seed) override;
  StepResult step(std::size_t action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<PenaltyWrapper>(*this); }
  void set_training(bool training) override {
    training_ = training;
    base_->set_training(training);
  }
  bool training() const { return training_; }

 private:
  std::unique_ptr<Env> base_;
  double penalty_;
  bool training_ = true;
  std::optional<std::size_t> prev_;
};

/// "linetrack" or "twoway-mini" with a "simple" or "complex" preset. LineTrack
/// has one configuration; the complex preset doubles its drift probability.
std::unique_ptr<Env> make_env(const std::string& name, const std::string& complexity);

}  // namespace pic
