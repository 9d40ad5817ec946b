#pragma once

// Replay storage and the interface shared by the learning agents.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "pic/common.hpp"
#include "pic/nn.hpp"

namespace pic {

struct Transition {
  std::vector<double> state;
  PrevAction prev;
  std::size_t action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
};

/// Column-major minibatch: one transition per column.
struct Batch {
  nn::Matrix state;
  nn::Matrix next_state;
  std::vector<PrevAction> prev;
  std::vector<std::size_t> action;
  nn::Vector reward;
  nn::Vector not_done;

  std::size_t size() const { return action.size(); }
};

class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(std::size_t capacity, std::size_t state_dim);

  void push(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t state_dim() const { return state_dim_; }

  /// Uniform indices with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  Batch gather(const std::vector<std::size_t>& indices) const;
  Batch sample(std::size_t n, Rng& rng) const { return gather(sample_indices(n, rng)); }
  Transition at(std::size_t i) const;

  nlohmann::json to_json() const;
  static ReplayBuffer from_json(const nlohmann::json& doc);

 private:
  std::size_t capacity_ = 0;
  std::size_t state_dim_ = 0;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
  std::vector<double> states_, next_states_, rewards_;
  std::vector<std::int64_t> prev_;  // -1 for the null action
  std::vector<std::size_t> actions_;
  std::vector<std::uint8_t> terminal_;
};

/// Losses from one scheduled update; NaN where a network was not updated.
struct LossRecord {
  static constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
  double core_q = kNan;
  double core_pi = kNan;
  double mix_q = kNan;
  double pic = kNan;
};

enum class ActMode { sample, greedy };

class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::size_t act(std::span<const double> state, PrevAction prev, Rng& rng, ActMode mode) = 0;
  /// Inertia weight used at (state, prev); empty for agents without one.
  virtual std::optional<double> inertia(std::span<const double>, PrevAction) const { return std::nullopt; }
  virtual void observe(const Transition& t) { buffer_.push(t); }
  /// Runs whatever updates are scheduled at this environment step.
  virtual std::optional<LossRecord> train_step(std::size_t env_step) = 0;
  virtual double epsilon() const { return std::numeric_limits<double>::quiet_NaN(); }

  virtual nlohmann::json checkpoint(bool include_buffer) const = 0;
  virtual void restore(const nlohmann::json& doc) = 0;
  /// Hash over parameters, optimizer steps, buffer size and the training RNG.
  virtual std::uint64_t state_checksum() const = 0;

  const ReplayBuffer& buffer() const { return buffer_; }

 protected:
  ReplayBuffer buffer_;
};

/// [state; onehot(prev)] per column, with an all-zero code for the null action.
nn::Matrix state_prev_input(const nn::Matrix& states, std::span<const PrevAction> prev, std::size_t n_actions);

/// FNV-1a over raw bytes, for checksums.
std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 1469598103934665603ull);
std::uint64_t hash_net(const nn::DenseNet& net, std::uint64_t h);

nlohmann::json rng_to_json(const Rng& rng);
Rng rng_from_json(const nlohmann::json& doc);

}  // namespace pic
