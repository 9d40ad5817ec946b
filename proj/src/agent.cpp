#include "pic/agent.hpp"

#include <cstring>
#include <sstream>

namespace pic {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t state_dim)
    : capacity_(capacity),
      state_dim_(state_dim),
      states_(capacity * state_dim),
      next_states_(capacity * state_dim),
      rewards_(capacity),
      prev_(capacity),
      actions_(capacity),
      terminal_(capacity) {
  if (capacity == 0) throw Error("replay buffer capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_)
    throw Error("transition state has the wrong dimension");
  std::copy(t.state.begin(), t.state.end(), states_.begin() + static_cast<std::ptrdiff_t>(head_ * state_dim_));
  std::copy(t.next_state.begin(), t.next_state.end(),
            next_states_.begin() + static_cast<std::ptrdiff_t>(head_ * state_dim_));
  rewards_[head_] = t.reward;
  prev_[head_] = t.prev ? static_cast<std::int64_t>(*t.prev) : -1;
  actions_[head_] = t.action;
  terminal_[head_] = t.terminal;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (size_ == 0) throw Error("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

Batch ReplayBuffer::gather(const std::vector<std::size_t>& indices) const {
  const auto n = static_cast<Eigen::Index>(indices.size()), d = static_cast<Eigen::Index>(state_dim_);
  Batch b;
  b.state.resize(d, n);
  b.next_state.resize(d, n);
  b.reward.resize(n);
  b.not_done.resize(n);
  b.prev.reserve(indices.size());
  b.action.reserve(indices.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t i = indices[static_cast<std::size_t>(j)];
    if (i >= size_) throw Error("replay index out of range");
    b.state.col(j) = Eigen::Map<const nn::Vector>(states_.data() + i * state_dim_, d);
    b.next_state.col(j) = Eigen::Map<const nn::Vector>(next_states_.data() + i * state_dim_, d);
    b.reward(j) = rewards_[i];
    b.not_done(j) = terminal_[i] ? 0.0 : 1.0;
    b.prev.push_back(prev_[i] < 0 ? PrevAction{} : PrevAction(static_cast<std::size_t>(prev_[i])));
    b.action.push_back(actions_[i]);
  }
  return b;
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw Error("replay index out of range");
  Transition t;
  t.state.assign(states_.begin() + static_cast<std::ptrdiff_t>(i * state_dim_),
                 states_.begin() + static_cast<std::ptrdiff_t>((i + 1) * state_dim_));
  t.next_state.assign(next_states_.begin() + static_cast<std::ptrdiff_t>(i * state_dim_),
                      next_states_.begin() + static_cast<std::ptrdiff_t>((i + 1) * state_dim_));
  t.prev = prev_[i] < 0 ? PrevAction{} : PrevAction(static_cast<std::size_t>(prev_[i]));
  t.action = actions_[i];
  t.reward = rewards_[i];
  t.terminal = terminal_[i];
  return t;
}

nlohmann::json ReplayBuffer::to_json() const {
  return {{"capacity", capacity_}, {"state_dim", state_dim_}, {"size", size_},       {"head", head_},
          {"states", states_},     {"next_states", next_states_}, {"rewards", rewards_}, {"prev", prev_},
          {"actions", actions_},   {"terminal", terminal_}};
}

ReplayBuffer ReplayBuffer::from_json(const nlohmann::json& doc) {
  ReplayBuffer b(doc.at("capacity").get<std::size_t>(), doc.at("state_dim").get<std::size_t>());
  b.size_ = doc.at("size").get<std::size_t>();
  b.head_ = doc.at("head").get<std::size_t>();
  b.states_ = doc.at("states").get<std::vector<double>>();
  b.next_states_ = doc.at("next_states").get<std::vector<double>>();
  b.rewards_ = doc.at("rewards").get<std::vector<double>>();
  b.prev_ = doc.at("prev").get<std::vector<std::int64_t>>();
  b.actions_ = doc.at("actions").get<std::vector<std::size_t>>();
  b.terminal_ = doc.at("terminal").get<std::vector<std::uint8_t>>();
  if (b.states_.size() != b.capacity_ * b.state_dim_ || b.rewards_.size() != b.capacity_ || b.size_ > b.capacity_)
    throw Error("replay buffer document is inconsistent");
  return b;
}

nn::Matrix state_prev_input(const nn::Matrix& states, std::span<const PrevAction> prev, std::size_t n_actions) {
  const auto d = states.rows();
  nn::Matrix x = nn::Matrix::Zero(d + static_cast<Eigen::Index>(n_actions), states.cols());
  x.topRows(d) = states;
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    const auto& p = prev[static_cast<std::size_t>(j)];
    if (p) x(d + static_cast<Eigen::Index>(*p), j) = 1.0;
  }
  return x;
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t hash_net(const nn::DenseNet& net, std::uint64_t h) {
  const auto flat = net.flat_parameters();
  return fnv1a(flat.data(), flat.size() * sizeof(double), h);
}

nlohmann::json rng_to_json(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_json(const nlohmann::json& doc) {
  Rng rng;
  std::istringstream is(doc.get<std::string>());
  is >> rng;
  if (!is) throw Error("malformed RNG state");
  return rng;
}

}  // namespace pic
