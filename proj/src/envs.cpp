#include "pic/envs.hpp"

#include <algorithm>
#include <cmath>

namespace pic {

void EpisodicEnv::check_step(std::size_t action) const {
  if (done_) throw Error("step called on a finished episode; call reset first");
  if (action >= action_count()) throw Error("action " + std::to_string(action) + " out of range");
}

void EpisodicEnv::finish_step(StepResult& out) {
  ++t_;
  out.raw_reward = out.reward;
  out.env_steps = 1;
  if (!out.terminal && t_ >= max_steps_) out.truncated = true;
  done_ = out.terminal || out.truncated;
}

// ---------------------------------------------------------------- LineTrack

LineTrack::LineTrack(LineTrackConfig config) : EpisodicEnv(config.episode_steps), config_(config) {
  if (config_.length < 1) throw Error("LineTrack: length must be positive");
  if (!(config_.drift_prob >= 0.0 && config_.drift_prob <= 1.0)) throw Error("LineTrack: drift_prob outside [0, 1]");
  if (!(config_.noise_std >= 0.0)) throw Error("LineTrack: noise_std must be nonnegative");
}

std::vector<double> LineTrack::observe() {
  std::normal_distribution<double> noise(0.0, 1.0);
  const double L = config_.length;
  double a = agent_ / L, b = target_ / L;
  if (config_.noise_std > 0.0) {
    a += config_.noise_std * noise(rng_);
    b += config_.noise_std * noise(rng_);
  }
  return {a, b};
}

std::vector<double> LineTrack::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  std::uniform_int_distribution<int> pos(0, config_.length);
  agent_ = pos(rng_);
  target_ = pos(rng_);
  begin_episode();
  return observe();
}

void LineTrack::set_positions(int agent, int target) {
  agent_ = std::clamp(agent, 0, config_.length);
  target_ = std::clamp(target, 0, config_.length);
}

StepResult LineTrack::step(std::size_t action) {
  check_step(action);
  StepResult out;
  agent_ = std::clamp(agent_ + static_cast<int>(action) - 1, 0, config_.length);
  const double gap = std::abs(agent_ - target_) / static_cast<double>(config_.length);
  out.reward = std::clamp(config_.reward_scale * (1.0 - gap), 0.0, 1.0);
  if (config_.drift_prob > 0.0 && uniform01(rng_) < config_.drift_prob)
    target_ = std::clamp(target_ + (uniform01(rng_) < 0.5 ? -1 : 1), 0, config_.length);
  out.state = observe();
  out.executed_actions = {action};
  finish_step(out);
  return out;
}

// --------------------------------------------------------------- TwoWayMini

TwoWayMiniConfig TwoWayMiniConfig::preset(const std::string& complexity) {
  TwoWayMiniConfig c;
  if (complexity == "simple") return c;
  if (complexity == "complex") {
    c.slow_spawn_rate *= 2.0;
    c.oncoming_spawn_rate *= 2.0;
    return c;
  }
  throw Error("unknown complexity '" + complexity + "' (expected simple or complex)");
}

TwoWayMini::TwoWayMini(TwoWayMiniConfig config) : EpisodicEnv(config.episode_steps), config_(config) {
  if (config_.view_ahead < 4 || config_.view_behind < 1) throw Error("TwoWayMini: view too short");
  if (config_.nearest_k == 0) throw Error("TwoWayMini: nearest_k must be positive");
}

bool TwoWayMini::free_near(int lane, long x, long gap) const {
  return std::none_of(vehicles_.begin(), vehicles_.end(),
                      [&](const Vehicle& v) { return v.lane == lane && std::abs(v.x - x) < gap; });
}

void TwoWayMini::spawn(int lane, long x) {
  const int speed = lane == 0 ? config_.slow_speed : -config_.oncoming_speed;
  vehicles_.push_back({lane, x, speed});
  ++spawned_;
}

std::vector<double> TwoWayMini::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  lane_ = 0;
  speed_ = 2;
  x_ = 0;
  left_budget_ = static_cast<std::size_t>(std::llround(config_.left_lane_constraint *
                                                       static_cast<double>(config_.left_lane_unit_steps)));
  vehicles_.clear();
  spawned_ = despawned_ = 0;
  // Initial traffic: the same spawn process seeded along the visible road.
  for (long r = 8; r <= config_.view_ahead; r += 4) {
    if (uniform01(rng_) < 4.0 * config_.slow_spawn_rate && free_near(0, r, 3)) spawn(0, r);
    if (uniform01(rng_) < 4.0 * config_.oncoming_spawn_rate && free_near(1, r, 3)) spawn(1, r);
  }
  begin_episode();
  return state_vector();
}

void TwoWayMini::set_scene(int lane, int speed, std::vector<Vehicle> vehicles) {
  lane_ = std::clamp(lane, 0, 1);
  speed_ = std::clamp(speed, 1, 3);
  vehicles_ = std::move(vehicles);
  for (auto& v : vehicles_) v.x += x_;
  spawned_ = vehicles_.size();
  despawned_ = 0;
}

StepResult TwoWayMini::step(std::size_t action) {
  check_step(action);
  StepResult out;
  out.executed_actions = {action};
  switch (action) {
    case 1: lane_ = 1; break;
    case 2: lane_ = 0; break;
    case 3: speed_ = std::min(speed_ + 1, 3); break;
    case 4: speed_ = std::max(speed_ - 1, 1); break;
    default: break;
  }
  // Collision: a vehicle in the ego lane that is level with the ego or that
  // the relative motion carries through the ego's cell.
  bool collided = false;
  const long ego_next = x_ + speed_;
  for (const auto& v : vehicles_) {
    if (v.lane != lane_) continue;
    const long before = v.x - x_, after = v.x + v.speed - ego_next;
    if (before == 0 || after == 0 || (before > 0) != (after > 0)) collided = true;
  }
  x_ = ego_next;
  for (auto& v : vehicles_) v.x += v.speed;

  if (collided) {
    out.reward = config_.collision_reward;
    out.terminal = true;
  } else {
    out.reward = config_.high_velocity_reward * (speed_ - 1) / 2.0;
    if (lane_ == 1 && left_budget_ > 0) {
      out.reward += config_.left_lane_reward;
      --left_budget_;
    }
  }

  const auto before = vehicles_.size();
  std::erase_if(vehicles_, [&](const Vehicle& v) {
    const long r = v.x - x_;
    return r < -config_.view_behind || r > config_.view_ahead;
  });
  despawned_ += before - vehicles_.size();
  const long edge = x_ + config_.view_ahead;
  if (uniform01(rng_) < config_.slow_spawn_rate && free_near(0, edge, 3)) spawn(0, edge);
  if (uniform01(rng_) < config_.oncoming_spawn_rate && free_near(1, edge, 3)) spawn(1, edge);

  out.state = state_vector();
  finish_step(out);
  return out;
}

std::vector<double> TwoWayMini::state_vector() const {
  std::vector<double> s(state_dim(), 0.0);
  s[0] = lane_;
  s[1] = (speed_ - 1) / 2.0;
  s[2] = config_.left_lane_unit_steps ? static_cast<double>(left_budget_) / config_.left_lane_unit_steps : 0.0;
  std::vector<const Vehicle*> order;
  for (const auto& v : vehicles_) order.push_back(&v);
  std::sort(order.begin(), order.end(), [&](const Vehicle* a, const Vehicle* b) {
    const long da = std::abs(a->x - x_), db = std::abs(b->x - x_);
    if (da != db) return da < db;
    if (a->lane != b->lane) return a->lane < b->lane;
    return a->x < b->x;
  });
  for (std::size_t i = 0; i < std::min(order.size(), config_.nearest_k); ++i) {
    const auto& v = *order[i];
    double* slot = s.data() + 3 + 4 * i;
    slot[0] = 1.0;
    slot[1] = v.lane;
    slot[2] = static_cast<double>(v.x - x_) / config_.view_ahead;
    slot[3] = v.speed / 3.0;
  }
  return s;
}

// ----------------------------------------------------------------- wrappers

std::size_t RepetitionActionSpace::encode(std::size_t base, std::size_t repeat_index) const {
  if (base >= base_actions || repeat_index >= repeats.size()) throw Error("repetition action out of range");
  return base + base_actions * repeat_index;
}

std::pair<std::size_t, std::size_t> RepetitionActionSpace::decode(std::size_t index) const {
  if (index >= size()) throw Error("augmented action " + std::to_string(index) + " out of range");
  return {index % base_actions, repeats[index / base_actions]};
}

RepetitionWrapper::RepetitionWrapper(std::unique_ptr<Env> base, RepetitionActionSpace space, double gamma)
    : base_(std::move(base)), space_(std::move(space)), gamma_(gamma) {
  space_.base_actions = base_->action_count();
  if (space_.repeats.empty()) throw Error("repetition set must be nonempty");
  for (auto k : space_.repeats)
    if (k == 0) throw Error("repetition counts must be positive");
}

RepetitionWrapper::RepetitionWrapper(const RepetitionWrapper& other)
    : base_(other.base_->clone()), space_(other.space_), gamma_(other.gamma_) {}

StepResult RepetitionWrapper::step(std::size_t action) {
  const auto [a, k] = space_.decode(action);
  StepResult out;
  out.env_steps = 0;
  double discount = 1.0;
  for (std::size_t j = 0; j < k; ++j) {
    auto r = base_->step(a);
    out.reward += discount * r.reward;
    out.raw_reward += r.raw_reward;
    discount *= gamma_;
    out.env_steps += r.env_steps;
    out.executed_actions.insert(out.executed_actions.end(), r.executed_actions.begin(), r.executed_actions.end());
    out.state = std::move(r.state);
    out.terminal = r.terminal;
    out.truncated = r.truncated;
    if (r.done()) break;
  }
  return out;
}

PenaltyWrapper::PenaltyWrapper(std::unique_ptr<Env> base, double penalty) : base_(std::move(base)), penalty_(penalty) {}

PenaltyWrapper::PenaltyWrapper(const PenaltyWrapper& other)
    : base_(other.base_->clone()), penalty_(other.penalty_), training_(other.training_), prev_(other.prev_) {}

std::vector<double> PenaltyWrapper::reset(std::uint64_t seed) {
  prev_.reset();
  return base_->reset(seed);
}

StepResult PenaltyWrapper::step(std::size_t action) {
  auto out = base_->step(action);
  if (training_)
    for (std::size_t a : out.executed_actions) {
      if (prev_ && *prev_ != a) out.reward += penalty_;
      prev_ = a;
    }
  else if (!out.executed_actions.empty())
    prev_ = out.executed_actions.back();
  return out;
}

std::unique_ptr<Env> make_env(const std::string& name, const std::string& complexity) {
  if (name == "twoway-mini") return std::make_unique<TwoWayMini>(TwoWayMiniConfig::preset(complexity));
  if (name == "linetrack") {
    LineTrackConfig c;
    if (complexity == "complex")
      c.drift_prob *= 2.0;
    else if (complexity != "simple")
      throw Error("unknown complexity '" + complexity + "' (expected simple or complex)");
    return std::make_unique<LineTrack>(c);
  }
  throw Error("unknown environment '" + name + "' (expected linetrack or twoway-mini)");
}

}  // namespace pic
