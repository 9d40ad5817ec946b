#include "pic/nsac.hpp"

#include <cmath>

#include "pic/mixed_policy.hpp"

namespace pic {
namespace {

using nn::Matrix;
using nn::Vector;

Matrix column(std::span<const double> x) {
  return Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
}

double floor_log(double p) { return std::log(std::max(p, kLogFloor)); }

/// sum_a p (q - alpha log p) per column.
Vector soft_value(const Matrix& probs, const Matrix& q, double alpha) {
  Vector v(probs.cols());
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    double acc = 0.0;
    for (Eigen::Index a = 0; a < probs.rows(); ++a) {
      const double p = probs(a, j);
      acc += p * (q(a, j) - alpha * floor_log(p));
    }
    v(j) = acc;
  }
  return v;
}

/// d/dp of sum_a p (alpha log_f p - q): alpha (log_f p + [p > floor]) - q.
double policy_loss_grad(double p, double q, double alpha) {
  return alpha * (floor_log(p) + (p > kLogFloor ? 1.0 : 0.0)) - q;
}

/// Regression of Q(x)[a_j] onto y: returns the mean 0.5 residual^2 and fills grads.
double regress(const nn::DenseNet& net, const Matrix& x, const std::vector<std::size_t>& actions, const Vector& y,
               nn::Grads& grads) {
  nn::Cache cache;
  const Matrix q = net.forward(x, &cache);
  Matrix dq = Matrix::Zero(q.rows(), q.cols());
  const double n = static_cast<double>(actions.size());
  double loss = 0.0;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    const auto a = static_cast<Eigen::Index>(actions[static_cast<std::size_t>(j)]);
    const double diff = q(a, j) - y(j);
    loss += 0.5 * diff * diff;
    dq(a, j) = diff / n;
  }
  grads = net.zero_grads();
  net.backward(cache, dq, grads);
  return loss / n;
}

void check_finite(double loss, const char* name) {
  if (!std::isfinite(loss)) throw Error(std::string(name) + " is not finite");
}

void check_batch(const Batch& batch) {
  if (batch.size() == 0) throw Error("loss requires a nonempty batch");
}

}  // namespace

// ------------------------------------------------------------------ SacCore

SacCore::SacCore(std::size_t state_dim, std::size_t n_actions_, const SacConfig& cfg, std::uint64_t seed)
    : config(cfg), n_actions(n_actions_) {
  auto r_actor = derive_rng(seed, kActorId), r1 = derive_rng(seed, kCritic1Id), r2 = derive_rng(seed, kCritic2Id);
  actor = nn::DenseNet::mlp(state_dim, config.hidden, n_actions, nn::Activation::softmax, r_actor);
  critic1 = nn::DenseNet::mlp(state_dim, config.hidden, n_actions, nn::Activation::none, r1);
  critic2 = nn::DenseNet::mlp(state_dim, config.hidden, n_actions, nn::Activation::none, r2);
  target1 = critic1;
  target2 = critic2;
}

LossResult SacCore::critic_loss(const Batch& batch) const {
  check_batch(batch);
  const Matrix pi_next = actor.forward(batch.next_state);
  const Matrix q_next = target1.forward(batch.next_state).cwiseMin(target2.forward(batch.next_state));
  const Vector v_next = soft_value(pi_next, q_next, config.alpha);
  const Vector y = batch.reward + config.gamma * batch.not_done.cwiseProduct(v_next);
  LossResult out;
  out.loss = regress(critic1, batch.state, batch.action, y, out.critic1) +
             regress(critic2, batch.state, batch.action, y, out.critic2);
  check_finite(out.loss, "core critic loss");
  return out;
}

LossResult SacCore::actor_loss(const Batch& batch) const {
  check_batch(batch);
  nn::Cache cache;
  const Matrix pi = actor.forward(batch.state, &cache);
  const Matrix q = critic1.forward(batch.state).cwiseMin(critic2.forward(batch.state));
  const double n = static_cast<double>(batch.size());
  Matrix dpi(pi.rows(), pi.cols());
  LossResult out;
  for (Eigen::Index j = 0; j < pi.cols(); ++j)
    for (Eigen::Index a = 0; a < pi.rows(); ++a) {
      const double p = pi(a, j);
      out.loss += p * (config.alpha * floor_log(p) - q(a, j));
      dpi(a, j) = policy_loss_grad(p, q(a, j), config.alpha) / n;
    }
  out.loss /= n;
  check_finite(out.loss, "core actor loss");
  out.actor = actor.zero_grads();
  actor.backward(cache, dpi, out.actor);
  return out;
}

LossRecord SacCore::update(const Batch& batch) {
  LossRecord rec;
  const auto critic = critic_loss(batch);
  nn::adam_step(critic1, critic.critic1, config.lr_critic, adam_critic1);
  nn::adam_step(critic2, critic.critic2, config.lr_critic, adam_critic2);
  rec.core_q = critic.loss;
  const auto pi = actor_loss(batch);
  nn::adam_step(actor, pi.actor, config.lr_actor, adam_actor);
  rec.core_pi = pi.loss;
  nn::soft_update(target1, critic1, config.sigma);
  nn::soft_update(target2, critic2, config.sigma);
  return rec;
}

nlohmann::json SacCore::to_json() const {
  return {{"actor", actor.to_json()},
          {"critic1", critic1.to_json()},
          {"critic2", critic2.to_json()},
          {"target1", target1.to_json()},
          {"target2", target2.to_json()},
          {"adam_actor", adam_actor.to_json()},
          {"adam_critic1", adam_critic1.to_json()},
          {"adam_critic2", adam_critic2.to_json()}};
}

void SacCore::from_json(const nlohmann::json& doc) {
  const auto load = [&](const char* key, nn::DenseNet& net) {
    auto loaded = nn::DenseNet::from_json(doc.at(key));
    if (!loaded.same_architecture(net)) throw Error(std::string("checkpoint network '") + key + "' has the wrong shape");
    net = std::move(loaded);
  };
  load("actor", actor);
  load("critic1", critic1);
  load("critic2", critic2);
  load("target1", target1);
  load("target2", target2);
  adam_actor = nn::AdamState::from_json(doc.at("adam_actor"));
  adam_critic1 = nn::AdamState::from_json(doc.at("adam_critic1"));
  adam_critic2 = nn::AdamState::from_json(doc.at("adam_critic2"));
}

std::uint64_t SacCore::hash(std::uint64_t h) const {
  for (const auto* net : {&actor, &critic1, &critic2, &target1, &target2}) h = hash_net(*net, h);
  for (const auto* st : {&adam_actor, &adam_critic1, &adam_critic2}) h = fnv1a(&st->step, sizeof(st->step), h);
  return h;
}

// ----------------------------------------------------------------- SacAgent

SacAgent::SacAgent(std::size_t state_dim, std::size_t n_actions, const SacConfig& config, std::uint64_t seed)
    : core(state_dim, n_actions, config, seed), train_rng_(derive_rng(seed, kTrainStream)) {
  buffer_ = ReplayBuffer(config.buffer_capacity, state_dim);
}

std::size_t SacAgent::act(std::span<const double> state, PrevAction, Rng& rng, ActMode mode) {
  const Vector pi = core.policy(column(state));
  const std::span<const double> probs(pi.data(), static_cast<std::size_t>(pi.size()));
  return mode == ActMode::greedy ? argmax(probs) : sample_categorical(probs, rng);
}

std::optional<LossRecord> SacAgent::train_step(std::size_t env_step) {
  if (buffer_.size() < core.config.batch_size || env_step % core.config.update_every != 0) return std::nullopt;
  return core.update(buffer_.sample(core.config.batch_size, train_rng_));
}

nlohmann::json SacAgent::checkpoint(bool include_buffer) const {
  nlohmann::json doc{{"algo", "sac"}, {"core", core.to_json()}, {"train_rng", rng_to_json(train_rng_)}};
  if (include_buffer) doc["buffer"] = buffer_.to_json();
  return doc;
}

void SacAgent::restore(const nlohmann::json& doc) {
  core.from_json(doc.at("core"));
  train_rng_ = rng_from_json(doc.at("train_rng"));
  if (doc.contains("buffer")) buffer_ = ReplayBuffer::from_json(doc.at("buffer"));
}

std::uint64_t SacAgent::state_checksum() const {
  auto h = core.hash(fnv1a(nullptr, 0));
  const auto n = buffer_.size();
  h = fnv1a(&n, sizeof(n), h);
  const auto rng = rng_to_json(train_rng_).get<std::string>();
  return fnv1a(rng.data(), rng.size(), h);
}

// ---------------------------------------------------------------- NsacAgent

NsacAgent::NsacAgent(std::size_t state_dim, std::size_t n_actions, const NsacConfig& cfg, std::uint64_t seed)
    : config(cfg), core(state_dim, n_actions, cfg.core, seed), train_rng_(derive_rng(seed, kTrainStream)) {
  if (!(config.mu0 >= 0.0 && config.mu0 <= 1.0)) throw Error("mu0 must lie in [0, 1]");
  if (config.mu_clamp && !(*config.mu_clamp >= 0.0 && *config.mu_clamp <= 1.0))
    throw Error("mu clamp must lie in [0, 1]");
  const std::size_t in = state_dim + n_actions;
  auto rp = derive_rng(seed, kPicId), r1 = derive_rng(seed, kMix1Id), r2 = derive_rng(seed, kMix2Id);
  pic = nn::DenseNet::mlp(in, config.core.hidden, 1, nn::Activation::tanh, rp);
  mix1 = nn::DenseNet::mlp(in, config.core.hidden, n_actions, nn::Activation::none, r1);
  mix2 = nn::DenseNet::mlp(in, config.core.hidden, n_actions, nn::Activation::none, r2);
  mix_target1 = mix1;
  mix_target2 = mix2;
  buffer_ = ReplayBuffer(config.core.buffer_capacity, state_dim);
}

Vector NsacAgent::mu(const Matrix& state_prev) const {
  if (config.mu_clamp) return Vector::Constant(state_prev.cols(), *config.mu_clamp);
  const Matrix t = pic.forward(state_prev);
  const double mu0 = config.mu0;
  Vector out(t.cols());
  for (Eigen::Index j = 0; j < t.cols(); ++j) out(j) = mu0 + (1.0 - mu0) * unit_from_tanh(t(0, j));
  return out;
}

Matrix NsacAgent::mixed_policy(const Matrix& states, std::span<const PrevAction> prev) const {
  const Matrix pi = core.policy(states);
  const Vector m = mu(state_prev_input(states, prev, core.n_actions));
  Matrix out(pi.rows(), pi.cols());
  for (Eigen::Index j = 0; j < pi.cols(); ++j)
    mix_into(std::span<const double>(pi.col(j).data(), pi.rows()), prev[static_cast<std::size_t>(j)], m(j),
             std::span<double>(out.col(j).data(), out.rows()));
  return out;
}

std::optional<double> NsacAgent::inertia(std::span<const double> state, PrevAction prev) const {
  if (!prev) return std::nullopt;
  return mu(state_prev_input(column(state), std::span<const PrevAction>(&prev, 1), core.n_actions))(0);
}

std::size_t NsacAgent::act(std::span<const double> state, PrevAction prev, Rng& rng, ActMode mode) {
  const Matrix s = column(state);
  const Vector pi = core.policy(s);
  Vector probs = pi;
  if (prev) {
    const double m = mu(state_prev_input(s, std::span<const PrevAction>(&prev, 1), core.n_actions))(0);
    mix_into(std::span<const double>(pi.data(), pi.size()), prev, m, std::span<double>(probs.data(), probs.size()));
  }
  const std::span<const double> view(probs.data(), static_cast<std::size_t>(probs.size()));
  return mode == ActMode::greedy ? argmax(view) : sample_categorical(view, rng);
}

LossResult NsacAgent::mix_critic_loss(const Batch& batch) const {
  check_batch(batch);
  std::vector<PrevAction> next_prev(batch.action.begin(), batch.action.end());
  const Matrix mixed_next = mixed_policy(batch.next_state, next_prev);
  const Matrix x_next = state_prev_input(batch.next_state, next_prev, core.n_actions);
  const Matrix q_next = mix_target1.forward(x_next).cwiseMin(mix_target2.forward(x_next));
  const Vector v_next = soft_value(mixed_next, q_next, config.alpha_mix);
  const Vector y = batch.reward + config.core.gamma * batch.not_done.cwiseProduct(v_next);
  const Matrix x = state_prev_input(batch.state, batch.prev, core.n_actions);
  LossResult out;
  out.loss = regress(mix1, x, batch.action, y, out.mix1) + regress(mix2, x, batch.action, y, out.mix2);
  check_finite(out.loss, "mixed critic loss");
  return out;
}

LossResult NsacAgent::pic_loss(const Batch& batch) const {
  check_batch(batch);
  const Matrix x = state_prev_input(batch.state, batch.prev, core.n_actions);
  const Matrix pi = core.policy(batch.state);
  const Matrix q = mix1.forward(x).cwiseMin(mix2.forward(x));
  nn::Cache cache;
  const Matrix t = pic.forward(x, &cache);
  const double n = static_cast<double>(batch.size()), mu0 = config.mu0;
  const auto A = static_cast<Eigen::Index>(core.n_actions);
  Matrix dt = Matrix::Zero(1, t.cols());
  Vector mixed(A);
  LossResult out;
  for (Eigen::Index j = 0; j < t.cols(); ++j) {
    const auto& prev = batch.prev[static_cast<std::size_t>(j)];
    const double m = config.mu_clamp ? *config.mu_clamp : mu0 + (1.0 - mu0) * unit_from_tanh(t(0, j));
    mix_into(std::span<const double>(pi.col(j).data(), A), prev, m, std::span<double>(mixed.data(), A));
    double dmu = 0.0;
    for (Eigen::Index b = 0; b < A; ++b) {
      const double p = mixed(b);
      out.loss += p * (config.alpha_mix * floor_log(p) - q(b, j));
      if (prev) {
        const double onehot = static_cast<Eigen::Index>(*prev) == b ? 1.0 : 0.0;
        dmu += policy_loss_grad(p, q(b, j), config.alpha_mix) * (onehot - pi(b, j));
      }
    }
    // d mu / d tanh = (1 - mu0) / 2; a clamped weight has no gradient.
    if (prev && !config.mu_clamp) dt(0, j) = dmu * 0.5 * (1.0 - mu0) / n;
  }
  out.loss /= n;
  check_finite(out.loss, "inertia loss");
  out.pic = pic.zero_grads();
  pic.backward(cache, dt, out.pic);
  return out;
}

LossRecord NsacAgent::outer_update(const Batch& batch) {
  LossRecord rec;
  const auto critic = mix_critic_loss(batch);
  nn::adam_step(mix1, critic.mix1, config.lr_mix_critic, adam_mix1);
  nn::adam_step(mix2, critic.mix2, config.lr_mix_critic, adam_mix2);
  rec.mix_q = critic.loss;
  const auto p = pic_loss(batch);
  nn::adam_step(pic, p.pic, config.lr_pic, adam_pic);
  rec.pic = p.loss;
  nn::soft_update(mix_target1, mix1, config.sigma_mix);
  nn::soft_update(mix_target2, mix2, config.sigma_mix);
  return rec;
}

std::optional<LossRecord> NsacAgent::train_step(std::size_t env_step) {
  if (buffer_.size() < config.core.batch_size) return std::nullopt;
  const bool inner = env_step % config.core.update_every == 0;
  const bool outer = config.outer_updates && env_step % config.mix_update_every == 0;
  if (!inner && !outer) return std::nullopt;
  const Batch batch = buffer_.sample(config.core.batch_size, train_rng_);
  LossRecord rec;
  if (inner) rec = core.update(batch);
  if (outer) {
    const auto o = outer_update(batch);
    rec.mix_q = o.mix_q;
    rec.pic = o.pic;
  }
  return rec;
}

nlohmann::json NsacAgent::checkpoint(bool include_buffer) const {
  nlohmann::json doc{{"algo", "nsac"},
                     {"core", core.to_json()},
                     {"pic", pic.to_json()},
                     {"mix1", mix1.to_json()},
                     {"mix2", mix2.to_json()},
                     {"mix_target1", mix_target1.to_json()},
                     {"mix_target2", mix_target2.to_json()},
                     {"adam_pic", adam_pic.to_json()},
                     {"adam_mix1", adam_mix1.to_json()},
                     {"adam_mix2", adam_mix2.to_json()},
                     {"train_rng", rng_to_json(train_rng_)}};
  if (include_buffer) doc["buffer"] = buffer_.to_json();
  return doc;
}

void NsacAgent::restore(const nlohmann::json& doc) {
  core.from_json(doc.at("core"));
  const auto load = [&](const char* key, nn::DenseNet& net) {
    auto loaded = nn::DenseNet::from_json(doc.at(key));
    if (!loaded.same_architecture(net)) throw Error(std::string("checkpoint network '") + key + "' has the wrong shape");
    net = std::move(loaded);
  };
  load("pic", pic);
  load("mix1", mix1);
  load("mix2", mix2);
  load("mix_target1", mix_target1);
  load("mix_target2", mix_target2);
  adam_pic = nn::AdamState::from_json(doc.at("adam_pic"));
  adam_mix1 = nn::AdamState::from_json(doc.at("adam_mix1"));
  adam_mix2 = nn::AdamState::from_json(doc.at("adam_mix2"));
  train_rng_ = rng_from_json(doc.at("train_rng"));
  if (doc.contains("buffer")) buffer_ = ReplayBuffer::from_json(doc.at("buffer"));
}

std::uint64_t NsacAgent::state_checksum() const {
  auto h = core.hash(fnv1a(nullptr, 0));
  for (const auto* net : {&pic, &mix1, &mix2, &mix_target1, &mix_target2}) h = hash_net(*net, h);
  for (const auto* st : {&adam_pic, &adam_mix1, &adam_mix2}) h = fnv1a(&st->step, sizeof(st->step), h);
  const auto n = buffer_.size();
  h = fnv1a(&n, sizeof(n), h);
  const auto rng = rng_to_json(train_rng_).get<std::string>();
  return fnv1a(rng.data(), rng.size(), h);
}

}  // namespace pic
