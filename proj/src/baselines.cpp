#include "pic/baselines.hpp"

#include <cmath>

namespace pic {

DqnAgent::DqnAgent(std::size_t state_dim, std::size_t n_actions_, const DqnConfig& cfg, std::uint64_t seed)
    : config(cfg), n_actions(n_actions_), train_rng_(derive_rng(seed, kTrainStream)) {
  if (config.target_interval == 0) throw Error("target interval must be positive");
  auto r = derive_rng(seed, kDqnId);
  q = nn::DenseNet::mlp(state_dim, config.hidden, n_actions, nn::Activation::none, r);
  target = q;
  buffer_ = ReplayBuffer(config.buffer_capacity, state_dim);
}

std::size_t DqnAgent::act(std::span<const double> state, PrevAction, Rng& rng, ActMode mode) {
  if (mode == ActMode::sample && uniform01(rng) < epsilon())
    return std::uniform_int_distribution<std::size_t>(0, n_actions - 1)(rng);
  const nn::Vector values =
      q.forward(Eigen::Map<const nn::Vector>(state.data(), static_cast<Eigen::Index>(state.size())));
  return argmax(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

LossResult DqnAgent::td_loss(const Batch& batch) const {
  if (batch.size() == 0) throw Error("loss requires a nonempty batch");
  const nn::Vector next_max = target.forward(batch.next_state).colwise().maxCoeff().transpose();
  const nn::Vector y = batch.reward + config.gamma * batch.not_done.cwiseProduct(next_max);
  nn::Cache cache;
  const nn::Matrix values = q.forward(batch.state, &cache);
  nn::Matrix dq = nn::Matrix::Zero(values.rows(), values.cols());
  const double n = static_cast<double>(batch.size());
  LossResult out;
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    const auto a = static_cast<Eigen::Index>(batch.action[static_cast<std::size_t>(j)]);
    const double diff = values(a, j) - y(j);
    out.loss += 0.5 * diff * diff;
    dq(a, j) = diff / n;
  }
  out.loss /= n;
  if (!std::isfinite(out.loss)) throw Error("TD loss is not finite");
  out.critic1 = q.zero_grads();
  q.backward(cache, dq, out.critic1);
  return out;
}

double DqnAgent::update(const Batch& batch) {
  const auto loss = td_loss(batch);
  nn::adam_step(q, loss.critic1, config.lr, adam);
  ++updates_;
  if (nn::HardUpdateSchedule{config.target_interval}.due(updates_)) nn::hard_update(target, q);
  return loss.loss;
}

std::optional<LossRecord> DqnAgent::train_step(std::size_t env_step) {
  if (buffer_.size() < config.batch_size || env_step % config.update_every != 0) return std::nullopt;
  LossRecord rec;
  rec.core_q = update(buffer_.sample(config.batch_size, train_rng_));
  return rec;
}

nlohmann::json DqnAgent::checkpoint(bool include_buffer) const {
  nlohmann::json doc{{"algo", "dqn"},
                     {"q", q.to_json()},
                     {"target", target.to_json()},
                     {"adam", adam.to_json()},
                     {"updates", updates_},
                     {"train_rng", rng_to_json(train_rng_)}};
  if (include_buffer) doc["buffer"] = buffer_.to_json();
  return doc;
}

void DqnAgent::restore(const nlohmann::json& doc) {
  auto loaded_q = nn::DenseNet::from_json(doc.at("q"));
  auto loaded_t = nn::DenseNet::from_json(doc.at("target"));
  if (!loaded_q.same_architecture(q) || !loaded_t.same_architecture(target))
    throw Error("checkpoint network has the wrong shape");
  q = std::move(loaded_q);
  target = std::move(loaded_t);
  adam = nn::AdamState::from_json(doc.at("adam"));
  updates_ = doc.at("updates").get<std::size_t>();
  train_rng_ = rng_from_json(doc.at("train_rng"));
  if (doc.contains("buffer")) buffer_ = ReplayBuffer::from_json(doc.at("buffer"));
}

std::uint64_t DqnAgent::state_checksum() const {
  auto h = hash_net(target, hash_net(q, fnv1a(nullptr, 0)));
  h = fnv1a(&updates_, sizeof(updates_), h);
  h = fnv1a(&adam.step, sizeof(adam.step), h);
  const auto n = buffer_.size();
  h = fnv1a(&n, sizeof(n), h);
  const auto rng = rng_to_json(train_rng_).get<std::string>();
  return fnv1a(rng.data(), rng.size(), h);
}

}  // namespace pic
