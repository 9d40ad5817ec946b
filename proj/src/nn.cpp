#include "pic/nn.hpp"

#include <cmath>
#include <sstream>

namespace pic::nn {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const nlohmann::json& doc) {
  const auto rows = doc.at("rows").get<Eigen::Index>(), cols = doc.at("cols").get<Eigen::Index>();
  const auto data = doc.at("data").get<std::vector<double>>();
  require(static_cast<Eigen::Index>(data.size()) == rows * cols, "matrix data has the wrong length");
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
  }
  return "none";
}

Activation activation_from_string(const std::string& name) {
  if (name == "none") return Activation::none;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "softmax") return Activation::softmax;
  throw Error("unknown activation '" + name + "'");
}

std::vector<double> Grads::flatten() const {
  std::vector<double> out;
  for (std::size_t l = 0; l < w.size(); ++l) {
    out.insert(out.end(), w[l].data(), w[l].data() + w[l].size());
    out.insert(out.end(), b[l].data(), b[l].data() + b[l].size());
  }
  return out;
}

double Grads::max_abs() const {
  double m = 0.0;
  for (std::size_t l = 0; l < w.size(); ++l) {
    if (w[l].size()) m = std::max(m, w[l].cwiseAbs().maxCoeff());
    if (b[l].size()) m = std::max(m, b[l].cwiseAbs().maxCoeff());
  }
  return m;
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double top = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - top).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

DenseNet::DenseNet(const std::vector<std::size_t>& sizes, const std::vector<Activation>& acts, Rng& rng) {
  require(sizes.size() >= 2, "DenseNet needs at least one layer");
  require(acts.size() == sizes.size() - 1, "DenseNet needs one activation per layer");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    require(sizes[l] > 0 && sizes[l + 1] > 0, "layer sizes must be positive");
    require(acts[l] != Activation::softmax || l + 2 == sizes.size(), "softmax is only allowed on the last layer");
    const auto in = static_cast<Eigen::Index>(sizes[l]), out = static_cast<Eigen::Index>(sizes[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    std::uniform_real_distribution<double> init(-bound, bound);
    Layer layer{Matrix(out, in), Vector(out), acts[l]};
    for (Eigen::Index j = 0; j < in; ++j)
      for (Eigen::Index i = 0; i < out; ++i) layer.w(i, j) = init(rng);
    for (Eigen::Index i = 0; i < out; ++i) layer.b(i) = init(rng);
    layers_.push_back(std::move(layer));
  }
}

DenseNet DenseNet::mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Activation head,
                       Rng& rng) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  std::vector<Activation> acts(hidden.size(), Activation::relu);
  acts.push_back(head);
  return DenseNet(sizes, acts, rng);
}

Matrix DenseNet::forward(const Matrix& x, Cache* cache) const {
  if (x.rows() != static_cast<Eigen::Index>(input_size())) {
    std::ostringstream os;
    os << "DenseNet::forward: input has " << x.rows() << " rows, expected " << input_size();
    throw Error(os.str());
  }
  if (cache) {
    cache->inputs.clear();
    cache->inputs.reserve(layers_.size() + 1);
    cache->inputs.push_back(x);
  }
  Matrix h = x;
  for (const auto& layer : layers_) {
    Matrix z = layer.w * h;
    z.colwise() += layer.b;
    switch (layer.act) {
      case Activation::none: break;
      case Activation::relu: z = z.cwiseMax(0.0); break;
      case Activation::tanh: z = z.array().tanh().matrix(); break;
      case Activation::softmax: z = softmax_columns(z); break;
    }
    h = std::move(z);
    if (cache) cache->inputs.push_back(h);
  }
  return h;
}

Grads DenseNet::zero_grads() const {
  Grads g;
  for (const auto& layer : layers_) {
    g.w.push_back(Matrix::Zero(layer.w.rows(), layer.w.cols()));
    g.b.push_back(Vector::Zero(layer.b.size()));
  }
  return g;
}

Matrix DenseNet::backward(const Cache& cache, const Matrix& dout, Grads& grads) const {
  require(cache.inputs.size() == layers_.size() + 1, "DenseNet::backward: cache does not match this network");
  const Matrix& y = cache.inputs.back();
  require(dout.rows() == y.rows() && dout.cols() == y.cols(), "DenseNet::backward: output gradient shape mismatch");
  if (grads.empty()) grads = zero_grads();
  Matrix g = dout;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const Matrix& out = cache.inputs[l + 1];
    switch (layer.act) {
      case Activation::none: break;
      case Activation::relu: g = (out.array() > 0.0).select(g, 0.0); break;
      case Activation::tanh: g = (g.array() * (1.0 - out.array().square())).matrix(); break;
      case Activation::softmax: {
        // J^T g = y * (g - <y, g>) per column.
        const Eigen::RowVectorXd dots = (out.array() * g.array()).colwise().sum();
        g = (out.array() * (g.rowwise() - dots).array()).matrix();
        break;
      }
    }
    grads.w[l].noalias() += g * cache.inputs[l].transpose();
    grads.b[l] += g.rowwise().sum();
    g = layer.w.transpose() * g;
  }
  return g;
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.w.size() + layer.b.size());
  return n;
}

double& DenseNet::param(std::size_t i) {
  for (auto& layer : layers_) {
    const auto nw = static_cast<std::size_t>(layer.w.size());
    if (i < nw) return layer.w.data()[i];
    i -= nw;
    const auto nb = static_cast<std::size_t>(layer.b.size());
    if (i < nb) return layer.b.data()[i];
    i -= nb;
  }
  throw Error("DenseNet::param: index out of range");
}

std::vector<double> DenseNet::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers_) {
    out.insert(out.end(), layer.w.data(), layer.w.data() + layer.w.size());
    out.insert(out.end(), layer.b.data(), layer.b.data() + layer.b.size());
  }
  return out;
}

void DenseNet::set_flat_parameters(const std::vector<double>& flat) {
  require(flat.size() == parameter_count(), "set_flat_parameters: wrong length");
  std::size_t k = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.w.size(); ++i) layer.w.data()[i] = flat[k++];
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) layer.b.data()[i] = flat[k++];
  }
}

bool DenseNet::same_architecture(const DenseNet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto &a = layers_[l], &b = other.layers_[l];
    if (a.w.rows() != b.w.rows() || a.w.cols() != b.w.cols() || a.act != b.act) return false;
  }
  return true;
}

nlohmann::json DenseNet::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : layers_)
    layers.push_back({{"activation", to_string(layer.act)},
                      {"weight", matrix_to_json(layer.w)},
                      {"bias", std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size())}});
  return {{"layers", layers}};
}

DenseNet DenseNet::from_json(const nlohmann::json& doc) {
  DenseNet net;
  for (const auto& item : doc.at("layers")) {
    Layer layer;
    layer.act = activation_from_string(item.at("activation").get<std::string>());
    layer.w = matrix_from_json(item.at("weight"));
    const auto bias = item.at("bias").get<std::vector<double>>();
    require(static_cast<Eigen::Index>(bias.size()) == layer.w.rows(), "bias length does not match weight rows");
    layer.b = Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    if (!net.layers_.empty())
      require(net.layers_.back().w.rows() == layer.w.cols(), "consecutive layer sizes are incompatible");
    net.layers_.push_back(std::move(layer));
  }
  require(!net.layers_.empty(), "network document has no layers");
  return net;
}

nlohmann::json AdamState::to_json() const {
  nlohmann::json mw = nlohmann::json::array(), vw = nlohmann::json::array(), mb = nlohmann::json::array(),
                 vb = nlohmann::json::array();
  for (std::size_t l = 0; l < m_w.size(); ++l) {
    mw.push_back(matrix_to_json(m_w[l]));
    vw.push_back(matrix_to_json(v_w[l]));
    mb.push_back(matrix_to_json(m_b[l]));
    vb.push_back(matrix_to_json(v_b[l]));
  }
  return {{"beta1", beta1}, {"beta2", beta2}, {"eps", eps}, {"step", step},
          {"m_w", mw},      {"v_w", vw},      {"m_b", mb},  {"v_b", vb}};
}

AdamState AdamState::from_json(const nlohmann::json& doc) {
  AdamState s;
  s.beta1 = doc.at("beta1").get<double>();
  s.beta2 = doc.at("beta2").get<double>();
  s.eps = doc.at("eps").get<double>();
  s.step = doc.at("step").get<std::size_t>();
  for (const auto& m : doc.at("m_w")) s.m_w.push_back(matrix_from_json(m));
  for (const auto& m : doc.at("v_w")) s.v_w.push_back(matrix_from_json(m));
  for (const auto& m : doc.at("m_b")) s.m_b.push_back(matrix_from_json(m));
  for (const auto& m : doc.at("v_b")) s.v_b.push_back(matrix_from_json(m));
  return s;
}

void adam_step(DenseNet& net, const Grads& grads, double lr, AdamState& state) {
  auto& layers = net.layers();
  require(grads.w.size() == layers.size(), "adam_step: gradient does not match the network");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!all_finite(grads.w[l])) throw Error("adam_step: non-finite gradient in layer " + std::to_string(l) + " weight");
    if (!all_finite(grads.b[l])) throw Error("adam_step: non-finite gradient in layer " + std::to_string(l) + " bias");
  }
  if (state.m_w.empty()) {
    for (const auto& layer : layers) {
      state.m_w.push_back(Matrix::Zero(layer.w.rows(), layer.w.cols()));
      state.v_w.push_back(Matrix::Zero(layer.w.rows(), layer.w.cols()));
      state.m_b.push_back(Vector::Zero(layer.b.size()));
      state.v_b.push_back(Vector::Zero(layer.b.size()));
    }
  }
  require(state.m_w.size() == layers.size(), "adam_step: optimizer state does not match the network");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].w, grads.w[l], state.m_w[l], state.v_w[l]);
    update(layers[l].b, grads.b[l], state.m_b[l], state.v_b[l]);
  }
}

void soft_update(DenseNet& target, const DenseNet& online, double sigma) {
  require(target.same_architecture(online), "soft_update: architecture mismatch");
  require(sigma >= 0.0 && sigma <= 1.0, "soft_update: sigma must lie in [0, 1]");
  auto& t = target.layers();
  const auto& o = online.layers();
  for (std::size_t l = 0; l < t.size(); ++l) {
    t[l].w = sigma * o[l].w + (1.0 - sigma) * t[l].w;
    t[l].b = sigma * o[l].b + (1.0 - sigma) * t[l].b;
  }
}

void hard_update(DenseNet& target, const DenseNet& online) {
  require(target.same_architecture(online), "hard_update: architecture mismatch");
  target = online;
}

}  // namespace pic::nn
