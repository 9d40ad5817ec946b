#pragma once

// Small fully connected networks with hand-written reverse mode, Adam, and
// target-network updates. Batches are column-major: one sample per column.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pic/common.hpp"

namespace pic::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { none, relu, tanh, softmax };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

struct Layer {
  Matrix w;  // out x in
  Vector b;
  Activation act = Activation::none;
};

/// Layer inputs recorded by forward; inputs[l] feeds layer l and
/// inputs.back() is the network output.
struct Cache {
  std::vector<Matrix> inputs;
};

/// Gradients shaped like a network's parameters.
struct Grads {
  std::vector<Matrix> w;
  std::vector<Vector> b;

  bool empty() const { return w.empty(); }
  /// Same order as DenseNet::param: per layer, weights column-major then bias.
  std::vector<double> flatten() const;
  double max_abs() const;
};

class DenseNet {
 public:
  DenseNet() = default;
  /// sizes[0] is the input width; acts has one entry per layer.
  DenseNet(const std::vector<std::size_t>& sizes, const std::vector<Activation>& acts, Rng& rng);

  /// in -> hidden... -> out with relu hidden layers.
  static DenseNet mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Activation head,
                      Rng& rng);

  std::size_t input_size() const { return layers_.front().w.cols(); }
  std::size_t output_size() const { return layers_.back().w.rows(); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;

  /// Accumulates d loss / d params into `grads` (zeroed first if empty) and
  /// returns d loss / d input. `dout` is d loss / d output.
  Matrix backward(const Cache& cache, const Matrix& dout, Grads& grads) const;

  Grads zero_grads() const;

  std::size_t parameter_count() const;
  double& param(std::size_t i);
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(const std::vector<double>& flat);

  bool same_architecture(const DenseNet& other) const;

  nlohmann::json to_json() const;
  static DenseNet from_json(const nlohmann::json& doc);

 private:
  std::vector<Layer> layers_;
};

/// Column-wise softmax with max subtraction.
Matrix softmax_columns(const Matrix& logits);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Matrix> m_w, v_w;
  std::vector<Vector> m_b, v_b;

  nlohmann::json to_json() const;
  static AdamState from_json(const nlohmann::json& doc);
};

/// One bias-corrected Adam step. Throws naming the tensor if any gradient is
/// not finite; parameters are untouched in that case.
void adam_step(DenseNet& net, const Grads& grads, double lr, AdamState& state);

/// target <- sigma online + (1 - sigma) target.
void soft_update(DenseNet& target, const DenseNet& online, double sigma);
void hard_update(DenseNet& target, const DenseNet& online);

/// Copies every `interval` updates: at counts interval, 2 interval, ...
struct HardUpdateSchedule {
  std::size_t interval = 10000;
  bool due(std::size_t update_count) const { return update_count > 0 && update_count % interval == 0; }
};

}  // namespace pic::nn
