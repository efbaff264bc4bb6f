#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "opal/rng.hpp"

namespace opal {

// Per-unit multipliers for the last hidden layer: 0 for dropped units and
// 1 / (1 - rate) for kept ones.
using DropoutMask = Eigen::VectorXd;

// Fully connected ReLU network with a linear output layer and hand-written
// backpropagation. Inputs are columns of a (input_dim x batch) matrix and are
// normalized by a fixed (not trained) affine map before the first layer.
//
// Parameters live in one flat buffer, layer by layer: W (out x in,
// column-major) followed by b (out).
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // [0] = normalized input
  };

  Mlp() = default;
  // layer_sizes = {input, hidden..., output}; dropout applies to the last
  // hidden layer only and needs at least one hidden layer.
  explicit Mlp(std::vector<std::size_t> layer_sizes, double dropout_rate = 0.0);

  // He-uniform weights, zero biases. With zero_output_layer the final layer
  // starts at exactly zero, so the network outputs 0 for every input.
  void init(Rng& rng, bool zero_output_layer = false);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t layer_count() const { return sizes_.size() - 1; }
  double dropout_rate() const { return dropout_rate_; }
  void set_dropout_rate(double rate);

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  void set_input_normalization(std::vector<double> shift, std::vector<double> scale);
  const std::vector<double>& input_shift() const { return shift_; }
  const std::vector<double>& input_scale() const { return scale_; }

  DropoutMask sample_mask(Rng& rng) const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, const DropoutMask* mask = nullptr) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, const DropoutMask* mask, Cache& cache) const;

  // Adds d(loss)/d(params) to grad, given d(loss)/d(output) for the batch
  // that produced cache. mask must be the one used in the forward pass.
  void backward(const Cache& cache, const Eigen::MatrixXd& d_output, const DropoutMask* mask,
                std::span<double> grad) const;

  bool operator==(const Mlp&) const = default;

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  Eigen::Map<const Eigen::MatrixXd> weights(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::vector<double> shift_;
  std::vector<double> scale_;
  double dropout_rate_ = 0.0;
};

nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

// Column-stacks states into an (dim x n) matrix.
Eigen::MatrixXd stack_states(std::span<const std::vector<double>> states);

// Mean and 1/std per coordinate (std floored at 1e-6).
void fit_input_normalization(Mlp& net, std::span<const std::vector<double>> states);

struct OptimizerConfig {
  enum class Kind { MOMENTUM, ADAM };
  Kind kind = Kind::MOMENTUM;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t param_count);
  void step(std::vector<double>& params, std::span<const double> grad);

 private:
  OptimizerConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

}  // namespace opal
