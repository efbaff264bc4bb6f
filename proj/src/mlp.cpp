#include "opal/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace opal {

Mlp::Mlp(std::vector<std::size_t> layer_sizes, double dropout_rate)
    : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("an MLP needs input and output sizes");
  for (std::size_t s : sizes_) {
    if (s == 0) throw std::invalid_argument("layer sizes must be positive");
  }
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(offset);
    offset += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
  params_.assign(offset, 0.0);
  shift_.assign(sizes_.front(), 0.0);
  scale_.assign(sizes_.front(), 1.0);
  set_dropout_rate(dropout_rate);
}

void Mlp::set_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (rate > 0.0 && sizes_.size() < 3) {
    throw std::invalid_argument("dropout needs at least one hidden layer");
  }
  dropout_rate_ = rate;
}

void Mlp::init(Rng& rng, bool zero_output_layer) {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const bool zero = zero_output_layer && l + 1 == layer_count();
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    double* w = params_.data() + offsets_[l];
    for (std::size_t i = 0; i < in * out; ++i) w[i] = zero ? 0.0 : uniform_real(rng, -limit, limit);
    std::fill(w + in * out, w + in * out + out, 0.0);
  }
}

void Mlp::set_input_normalization(std::vector<double> shift, std::vector<double> scale) {
  if (shift.size() != input_dim() || scale.size() != input_dim()) {
    throw std::invalid_argument("normalization size does not match input dimension");
  }
  shift_ = std::move(shift);
  scale_ = std::move(scale);
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weights(std::size_t l) const {
  return {params_.data() + offsets_[l], static_cast<Eigen::Index>(sizes_[l + 1]),
          static_cast<Eigen::Index>(sizes_[l])};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t l) const {
  return {params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l],
          static_cast<Eigen::Index>(sizes_[l + 1])};
}

DropoutMask Mlp::sample_mask(Rng& rng) const {
  if (sizes_.size() < 3) return DropoutMask::Ones(0);
  const std::size_t n = sizes_[sizes_.size() - 2];
  DropoutMask mask(static_cast<Eigen::Index>(n));
  const double keep_scale = 1.0 / (1.0 - dropout_rate_);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask[i] = uniform01(rng) < dropout_rate_ ? 0.0 : keep_scale;
  }
  return mask;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& inputs, const DropoutMask* mask) const {
  Cache cache;
  return forward(inputs, mask, cache);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& inputs, const DropoutMask* mask,
                             Cache& cache) const {
  if (static_cast<std::size_t>(inputs.rows()) != input_dim()) {
    throw std::invalid_argument("input dimension mismatch");
  }
  const Eigen::Map<const Eigen::VectorXd> shift(shift_.data(), static_cast<Eigen::Index>(shift_.size()));
  const Eigen::Map<const Eigen::VectorXd> scale(scale_.data(), static_cast<Eigen::Index>(scale_.size()));
  cache.activations.clear();
  cache.activations.reserve(layer_count() + 1);
  cache.activations.push_back((inputs.colwise() - shift).array().colwise() * scale.array());

  for (std::size_t l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weights(l) * cache.activations.back();
    z.colwise() += bias(l);
    if (l + 1 == layer_count()) return z;
    z = z.cwiseMax(0.0);
    if (mask != nullptr && mask->size() > 0 && l + 2 == layer_count()) {
      z.array().colwise() *= mask->array();
    }
    cache.activations.push_back(std::move(z));
  }
  return {};
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_output, const DropoutMask* mask,
                   std::span<double> grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer size mismatch");
  Eigen::MatrixXd delta = d_output;
  for (std::size_t l = layer_count(); l-- > 0;) {
    const Eigen::MatrixXd& a_prev = cache.activations[l];
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[l], static_cast<Eigen::Index>(out),
                                   static_cast<Eigen::Index>(in));
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + out * in,
                                   static_cast<Eigen::Index>(out));
    gw.noalias() += delta * a_prev.transpose();
    gb += delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd da = weights(l).transpose() * delta;
    if (mask != nullptr && mask->size() > 0 && l + 1 == layer_count()) {
      da.array().colwise() *= mask->array();
    }
    delta = (a_prev.array() > 0.0).select(da, 0.0);
  }
}

nlohmann::json to_json(const Mlp& net) {
  return {{"layer_sizes", net.layer_sizes()},
          {"dropout_rate", net.dropout_rate()},
          {"input_shift", net.input_shift()},
          {"input_scale", net.input_scale()},
          {"params", net.params()}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp net(j.at("layer_sizes").get<std::vector<std::size_t>>(), j.at("dropout_rate").get<double>());
  net.set_input_normalization(j.at("input_shift").get<std::vector<double>>(),
                              j.at("input_scale").get<std::vector<double>>());
  auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != net.param_count()) throw std::invalid_argument("parameter count mismatch");
  net.params() = std::move(params);
  return net;
}

Eigen::MatrixXd stack_states(std::span<const std::vector<double>> states) {
  if (states.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(states.front().size()),
                    static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (std::size_t k = 0; k < states[i].size(); ++k) {
      m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = states[i][k];
    }
  }
  return m;
}

void fit_input_normalization(Mlp& net, std::span<const std::vector<double>> states) {
  const std::size_t dim = net.input_dim();
  std::vector<double> mean(dim, 0.0), scale(dim, 1.0);
  if (!states.empty()) {
    for (const auto& s : states) {
      for (std::size_t k = 0; k < dim; ++k) mean[k] += s[k];
    }
    for (auto& m : mean) m /= static_cast<double>(states.size());
    std::vector<double> var(dim, 0.0);
    for (const auto& s : states) {
      for (std::size_t k = 0; k < dim; ++k) var[k] += (s[k] - mean[k]) * (s[k] - mean[k]);
    }
    for (std::size_t k = 0; k < dim; ++k) {
      scale[k] = 1.0 / std::max(std::sqrt(var[k] / static_cast<double>(states.size())), 1e-6);
    }
  }
  net.set_input_normalization(std::move(mean), std::move(scale));
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t param_count)
    : cfg_(config), m_(param_count, 0.0), v_(cfg_.kind == OptimizerConfig::Kind::ADAM ? param_count : 0, 0.0) {}

void Optimizer::step(std::vector<double>& params, std::span<const double> grad) {
  if (grad.size() != params.size() || params.size() != m_.size()) {
    throw std::invalid_argument("optimizer size mismatch");
  }
  ++t_;
  if (cfg_.kind == OptimizerConfig::Kind::MOMENTUM) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.momentum * m_[i] + grad[i];
      params[i] -= cfg_.lr * m_[i];
    }
    return;
  }
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    params[i] -= cfg_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
  }
}

}  // namespace opal
