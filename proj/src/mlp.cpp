#include "ccl/mlp.hpp"

#include <cmath>
#include <random>

#include "ccl/errors.hpp"

namespace ccl {

Mlp::Mlp(std::size_t input_dim, const std::vector<std::size_t>& widths, std::uint64_t seed) {
  if (widths.empty()) throw ConfigError("mlp needs at least one layer");
  std::mt19937_64 rng(seed);
  std::size_t in = input_dim;
  for (std::size_t w : widths) {
    if (in == 0 || w == 0) throw ConfigError("mlp layer widths must be positive");
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    std::vector<double> weights(in * w);
    for (double& v : weights) v = normal(rng);
    layers_.push_back({Tensor::matrix(in, w, std::move(weights), true), Tensor::zeros({w}, true)});
    in = w;
  }
}

Mlp::Mlp(std::vector<Linear> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("mlp needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.numel() != l.weight.cols()) {
      throw DimensionError("mlp layer " + std::to_string(i) + ": weight " +
                           shape_string(l.weight.shape()) + " and bias " +
                           shape_string(l.bias.shape()) + " do not fit");
    }
    if (i > 0 && layers_[i - 1].weight.cols() != l.weight.rows()) {
      throw DimensionError("mlp layer " + std::to_string(i) + " expects input width " +
                           std::to_string(l.weight.rows()) + ", previous layer emits " +
                           std::to_string(layers_[i - 1].weight.cols()));
    }
  }
}

Mlp Mlp::zeros(std::size_t input_dim, const std::vector<std::size_t>& widths) {
  std::vector<Linear> layers;
  std::size_t in = input_dim;
  for (std::size_t w : widths) {
    layers.push_back({Tensor::zeros({in, w}, true), Tensor::zeros({w}, true)});
    in = w;
  }
  return Mlp(std::move(layers));
}

Tensor Mlp::forward(const Tensor& x) const {
  if (layers_.empty()) throw ContractError("forward through an empty mlp");
  Tensor h = x;
  if (x.rank() == 1) h = reshape(x, {1, x.numel()});
  if (h.rank() != 2 || h.cols() != input_dim()) {
    throw DimensionError("mlp input " + shape_string(x.shape()) + " does not match input dim " +
                         std::to_string(input_dim()));
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = add_bias(matmul(h, layers_[i].weight), layers_[i].bias);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  if (x.rank() == 1) h = reshape(h, {h.numel()});
  return h;
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().weight.rows(); }

std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().weight.cols(); }

std::vector<std::size_t> Mlp::widths() const {
  std::vector<std::size_t> w;
  for (const auto& l : layers_) w.push_back(l.weight.cols());
  return w;
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> params;
  for (const auto& l : layers_) {
    params.push_back(l.weight);
    params.push_back(l.bias);
  }
  return params;
}

Mlp Mlp::clone() const {
  std::vector<Linear> layers;
  for (const auto& l : layers_) {
    Tensor w = l.weight.clone();
    Tensor b = l.bias.clone();
    w.set_requires_grad(l.weight.requires_grad());
    b.set_requires_grad(l.bias.requires_grad());
    layers.push_back({w, b});
  }
  return Mlp(std::move(layers));
}

void Mlp::set_requires_grad(bool on) {
  for (auto& l : layers_) {
    l.weight.set_requires_grad(on);
    l.bias.set_requires_grad(on);
  }
}

}  // namespace ccl
