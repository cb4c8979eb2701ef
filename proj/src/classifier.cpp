#include "ccl/classifier.hpp"

#include <cmath>
#include <random>
#include <string>

#include "ccl/errors.hpp"

namespace ccl {

TargetDistribution one_hot(std::size_t label, std::size_t num_classes) {
  if (label >= num_classes) {
    throw ContractError("label " + std::to_string(label) + " out of range [0," +
                        std::to_string(num_classes) + ")");
  }
  TargetDistribution t;
  t.probs.assign(num_classes, 0.0);
  t.probs[label] = 1.0;
  return t;
}

TargetDistribution lsr_target(std::size_t label, std::size_t num_classes, double epsilon,
                              SmoothingBase base, std::span<const double> prior) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ConfigError("smoothing epsilon must lie in [0, 1], got " + std::to_string(epsilon));
  }
  TargetDistribution t = one_hot(label, num_classes);
  std::vector<double> u(num_classes, 1.0 / static_cast<double>(num_classes));
  if (base == SmoothingBase::apriori) {
    if (prior.size() != num_classes) {
      throw ConfigError("class prior has " + std::to_string(prior.size()) + " entries for " +
                        std::to_string(num_classes) + " classes");
    }
    double total = 0.0;
    for (double p : prior) {
      if (!(p >= 0.0)) throw ConfigError("class prior has a negative entry");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ConfigError("class prior sums to " + std::to_string(total) + ", not 1");
    }
    u.assign(prior.begin(), prior.end());
  }
  for (std::size_t k = 0; k < num_classes; ++k) t.probs[k] = (1.0 - epsilon) * t.probs[k] + epsilon * u[k];
  t.kind = base == SmoothingBase::uniform ? TargetKind::lsr_uniform : TargetKind::lsr_apriori;
  t.epsilon = epsilon;
  return t;
}

Tensor target_matrix(std::span<const TargetDistribution> targets) {
  if (targets.empty()) throw ContractError("target_matrix: no targets");
  const std::size_t k = targets.front().probs.size();
  std::vector<double> values;
  values.reserve(targets.size() * k);
  for (const auto& t : targets) {
    if (t.probs.size() != k) throw DimensionError("target_matrix: ragged targets");
    values.insert(values.end(), t.probs.begin(), t.probs.end());
  }
  return Tensor::matrix(targets.size(), k, std::move(values));
}

namespace {

Tensor as_rows(const Tensor& q) { return q.rank() == 1 ? reshape(q, {1, q.numel()}) : q; }

void require_match(const char* op, const Tensor& q, const Tensor& t) {
  if (q.rows() != t.rows() || q.cols() != t.cols()) {
    throw DimensionError(std::string(op) + ": prediction " + shape_string(q.shape()) +
                         " vs target " + shape_string(t.shape()));
  }
}

}  // namespace

Tensor cross_entropy(const Tensor& q, const Tensor& targets) {
  const Tensor qr = as_rows(q);
  const Tensor tr = targets.rank() == 1 ? reshape(targets, {1, targets.numel()}) : targets;
  require_match("cross_entropy", qr, tr);
  const double m = static_cast<double>(qr.rows());
  return scale(sum(mul(tr, clamped_log(qr, kLogFloor))), -1.0 / m);
}

Tensor cross_entropy(const Tensor& q, const TargetDistribution& target) {
  return cross_entropy(q, Tensor::vector(target.probs));
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  const Tensor qr = as_rows(q);
  const Tensor pr = p.rank() == 1 ? reshape(p, {1, p.numel()}) : p;
  require_match("kl_divergence", qr, pr);
  const double m = static_cast<double>(qr.rows());
  double neg_entropy = 0.0;
  for (double v : pr.data())
    if (v > 0.0) neg_entropy += v * std::log(v);
  // sum p log p is constant in q; only the cross term carries gradient.
  const Tensor cross = scale(sum(mul(pr, clamped_log(qr, kLogFloor))), -1.0 / m);
  return add_scalar(cross, neg_entropy / m);
}

Tensor kl_divergence(const TargetDistribution& p, const Tensor& q) {
  return kl_divergence(Tensor::vector(p.probs), q);
}

Tensor classification_loss(const Tensor& q, std::span<const std::size_t> labels,
                           const Tensor& soft_rows, double kl_weight) {
  const Tensor qr = as_rows(q);
  const std::size_t k = qr.cols();
  if (labels.size() != qr.rows()) {
    throw DimensionError("classification_loss: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(qr.rows()) + " rows");
  }
  std::vector<TargetDistribution> hard;
  hard.reserve(labels.size());
  for (std::size_t y : labels) hard.push_back(one_hot(y, k));
  const Tensor ce = cross_entropy(qr, target_matrix(hard));
  if (kl_weight == 0.0) return ce;
  return add(ce, scale(kl_divergence(soft_rows, qr), kl_weight));
}

std::size_t predict(std::span<const double> q) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < q.size(); ++k)
    if (q[k] > q[best]) best = k;
  return best;
}

std::vector<std::size_t> predict_rows(const Tensor& q) {
  const std::size_t r = q.rows(), c = q.cols();
  std::vector<std::size_t> out(r);
  for (std::size_t i = 0; i < r; ++i) out[i] = predict(q.data().subspan(i * c, c));
  return out;
}

// ---------------------------------------------------------------------------

Classifier::Classifier(std::size_t input_dim, const std::vector<std::size_t>& backbone_widths,
                       std::size_t num_classes, std::uint64_t seed)
    : backbone_(input_dim, backbone_widths, seed) {
  if (num_classes == 0) throw ConfigError("classifier needs at least one class");
  const std::size_t n1 = backbone_.output_dim();
  std::mt19937_64 rng(seed ^ 0xc2b2ae3d27d4eb4fULL);
  std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / static_cast<double>(n1)));
  std::vector<double> w(n1 * num_classes);
  for (double& v : w) v = normal(rng);
  fc_ = {Tensor::matrix(n1, num_classes, std::move(w), true), Tensor::zeros({num_classes}, true)};
}

Classifier::Classifier(Backbone backbone, Linear fc) : backbone_(std::move(backbone)), fc_(std::move(fc)) {
  if (fc_.weight.rank() != 2 || fc_.weight.rows() != backbone_.output_dim() ||
      fc_.bias.numel() != fc_.weight.cols()) {
    throw DimensionError("fc layer " + shape_string(fc_.weight.shape()) +
                         " does not fit backbone output " + std::to_string(backbone_.output_dim()));
  }
}

Classifier Classifier::zeros(std::size_t input_dim, const std::vector<std::size_t>& backbone_widths,
                             std::size_t num_classes) {
  Backbone b = Mlp::zeros(input_dim, backbone_widths);
  const std::size_t n1 = b.output_dim();
  return Classifier(std::move(b), {Tensor::zeros({n1, num_classes}, true),
                                   Tensor::zeros({num_classes}, true)});
}

ClassifyOutput Classifier::classify(const Tensor& x) const {
  const Tensor xr = x.rank() == 1 ? reshape(x, {1, x.numel()}) : x;
  if (xr.rank() != 2 || xr.cols() != input_dim()) {
    throw DimensionError("classify: input " + shape_string(x.shape()) +
                         " does not match backbone input dim " + std::to_string(input_dim()));
  }
  ClassifyOutput out;
  out.features = backbone_.forward(xr);
  out.logits = add_bias(matmul(out.features, fc_.weight), fc_.bias);
  out.probs = softmax(out.logits);
  return out;
}

std::vector<Tensor> Classifier::parameters() const {
  auto params = backbone_.parameters();
  params.push_back(fc_.weight);
  params.push_back(fc_.bias);
  return params;
}

Classifier Classifier::clone() const {
  Linear fc{fc_.weight.clone(), fc_.bias.clone()};
  fc.weight.set_requires_grad(fc_.weight.requires_grad());
  fc.bias.set_requires_grad(fc_.bias.requires_grad());
  return Classifier(backbone_.clone(), std::move(fc));
}

}  // namespace ccl
