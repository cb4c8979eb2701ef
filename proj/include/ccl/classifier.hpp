#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ccl/mlp.hpp"
#include "ccl/numcore.hpp"

namespace ccl {

// Floor applied inside every log of cross entropy and KL divergence.
inline constexpr double kLogFloor = 1e-12;

enum class TargetKind { hard, lsr_uniform, lsr_apriori, soft_learned };

struct TargetDistribution {
  std::vector<double> probs;
  TargetKind kind = TargetKind::hard;
  double epsilon = 0.0;
};

// Labels are 0-based here; files carry 1-based labels and are converted on load.
TargetDistribution one_hot(std::size_t label, std::size_t num_classes);

enum class SmoothingBase { uniform, apriori };

// (1 - eps) * onehot(label) + eps * u, with u uniform or the supplied class
// prior. `prior` is ignored for the uniform base.
TargetDistribution lsr_target(std::size_t label, std::size_t num_classes, double epsilon,
                              SmoothingBase base, std::span<const double> prior = {});

// Stacks targets into an [m, K] constant tensor.
Tensor target_matrix(std::span<const TargetDistribution> targets);

// -sum_k t_k log(max(q_k, 1e-12)), averaged over rows. q is [K] or [m, K].
Tensor cross_entropy(const Tensor& q, const Tensor& targets);
Tensor cross_entropy(const Tensor& q, const TargetDistribution& target);

// sum_k p_k log(p_k / q_k) averaged over rows; p is a constant, entries with
// p_k = 0 contribute nothing and q is floored at 1e-12.
Tensor kl_divergence(const Tensor& p, const Tensor& q);
Tensor kl_divergence(const TargetDistribution& p, const Tensor& q);

// CE(q, onehot(y)) + kl_weight * KL(soft_row_y || q), batch-averaged.
// `soft_rows` holds the soft label row of each sample's class, [m, K].
Tensor classification_loss(const Tensor& q, std::span<const std::size_t> labels,
                           const Tensor& soft_rows, double kl_weight = 1.0);

// argmax with the lowest index winning ties.
std::size_t predict(std::span<const double> q);
std::vector<std::size_t> predict_rows(const Tensor& q);

using Backbone = Mlp;

struct ClassifyOutput {
  Tensor features;  // f, [m, n1]
  Tensor logits;    // fc(f), [m, K]
  Tensor probs;     // q^cls
};

// Backbone f1 followed by the fc layer producing class logits.
class Classifier {
 public:
  Classifier() = default;
  Classifier(std::size_t input_dim, const std::vector<std::size_t>& backbone_widths,
             std::size_t num_classes, std::uint64_t seed);
  Classifier(Backbone backbone, Linear fc);

  static Classifier zeros(std::size_t input_dim, const std::vector<std::size_t>& backbone_widths,
                          std::size_t num_classes);

  ClassifyOutput classify(const Tensor& x) const;

  std::size_t input_dim() const { return backbone_.input_dim(); }
  std::size_t feature_dim() const { return backbone_.output_dim(); }
  std::size_t num_classes() const { return fc_.weight.cols(); }

  const Backbone& backbone() const { return backbone_; }
  Backbone& backbone() { return backbone_; }
  const Linear& fc() const { return fc_; }
  Linear& fc() { return fc_; }

  // Backbone parameters followed by fc weight and bias.
  std::vector<Tensor> parameters() const;
  Classifier clone() const;

 private:
  Backbone backbone_;
  Linear fc_{Tensor::zeros({0, 0}), Tensor::zeros({0})};
};

}  // namespace ccl
