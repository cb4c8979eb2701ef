#pragma once

// Class-correlation head: an embedding network, a dictionary of learnable
// class embeddings, the normalized squared-Euclidean metric between them, the
// distance-based classification loss with the class correlation penalty, and
// the soft label matrix derived from pairwise dictionary distances.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ccl/mlp.hpp"
#include "ccl/numcore.hpp"

namespace ccl {

using Labels = std::vector<std::size_t>;

struct CclConfig {
  // Squared distance of two orthogonal unit vectors.
  double margin = 2.0;
  double alpha_cc = 10.0;
  std::vector<std::size_t> embed_widths{64, 64, 16};
  double lr_ccl = 0.0005;

  std::size_t embedding_dim() const { return embed_widths.empty() ? 0 : embed_widths.back(); }
  void validate() const;

  // Three fc layers of width 1024, 1024, 512.
  static CclConfig full_scale();
};

using EmbeddingNet = Mlp;

class ClassDictionary {
 public:
  ClassDictionary() = default;
  // Unit-norm Gaussian directions, one per class.
  ClassDictionary(std::size_t num_classes, std::size_t dim, std::uint64_t seed);
  // Takes ownership of explicit embeddings [K, dim].
  explicit ClassDictionary(Tensor embeddings);

  std::size_t num_classes() const { return embeddings_.rows(); }
  std::size_t dim() const { return embeddings_.cols(); }

  const Tensor& embeddings() const { return embeddings_; }
  // Throws ContractError once frozen.
  Tensor& mutable_embeddings();

  bool frozen() const { return frozen_; }
  // Irreversible; stops gradient tracking on the embeddings.
  void freeze();

  // Throws DegenerateVectorError naming the first class whose embedding norm
  // is below 1e-12.
  void check_nondegenerate() const;

  ClassDictionary clone() const;

 private:
  Tensor embeddings_ = Tensor::zeros({0, 0});
  bool frozen_ = false;
};

class SoftLabelMatrix {
 public:
  SoftLabelMatrix() = default;
  SoftLabelMatrix(std::size_t num_classes, std::vector<double> values, double margin, int epoch);

  std::size_t num_classes() const { return k_; }
  double operator()(std::size_t row, std::size_t col) const { return values_[row * k_ + col]; }
  std::span<const double> row(std::size_t k) const { return {values_.data() + k * k_, k_}; }
  const std::vector<double>& values() const { return values_; }
  double margin() const { return margin_; }
  int epoch() const { return epoch_; }

  // Identity matrix: every class keeps all of its mass.
  static SoftLabelMatrix identity(std::size_t num_classes);

  // `# classes=<K> b=<b> epoch=<e>` header, then K comma-separated rows with
  // six fractional digits.
  std::string to_text() const;
  static SoftLabelMatrix parse(const std::string& text, const std::string& source = "<text>");

 private:
  std::size_t k_ = 0;
  std::vector<double> values_;
  double margin_ = 2.0;
  int epoch_ = 0;
};

struct CclHead {
  EmbeddingNet embed_net;
  ClassDictionary dictionary;
  CclConfig config;

  CclHead() = default;
  CclHead(std::size_t feature_dim, std::size_t num_classes, const CclConfig& cfg,
          std::uint64_t seed);

  // Embedding-net parameters, followed by the dictionary unless frozen.
  std::vector<Tensor> trainable_parameters() const;
  CclHead clone() const;
};

// e = f2(f); f is [n1] or [m, n1].
Tensor embed(const EmbeddingNet& net, const Tensor& features);

// ||e1/|e1| - e2/|e2|||^2 for two vectors of equal length.
Tensor distance(const Tensor& e1, const Tensor& e2);

// -[f_d(e, c_1), ..., f_d(e, c_K)] per row; softmax of this is q^CCL.
Tensor head_logits(const Tensor& embeddings, const ClassDictionary& dict);

// (1/K^2) sum_{k1,k2} relu(f_d(c_k1, c_k2) - margin), diagonal included.
Tensor class_correlation_loss(const ClassDictionary& dict, double margin);

// Batch mean of CE(q^CCL, y) plus alpha_cc * class_correlation_loss.
Tensor head_loss(const Tensor& embeddings, std::span<const std::size_t> labels,
                 const ClassDictionary& dict, const CclConfig& cfg);

// Row k = softmax(-[f_d(c_1, c_k), ..., f_d(c_K, c_k)]). Evaluated without
// recording on any tape.
SoftLabelMatrix soft_labels(const ClassDictionary& dict, double margin = 2.0, int epoch = 0);

// Mean of the diagonal: the average probability kept by the correct class.
double mean_correct_softness(const SoftLabelMatrix& m);

// Least-squares fit of a uniform label-smoothing matrix; equals
// K (1 - mean_correct_softness) / (K - 1).
double nearest_uniform_epsilon(const SoftLabelMatrix& m);

// Smoothing weight reproduced by a dictionary whose off-diagonal distances
// all equal `margin`: K a / (1 + (K - 1) a) with a = exp(-margin).
double collapsed_epsilon(std::size_t num_classes, double margin);

}  // namespace ccl
