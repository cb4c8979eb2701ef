#include "ccl/ccl_head.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "ccl/classifier.hpp"
#include "ccl/errors.hpp"

namespace ccl {

void CclConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("margin must be > 0");
  if (!(alpha_cc >= 0.0)) throw ConfigError("alpha_cc must be >= 0");
  if (!(lr_ccl >= 0.0)) throw ConfigError("lr_ccl must be >= 0");
  if (embed_widths.empty()) throw ConfigError("embedding net needs at least one layer");
  for (std::size_t w : embed_widths)
    if (w == 0) throw ConfigError("embedding layer widths must be positive");
}

CclConfig CclConfig::full_scale() {
  CclConfig cfg;
  cfg.embed_widths = {1024, 1024, 512};
  return cfg;
}

// ---------------------------------------------------------------------------

ClassDictionary::ClassDictionary(std::size_t num_classes, std::size_t dim, std::uint64_t seed) {
  if (num_classes == 0 || dim == 0) throw ConfigError("dictionary needs K >= 1 and dim >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(num_classes * dim);
  for (std::size_t k = 0; k < num_classes; ++k) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double v = normal(rng);
        values[k * dim + j] = v;
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-6);
    for (std::size_t j = 0; j < dim; ++j) values[k * dim + j] /= norm;
  }
  embeddings_ = Tensor::matrix(num_classes, dim, std::move(values), true);
}

ClassDictionary::ClassDictionary(Tensor embeddings) : embeddings_(std::move(embeddings)) {
  if (embeddings_.rank() != 2 || embeddings_.rows() == 0 || embeddings_.cols() == 0) {
    throw DimensionError("dictionary embeddings must be a non-empty [K, dim] matrix, got " +
                         shape_string(embeddings_.shape()));
  }
  embeddings_.set_requires_grad(true);
}

Tensor& ClassDictionary::mutable_embeddings() {
  if (frozen_) throw ContractError("class dictionary is frozen");
  return embeddings_;
}

void ClassDictionary::freeze() {
  frozen_ = true;
  embeddings_.set_requires_grad(false);
  embeddings_.zero_grad();
}

void ClassDictionary::check_nondegenerate() const {
  const std::size_t d = dim();
  const auto v = embeddings_.data();
  for (std::size_t k = 0; k < num_classes(); ++k) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += v[k * d + j] * v[k * d + j];
    if (!(std::sqrt(ss) >= kMinNorm)) {
      throw DegenerateVectorError("embedding of class " + std::to_string(k + 1) +
                                  " has collapsed to norm " + std::to_string(std::sqrt(ss)));
    }
  }
}

ClassDictionary ClassDictionary::clone() const {
  ClassDictionary copy;
  copy.embeddings_ = embeddings_.clone();
  copy.embeddings_.set_requires_grad(embeddings_.requires_grad());
  copy.frozen_ = frozen_;
  return copy;
}

// ---------------------------------------------------------------------------

SoftLabelMatrix::SoftLabelMatrix(std::size_t num_classes, std::vector<double> values,
                                 double margin, int epoch)
    : k_(num_classes), values_(std::move(values)), margin_(margin), epoch_(epoch) {
  if (values_.size() != k_ * k_) {
    throw DimensionError("soft label matrix for " + std::to_string(k_) + " classes needs " +
                         std::to_string(k_ * k_) + " values, got " +
                         std::to_string(values_.size()));
  }
}

SoftLabelMatrix SoftLabelMatrix::identity(std::size_t num_classes) {
  std::vector<double> v(num_classes * num_classes, 0.0);
  for (std::size_t k = 0; k < num_classes; ++k) v[k * num_classes + k] = 1.0;
  return SoftLabelMatrix(num_classes, std::move(v), 2.0, 0);
}

std::string SoftLabelMatrix::to_text() const {
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "# classes=%zu b=%g epoch=%d\n", k_, margin_, epoch_);
  out += buf;
  for (std::size_t r = 0; r < k_; ++r) {
    for (std::size_t c = 0; c < k_; ++c) {
      std::snprintf(buf, sizeof buf, "%s%.6f", c ? "," : "", (*this)(r, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

SoftLabelMatrix SoftLabelMatrix::parse(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::size_t k = 0;
  double margin = 0.0;
  int epoch = 0;
  bool have_header = false;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!have_header) {
      if (std::sscanf(line.c_str(), "# classes=%zu b=%lf epoch=%d", &k, &margin, &epoch) != 3) {
        throw ParseError(source, lineno, "expected '# classes=<K> b=<b> epoch=<e>' header");
      }
      have_header = true;
      continue;
    }
    std::istringstream row(line);
    std::string cell;
    std::size_t count = 0;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(source, lineno, "bad number '" + cell + "'");
      }
      ++count;
    }
    if (count != k) {
      throw ParseError(source, lineno,
                       "expected " + std::to_string(k) + " values, got " + std::to_string(count));
    }
  }
  if (!have_header) throw ParseError(source, lineno, "missing header");
  if (values.size() != k * k) throw ParseError(source, lineno, "expected " + std::to_string(k) + " rows");
  return SoftLabelMatrix(k, std::move(values), margin, epoch);
}

// ---------------------------------------------------------------------------

CclHead::CclHead(std::size_t feature_dim, std::size_t num_classes, const CclConfig& cfg,
                 std::uint64_t seed)
    : embed_net(feature_dim, cfg.embed_widths, seed),
      dictionary(num_classes, cfg.embedding_dim(), seed ^ 0x9e3779b97f4a7c15ULL),
      config(cfg) {
  cfg.validate();
}

std::vector<Tensor> CclHead::trainable_parameters() const {
  auto params = embed_net.parameters();
  if (!dictionary.frozen()) params.push_back(dictionary.embeddings());
  return params;
}

CclHead CclHead::clone() const {
  CclHead copy;
  copy.embed_net = embed_net.clone();
  copy.dictionary = dictionary.clone();
  copy.config = config;
  return copy;
}

// ---------------------------------------------------------------------------

Tensor embed(const EmbeddingNet& net, const Tensor& features) { return net.forward(features); }

namespace {

// Squared distances between rows of unit vectors, capped at 4 to absorb
// rounding in the normalization.
Tensor unit_sq_dist(const Tensor& a, const Tensor& b) {
  const Tensor d = pairwise_sq_dist(a, b);
  return sub(d, relu(add_scalar(d, -4.0)));
}

}  // namespace

Tensor distance(const Tensor& e1, const Tensor& e2) {
  if (e1.numel() != e2.numel() || e1.numel() == 0) {
    throw DimensionError("distance: lengths differ, " + shape_string(e1.shape()) + " vs " +
                         shape_string(e2.shape()));
  }
  const Tensor a = l2_normalize(reshape(e1, {1, e1.numel()}));
  const Tensor b = l2_normalize(reshape(e2, {1, e2.numel()}));
  return reshape(unit_sq_dist(a, b), {});
}

Tensor head_logits(const Tensor& embeddings, const ClassDictionary& dict) {
  dict.check_nondegenerate();
  const bool single = embeddings.rank() == 1;
  const Tensor e = single ? reshape(embeddings, {1, embeddings.numel()}) : embeddings;
  if (e.rank() != 2 || e.cols() != dict.dim()) {
    throw DimensionError("head_logits: embedding " + shape_string(embeddings.shape()) +
                         " does not match dictionary dim " + std::to_string(dict.dim()));
  }
  const Tensor d = unit_sq_dist(l2_normalize(e), l2_normalize(dict.embeddings()));
  const Tensor logits = scale(d, -1.0);
  return single ? reshape(logits, {dict.num_classes()}) : logits;
}

Tensor class_correlation_loss(const ClassDictionary& dict, double margin) {
  dict.check_nondegenerate();
  const Tensor c = l2_normalize(dict.embeddings());
  const Tensor d = unit_sq_dist(c, c);
  const double k = static_cast<double>(dict.num_classes());
  return scale(sum(relu(add_scalar(d, -margin))), 1.0 / (k * k));
}

Tensor head_loss(const Tensor& embeddings, std::span<const std::size_t> labels,
                 const ClassDictionary& dict, const CclConfig& cfg) {
  const std::size_t kk = dict.num_classes();
  const std::size_t m = embeddings.rank() == 1 ? 1 : embeddings.rows();
  if (labels.size() != m) {
    throw DimensionError("head_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(m) + " embeddings");
  }
  std::vector<double> onehot(m * kk, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] >= kk) {
      throw ContractError("head_loss: label " + std::to_string(labels[i]) + " out of range [0," +
                          std::to_string(kk) + ")");
    }
    onehot[i * kk + labels[i]] = 1.0;
  }
  Tensor logits = head_logits(embeddings, dict);
  if (logits.rank() == 1) logits = reshape(logits, {1, kk});
  const Tensor ce = cross_entropy(softmax(logits), Tensor::matrix(m, kk, std::move(onehot)));
  if (cfg.alpha_cc == 0.0) return ce;
  return add(ce, scale(class_correlation_loss(dict, cfg.margin), cfg.alpha_cc));
}

SoftLabelMatrix soft_labels(const ClassDictionary& dict, double margin, int epoch) {
  NoGradGuard no_grad;
  dict.check_nondegenerate();
  const Tensor c = l2_normalize(dict.embeddings());
  // pairwise distances are exactly symmetric, so row k of softmax(-D) is the
  // softmax over f_d(c_j, c_k) for j = 1..K.
  const Tensor p = softmax(scale(unit_sq_dist(c, c), -1.0));
  return SoftLabelMatrix(dict.num_classes(), std::vector<double>(p.data().begin(), p.data().end()),
                         margin, epoch);
}

double mean_correct_softness(const SoftLabelMatrix& m) {
  const std::size_t k = m.num_classes();
  if (k == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += m(i, i);
  return acc / static_cast<double>(k);
}

double nearest_uniform_epsilon(const SoftLabelMatrix& m) {
  const std::size_t k = m.num_classes();
  if (k < 2) return 0.0;
  const double kd = static_cast<double>(k);
  return kd * (1.0 - mean_correct_softness(m)) / (kd - 1.0);
}

double collapsed_epsilon(std::size_t num_classes, double margin) {
  const double a = std::exp(-margin);
  const double kd = static_cast<double>(num_classes);
  return kd * a / (1.0 + (kd - 1.0) * a);
}

}  // namespace ccl
