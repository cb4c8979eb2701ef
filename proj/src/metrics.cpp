#include "ccl/metrics.hpp"

#include <cstdio>
#include <numeric>

#include "ccl/errors.hpp"

namespace ccl {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes, std::vector<std::uint64_t> counts)
    : k_(num_classes), counts_(std::move(counts)) {
  if (counts_.size() != k_ * k_) {
    throw DimensionError("confusion matrix for " + std::to_string(k_) + " classes needs " +
                         std::to_string(k_ * k_) + " cells");
  }
}

ConfusionMatrix ConfusionMatrix::from_predictions(std::size_t num_classes,
                                                  std::span<const std::size_t> truth,
                                                  std::span<const std::size_t> predicted) {
  if (truth.size() != predicted.size()) {
    throw DimensionError("confusion matrix: " + std::to_string(truth.size()) + " labels vs " +
                         std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t n) {
  if (truth >= k_ || predicted >= k_) throw ContractError("confusion matrix: class out of range");
  counts_[truth * k_ + predicted] += n;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_total(std::size_t k) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < k_; ++j) s += counts_[k * k_ + j];
  return s;
}

std::uint64_t ConfusionMatrix::col_total(std::size_t k) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i) s += counts_[i * k_ + k];
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t k = 0; k < k_; ++k) s += counts_[k * k_ + k];
  return s;
}

std::string ConfusionMatrix::to_text() const {
  std::string out;
  for (std::size_t i = 0; i < k_; ++i) {
    for (std::size_t j = 0; j < k_; ++j) {
      if (j) out += ',';
      out += std::to_string(counts_[i * k_ + j]);
    }
    out += '\n';
  }
  return out;
}

namespace {

double require_total(const ConfusionMatrix& cm) {
  const auto n = cm.total();
  if (n == 0) throw ContractError("metrics need at least one evaluated sample");
  return static_cast<double>(n);
}

}  // namespace

double accuracy(const ConfusionMatrix& cm) {
  const double n = require_total(cm);
  return static_cast<double>(cm.trace()) / n;
}

double cohens_kappa(const ConfusionMatrix& cm) {
  const double n = require_total(cm);
  const double po = static_cast<double>(cm.trace()) / n;
  double pe = 0.0;
  for (std::size_t k = 0; k < cm.num_classes(); ++k)
    pe += static_cast<double>(cm.row_total(k)) * static_cast<double>(cm.col_total(k));
  pe /= n * n;
  if (pe >= 1.0) throw ContractError("kappa undefined: chance agreement is 1");
  return (po - pe) / (1.0 - pe);
}

double macro_f1(const ConfusionMatrix& cm) {
  require_total(cm);
  double acc = 0.0;
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    const double tp = static_cast<double>(cm(k, k));
    const double col = static_cast<double>(cm.col_total(k));
    const double row = static_cast<double>(cm.row_total(k));
    const double precision = col > 0 ? tp / col : 0.0;
    const double recall = row > 0 ? tp / row : 0.0;
    if (precision + recall > 0.0) acc += 2.0 * precision * recall / (precision + recall);
  }
  return acc / static_cast<double>(cm.num_classes());
}

double macro_jaccard(const ConfusionMatrix& cm) {
  require_total(cm);
  double acc = 0.0;
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    const double tp = static_cast<double>(cm(k, k));
    const double denom = static_cast<double>(cm.row_total(k) + cm.col_total(k)) - tp;
    if (denom > 0.0) acc += tp / denom;
  }
  return acc / static_cast<double>(cm.num_classes());
}

MetricReport evaluate_metrics(const ConfusionMatrix& cm) {
  MetricReport r;
  r.samples = cm.total();
  r.accuracy = accuracy(cm);
  r.kappa = cohens_kappa(cm);
  r.macro_f1 = macro_f1(cm);
  r.macro_jaccard = macro_jaccard(cm);
  return r;
}

std::string format_report(const MetricReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "samples=%zu\naccuracy=%.6f\nkappa=%.6f\nmacro_f1=%.6f\nmacro_jaccard=%.6f\n",
                report.samples, report.accuracy, report.kappa, report.macro_f1,
                report.macro_jaccard);
  return buf;
}

}  // namespace ccl
