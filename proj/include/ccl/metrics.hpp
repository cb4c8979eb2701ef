#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ccl {

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);
  ConfusionMatrix(std::size_t num_classes, std::vector<std::uint64_t> counts);

  static ConfusionMatrix from_predictions(std::size_t num_classes,
                                          std::span<const std::size_t> truth,
                                          std::span<const std::size_t> predicted);

  void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1);

  std::size_t num_classes() const { return k_; }
  std::uint64_t operator()(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * k_ + predicted];
  }
  std::uint64_t total() const;
  std::uint64_t row_total(std::size_t k) const;
  std::uint64_t col_total(std::size_t k) const;
  std::uint64_t trace() const;

  // One line per true class, comma-separated counts.
  std::string to_text() const;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

double accuracy(const ConfusionMatrix& cm);
// Unweighted; throws ContractError when chance agreement is 1.
double cohens_kappa(const ConfusionMatrix& cm);
// Per-class scores with an empty denominator count as 0; unweighted mean over K.
double macro_f1(const ConfusionMatrix& cm);
double macro_jaccard(const ConfusionMatrix& cm);

struct MetricReport {
  std::size_t samples = 0;
  double accuracy = 0.0;
  double kappa = 0.0;
  double macro_f1 = 0.0;
  double macro_jaccard = 0.0;
};

MetricReport evaluate_metrics(const ConfusionMatrix& cm);

// Flat `key=value` lines.
std::string format_report(const MetricReport& report);

}  // namespace ccl
