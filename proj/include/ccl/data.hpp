#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ccl/numcore.hpp"

namespace ccl {

// Immutable labelled feature matrix. Labels are 0-based.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(std::size_t num_classes, std::size_t dim, std::vector<double> features,
                 std::vector<std::size_t> labels);

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t num_classes() const { return k_; }
  const std::vector<double>& features() const { return features_; }
  const std::vector<std::size_t>& labels() const { return labels_; }
  const std::vector<std::size_t>& class_counts() const { return counts_; }
  // Empirical class frequencies (counts / N).
  std::vector<double> class_prior() const;

  const double* row(std::size_t i) const { return features_.data() + i * dim_; }

  // Rows at `indices`, in the given order, as an [m, dim] tensor.
  Tensor batch_features(const std::vector<std::size_t>& indices) const;
  std::vector<std::size_t> batch_labels(const std::vector<std::size_t>& indices) const;
  Tensor all_features() const;

  LabeledDataset subset(const std::vector<std::size_t>& indices) const;

 private:
  std::size_t k_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> features_;
  std::vector<std::size_t> labels_;
  std::vector<std::size_t> counts_;
};

struct SyntheticSpec {
  std::size_t num_classes = 2;
  std::vector<std::size_t> samples_per_class{10, 10};
  std::size_t dim = 8;
  // Unordered class pairs whose centers sit `near_distance` apart. A class
  // appears in at most one pair.
  std::vector<std::pair<std::size_t, std::size_t>> siblings;
  double near_distance = 1.0;
  // Lower bound on the center distance of any two non-sibling classes.
  double far_distance = 4.0;
  double stddev = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  // Class centers, [K * dim] row-major.
  std::vector<double> centers() const;
};

// Isotropic Gaussian clusters around the configured centers. Samples are emitted
// class by class.
LabeledDataset generate_synthetic(const SyntheticSpec& spec);

// Per class: round-half-up(ratio * count) samples to train, the rest (at
// least one) to validation. Row order of the source is preserved in both.
std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& ds,
                                                           double ratio, std::uint64_t seed);
std::size_t train_count(std::size_t class_count, double ratio);

// Text format: header `K=<int> dim=<int>`, then `label,v1,...,v_dim` rows with
// 1-based labels. Blank lines and lines starting with '#' are ignored.
LabeledDataset parse_dataset(const std::string& text, const std::string& source = "<text>");
LabeledDataset load_dataset(const std::string& path);
std::string format_dataset(const LabeledDataset& ds);
void save_dataset(const LabeledDataset& ds, const std::string& path);

// Class sizes proportional to the seven-class dermoscopy benchmark
// (1113, 6705, 514, 327, 1099, 115, 142), scaled so the total is about
// `total` with a floor of `min_per_class`.
std::vector<std::size_t> dermoscopy_proportions(std::size_t total, std::size_t min_per_class = 4);

// Named generator settings:
//   pairs2      2 classes, 10 samples each
//   separable7  7 well separated classes
//   siblings6   6 classes forming 3 sibling pairs
//   dermoscopy7 7 imbalanced classes with two overlapping sibling pairs
SyntheticSpec synthetic_preset(const std::string& name, std::uint64_t seed);

}  // namespace ccl
