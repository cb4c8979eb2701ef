#include "ccl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "ccl/errors.hpp"

namespace ccl {

LabeledDataset::LabeledDataset(std::size_t num_classes, std::size_t dim,
                               std::vector<double> features, std::vector<std::size_t> labels)
    : k_(num_classes), dim_(dim), features_(std::move(features)), labels_(std::move(labels)) {
  if (k_ == 0 || dim_ == 0) throw ConfigError("dataset needs K >= 1 and dim >= 1");
  if (features_.size() != labels_.size() * dim_) {
    throw DimensionError("dataset has " + std::to_string(labels_.size()) + " labels but " +
                         std::to_string(features_.size()) + " feature values for dim " +
                         std::to_string(dim_));
  }
  counts_.assign(k_, 0);
  for (std::size_t y : labels_) {
    if (y >= k_) {
      throw ContractError("label " + std::to_string(y) + " out of range [0," + std::to_string(k_) + ")");
    }
    ++counts_[y];
  }
}

std::vector<double> LabeledDataset::class_prior() const {
  std::vector<double> prior(k_, 0.0);
  if (labels_.empty()) return prior;
  for (std::size_t k = 0; k < k_; ++k)
    prior[k] = static_cast<double>(counts_[k]) / static_cast<double>(labels_.size());
  return prior;
}

Tensor LabeledDataset::batch_features(const std::vector<std::size_t>& indices) const {
  std::vector<double> values;
  values.reserve(indices.size() * dim_);
  for (std::size_t i : indices) values.insert(values.end(), row(i), row(i) + dim_);
  return Tensor::matrix(indices.size(), dim_, std::move(values));
}

std::vector<std::size_t> LabeledDataset::batch_labels(const std::vector<std::size_t>& indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels_.at(i));
  return out;
}

Tensor LabeledDataset::all_features() const { return Tensor::matrix(size(), dim_, features_); }

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<double> f;
  f.reserve(indices.size() * dim_);
  for (std::size_t i : indices) f.insert(f.end(), row(i), row(i) + dim_);
  return LabeledDataset(k_, dim_, std::move(f), batch_labels(indices));
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (num_classes == 0) throw ConfigError("synthetic spec needs at least one class");
  if (samples_per_class.size() != num_classes) {
    throw ConfigError("samples_per_class has " + std::to_string(samples_per_class.size()) +
                      " entries for " + std::to_string(num_classes) + " classes");
  }
  if (dim == 0) throw ConfigError("synthetic dim must be positive");
  if (!(stddev >= 0.0)) throw ConfigError("stddev must be >= 0");
  if (!(near_distance > 0.0 && far_distance > near_distance)) {
    throw ConfigError("need 0 < near_distance < far_distance");
  }
  std::vector<int> seen(num_classes, 0);
  for (auto [a, b] : siblings) {
    if (a >= num_classes || b >= num_classes || a == b) {
      throw ConfigError("invalid sibling pair (" + std::to_string(a) + "," + std::to_string(b) + ")");
    }
    if (seen[a]++ || seen[b]++) throw ConfigError("a class may belong to at most one sibling pair");
  }
  const std::size_t groups = num_classes - siblings.size();
  if (dim < groups) {
    throw ConfigError("dim " + std::to_string(dim) + " too small for " + std::to_string(groups) +
                      " separated class groups");
  }
}

std::vector<double> SyntheticSpec::centers() const {
  validate();
  // Each sibling pair and each remaining class forms a group; groups sit on
  // scaled basis vectors (pairwise distance far + near) and siblings are
  // offset by +-near/2 along a random unit direction, so any two non-sibling
  // centers stay at least `far_distance` apart.
  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double spread = (far_distance + near_distance) / std::sqrt(2.0);
  std::vector<double> c(num_classes * dim, 0.0);
  std::vector<int> grouped(num_classes, 0);
  std::size_t g = 0;
  for (auto [a, b] : siblings) {
    std::vector<double> u(dim);
    double nrm = 0.0;
    do {
      nrm = 0.0;
      for (double& v : u) {
        v = normal(rng);
        nrm += v * v;
      }
      nrm = std::sqrt(nrm);
    } while (nrm < 1e-6);
    for (std::size_t j = 0; j < dim; ++j) {
      const double base = j == g ? spread : 0.0;
      c[a * dim + j] = base + 0.5 * near_distance * u[j] / nrm;
      c[b * dim + j] = base - 0.5 * near_distance * u[j] / nrm;
    }
    grouped[a] = grouped[b] = 1;
    ++g;
  }
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (grouped[k]) continue;
    c[k * dim + g] = spread;
    ++g;
  }
  return c;
}

LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
  const std::vector<double> centers = spec.centers();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> features;
  std::vector<std::size_t> labels;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t n = 0; n < spec.samples_per_class[k]; ++n) {
      for (std::size_t j = 0; j < spec.dim; ++j)
        features.push_back(centers[k * spec.dim + j] + spec.stddev * normal(rng));
      labels.push_back(k);
    }
  }
  return LabeledDataset(spec.num_classes, spec.dim, std::move(features), std::move(labels));
}

std::size_t train_count(std::size_t class_count, double ratio) {
  if (class_count < 2) return class_count;
  auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(class_count) + 0.5));
  return std::clamp<std::size_t>(n, 1, class_count - 1);
}

std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& ds, double ratio,
                                                           std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels()[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train, val;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& idx = by_class[k];
    if (idx.size() < 2) {
      throw ConfigError("class " + std::to_string(k + 1) + " has " + std::to_string(idx.size()) +
                        " samples; stratified split needs at least 2");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n = train_count(idx.size(), ratio);
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
    val.insert(val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {ds.subset(train), ds.subset(val)};
}

// ---------------------------------------------------------------------------

LabeledDataset parse_dataset(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  long long k = -1, dim = -1;
  std::vector<double> features;
  std::vector<std::size_t> labels;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    if (k < 0) {
      char tail = 0;
      if (std::sscanf(line.c_str(), " K=%lld dim=%lld %c", &k, &dim, &tail) != 2 || k < 1 || dim < 1) {
        throw ParseError(source, lineno, "expected header 'K=<int> dim=<int>'");
      }
      continue;
    }
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != static_cast<std::size_t>(dim) + 1) {
      throw ParseError(source, lineno,
                       "expected label plus " + std::to_string(dim) + " values, got " +
                           std::to_string(cells.empty() ? 0 : cells.size() - 1) + " values");
    }
    long long label = 0;
    try {
      std::size_t used = 0;
      label = std::stoll(cells[0], &used);
      if (cells[0].find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError(source, lineno, "bad label '" + cells[0] + "'");
    }
    if (label < 1 || label > k) {
      throw ParseError(source, lineno,
                       "label " + std::to_string(label) + " outside 1.." + std::to_string(k));
    }
    for (std::size_t j = 1; j < cells.size(); ++j) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(cells[j], &used);
        if (cells[j].find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw ParseError(source, lineno, "bad value '" + cells[j] + "'");
      }
      if (!std::isfinite(v)) throw ParseError(source, lineno, "non-finite value");
      features.push_back(v);
    }
    labels.push_back(static_cast<std::size_t>(label - 1));
  }
  if (k < 0) throw ParseError(source, lineno, "missing header 'K=<int> dim=<int>'");
  return LabeledDataset(static_cast<std::size_t>(k), static_cast<std::size_t>(dim),
                        std::move(features), std::move(labels));
}

LabeledDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), path);
}

std::string format_dataset(const LabeledDataset& ds) {
  std::string out = "K=" + std::to_string(ds.num_classes()) + " dim=" + std::to_string(ds.dim()) + "\n";
  char buf[40];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += std::to_string(ds.labels()[i] + 1);
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", ds.row(i)[j]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void save_dataset(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset '" + path + "'");
  out << format_dataset(ds);
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<std::size_t> dermoscopy_proportions(std::size_t total, std::size_t min_per_class) {
  static constexpr std::size_t kCounts[] = {1113, 6705, 514, 327, 1099, 115, 142};
  const double all = 10015.0;
  std::vector<std::size_t> out;
  for (std::size_t c : kCounts) {
    const auto n = static_cast<std::size_t>(
        std::floor(static_cast<double>(c) * static_cast<double>(total) / all + 0.5));
    out.push_back(std::max(n, min_per_class));
  }
  return out;
}

SyntheticSpec synthetic_preset(const std::string& name, std::uint64_t seed) {
  SyntheticSpec s;
  s.seed = seed;
  if (name == "pairs2") {
    s.num_classes = 2;
    s.samples_per_class = {10, 10};
  } else if (name == "separable7") {
    s.num_classes = 7;
    s.samples_per_class.assign(7, 40);
    s.near_distance = 1.0;
    s.far_distance = 6.0;
    s.stddev = 0.3;
  } else if (name == "siblings6") {
    s.num_classes = 6;
    s.samples_per_class.assign(6, 60);
    s.siblings = {{0, 1}, {2, 3}, {4, 5}};
    s.near_distance = 1.0;
    s.far_distance = 6.0;
    s.stddev = 0.5;
  } else if (name == "dermoscopy7") {
    s.num_classes = 7;
    s.samples_per_class = dermoscopy_proportions(500);
    s.siblings = {{0, 1}, {3, 4}};
    s.near_distance = 1.0;
    s.far_distance = 3.0;
    s.stddev = 0.6;
  } else {
    throw ConfigError("unknown synthetic preset '" + name +
                      "' (expected pairs2, separable7, siblings6 or dermoscopy7)");
  }
  return s;
}

}  // namespace ccl
