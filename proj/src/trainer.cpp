#include "ccl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "ccl/errors.hpp"

namespace ccl {

const char* to_string(TargetMode mode) {
  switch (mode) {
    case TargetMode::hard: return "hard";
    case TargetMode::lsr_uniform: return "lsr-u";
    case TargetMode::lsr_apriori: return "lsr-a";
    case TargetMode::ccl: return "ccl";
  }
  return "?";
}

TargetMode parse_target_mode(const std::string& name) {
  if (name == "hard") return TargetMode::hard;
  if (name == "lsr-u") return TargetMode::lsr_uniform;
  if (name == "lsr-a") return TargetMode::lsr_apriori;
  if (name == "ccl") return TargetMode::ccl;
  throw ConfigError("unknown mode '" + name + "' (expected hard, lsr-u, lsr-a or ccl)");
}

std::vector<std::size_t> TrainConfig::drop_epochs() const {
  if (!lr_drop_epochs.empty()) return lr_drop_epochs;
  return {epochs / 2, epochs * 3 / 4};
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr_backbone >= 0.0) || !(head.lr_ccl >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be > 0");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (!(kl_weight >= 0.0)) throw ConfigError("kl_weight must be >= 0");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  if (backbone_widths.empty()) throw ConfigError("backbone needs at least one layer");
  if (!std::is_sorted(lr_drop_epochs.begin(), lr_drop_epochs.end())) {
    throw ConfigError("lr_drop_epochs must be sorted");
  }
  for (std::size_t e : lr_drop_epochs)
    if (e >= epochs) throw ConfigError("lr drop epoch " + std::to_string(e) + " beyond last epoch");
  head.validate();
}

// ---------------------------------------------------------------------------

const std::vector<double>* OptimizerState::velocity_of(const Tensor& param) const {
  for (const auto& s : slots)
    if (s.owner == param.impl().get()) return &s.velocity;
  return nullptr;
}

void sgd_step(std::span<Tensor> params, OptimizerState& opt, double lr) {
  for (Tensor& p : params) {
    OptimizerState::Slot* slot = nullptr;
    for (auto& s : opt.slots)
      if (s.owner == p.impl().get()) slot = &s;
    if (slot == nullptr) {
      opt.slots.push_back({p.impl().get(), std::vector<double>(p.numel(), 0.0)});
      slot = &opt.slots.back();
    }
    if (slot->velocity.size() != p.numel()) {
      throw DimensionError("sgd_step: momentum buffer of " + std::to_string(slot->velocity.size()) +
                           " values for parameter " + shape_string(p.shape()));
    }
    const std::vector<double> g = p.grad();
    auto w = p.mutable_data();
    auto& v = slot->velocity;
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = opt.momentum * v[i] + g[i] + opt.weight_decay * w[i];
      w[i] -= lr * v[i];
    }
  }
}

double clip_gradients(std::span<Tensor> params, double max_norm) {
  double ss = 0.0;
  for (const Tensor& p : params)
    if (p.has_grad())
      for (double g : p.grad()) ss += g * g;
  const double norm = std::sqrt(ss);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor& p : params)
      if (p.has_grad())
        for (double& g : p.mutable_grad()) g *= s;
  }
  return norm;
}

bool update_softness(SoftnessHistory& hist, double p_bar) {
  if (hist.values.empty() || p_bar < hist.best) {
    hist.best = p_bar;
    hist.epochs_since_improvement = 0;
  } else {
    ++hist.epochs_since_improvement;
  }
  hist.values.push_back(p_bar);
  if (hist.epochs_since_improvement >= hist.patience) hist.frozen = true;
  return hist.frozen;
}

LearningRates lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  double factor = 1.0;
  for (std::size_t e : cfg.drop_epochs())
    if (epoch >= e) factor *= 0.1;
  return {cfg.lr_backbone * factor, cfg.head.lr_ccl * factor};
}

// ---------------------------------------------------------------------------

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {
enum Stream : std::uint64_t { kBackboneStream = 1, kHeadStream = 2, kShuffleStream = 3 };
}

TrainState init_train_state(const TrainConfig& cfg, std::size_t input_dim,
                            std::size_t num_classes, std::vector<double> class_prior) {
  cfg.validate();
  TrainState s;
  s.model = Classifier(input_dim, cfg.backbone_widths, num_classes,
                       derive_seed(cfg.seed, kBackboneStream));
  if (cfg.mode == TargetMode::ccl) {
    s.head.emplace(s.model.feature_dim(), num_classes, cfg.head, derive_seed(cfg.seed, kHeadStream));
  }
  s.backbone_opt.momentum = s.head_opt.momentum = cfg.momentum;
  s.backbone_opt.weight_decay = s.head_opt.weight_decay = cfg.weight_decay;
  s.softness.patience = cfg.patience;
  s.class_prior = std::move(class_prior);
  s.shuffle_rng.seed(derive_seed(cfg.seed, kShuffleStream));
  return s;
}

namespace {

Tensor smoothing_targets(const TrainConfig& cfg, const TrainState& state,
                         const std::vector<std::size_t>& labels, std::size_t k) {
  std::vector<TargetDistribution> t;
  t.reserve(labels.size());
  for (std::size_t y : labels) {
    switch (cfg.mode) {
      case TargetMode::lsr_uniform:
        t.push_back(lsr_target(y, k, cfg.epsilon, SmoothingBase::uniform));
        break;
      case TargetMode::lsr_apriori:
        t.push_back(lsr_target(y, k, cfg.epsilon, SmoothingBase::apriori, state.class_prior));
        break;
      default:
        t.push_back(one_hot(y, k));
    }
  }
  return target_matrix(t);
}

Tensor soft_rows_for(const SoftLabelMatrix& m, const std::vector<std::size_t>& labels) {
  const std::size_t k = m.num_classes();
  std::vector<double> v;
  v.reserve(labels.size() * k);
  for (std::size_t y : labels) {
    const auto r = m.row(y);
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor::matrix(labels.size(), k, std::move(v));
}

void zero_grads(std::span<Tensor> params) {
  for (Tensor& p : params) p.zero_grad();
}

}  // namespace

EpochReport train_epoch(TrainState& state, const LabeledDataset& data, const TrainConfig& cfg,
                        const TrainHooks& hooks) {
  if (data.size() == 0) throw ContractError("train_epoch: empty dataset");
  if (data.dim() != state.model.input_dim()) {
    throw DimensionError("train_epoch: data dim " + std::to_string(data.dim()) +
                         " vs model input dim " + std::to_string(state.model.input_dim()));
  }
  if (data.num_classes() != state.model.num_classes()) {
    throw DimensionError("train_epoch: data has " + std::to_string(data.num_classes()) +
                         " classes, model " + std::to_string(state.model.num_classes()));
  }
  const std::size_t k = data.num_classes();
  const LearningRates lr = lr_schedule(state.epoch, cfg);
  const int epoch_no = static_cast<int>(state.epoch + 1);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), state.shuffle_rng);

  double cls_total = 0.0, ccl_total = 0.0;
  try {
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Tensor x = data.batch_features(idx);
      const std::vector<std::size_t> y = data.batch_labels(idx);
      const double m = static_cast<double>(idx.size());

      // (1) soft labels from the current dictionary
      std::optional<SoftLabelMatrix> soft;
      if (state.head) {
        soft = soft_labels(state.head->dictionary, cfg.head.margin, epoch_no);
        if (hooks.on_soft_labels) hooks.on_soft_labels(*soft);
      }

      // (2) backbone + fc under the classification loss, head untouched
      Tensor features;
      {
        auto params = state.model.parameters();
        zero_grads(params);
        Graph tape;
        const ClassifyOutput out = state.model.classify(x);
        Tensor loss;
        if (cfg.mode == TargetMode::ccl) {
          loss = classification_loss(out.probs, y, soft_rows_for(*soft, y), cfg.kl_weight);
        } else {
          loss = cross_entropy(out.probs, smoothing_targets(cfg, state, y, k));
        }
        tape.backward(loss);
        clip_gradients(params, cfg.grad_clip_norm);
        sgd_step(params, state.backbone_opt, lr.backbone);
        zero_grads(params);
        cls_total += loss.item() * m;
        features = out.features.detach();
      }
      if (hooks.after_phase) hooks.after_phase(Phase::backbone, state);

      // (3) embedding net + dictionary under the head loss, backbone untouched
      if (state.head) {
        auto params = state.head->trainable_parameters();
        zero_grads(params);
        Graph tape;
        const Tensor e = embed(state.head->embed_net, features);
        const Tensor loss = head_loss(e, y, state.head->dictionary, cfg.head);
        tape.backward(loss);
        clip_gradients(params, cfg.grad_clip_norm);
        sgd_step(params, state.head_opt, lr.ccl);
        zero_grads(params);
        ccl_total += loss.item() * m;
        if (hooks.after_phase) hooks.after_phase(Phase::head, state);
      }
    }
  } catch (const DegenerateVectorError& e) {
    throw DegenerateVectorError("epoch " + std::to_string(epoch_no) + ": " + e.what());
  }

  EpochReport report;
  report.epoch = static_cast<std::size_t>(epoch_no);
  report.mean_cls_loss = cls_total / static_cast<double>(data.size());
  report.mean_ccl_loss = state.head ? ccl_total / static_cast<double>(data.size()) : 0.0;
  report.lr = lr;
  report.p_bar = std::numeric_limits<double>::quiet_NaN();
  if (state.head) {
    SoftLabelMatrix m = soft_labels(state.head->dictionary, cfg.head.margin, epoch_no);
    if (hooks.on_soft_labels) hooks.on_soft_labels(m);
    report.p_bar = mean_correct_softness(m);
    const bool plateau = update_softness(state.softness, report.p_bar);
    if (plateau && cfg.freeze_dictionary && !state.head->dictionary.frozen()) {
      state.head->dictionary.freeze();
    }
    report.frozen = state.head->dictionary.frozen();
    report.soft_labels = std::move(m);
  }
  ++state.epoch;
  return report;
}

ConfusionMatrix evaluate(const Classifier& model, const LabeledDataset& data) {
  if (data.dim() != model.input_dim()) {
    throw DimensionError("model expects input dim " + std::to_string(model.input_dim()) +
                         ", data has dim " + std::to_string(data.dim()));
  }
  if (data.num_classes() != model.num_classes()) {
    throw DimensionError("model has " + std::to_string(model.num_classes()) +
                         " classes, data declares " + std::to_string(data.num_classes()));
  }
  NoGradGuard no_grad;
  const ClassifyOutput out = model.classify(data.all_features());
  return ConfusionMatrix::from_predictions(data.num_classes(), data.labels(), predict_rows(out.probs));
}

std::string format_epoch_record(const EpochReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "epoch=%zu loss_cls=%.9g loss_ccl=%.9g p_bar=%.9g lr_backbone=%.9g lr_ccl=%.9g "
                "frozen=%d val_acc=%.6f val_kappa=%.6f",
                r.epoch, r.mean_cls_loss, r.mean_ccl_loss, r.p_bar, r.lr.backbone, r.lr.ccl,
                r.frozen ? 1 : 0, r.val_accuracy, r.val_kappa);
  return buf;
}

TrainResult fit(const TrainConfig& cfg, const LabeledDataset& train, const LabeledDataset* val,
                const TrainHooks& hooks, const std::function<void(const EpochReport&)>& on_epoch) {
  TrainResult result{init_train_state(cfg, train.dim(), train.num_classes(), train.class_prior()), {}};
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    EpochReport r = train_epoch(result.state, train, cfg, hooks);
    r.val_accuracy = r.val_kappa = std::numeric_limits<double>::quiet_NaN();
    if (val != nullptr) {
      const ConfusionMatrix cm = evaluate(result.state.model, *val);
      r.val_accuracy = accuracy(cm);
      try {
        r.val_kappa = cohens_kappa(cm);
      } catch (const ContractError&) {
        // single-class validation set: kappa undefined, stays NaN
      }
    }
    if (on_epoch) on_epoch(r);
    result.history.push_back(std::move(r));
  }
  return result;
}

}  // namespace ccl
