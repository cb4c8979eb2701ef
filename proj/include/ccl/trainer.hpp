#pragma once

// Alternating two-phase training. For each minibatch the soft label matrix is
// taken from the current dictionary, the backbone and fc layer are updated
// with the head held fixed, then the embedding net and dictionary are updated
// with the backbone held fixed.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ccl/ccl_head.hpp"
#include "ccl/classifier.hpp"
#include "ccl/data.hpp"
#include "ccl/metrics.hpp"

namespace ccl {

enum class TargetMode { hard, lsr_uniform, lsr_apriori, ccl };

const char* to_string(TargetMode mode);
TargetMode parse_target_mode(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  double lr_backbone = 0.1;
  // Epochs at which both learning rates are multiplied by 0.1. Empty means
  // 50% and 75% of `epochs`.
  std::vector<std::size_t> lr_drop_epochs;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double grad_clip_norm = 5.0;
  std::size_t patience = 10;
  bool freeze_dictionary = true;
  double kl_weight = 1.0;
  TargetMode mode = TargetMode::ccl;
  // Smoothing weight for the lsr modes.
  double epsilon = 0.0;
  std::vector<std::size_t> backbone_widths{32, 8};
  CclConfig head;
  std::uint64_t seed = 0;

  std::vector<std::size_t> drop_epochs() const;
  void validate() const;
};

struct OptimizerState {
  struct Slot {
    const void* owner = nullptr;
    std::vector<double> velocity;
  };
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<Slot> slots;

  // Momentum buffer for `param`, if one has been created.
  const std::vector<double>* velocity_of(const Tensor& param) const;
};

// v <- momentum * v + g + weight_decay * w;  w <- w - lr * v.
// Parameters without a gradient buffer are treated as having zero gradient.
void sgd_step(std::span<Tensor> params, OptimizerState& opt, double lr);

// Rescales all gradients by max_norm / norm when their global L2 norm
// exceeds max_norm. Returns the norm before clipping.
double clip_gradients(std::span<Tensor> params, double max_norm);

struct SoftnessHistory {
  std::size_t patience = 10;
  std::vector<double> values;
  double best = 0.0;
  std::size_t epochs_since_improvement = 0;
  bool frozen = false;
};

// Strictly lower than the best value so far resets the counter; anything else
// increments it. Returns true once the counter has reached `patience`; the
// flag then stays set.
bool update_softness(SoftnessHistory& hist, double p_bar);

struct LearningRates {
  double backbone = 0.0;
  double ccl = 0.0;
};

LearningRates lr_schedule(std::size_t epoch, const TrainConfig& cfg);

struct TrainState {
  Classifier model;
  std::optional<CclHead> head;  // present in ccl mode only
  OptimizerState backbone_opt;
  OptimizerState head_opt;
  std::size_t epoch = 0;
  SoftnessHistory softness;
  std::vector<double> class_prior;
  std::mt19937_64 shuffle_rng;
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

TrainState init_train_state(const TrainConfig& cfg, std::size_t input_dim,
                            std::size_t num_classes, std::vector<double> class_prior);

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double mean_cls_loss = 0.0;
  double mean_ccl_loss = 0.0;
  double p_bar = 0.0;  // NaN without a head
  LearningRates lr;
  bool frozen = false;
  double val_accuracy = 0.0;  // NaN when no validation split
  double val_kappa = 0.0;
  std::optional<SoftLabelMatrix> soft_labels;  // end-of-epoch matrix
};

enum class Phase { backbone, head };

struct TrainHooks {
  // Every soft label matrix the loop computes (per minibatch and at epoch end).
  std::function<void(const SoftLabelMatrix&)> on_soft_labels;
  // After each phase of each minibatch.
  std::function<void(Phase, const TrainState&)> after_phase;
};

EpochReport train_epoch(TrainState& state, const LabeledDataset& data, const TrainConfig& cfg,
                        const TrainHooks& hooks = {});

ConfusionMatrix evaluate(const Classifier& model, const LabeledDataset& data);

std::string format_epoch_record(const EpochReport& report);

struct TrainResult {
  TrainState state;
  std::vector<EpochReport> history;
};

// Runs cfg.epochs epochs, evaluating on `val` after each when given.
// `on_epoch` sees every report as soon as it is complete.
TrainResult fit(const TrainConfig& cfg, const LabeledDataset& train, const LabeledDataset* val,
                const TrainHooks& hooks = {},
                const std::function<void(const EpochReport&)>& on_epoch = {});

}  // namespace ccl
