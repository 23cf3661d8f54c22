// Mini-batch training of the surrogate: Adam, global-norm clipping, seeded
// shuffling and early stopping on validation loss.
#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "tipcast/autodiff.hpp"
#include "tipcast/dataset.hpp"
#include "tipcast/tft.hpp"

namespace tipcast::train {

class Adam {
 public:
  Adam(ad::ParameterSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// Applies one update from the gradients currently held by the parameters.
  void step();
  std::size_t steps() const { return t_; }

 private:
  ad::ParameterSet& params_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(ad::ParameterSet& params, double max_norm);

class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  /// Records a validation loss; returns true when training should stop.
  bool update(double val_loss);
  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t bad_epochs_ = 0;
  double best_ = 0.0;
  bool has_best_ = false;
  bool improved_ = false;
};

/// Forward + backward + clip + Adam on one batch; returns the pre-update loss.
double train_step(tft::TftModel& model, const tft::Batch& batch, Adam& adam, Rng& dropout_rng);

/// Eval-mode mean loss over examples, in batches of config.batch_size.
double evaluate_loss(const tft::TftModel& model, const std::vector<data::WindowedExample>& examples);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainOptions {
  /// Replaces the measured validation loss (early-stopping tests).
  std::function<double(std::size_t epoch)> val_loss_override;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

/// Trains in place; on return the model holds the best-validation parameters.
TrainResult train(tft::TftModel& model, const std::vector<data::WindowedExample>& train_set,
                  const std::vector<data::WindowedExample>& val_set, const TrainOptions& options = {});

void write_history_csv(const std::filesystem::path& file, const std::vector<EpochRecord>& history);

}  // namespace tipcast::train
