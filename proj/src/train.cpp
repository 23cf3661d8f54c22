#include "tipcast/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tipcast/error.hpp"
#include "tipcast/kernels.hpp"

namespace tipcast::train {

Adam::Adam(ad::ParameterSet& params, double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_.emplace_back(params_[i].value.rows, params_[i].value.cols);
    v_.emplace_back(params_[i].value.rows, params_[i].value.cols);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ad::Parameter& p = params_[k];
    double* m = m_[k].data.data();
    double* v = v_[k].data.data();
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const double g = p.grad.data[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value.data[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double clip_global_norm(ad::ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& g = params[k].grad.data;
    sq += kernels::dot(g.data(), g.data(), g.size());
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (double& g : params[k].grad.data) g *= s;
    }
  }
  return norm;
}

bool EarlyStopping::update(double val_loss) {
  improved_ = !has_best_ || val_loss < best_;
  if (improved_) {
    best_ = val_loss;
    has_best_ = true;
    bad_epochs_ = 0;
    return false;
  }
  ++bad_epochs_;
  return bad_epochs_ >= patience_;
}

double train_step(tft::TftModel& model, const tft::Batch& batch, Adam& adam, Rng& dropout_rng) {
  ad::ParameterSet& ps = model.params();
  ps.zero_grad();
  ad::Tape tape(true, &dropout_rng);
  const auto out = model.forward(tape, batch);
  const ad::Var l = tft::loss(out.prediction, batch.target, batch.size, model.config());
  const double value = l.value().data[0];
  if (!std::isfinite(value)) throw NumericalError("non-finite training loss");
  tape.backward(l);
  clip_global_norm(ps, model.config().clip_norm);
  adam.step();
  return value;
}

double evaluate_loss(const tft::TftModel& model, const std::vector<data::WindowedExample>& examples) {
  if (examples.empty()) throw EmptySplit("cannot evaluate on an empty split");
  const std::size_t bs = model.config().batch_size;
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < examples.size(); start += bs) {
    idx.clear();
    for (std::size_t i = start; i < std::min(examples.size(), start + bs); ++i) idx.push_back(i);
    const tft::Batch b = tft::make_batch(examples, idx);
    ad::Tape tape(false);
    const auto out = model.forward(tape, b);
    total += tft::loss(out.prediction, b.target, b.size, model.config()).value().data[0] * static_cast<double>(b.size);
  }
  return total / static_cast<double>(examples.size());
}

TrainResult train(tft::TftModel& model, const std::vector<data::WindowedExample>& train_set,
                  const std::vector<data::WindowedExample>& val_set, const TrainOptions& options) {
  if (train_set.empty()) throw EmptySplit("training split is empty");
  if (val_set.empty() && !options.val_loss_override) throw EmptySplit("validation split is empty");
  const tft::TftConfig& cfg = model.config();
  Adam adam(model.params(), cfg.lr);
  Rng dropout_rng(cfg.seed, 1);
  Rng shuffle_rng(cfg.seed, 2);
  EarlyStopping stopper(cfg.patience);
  TrainResult result;
  std::vector<Matrix> best_params;
  auto snapshot = [&] {
    best_params.clear();
    for (std::size_t k = 0; k < model.params().size(); ++k) best_params.push_back(model.params()[k].value);
  };
  snapshot();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double sum = 0.0;
    std::size_t seen = 0, batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const tft::Batch b = tft::make_batch(train_set, std::span(order).subspan(start, end - start));
      double l = 0.0;
      try {
        l = train_step(model, b, adam, dropout_rng);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
      }
      sum += l * static_cast<double>(b.size);
      seen += b.size;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sum / static_cast<double>(seen);
    rec.val_loss = options.val_loss_override ? options.val_loss_override(epoch) : evaluate_loss(model, val_set);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    const bool stop = stopper.update(rec.val_loss);
    if (stopper.improved()) {
      result.best_epoch = epoch;
      result.best_val_loss = rec.val_loss;
      snapshot();
    }
    if (stop) {
      result.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  for (std::size_t k = 0; k < model.params().size(); ++k) model.params()[k].value = best_params[k];
  return result;
}

void write_history_csv(const std::filesystem::path& file, const std::vector<EpochRecord>& history) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  out << "epoch,train_loss,val_loss,wall_seconds\n";
  char line[160];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.3f\n", r.epoch, r.train_loss, r.val_loss, r.wall_seconds);
    out << line;
  }
}

}  // namespace tipcast::train
