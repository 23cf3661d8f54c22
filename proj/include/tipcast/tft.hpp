// Attention-free Temporal Fusion Transformer: variable selection networks,
// gated residual networks, static context encoders and an LSTM
// encoder-decoder with a shared linear output head.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tipcast/autodiff.hpp"
#include "tipcast/boxmodel.hpp"
#include "tipcast/dataset.hpp"

namespace tipcast::tft {

enum class LossKind { QuantileMedian, Sdtw };

std::string_view to_string(LossKind k);
LossKind loss_from_string(std::string_view s);

struct TftConfig {
  std::size_t d_model = 64;
  std::size_t n_lstm_layers = 2;
  double dropout = 0.2;
  std::size_t history = 100, horizon = 50;
  std::size_t n_channels = 0, n_known = 0, n_statics = 0, n_targets = 0;
  LossKind loss = LossKind::Sdtw;
  double gamma = 1.0;
  double lr = 1e-4;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 19;
  std::size_t patience = 5;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;  // soft-DTW batch parallelism

  /// Throws ConfigError on violated invariants.
  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are rejected.
  static TftConfig from_json(const nlohmann::json& j);
  bool operator==(const TftConfig&) const = default;

  /// Published hyperparameters for each variant (dims left for the caller).
  static TftConfig paper_preset(box::Variant v);
};

/// Time-major mini-batch: row t * size + b holds step t of example b.
struct Batch {
  std::size_t size = 0;
  Matrix statics;  // [B x n_statics]
  Matrix past;     // [H*B x (n_channels + n_known)], observed then known
  Matrix future;   // [L*B x n_known]
  Matrix target;   // [L*B x n_channels]
};

Batch make_batch(const std::vector<data::WindowedExample>& examples, std::span<const std::size_t> indices);

/// Rows of example b from a time-major stack with `batch` members.
Matrix unstack(const Matrix& time_major, std::size_t batch, std::size_t b);
/// Inverse of unstack over all members.
Matrix stack(const std::vector<Matrix>& per_example);

// --------------------------------------------------------------------- blocks

struct GrnSpec {
  std::size_t in = 0, hidden = 0, out = 0;
  std::size_t context = 0;  // 0 = no context input
};

void register_grn(ad::ParameterSet& ps, const std::string& prefix, const GrnSpec& spec, Rng& rng);

/// out = LN(skip(a) + glu(W2a eta + b2a, W2b eta + b2b)),
/// eta = dropout(elu(W1 a + Wc c + b1)); skip is linear when in != out.
ad::Var grn(ad::Tape& tape, ad::ParameterSet& ps, const std::string& prefix, ad::Var a,
            std::optional<ad::Var> context, double dropout);

void register_vsn(ad::ParameterSet& ps, const std::string& prefix, std::size_t n_vars, std::size_t d,
                  bool has_context, Rng& rng);

struct VsnOutput {
  ad::Var combined;  // [rows x d]
  ad::Var weights;   // [rows x n_vars]
};

/// weights = softmax(GRN_flat(concat(embeddings), context) + mask);
/// combined = sum_j weights_j * GRN_j(embedding_j). Masked variables receive
/// a -inf logit.
VsnOutput vsn(ad::Tape& tape, ad::ParameterSet& ps, const std::string& prefix,
              const std::vector<ad::Var>& embeddings, std::optional<ad::Var> context, double dropout,
              const std::vector<bool>* masked = nullptr);

void register_lstm(ad::ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t d, Rng& rng);

struct LstmState {
  ad::Var h, c;
};

/// One step: gates (i, f, g, o) = x Wx + h Wh + b.
LstmState lstm_cell(ad::Tape& tape, ad::ParameterSet& ps, const std::string& prefix, ad::Var x,
                    LstmState state);

struct LstmSequence {
  ad::Var outputs;  // [T*B x d], time-major
  LstmState final;
};

LstmSequence lstm_sequence(ad::Tape& tape, ad::ParameterSet& ps, const std::string& prefix, ad::Var inputs,
                           std::size_t batch, LstmState init);

// ---------------------------------------------------------------------- model

class TftModel {
 public:
  explicit TftModel(const TftConfig& config);

  const TftConfig& config() const { return config_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

  struct Output {
    ad::Var prediction;      // [L*B x n_targets]
    ad::Var static_weights;  // [B x n_statics]
    ad::Var past_weights;    // [H*B x (n_channels + n_known)]
    ad::Var future_weights;  // [L*B x n_known]
  };

  /// Records the forward pass; dropout is active when the tape is in train mode.
  Output forward(ad::Tape& tape, const Batch& batch) const;

  /// Eval-mode prediction, [L*B x n_targets] time-major.
  Matrix predict(const Batch& batch) const;

  /// Every parameter name; the census contains no attention parameters.
  std::vector<std::string> parameter_names() const;

 private:
  TftConfig config_;
  mutable ad::ParameterSet params_;
};

// --------------------------------------------------------------------- losses

/// mean(0.5 * |pred - target|)
ad::Var quantile_median_loss(ad::Var pred, const Matrix& target);

/// Mean over examples of soft-DTW(pred_b, target_b) / (2L) on time-major stacks.
ad::Var sdtw_loss(ad::Var pred, const Matrix& target, std::size_t batch, double gamma, std::size_t workers = 1);

ad::Var loss(ad::Var pred, const Matrix& target, std::size_t batch, const TftConfig& config);

}  // namespace tipcast::tft
