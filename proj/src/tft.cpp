#include "tipcast/tft.hpp"

#include <cmath>
#include <limits>

#include "tipcast/error.hpp"
#include "tipcast/sdtw.hpp"

namespace tipcast::tft {

using ad::Parameter;
using ad::ParameterSet;
using ad::Tape;
using ad::Var;
using nlohmann::json;

namespace {

void xavier(Parameter& p, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows + p.value.cols));
  for (double& v : p.value.data) v = rng.uniform(-limit, limit);
}

void fill(Parameter& p, double value) { std::fill(p.value.data.begin(), p.value.data.end(), value); }

Var P(Tape& t, ParameterSet& ps, const std::string& name) { return t.param(ps.get(name)); }

void check_finite(const Var& v, const char* layer) {
  for (double x : v.value().data) {
    if (!std::isfinite(x)) throw NumericalError(std::string("non-finite activation in ") + layer);
  }
}

std::string idx(const std::string& prefix, std::size_t j) { return prefix + "." + std::to_string(j); }

// Per-variable scalar -> d_model affine embeddings of columns of x.
std::vector<Var> embed(Tape& t, ParameterSet& ps, const std::string& prefix, Var x,
                       std::size_t first_var, std::size_t first_col, std::size_t count) {
  std::vector<Var> out;
  for (std::size_t j = 0; j < count; ++j) {
    const std::string n = idx(prefix, first_var + j);
    out.push_back(ad::affine(ad::slice_cols(x, first_col + j, 1), P(t, ps, n + ".w"), P(t, ps, n + ".b")));
  }
  return out;
}

void register_embeddings(ParameterSet& ps, const std::string& prefix, std::size_t n, std::size_t d, Rng& rng) {
  for (std::size_t j = 0; j < n; ++j) {
    xavier(ps.add(idx(prefix, j) + ".w", 1, d), rng);
    ps.add(idx(prefix, j) + ".b", 1, d);
  }
}

}  // namespace

// --------------------------------------------------------------------- config

std::string_view to_string(LossKind k) { return k == LossKind::Sdtw ? "sdtw" : "quantile_median"; }

LossKind loss_from_string(std::string_view s) {
  if (s == "sdtw") return LossKind::Sdtw;
  if (s == "quantile_median") return LossKind::QuantileMedian;
  throw ConfigError("unknown loss '" + std::string(s) + "' (sdtw|quantile_median)");
}

void TftConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("tft config: " + m); };
  if (d_model == 0) fail("d_model must be positive");
  if (n_lstm_layers == 0) fail("n_lstm_layers must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (history == 0 || horizon == 0) fail("history and horizon must be positive");
  if (n_channels == 0 || n_known == 0 || n_statics == 0 || n_targets == 0) {
    fail("channel, known, static and target counts must be positive");
  }
  if (!(gamma > 0.0)) fail("gamma must be positive");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
}

json TftConfig::to_json() const {
  return {{"d_model", d_model},       {"n_lstm_layers", n_lstm_layers}, {"dropout", dropout},
          {"history", history},       {"horizon", horizon},             {"n_channels", n_channels},
          {"n_known", n_known},       {"n_statics", n_statics},         {"n_targets", n_targets},
          {"loss", to_string(loss)},  {"gamma", gamma},                 {"lr", lr},
          {"batch_size", batch_size}, {"max_epochs", max_epochs},       {"patience", patience},
          {"clip_norm", clip_norm},   {"seed", seed},                   {"workers", workers}};
}

TftConfig TftConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("tft config must be an object");
  TftConfig c;
  const json known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown tft config key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("d_model", c.d_model);
    get("n_lstm_layers", c.n_lstm_layers);
    get("dropout", c.dropout);
    get("history", c.history);
    get("horizon", c.horizon);
    get("n_channels", c.n_channels);
    get("n_known", c.n_known);
    get("n_statics", c.n_statics);
    get("n_targets", c.n_targets);
    if (j.contains("loss")) c.loss = loss_from_string(j.at("loss").get<std::string>());
    get("gamma", c.gamma);
    get("lr", c.lr);
    get("batch_size", c.batch_size);
    get("max_epochs", c.max_epochs);
    get("patience", c.patience);
    get("clip_norm", c.clip_norm);
    get("seed", c.seed);
    get("workers", c.workers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("tft config: ") + e.what());
  }
  return c;
}

TftConfig TftConfig::paper_preset(box::Variant v) {
  TftConfig c;
  c.dropout = 0.2;
  c.lr = 1e-4;
  c.clip_norm = 1.0;
  if (v == box::Variant::FourBox) {
    c.n_lstm_layers = 2;
    c.d_model = 64;
    c.history = 100;
    c.horizon = 50;
    c.batch_size = 128;
    c.max_epochs = 19;
    c.patience = 5;
  } else {
    c.n_lstm_layers = 3;
    c.d_model = 128;
    c.history = 200;
    c.horizon = 100;
    c.batch_size = 32;
    c.max_epochs = 10;
    c.patience = 3;
  }
  return c;
}

// ---------------------------------------------------------------------- batch

Batch make_batch(const std::vector<data::WindowedExample>& examples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("empty batch");
  const auto& first = examples.at(indices[0]);
  const std::size_t bsz = indices.size();
  const std::size_t h = first.history.rows, l = first.target.rows;
  const std::size_t c = first.history.cols, k = first.past_known.cols, s = first.statics.size();
  Batch b;
  b.size = bsz;
  b.statics = Matrix(bsz, s);
  b.past = Matrix(h * bsz, c + k);
  b.future = Matrix(l * bsz, k);
  b.target = Matrix(l * bsz, first.target.cols);
  for (std::size_t i = 0; i < bsz; ++i) {
    const auto& ex = examples.at(indices[i]);
    if (ex.history.rows != h || ex.target.rows != l || ex.history.cols != c || ex.statics.size() != s) {
      throw ShapeError("batch members have inconsistent window shapes");
    }
    std::copy(ex.statics.begin(), ex.statics.end(), b.statics.row(i).begin());
    for (std::size_t t = 0; t < h; ++t) {
      auto row = b.past.row(t * bsz + i);
      std::copy(ex.history.row(t).begin(), ex.history.row(t).end(), row.begin());
      std::copy(ex.past_known.row(t).begin(), ex.past_known.row(t).end(), row.begin() + static_cast<std::ptrdiff_t>(c));
    }
    for (std::size_t t = 0; t < l; ++t) {
      std::copy(ex.future_known.row(t).begin(), ex.future_known.row(t).end(), b.future.row(t * bsz + i).begin());
      std::copy(ex.target.row(t).begin(), ex.target.row(t).end(), b.target.row(t * bsz + i).begin());
    }
  }
  return b;
}

Matrix unstack(const Matrix& time_major, std::size_t batch, std::size_t b) {
  if (batch == 0 || time_major.rows % batch != 0 || b >= batch) throw ShapeError("unstack: bad batch geometry");
  const std::size_t steps = time_major.rows / batch;
  Matrix out(steps, time_major.cols);
  for (std::size_t t = 0; t < steps; ++t) {
    std::copy(time_major.row(t * batch + b).begin(), time_major.row(t * batch + b).end(), out.row(t).begin());
  }
  return out;
}

Matrix stack(const std::vector<Matrix>& per_example) {
  if (per_example.empty()) throw InvalidArgument("stack of nothing");
  const std::size_t batch = per_example.size(), steps = per_example[0].rows, cols = per_example[0].cols;
  Matrix out(steps * batch, cols);
  for (std::size_t b = 0; b < batch; ++b) {
    if (per_example[b].rows != steps || per_example[b].cols != cols) throw ShapeError("stack: ragged members");
    for (std::size_t t = 0; t < steps; ++t) {
      std::copy(per_example[b].row(t).begin(), per_example[b].row(t).end(), out.row(t * batch + b).begin());
    }
  }
  return out;
}

// --------------------------------------------------------------------- blocks

void register_grn(ParameterSet& ps, const std::string& prefix, const GrnSpec& spec, Rng& rng) {
  xavier(ps.add(prefix + ".w1", spec.in, spec.hidden), rng);
  ps.add(prefix + ".b1", 1, spec.hidden);
  if (spec.context > 0) xavier(ps.add(prefix + ".wc", spec.context, spec.hidden), rng);
  xavier(ps.add(prefix + ".w2a", spec.hidden, spec.out), rng);
  ps.add(prefix + ".b2a", 1, spec.out);
  xavier(ps.add(prefix + ".w2b", spec.hidden, spec.out), rng);
  ps.add(prefix + ".b2b", 1, spec.out);
  if (spec.in != spec.out) {
    xavier(ps.add(prefix + ".ws", spec.in, spec.out), rng);
    ps.add(prefix + ".bs", 1, spec.out);
  }
  fill(ps.add(prefix + ".ln.g", 1, spec.out), 1.0);
  ps.add(prefix + ".ln.b", 1, spec.out);
}

Var grn(Tape& t, ParameterSet& ps, const std::string& prefix, Var a, std::optional<Var> context, double dropout) {
  Var pre = ad::affine(a, P(t, ps, prefix + ".w1"), P(t, ps, prefix + ".b1"));
  if (context) {
    if (!ps.contains(prefix + ".wc")) throw ShapeError(prefix + ": context given to a context-free GRN");
    pre = ad::add(pre, ad::matmul(*context, P(t, ps, prefix + ".wc")));
  }
  Var eta = ad::dropout(ad::elu(pre), dropout);
  const Var gate_a = ad::affine(eta, P(t, ps, prefix + ".w2a"), P(t, ps, prefix + ".b2a"));
  const Var gate_b = ad::affine(eta, P(t, ps, prefix + ".w2b"), P(t, ps, prefix + ".b2b"));
  const Var skip = ps.contains(prefix + ".ws") ? ad::affine(a, P(t, ps, prefix + ".ws"), P(t, ps, prefix + ".bs")) : a;
  return ad::layer_norm_rows(ad::add(skip, ad::glu(gate_a, gate_b)), P(t, ps, prefix + ".ln.g"),
                             P(t, ps, prefix + ".ln.b"));
}

void register_vsn(ParameterSet& ps, const std::string& prefix, std::size_t n_vars, std::size_t d,
                  bool has_context, Rng& rng) {
  register_grn(ps, prefix + ".flat", {n_vars * d, d, n_vars, has_context ? d : 0}, rng);
  for (std::size_t j = 0; j < n_vars; ++j) register_grn(ps, idx(prefix + ".var", j), {d, d, d, 0}, rng);
}

VsnOutput vsn(Tape& t, ParameterSet& ps, const std::string& prefix, const std::vector<Var>& embeddings,
              std::optional<Var> context, double dropout, const std::vector<bool>* masked) {
  if (embeddings.empty()) throw InvalidArgument(prefix + ": variable selection needs at least one variable");
  const std::size_t n = embeddings.size();
  Var logits = grn(t, ps, prefix + ".flat", ad::concat_cols(embeddings), context, dropout);
  if (masked != nullptr) {
    if (masked->size() != n) throw ShapeError(prefix + ": mask length differs from variable count");
    Matrix m(logits.rows(), n);
    for (std::size_t j = 0; j < n; ++j) {
      if ((*masked)[j]) {
        for (std::size_t r = 0; r < m.rows; ++r) m(r, j) = -std::numeric_limits<double>::infinity();
      }
    }
    logits = ad::add(logits, t.constant(std::move(m)));
  }
  const Var weights = ad::softmax_rows(logits);
  std::optional<Var> combined;
  for (std::size_t j = 0; j < n; ++j) {
    if (masked != nullptr && (*masked)[j]) continue;
    const Var term = ad::scale_rows(grn(t, ps, idx(prefix + ".var", j), embeddings[j], std::nullopt, dropout),
                                    ad::slice_cols(weights, j, 1));
    combined = combined ? ad::add(*combined, term) : term;
  }
  if (!combined) throw InvalidArgument(prefix + ": every variable is masked");
  return {*combined, weights};
}

void register_lstm(ParameterSet& ps, const std::string& prefix, std::size_t in, std::size_t d, Rng& rng) {
  xavier(ps.add(prefix + ".wx", in, 4 * d), rng);
  xavier(ps.add(prefix + ".wh", d, 4 * d), rng);
  Parameter& b = ps.add(prefix + ".b", 1, 4 * d);
  for (std::size_t k = d; k < 2 * d; ++k) b.value.data[k] = 1.0;  // forget gate bias
}

namespace {

LstmState lstm_pointwise(Var gates, Var c_prev, std::size_t d) {
  const Var i = ad::sigmoid(ad::slice_cols(gates, 0, d));
  const Var f = ad::sigmoid(ad::slice_cols(gates, d, d));
  const Var g = ad::tanh(ad::slice_cols(gates, 2 * d, d));
  const Var o = ad::sigmoid(ad::slice_cols(gates, 3 * d, d));
  const Var c = ad::add(ad::hadamard(f, c_prev), ad::hadamard(i, g));
  return {ad::hadamard(o, ad::tanh(c)), c};
}

}  // namespace

LstmState lstm_cell(Tape& t, ParameterSet& ps, const std::string& prefix, Var x, LstmState state) {
  const std::size_t d = state.h.cols();
  const Var gates = ad::add(ad::affine(x, P(t, ps, prefix + ".wx"), P(t, ps, prefix + ".b")),
                            ad::matmul(state.h, P(t, ps, prefix + ".wh")));
  return lstm_pointwise(gates, state.c, d);
}

LstmSequence lstm_sequence(Tape& t, ParameterSet& ps, const std::string& prefix, Var inputs, std::size_t batch,
                           LstmState init) {
  if (batch == 0 || inputs.rows() % batch != 0) throw ShapeError(prefix + ": inputs are not time-major over the batch");
  const std::size_t steps = inputs.rows() / batch;
  const std::size_t d = init.h.cols();
  const Var proj = ad::affine(inputs, P(t, ps, prefix + ".wx"), P(t, ps, prefix + ".b"));
  const Var wh = P(t, ps, prefix + ".wh");
  LstmState s = init;
  std::vector<Var> outs;
  outs.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const Var gates = ad::add(ad::slice_rows(proj, k * batch, batch), ad::matmul(s.h, wh));
    s = lstm_pointwise(gates, s.c, d);
    outs.push_back(s.h);
  }
  return {ad::concat_rows(outs), s};
}

// ---------------------------------------------------------------------- model

TftModel::TftModel(const TftConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed, 0x7F7);
  const std::size_t d = config_.d_model;
  ParameterSet& ps = params_;
  register_embeddings(ps, "emb.static", config_.n_statics, d, rng);
  register_embeddings(ps, "emb.observed", config_.n_channels, d, rng);
  register_embeddings(ps, "emb.known", config_.n_known, d, rng);
  register_vsn(ps, "vsn.static", config_.n_statics, d, false, rng);
  for (const char* c : {"ctx.selection", "ctx.enrichment", "ctx.state_h", "ctx.state_c"}) {
    register_grn(ps, c, {d, d, d, 0}, rng);
  }
  register_vsn(ps, "vsn.past", config_.n_channels + config_.n_known, d, true, rng);
  register_vsn(ps, "vsn.future", config_.n_known, d, true, rng);
  for (std::size_t l = 0; l < config_.n_lstm_layers; ++l) {
    register_lstm(ps, idx("encoder", l), d, d, rng);
    register_lstm(ps, idx("decoder", l), d, d, rng);
  }
  xavier(ps.add("gate.wa", d, d), rng);
  ps.add("gate.ba", 1, d);
  xavier(ps.add("gate.wb", d, d), rng);
  ps.add("gate.bb", 1, d);
  fill(ps.add("gate.ln.g", 1, d), 1.0);
  ps.add("gate.ln.b", 1, d);
  register_grn(ps, "enrichment", {d, d, d, d}, rng);
  register_grn(ps, "positionwise", {d, d, d, 0}, rng);
  xavier(ps.add("head.w", d, config_.n_targets), rng);
  ps.add("head.b", 1, config_.n_targets);
}

TftModel::Output TftModel::forward(Tape& t, const Batch& batch) const {
  const TftConfig& c = config_;
  const std::size_t bsz = batch.size, h = c.history, l = c.horizon, d = c.d_model;
  if (batch.statics.rows != bsz || batch.statics.cols != c.n_statics) throw ShapeError("batch statics do not match the model");
  if (batch.past.rows != h * bsz || batch.past.cols != c.n_channels + c.n_known) {
    throw ShapeError("batch history is [" + std::to_string(batch.past.rows) + " x " + std::to_string(batch.past.cols) +
                     "], model expects [" + std::to_string(h * bsz) + " x " + std::to_string(c.n_channels + c.n_known) + "]");
  }
  if (batch.future.rows != l * bsz || batch.future.cols != c.n_known) throw ShapeError("batch future inputs do not match the model");
  ParameterSet& ps = params_;
  const double p = c.dropout;

  // Static covariate encoders.
  const Var statics = t.constant(batch.statics);
  const VsnOutput st = vsn(t, ps, "vsn.static", embed(t, ps, "emb.static", statics, 0, 0, c.n_statics), std::nullopt, p);
  const Var c_sel = grn(t, ps, "ctx.selection", st.combined, std::nullopt, p);
  const Var c_enr = grn(t, ps, "ctx.enrichment", st.combined, std::nullopt, p);
  const Var c_h = grn(t, ps, "ctx.state_h", st.combined, std::nullopt, p);
  const Var c_c = grn(t, ps, "ctx.state_c", st.combined, std::nullopt, p);
  check_finite(c_sel, "static context");

  // Variable selection over past (observed + known) and future (known) inputs.
  const Var past = t.constant(batch.past);
  std::vector<Var> past_emb = embed(t, ps, "emb.observed", past, 0, 0, c.n_channels);
  const std::vector<Var> past_known = embed(t, ps, "emb.known", past, 0, c.n_channels, c.n_known);
  past_emb.insert(past_emb.end(), past_known.begin(), past_known.end());
  const VsnOutput pv = vsn(t, ps, "vsn.past", past_emb, ad::tile_rows(c_sel, h), p);
  const Var future = t.constant(batch.future);
  const VsnOutput fv = vsn(t, ps, "vsn.future", embed(t, ps, "emb.known", future, 0, 0, c.n_known),
                           ad::tile_rows(c_sel, l), p);
  check_finite(pv.combined, "past variable selection");

  // Encoder-decoder LSTM stacks; static context seeds the first layer only.
  const Var zero = t.constant(Matrix(bsz, d));
  Var enc_in = pv.combined, dec_in = fv.combined;
  for (std::size_t k = 0; k < c.n_lstm_layers; ++k) {
    const LstmState init = k == 0 ? LstmState{c_h, c_c} : LstmState{zero, zero};
    const LstmSequence enc = lstm_sequence(t, ps, idx("encoder", k), enc_in, bsz, init);
    const LstmSequence dec = lstm_sequence(t, ps, idx("decoder", k), dec_in, bsz, enc.final);
    enc_in = enc.outputs;
    dec_in = dec.outputs;
  }
  check_finite(dec_in, "decoder LSTM");

  const Var gated = ad::glu(ad::affine(dec_in, P(t, ps, "gate.wa"), P(t, ps, "gate.ba")),
                            ad::affine(dec_in, P(t, ps, "gate.wb"), P(t, ps, "gate.bb")));
  const Var phi = ad::layer_norm_rows(ad::add(gated, fv.combined), P(t, ps, "gate.ln.g"), P(t, ps, "gate.ln.b"));
  const Var enriched = grn(t, ps, "enrichment", phi, ad::tile_rows(c_enr, l), p);
  const Var pos = grn(t, ps, "positionwise", enriched, std::nullopt, p);
  const Var pred = ad::affine(pos, P(t, ps, "head.w"), P(t, ps, "head.b"));
  check_finite(pred, "output head");
  return {pred, st.weights, pv.weights, fv.weights};
}

Matrix TftModel::predict(const Batch& batch) const {
  Tape t(false);
  return forward(t, batch).prediction.value();
}

std::vector<std::string> TftModel::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < params_.size(); ++i) out.push_back(params_[i].name);
  return out;
}

// --------------------------------------------------------------------- losses

Var quantile_median_loss(Var pred, const Matrix& target) {
  const Matrix& pv = pred.value();
  if (pv.rows != target.rows || pv.cols != target.cols) {
    throw ShapeError("quantile loss: prediction [" + std::to_string(pv.rows) + " x " + std::to_string(pv.cols) +
                     "] vs target [" + std::to_string(target.rows) + " x " + std::to_string(target.cols) + "]");
  }
  const double n = static_cast<double>(pv.data.size());
  return ad::scale(ad::sum(ad::abs(ad::sub(pred, pred.tape->constant(target)))), 0.5 / n);
}

Var sdtw_loss(Var pred, const Matrix& target, std::size_t batch, double gamma, std::size_t workers) {
  const Matrix& pv = pred.value();
  if (pv.rows != target.rows || pv.cols != target.cols) throw ShapeError("soft-DTW loss: prediction and target differ in shape");
  std::vector<Matrix> preds, targets;
  for (std::size_t b = 0; b < batch; ++b) {
    preds.push_back(unstack(pv, batch, b));
    targets.push_back(unstack(target, batch, b));
  }
  std::vector<Matrix> grads;
  Matrix value(1, 1);
  value.data[0] = sdtw::batch_loss(preds, targets, gamma, &grads, workers);
  const Matrix stacked = stack(grads);
  const std::size_t ip = pred.id;
  return pred.tape->record(std::move(value), {ip}, [ip, stacked](Tape& t, std::size_t self) {
    const double g = t.out_grad(self).data[0];
    Matrix& gp = t.grad_buffer(ip);
    for (std::size_t i = 0; i < gp.data.size(); ++i) gp.data[i] += g * stacked.data[i];
  });
}

Var loss(Var pred, const Matrix& target, std::size_t batch, const TftConfig& config) {
  return config.loss == LossKind::Sdtw ? sdtw_loss(pred, target, batch, config.gamma, config.workers)
                                       : quantile_median_loss(pred, target);
}

}  // namespace tipcast::tft
