#include "tipcast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tipcast/defaults.hpp"
#include "tipcast/error.hpp"
#include "tipcast/rng.hpp"

namespace tipcast::data {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "tipcast-dataset";
constexpr int kVersion = 1;

void fit_columns(const std::vector<const Matrix*>& parts, std::size_t cols,
                 const std::vector<std::string>& names, std::vector<double>& mean,
                 std::vector<double>& stdev) {
  mean.assign(cols, 0.0);
  stdev.assign(cols, 0.0);
  std::size_t n = 0;
  for (const Matrix* m : parts) {
    for (std::size_t r = 0; r < m->rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) mean[c] += (*m)(r, c);
    }
    n += m->rows;
  }
  if (n == 0) throw InvalidArgument("cannot fit a standardizer on zero rows");
  for (double& v : mean) v /= static_cast<double>(n);
  for (const Matrix* m : parts) {
    for (std::size_t r = 0; r < m->rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = (*m)(r, c) - mean[c];
        stdev[c] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < cols; ++c) {
    stdev[c] = std::sqrt(stdev[c] / static_cast<double>(n));
    if (!(stdev[c] > 0.0) || !std::isfinite(stdev[c])) {
      throw ConstantChannel("channel '" + names[c] + "' has zero spread in the training set");
    }
  }
}

Matrix apply(const Matrix& raw, const std::vector<double>& mean, const std::vector<double>& sd,
             bool inverse) {
  if (raw.cols != mean.size()) {
    throw ShapeError("standardizer expects " + std::to_string(mean.size()) + " columns, got " +
                     std::to_string(raw.cols));
  }
  Matrix out(raw.rows, raw.cols);
  for (std::size_t r = 0; r < raw.rows; ++r) {
    for (std::size_t c = 0; c < raw.cols; ++c) {
      out(r, c) = inverse ? raw(r, c) * sd[c] + mean[c] : (raw(r, c) - mean[c]) / sd[c];
    }
  }
  return out;
}

Matrix rows_of(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(count, m.cols);
  std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(begin * m.cols), count * m.cols, out.data.begin());
  return out;
}

bool collapsed(const io::Archive& a) {
  return a.trajectory.collapse_time_atlantic.has_value() || a.trajectory.collapse_time_pacific.has_value();
}

}  // namespace

std::string_view to_string(Mode m) { return m == Mode::Deterministic ? "deterministic" : "stochastic"; }

Mode mode_from_string(std::string_view s) {
  if (s == "deterministic") return Mode::Deterministic;
  if (s == "stochastic") return Mode::Stochastic;
  throw InvalidArgument("unknown mode '" + std::string(s) + "' (deterministic|stochastic)");
}

std::size_t n_known(Mode m, box::Variant v) { return m == Mode::Deterministic ? 2 : box::n_fluxes(v); }

std::vector<std::string> known_names(Mode m, box::Variant v) {
  if (m == Mode::Deterministic) return {"time_sin", "time_cos"};
  std::vector<std::string> out;
  for (const auto& f : box::flux_names(v)) out.push_back("xi_" + f);
  return out;
}

Matrix known_rows(Mode m, const Matrix& noise, std::size_t begin, std::size_t count) {
  if (m == Mode::Deterministic) {
    Matrix out(count, 2);
    for (std::size_t i = 0; i < count; ++i) {
      const double phase = 2.0 * std::numbers::pi * static_cast<double>((begin + i) % 4) / 4.0;
      out(i, 0) = std::sin(phase);
      out(i, 1) = std::cos(phase);
    }
    return out;
  }
  Matrix out(count, noise.cols);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t t = begin + i;
    if (t == 0) continue;
    if (t - 1 >= noise.rows) {
      throw InvalidArgument("noise has " + std::to_string(noise.rows) + " rows, step " +
                            std::to_string(t) + " needs row " + std::to_string(t - 1));
    }
    std::copy(noise.row(t - 1).begin(), noise.row(t - 1).end(), out.row(i).begin());
  }
  return out;
}

std::size_t default_history(box::Variant v) { return v == box::Variant::FourBox ? 100 : 200; }
std::size_t default_horizon(box::Variant v) { return v == box::Variant::FourBox ? 50 : 100; }

std::vector<std::string> static_names_for(box::Variant v) { return load_defaults()[v].bounds.varying(); }

// ---------------------------------------------------------------- standardizer

Matrix Standardizer::transform_channels(const Matrix& raw) const {
  return apply(raw, channel_mean, channel_std, false);
}
Matrix Standardizer::inverse_channels(const Matrix& z) const {
  return apply(z, channel_mean, channel_std, true);
}
Matrix Standardizer::transform_known(const Matrix& raw) const {
  return apply(raw, known_mean, known_std, false);
}

std::vector<double> Standardizer::transform_statics(std::span<const double> raw) const {
  if (raw.size() != static_mean.size()) throw ShapeError("static covariate count mismatch");
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - static_mean[i]) / static_std[i];
  return out;
}

json Standardizer::to_json() const {
  return {{"channels", {{"names", channel_names}, {"mean", channel_mean}, {"std", channel_std}}},
          {"known", {{"names", known_names}, {"mean", known_mean}, {"std", known_std}}},
          {"statics", {{"names", static_names}, {"mean", static_mean}, {"std", static_std}}}};
}

Standardizer Standardizer::from_json(const json& j) {
  Standardizer s;
  try {
    auto read = [&](const char* key, std::vector<std::string>& n, std::vector<double>& m,
                    std::vector<double>& sd) {
      const json& b = j.at(key);
      n = b.at("names").get<std::vector<std::string>>();
      m = b.at("mean").get<std::vector<double>>();
      sd = b.at("std").get<std::vector<double>>();
      if (m.size() != n.size() || sd.size() != n.size()) {
        throw FormatError(std::string("standardizer block '") + key + "' has inconsistent lengths");
      }
    };
    read("channels", s.channel_names, s.channel_mean, s.channel_std);
    read("known", s.known_names, s.known_mean, s.known_std);
    read("statics", s.static_names, s.static_mean, s.static_std);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed standardizer: ") + e.what());
  }
  return s;
}

Standardizer fit_standardizer(const std::vector<const io::Archive*>& train, Mode mode,
                              const std::vector<std::string>& static_names) {
  if (train.empty()) throw EmptySplit("cannot fit a standardizer without training trajectories");
  const box::Variant v = train[0]->trajectory.variant;
  Standardizer s;
  s.channel_names = train[0]->channel_names;
  s.known_names = known_names(mode, v);
  s.static_names = static_names;

  std::vector<const Matrix*> chans;
  for (const auto* a : train) {
    if (a->channel_names != s.channel_names) {
      throw ChannelOrderMismatch("archive '" + a->id + "' has a different channel order");
    }
    chans.push_back(&a->trajectory.channels);
  }
  fit_columns(chans, s.channel_names.size(), s.channel_names, s.channel_mean, s.channel_std);

  if (mode == Mode::Stochastic) {
    std::vector<Matrix> known;
    known.reserve(train.size());
    std::vector<const Matrix*> ptrs;
    for (const auto* a : train) {
      known.push_back(known_rows(mode, a->trajectory.noise.values, 0, a->trajectory.n_steps()));
      ptrs.push_back(&known.back());
    }
    fit_columns(ptrs, s.known_names.size(), s.known_names, s.known_mean, s.known_std);
  } else {
    s.known_mean.assign(2, 0.0);
    s.known_std.assign(2, 1.0);
  }

  Matrix statics(train.size(), static_names.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t k = 0; k < static_names.size(); ++k) {
      statics(i, k) = box::get_covariate(train[i]->trajectory.params, static_names[k]);
    }
  }
  if (!static_names.empty()) fit_columns({&statics}, static_names.size(), static_names, s.static_mean, s.static_std);
  return s;
}

// -------------------------------------------------------------------- windows

std::vector<WindowedExample> window_split(const io::Archive& traj, std::size_t history,
                                          std::size_t horizon, std::size_t stride, Mode mode,
                                          const std::vector<std::string>& static_names) {
  if (history == 0 || horizon == 0 || stride == 0) throw InvalidArgument("H, L and stride must be positive");
  const std::size_t n = traj.trajectory.n_steps();
  if (n < history + horizon) {
    throw TrajectoryTooShort("trajectory '" + traj.id + "' has " + std::to_string(n) +
                             " steps, windows need " + std::to_string(history + horizon));
  }
  std::vector<double> statics;
  for (const auto& name : static_names) statics.push_back(box::get_covariate(traj.trajectory.params, name));
  const Matrix known = known_rows(mode, traj.trajectory.noise.values, 0, n);

  std::vector<WindowedExample> out;
  for (std::size_t off = 0; off + history + horizon <= n; off += stride) {
    WindowedExample ex;
    ex.history = rows_of(traj.trajectory.channels, off, history);
    ex.past_known = rows_of(known, off, history);
    ex.future_known = rows_of(known, off + history, horizon);
    ex.target = rows_of(traj.trajectory.channels, off + history, horizon);
    ex.statics = statics;
    ex.trajectory_id = traj.id;
    ex.offset = off;
    out.push_back(std::move(ex));
  }
  return out;
}

WindowedExample standardize(const WindowedExample& raw, const Standardizer& s) {
  WindowedExample z;
  z.history = s.transform_channels(raw.history);
  z.past_known = s.transform_known(raw.past_known);
  z.future_known = s.transform_known(raw.future_known);
  z.target = s.transform_channels(raw.target);
  z.statics = s.transform_statics(raw.statics);
  z.trajectory_id = raw.trajectory_id;
  z.offset = raw.offset;
  return z;
}

// -------------------------------------------------------------------- dataset

std::size_t DatasetInfo::record_size() const {
  const std::size_t c = n_channels(), k = n_known();
  return 2 + history * (c + k) + horizon * (k + c) + n_statics();
}

json DatasetInfo::to_json() const {
  return {{"format", kFormat},
          {"version", kVersion},
          {"variant", box::to_string(variant)},
          {"mode", to_string(mode)},
          {"history", history},
          {"horizon", horizon},
          {"stride", stride},
          {"archive_root", archive_root.string()},
          {"standardizer", standardizer.to_json()},
          {"splits", {{"train", train_ids}, {"val", val_ids}, {"test", test_ids}}},
          {"examples", {{"train", n_train_examples}, {"val", n_val_examples}, {"test", n_test_examples}}},
          {"record_layout",
           {"trajectory_index", "offset", "history[H x channels]", "past_known[H x known]",
            "future_known[L x known]", "target[L x channels]", "statics[n_statics]"}}};
}

DatasetInfo DatasetInfo::from_json(const json& j) {
  DatasetInfo d;
  try {
    if (j.at("format").get<std::string>() != kFormat) throw FormatError("not a dataset manifest");
    if (j.at("version").get<int>() != kVersion) {
      throw VersionMismatch("dataset version " + j.at("version").dump() + " is not supported");
    }
    d.variant = box::variant_from_string(j.at("variant").get<std::string>());
    d.mode = mode_from_string(j.at("mode").get<std::string>());
    d.history = j.at("history").get<std::size_t>();
    d.horizon = j.at("horizon").get<std::size_t>();
    d.stride = j.at("stride").get<std::size_t>();
    d.archive_root = j.at("archive_root").get<std::string>();
    d.standardizer = Standardizer::from_json(j.at("standardizer"));
    d.train_ids = j.at("splits").at("train").get<std::vector<std::string>>();
    d.val_ids = j.at("splits").at("val").get<std::vector<std::string>>();
    d.test_ids = j.at("splits").at("test").get<std::vector<std::string>>();
    d.n_train_examples = j.at("examples").at("train").get<std::size_t>();
    d.n_val_examples = j.at("examples").at("val").get<std::size_t>();
    d.n_test_examples = j.at("examples").at("test").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed dataset manifest: ") + e.what());
  }
  return d;
}

namespace {

struct Assignment {
  std::vector<const io::Archive*> train, val, test;
};

std::vector<const io::Archive*> take(std::vector<const io::Archive*>& pool, std::size_t n) {
  std::vector<const io::Archive*> out(pool.end() - static_cast<std::ptrdiff_t>(n), pool.end());
  pool.resize(pool.size() - n);
  return out;
}

void shuffle(std::vector<const io::Archive*>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

Assignment assign_splits(std::vector<const io::Archive*> pool, const SplitSpec& spec) {
  const bool counts = spec.n_train || spec.n_val || spec.n_test;
  const bool fracs = spec.f_train || spec.f_val || spec.f_test;
  if (counts == fracs) throw SplitError("give either split counts or split fractions");

  if (spec.filter == SplitSpec::Filter::CollapseOnly) {
    std::erase_if(pool, [](const io::Archive* a) { return !collapsed(*a); });
  }
  std::size_t nt, nv, ns;
  if (counts) {
    nt = spec.n_train.value_or(0);
    nv = spec.n_val.value_or(0);
    ns = spec.n_test.value_or(0);
  } else {
    const double ft = spec.f_train.value_or(0), fv = spec.f_val.value_or(0), fs = spec.f_test.value_or(0);
    if (ft < 0 || fv < 0 || fs < 0 || std::abs(ft + fv + fs - 1.0) > 1e-9) {
      throw SplitError("split fractions must be non-negative and sum to 1");
    }
    const auto total = static_cast<double>(pool.size());
    nv = static_cast<std::size_t>(std::floor(fv * total));
    ns = static_cast<std::size_t>(std::floor(fs * total));
    nt = pool.size() - nv - ns;
  }
  if (nt == 0) throw EmptySplit("training split is empty (" + std::to_string(pool.size()) + " eligible trajectories)");

  Rng rng(spec.seed, 0x5B117);
  Assignment a;
  if (spec.filter == SplitSpec::Filter::Balanced) {
    std::vector<const io::Archive*> yes, no;
    for (const auto* p : pool) (collapsed(*p) ? yes : no).push_back(p);
    shuffle(yes, rng);
    shuffle(no, rng);
    auto half = [&](std::size_t n, std::vector<const io::Archive*>& dst) {
      const std::size_t ny = n / 2 + n % 2, nn = n / 2;
      if (yes.size() < ny || no.size() < nn) {
        throw SplitError("insufficient trajectories for a balanced split: need " + std::to_string(ny) +
                         " collapsing and " + std::to_string(nn) + " non-collapsing, have " +
                         std::to_string(yes.size()) + " and " + std::to_string(no.size()));
      }
      dst = take(yes, ny);
      auto rest = take(no, nn);
      dst.insert(dst.end(), rest.begin(), rest.end());
      shuffle(dst, rng);
    };
    half(nt, a.train);
    half(nv, a.val);
    half(ns, a.test);
  } else {
    if (nt + nv + ns > pool.size()) {
      throw SplitError("insufficient trajectories: need " + std::to_string(nt + nv + ns) + ", have " +
                       std::to_string(pool.size()));
    }
    shuffle(pool, rng);
    a.train = take(pool, nt);
    a.val = take(pool, nv);
    a.test = take(pool, ns);
  }
  return a;
}

void append_record(std::vector<double>& buf, const WindowedExample& ex, std::size_t traj_index) {
  buf.push_back(static_cast<double>(traj_index));
  buf.push_back(static_cast<double>(ex.offset));
  for (const Matrix* m : {&ex.history, &ex.past_known, &ex.future_known, &ex.target}) {
    buf.insert(buf.end(), m->data.begin(), m->data.end());
  }
  buf.insert(buf.end(), ex.statics.begin(), ex.statics.end());
}

}  // namespace

DatasetInfo build_dataset(const fs::path& archive_root, const SplitSpec& spec, const fs::path& out_dir) {
  std::vector<io::Archive> archives;
  for (const auto& dir : io::list_archives(archive_root)) {
    archives.push_back(io::read_archive(dir));
    if (archives.back().id != dir.filename().string()) {
      throw ManifestMismatch("archive directory '" + dir.string() + "' holds id '" + archives.back().id + "'");
    }
  }
  if (archives.empty()) throw EmptySplit("no archives under " + archive_root.string());
  const box::Variant variant = archives[0].trajectory.variant;
  for (const auto& a : archives) {
    if (a.trajectory.variant != variant) throw ManifestMismatch("archives mix model variants");
  }

  DatasetInfo info;
  info.variant = variant;
  info.mode = spec.mode;
  info.history = spec.history != 0 ? spec.history : default_history(variant);
  info.horizon = spec.horizon != 0 ? spec.horizon : default_horizon(variant);
  info.stride = spec.stride != 0 ? spec.stride : info.horizon;
  info.archive_root = fs::absolute(archive_root);
  const auto statics = spec.static_names.empty() ? static_names_for(variant) : spec.static_names;

  std::vector<const io::Archive*> pool;
  for (const auto& a : archives) pool.push_back(&a);
  const Assignment split = assign_splits(std::move(pool), spec);
  info.standardizer = fit_standardizer(split.train, spec.mode, statics);

  fs::create_directories(out_dir);
  auto emit = [&](const std::vector<const io::Archive*>& members, const char* name,
                  std::vector<std::string>& ids, std::size_t& n_examples) {
    std::vector<double> buf;
    n_examples = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
      ids.push_back(members[i]->id);
      for (const auto& ex : window_split(*members[i], info.history, info.horizon, info.stride, spec.mode, statics)) {
        append_record(buf, standardize(ex, info.standardizer), i);
        ++n_examples;
      }
    }
    fs::create_directories(out_dir / name);
    io::write_f64(out_dir / name / "examples.bin", buf);
  };
  emit(split.train, "train", info.train_ids, info.n_train_examples);
  emit(split.val, "val", info.val_ids, info.n_val_examples);
  emit(split.test, "test", info.test_ids, info.n_test_examples);
  io::write_json(out_dir / "dataset.json", info.to_json());
  return info;
}

DatasetInfo read_dataset_info(const fs::path& dir) { return DatasetInfo::from_json(io::read_json(dir / "dataset.json")); }

namespace {

const std::vector<std::string>& ids_of(const DatasetInfo& info, std::string_view split, std::size_t* n_examples) {
  if (split == "train") {
    if (n_examples) *n_examples = info.n_train_examples;
    return info.train_ids;
  }
  if (split == "val") {
    if (n_examples) *n_examples = info.n_val_examples;
    return info.val_ids;
  }
  if (split == "test") {
    if (n_examples) *n_examples = info.n_test_examples;
    return info.test_ids;
  }
  throw InvalidArgument("unknown split '" + std::string(split) + "' (train|val|test)");
}

}  // namespace

std::vector<WindowedExample> load_split(const fs::path& dir, const DatasetInfo& info, std::string_view split) {
  std::size_t n = 0;
  const auto& ids = ids_of(info, split, &n);
  const std::size_t rec = info.record_size();
  const auto buf = io::read_f64(dir / std::string(split) / "examples.bin", n * rec);
  const std::size_t c = info.n_channels(), k = info.n_known(), h = info.history, l = info.horizon;
  std::vector<WindowedExample> out(n);
  for (std::size_t e = 0; e < n; ++e) {
    const double* p = buf.data() + e * rec;
    WindowedExample& ex = out[e];
    const auto idx = static_cast<std::size_t>(p[0]);
    if (idx >= ids.size()) throw FormatError("example " + std::to_string(e) + " references a missing trajectory");
    ex.trajectory_id = ids[idx];
    ex.offset = static_cast<std::size_t>(p[1]);
    p += 2;
    auto fill = [&p](Matrix& m, std::size_t rows, std::size_t cols) {
      m = Matrix(rows, cols);
      std::copy_n(p, rows * cols, m.data.begin());
      p += rows * cols;
    };
    fill(ex.history, h, c);
    fill(ex.past_known, h, k);
    fill(ex.future_known, l, k);
    fill(ex.target, l, c);
    ex.statics.assign(p, p + info.n_statics());
  }
  return out;
}

std::vector<io::Archive> load_split_archives(const DatasetInfo& info, std::string_view split) {
  std::vector<io::Archive> out;
  for (const auto& id : ids_of(info, split, nullptr)) out.push_back(io::read_archive(info.archive_root / id));
  return out;
}

}  // namespace tipcast::data
