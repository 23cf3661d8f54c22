#include "tipcast/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "tipcast/defaults.hpp"
#include "tipcast/error.hpp"

namespace tipcast::io {
namespace fs = std::filesystem;
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::uint64_t to_little(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::little) return x;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((x >> (8 * i)) & 0xFFu) << (8 * (7 - i));
  return r;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

void write_f64(const fs::path& file, const std::vector<double>& values) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  std::vector<std::uint64_t> words(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    words[i] = to_little(std::bit_cast<std::uint64_t>(values[i]));
  }
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint64_t)));
  if (!out) throw FormatError("short write to " + file.string());
}

std::vector<double> read_f64(const fs::path& file, std::size_t expected_count) {
  std::error_code ec;
  const auto size = fs::file_size(file, ec);
  if (ec) throw FormatError("cannot stat " + file.string());
  if (size != expected_count * sizeof(double)) {
    throw FormatError(file.string() + " holds " + std::to_string(size) + " bytes, expected " +
                      std::to_string(expected_count * sizeof(double)) + " (truncated or wrong shape)");
  }
  std::ifstream in(file, std::ios::binary);
  std::vector<std::uint64_t> words(expected_count);
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(size));
  if (!in) throw FormatError("short read from " + file.string());
  std::vector<double> values(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    values[i] = std::bit_cast<double>(to_little(words[i]));
  }
  return values;
}

void write_json(const fs::path& file, const nlohmann::json& j) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open " + file.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

Archive from_trajectory(const box::Trajectory& traj, std::string id) {
  Archive a;
  a.id = std::move(id);
  a.trajectory = traj;
  a.channel_names = box::channel_names(traj.variant);
  for (const auto& f : box::flux_names(traj.variant)) a.noise_names.push_back("xi_" + f);
  return a;
}

void write_archive(const fs::path& dir, const Archive& a) {
  fs::create_directories(dir);
  const auto& t = a.trajectory;
  if (t.channels.cols != a.channel_names.size()) {
    throw ShapeError("archive channel matrix has " + std::to_string(t.channels.cols) +
                     " columns but " + std::to_string(a.channel_names.size()) + " names");
  }
  nlohmann::json m;
  m["format"] = "tipcast-trajectory";
  m["version"] = kArchiveVersion;
  m["id"] = a.id;
  m["source"] = a.source;
  m["dt_years"] = t.dt_years;
  m["variant"] = std::string(box::to_string(t.variant));
  m["n_steps"] = t.channels.rows;
  m["channels"] = a.channel_names;
  m["noise_columns"] = a.noise_names;
  m["params"] = params_to_json(t.params);
  m["seed"] = t.noise.seed;
  m["sigma"] = t.noise.sigma;
  m["collapse_time"] = {{"atlantic", optional_json(t.collapse_time_atlantic)},
                        {"pacific", optional_json(t.collapse_time_pacific)}};
  m["files"] = {{"channels", "channels.bin"}, {"noise", "noise.bin"}};
  m["extra"] = a.extra;
  write_json(dir / "manifest.json", m);
  write_f64(dir / "channels.bin", t.channels.data);
  write_f64(dir / "noise.bin", t.noise.values.data);
}

Archive read_archive(const fs::path& dir) {
  const auto m = read_json(dir / "manifest.json");
  try {
    if (m.at("format").get<std::string>() != "tipcast-trajectory") {
      throw FormatError(dir.string() + " is not a trajectory archive");
    }
    if (m.at("version").get<int>() != kArchiveVersion) {
      throw VersionMismatch("archive version " + std::to_string(m.at("version").get<int>()));
    }
    Archive a;
    a.id = m.at("id").get<std::string>();
    a.source = m.at("source").get<std::string>();
    a.channel_names = m.at("channels").get<std::vector<std::string>>();
    a.noise_names = m.at("noise_columns").get<std::vector<std::string>>();
    a.extra = m.value("extra", nlohmann::json::object());
    auto& t = a.trajectory;
    t.dt_years = m.at("dt_years").get<double>();
    t.variant = box::variant_from_string(m.at("variant").get<std::string>());
    t.params = params_from_json(m.at("params"));
    const auto n = m.at("n_steps").get<std::size_t>();
    t.channels = Matrix(n, a.channel_names.size());
    t.channels.data = read_f64(dir / m.at("files").at("channels").get<std::string>(),
                               n * a.channel_names.size());
    t.noise.seed = m.at("seed").get<std::uint64_t>();
    t.noise.sigma = m.at("sigma").get<double>();
    t.noise.values = Matrix(n, a.noise_names.size());
    t.noise.values.data =
        read_f64(dir / m.at("files").at("noise").get<std::string>(), n * a.noise_names.size());
    t.collapse_time_atlantic = optional_from(m.at("collapse_time").at("atlantic"));
    t.collapse_time_pacific = optional_from(m.at("collapse_time").at("pacific"));
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest in " + dir.string() + ": " + e.what());
  }
}

std::vector<fs::path> list_archives(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::exists(root)) throw FormatError("archive root " + root.string() + " does not exist");
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace tipcast::io
