#include "tipcast/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tipcast/archive.hpp"
#include "tipcast/error.hpp"

namespace tipcast::io {
namespace {

constexpr char kMagic[8] = {'T', 'I', 'P', 'C', 'A', 'S', 'T', 'M'};

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw FormatError("model file is truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string serialize_model(const ModelBundle& b) {
  const ad::ParameterSet& ps = b.model.params();
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    params.push_back({{"name", ps[k].name}, {"rows", ps[k].value.rows}, {"cols", ps[k].value.cols}});
  }
  const nlohmann::json header = {{"config", b.model.config().to_json()},
                                 {"variant", box::to_string(b.variant)},
                                 {"mode", data::to_string(b.mode)},
                                 {"channels", b.standardizer.channel_names},
                                 {"standardizer", b.standardizer.to_json()},
                                 {"parameters", params}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kModelVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    for (double v : ps[k].value.data) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  put_le<std::uint64_t>(out, fnv1a64(out));
  return out;
}

ModelBundle deserialize_model(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8 + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a model file");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kModelVersion) {
    throw VersionMismatch("model version " + std::to_string(version) + ", expected " + std::to_string(kModelVersion));
  }
  std::size_t tail = bytes.size() - 8;
  const auto stored = get_le<std::uint64_t>(bytes, tail);
  if (stored != fnv1a64(std::string_view(bytes).substr(0, bytes.size() - 8))) {
    throw ChecksumError("model checksum mismatch");
  }
  const auto header_len = get_le<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size() - 8) throw FormatError("model header overruns the file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model header: ") + e.what());
  }
  pos += header_len;
  try {
    ModelBundle b{tft::TftModel(tft::TftConfig::from_json(header.at("config"))),
                  box::variant_from_string(header.at("variant").get<std::string>()),
                  data::mode_from_string(header.at("mode").get<std::string>()),
                  data::Standardizer::from_json(header.at("standardizer"))};
    ad::ParameterSet& ps = b.model.params();
    const auto& plist = header.at("parameters");
    if (plist.size() != ps.size()) throw FormatError("model parameter census differs from its config");
    for (std::size_t k = 0; k < ps.size(); ++k) {
      if (plist[k].at("name").get<std::string>() != ps[k].name ||
          plist[k].at("rows").get<std::size_t>() != ps[k].value.rows ||
          plist[k].at("cols").get<std::size_t>() != ps[k].value.cols) {
        throw FormatError("model parameter '" + ps[k].name + "' does not match the header");
      }
      for (double& v : ps[k].value.data) {
        if (pos + 8 > bytes.size() - 8) throw FormatError("model parameters are truncated");
        v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
      }
    }
    if (pos != bytes.size() - 8) throw FormatError("trailing bytes after model parameters");
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model header: ") + e.what());
  }
}

void save_model(const std::filesystem::path& file, const ModelBundle& bundle) {
  const std::string bytes = serialize_model(bundle);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + file.string());
}

ModelBundle load_model(const std::filesystem::path& file, const std::vector<std::string>* expected_channels) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open model " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  ModelBundle b = deserialize_model(ss.str());
  if (expected_channels != nullptr && *expected_channels != b.standardizer.channel_names) {
    throw ChannelOrderMismatch("model channel order differs from the data manifest");
  }
  return b;
}

}  // namespace tipcast::io
