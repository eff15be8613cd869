#include "lineage/detector/serialize.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "lineage/errors.hpp"

namespace lineage::detector {
namespace {

constexpr char kMagic[4] = {'L', 'N', 'D', 'T'};

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t get_le(const std::string& in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) v |= std::uint64_t{static_cast<unsigned char>(in[at + b])} << (8 * b);
  return v;
}

}  // namespace

void write_framed(const std::filesystem::path& path, const nlohmann::json& header, std::span<const double> payload) {
  const std::string h = header.dump();
  std::string out(kMagic, 4);
  put_le(out, kDetectorFormatVersion, 4);
  put_le(out, h.size(), 8);
  out += h;
  out.reserve(out.size() + payload.size() * 8);
  for (double d : payload) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    put_le(out, u, 8);
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::pair<nlohmann::json, std::vector<double>> read_framed(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < 16 || in.compare(0, 4, kMagic, 4) != 0) throw FormatError(path.string() + ": not a detector file");
  const auto version = get_le(in, 4, 4);
  if (version != kDetectorFormatVersion)
    throw FormatError(path.string() + ": format version " + std::to_string(version) + " is not supported");
  const auto hlen = get_le(in, 8, 8);
  if (in.size() < 16 + hlen) throw FormatError(path.string() + ": truncated header at byte " + std::to_string(in.size()));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed header: " + e.what());
  }
  const std::size_t body = in.size() - 16 - hlen;
  if (body % 8 != 0) throw FormatError(path.string() + ": payload is not a whole number of f64 values");
  std::vector<double> values(body / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t u = get_le(in, 16 + hlen + 8 * i, 8);
    std::memcpy(&values[i], &u, 8);
  }
  return {std::move(header), std::move(values)};
}

void save_detector(const std::filesystem::path& path, const DetectorConfig& cfg, const nn::ParamVector& params,
                   const nlohmann::json& extra) {
  if (params.layout() != detector_layout(cfg)) throw LayoutError("parameters do not match the detector config");
  nlohmann::json h = extra;
  h["kind"] = "detector";
  h["config"] = cfg;
  h["params"] = params.size();
  write_framed(path, h, params.values());
}

LoadedDetector load_detector(const std::filesystem::path& path) {
  auto [h, values] = read_framed(path);
  if (h.value("kind", "") != "detector") throw FormatError(path.string() + ": not a detector parameter file");
  LoadedDetector out;
  out.config = h.at("config").get<DetectorConfig>();
  const auto layout = detector_layout(out.config);
  if (values.size() != layout.total())
    throw FormatError(path.string() + ": " + std::to_string(values.size()) + " values, config needs " +
                      std::to_string(layout.total()));
  out.params = nn::ParamVector(layout, std::move(values));
  out.header = std::move(h);
  return out;
}

}  // namespace lineage::detector
