#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lineage/detector/model.hpp"

namespace lineage::detector {

inline constexpr int kDetectorFormatVersion = 1;

// Framed file: "LNDT", u32 version, u64 header bytes, JSON header, then the
// payload as little-endian f64. Writes go through a temporary file.
void write_framed(const std::filesystem::path& path, const nlohmann::json& header, std::span<const double> payload);
std::pair<nlohmann::json, std::vector<double>> read_framed(const std::filesystem::path& path);

// Header carries the config and layout; payload is θ.
void save_detector(const std::filesystem::path& path, const DetectorConfig& cfg, const nn::ParamVector& params,
                   const nlohmann::json& extra = nlohmann::json::object());

struct LoadedDetector {
  DetectorConfig config;
  nn::ParamVector params;
  nlohmann::json header;
};
LoadedDetector load_detector(const std::filesystem::path& path);

}  // namespace lineage::detector
