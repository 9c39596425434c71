#pragma once

// Versioned JSON file holding the trained soft-sensor bank together with
// its confidence model (shared input standardizer, K, d_max, training inputs).

#include <array>
#include <filesystem>
#include <string>

#include "hekf/confidence.hpp"
#include "hekf/narx.hpp"

namespace hekf {

struct ChannelSummary {
  double lambda = 0.0;
  double validation_nmse = 0.0;
};

struct SoftSensorArtifacts {
  SoftSensorBank bank;
  ConfidenceModel confidence;
  std::array<ChannelSummary, SoftSensorBank::kChannels> summary{};
};

inline constexpr int kSoftSensorFormatVersion = 1;

std::string soft_sensor_to_json(const SoftSensorArtifacts& artifacts);
SoftSensorArtifacts soft_sensor_from_json(const std::string& text);

void save_soft_sensor(const SoftSensorArtifacts& artifacts, const std::filesystem::path& path);
SoftSensorArtifacts load_soft_sensor(const std::filesystem::path& path);

}  // namespace hekf
