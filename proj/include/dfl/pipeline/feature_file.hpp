#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dfl/audio/features.hpp"

// Binary feature container; layout in docs/feature_format.md.
namespace dfl::pipeline {

struct FeatureFile {
  static constexpr char kMagic[8] = {'D', 'F', 'L', 'F', 'E', 'A', 'T', '\0'};
  static constexpr std::uint32_t kVersion = 1;

  audio::FeatureMatrix features;
  std::string provenance;  // hex SHA-256 of the producing checkpoint, or empty
};

std::vector<std::uint8_t> encode_features(const FeatureFile& file);
/// Throws dfl::FormatError on malformed input.
FeatureFile decode_features(std::span<const std::uint8_t> bytes);
void write_features(const std::filesystem::path& path, const FeatureFile& file);
FeatureFile read_features(const std::filesystem::path& path);

}  // namespace dfl::pipeline
