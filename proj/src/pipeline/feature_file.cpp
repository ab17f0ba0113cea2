#include "dfl/pipeline/feature_file.hpp"

#include <cmath>
#include <cstring>

#include "dfl/common/binary_io.hpp"
#include "dfl/common/hash.hpp"

namespace dfl::pipeline {

std::vector<std::uint8_t> encode_features(const FeatureFile& file) {
  const auto& f = file.features;
  if (f.bands < 1 || f.frames < 0 || f.values.size() != static_cast<std::size_t>(f.bands * f.frames))
    throw std::invalid_argument("encode_features: inconsistent matrix");
  ByteWriter w;
  w.put_bytes(FeatureFile::kMagic, sizeof FeatureFile::kMagic);
  w.put<std::uint32_t>(FeatureFile::kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.bands));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.frames));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(f.domain));
  w.put_string(file.provenance);
  for (double v : f.values) w.put<float>(static_cast<float>(v));
  return w.take();
}

FeatureFile decode_features(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes.data(), bytes.size());
  char magic[8];
  r.get_bytes(magic, sizeof magic);
  if (std::memcmp(magic, FeatureFile::kMagic, sizeof magic) != 0) throw FormatError("feature file: bad magic");
  if (r.get<std::uint32_t>() != FeatureFile::kVersion) throw FormatError("feature file: unsupported version");
  FeatureFile file;
  auto& f = file.features;
  f.bands = r.get<std::uint32_t>();
  f.frames = r.get<std::uint32_t>();
  const auto domain = r.get<std::uint8_t>();
  if (domain != static_cast<std::uint8_t>(audio::FeatureDomain::log_mel) &&
      domain != static_cast<std::uint8_t>(audio::FeatureDomain::mean_normalized_log_mel))
    throw FormatError("feature file: unknown domain tag");
  f.domain = static_cast<audio::FeatureDomain>(domain);
  file.provenance = r.get_string();
  const auto count = static_cast<std::size_t>(f.bands * f.frames);
  if (r.remaining() != count * sizeof(float)) throw FormatError("feature file: body size does not match header");
  f.values.resize(count);
  for (auto& v : f.values) v = r.get<float>();
  return file;
}

void write_features(const std::filesystem::path& path, const FeatureFile& file) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_if_changed(path, encode_features(file));
}

FeatureFile read_features(const std::filesystem::path& path) { return decode_features(read_file_bytes(path)); }

}  // namespace dfl::pipeline
