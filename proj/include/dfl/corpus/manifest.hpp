#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dfl/corpus/noise.hpp"

namespace dfl::corpus {

/// One utterance. Clean rows leave the noise fields empty; noisy rows point
/// at their clean counterpart.
struct ManifestRow {
  std::string utt_id;
  std::string path;  // relative to the manifest's directory
  std::string speaker_id;
  std::string split;  // train | valid | test
  std::optional<NoiseKind> noise_kind;
  double snr_db = 0.0;
  std::string clean_utt_id;
  std::uint64_t noise_seed = 0;

  bool noisy() const { return noise_kind.has_value(); }
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tab-separated, one row per line after a '#' header:
/// utt_id path speaker_id split noise_kind snr_db clean_utt_id noise_seed
/// Clean rows use '-' for the last four fields.
struct Manifest {
  std::vector<ManifestRow> rows;

  /// Unique ids and resolvable clean references. Throws ManifestError.
  void validate() const;
  /// Also checks that every path exists under `root`.
  void validate_files(const std::filesystem::path& root) const;

  const ManifestRow& at(const std::string& utt_id) const;
  std::vector<const ManifestRow*> select(std::string_view split, bool noisy) const;
};

inline constexpr std::string_view kManifestHeader =
    "#utt_id\tpath\tspeaker_id\tsplit\tnoise_kind\tsnr_db\tclean_utt_id\tnoise_seed";

std::string format_manifest(const Manifest& manifest);
Manifest parse_manifest(std::string_view text);
Manifest read_manifest(const std::filesystem::path& path);
/// Returns true if the file changed.
bool write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// "%.3f", the precision SNRs are stored at.
std::string format_snr(double snr_db);

}  // namespace dfl::corpus
