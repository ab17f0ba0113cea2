#include "dfl/corpus/manifest.hpp"

#include <cstdio>
#include <sstream>
#include <unordered_set>

#include "dfl/common/hash.hpp"

namespace dfl::corpus {

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.emplace_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::string format_snr(double snr_db) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", snr_db);
  return buf;
}

void Manifest::validate() const {
  std::unordered_map<std::string, const ManifestRow*> by_id;
  for (const auto& row : rows) {
    if (row.utt_id.empty() || row.path.empty() || row.speaker_id.empty() || row.split.empty())
      throw ManifestError("manifest: empty field in row " + row.utt_id);
    if (!by_id.emplace(row.utt_id, &row).second) throw ManifestError("manifest: duplicate utt_id " + row.utt_id);
  }
  for (const auto& row : rows) {
    if (!row.noisy()) continue;
    const auto it = by_id.find(row.clean_utt_id);
    if (it == by_id.end()) throw ManifestError("manifest: " + row.utt_id + " references missing " + row.clean_utt_id);
    if (it->second->noisy()) throw ManifestError("manifest: " + row.utt_id + " references a noisy row");
    if (it->second->speaker_id != row.speaker_id)
      throw ManifestError("manifest: " + row.utt_id + " speaker differs from its clean row");
  }
}

void Manifest::validate_files(const std::filesystem::path& root) const {
  validate();
  for (const auto& row : rows)
    if (!std::filesystem::exists(root / row.path)) throw ManifestError("manifest: missing file " + row.path);
}

const ManifestRow& Manifest::at(const std::string& utt_id) const {
  for (const auto& row : rows)
    if (row.utt_id == utt_id) return row;
  throw ManifestError("manifest: unknown utt_id " + utt_id);
}

std::vector<const ManifestRow*> Manifest::select(std::string_view split, bool noisy) const {
  std::vector<const ManifestRow*> out;
  for (const auto& row : rows)
    if (row.split == split && row.noisy() == noisy) out.push_back(&row);
  return out;
}

std::string format_manifest(const Manifest& manifest) {
  std::ostringstream os;
  os << kManifestHeader << '\n';
  for (const auto& r : manifest.rows) {
    os << r.utt_id << '\t' << r.path << '\t' << r.speaker_id << '\t' << r.split << '\t';
    if (r.noisy())
      os << to_string(*r.noise_kind) << '\t' << format_snr(r.snr_db) << '\t' << r.clean_utt_id << '\t' << r.noise_seed;
    else
      os << "-\t-\t-\t-";
    os << '\n';
  }
  return os.str();
}

Manifest parse_manifest(std::string_view text) {
  Manifest m;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    const auto f = split_tabs(line);
    // Four columns describe a clean-only corpus, e.g. an external WAV set.
    if (f.size() != 4 && f.size() != 8)
      throw ManifestError("manifest line " + std::to_string(line_no) + ": expected 4 or 8 fields");
    ManifestRow row{f[0], f[1], f[2], f[3], std::nullopt, 0.0, {}, 0};
    if (f.size() == 8 && f[4] != "-") {
      try {
        row.noise_kind = noise_kind_from_string(f[4]);
        row.snr_db = std::stod(f[5]);
        row.clean_utt_id = f[6];
        row.noise_seed = std::stoull(f[7]);
      } catch (const std::exception& e) {
        throw ManifestError("manifest line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    m.rows.push_back(std::move(row));
  }
  m.validate();
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

bool write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  manifest.validate();
  const auto text = format_manifest(manifest);
  return write_file_if_changed(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace dfl::corpus
