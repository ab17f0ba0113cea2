#include "dfl/eval/report.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace dfl::eval {

Metrics compute_metrics(const ScoreSet& set, const DcfParams& params) {
  return {compute_eer(set), compute_min_dcf(set, params)};
}

double relative_change(double before, double after) {
  if (before == 0.0) return after == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return 100.0 * (after - before) / before;
}

bool EvalReport::complete() const {
  for (const auto& r : rows)
    if (!r.baseline || (has_enhanced() && !r.enhanced)) return false;
  return !rows.empty();
}

const ReportRow* EvalReport::pooled() const {
  for (const auto& r : rows)
    if (!r.snr_db) return &r;
  return nullptr;
}

const ReportRow* EvalReport::find(const std::string& noise_kind, double snr_db) const {
  for (const auto& r : rows)
    if (r.snr_db && r.noise_kind == noise_kind && *r.snr_db == snr_db) return &r;
  return nullptr;
}

namespace {

std::string label(const ReportRow& r) {
  if (!r.snr_db) return r.noise_kind;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s %+g dB", r.noise_kind.c_str(), *r.snr_db);
  return buf;
}

std::string cell(const std::optional<double>& v, const char* format) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, format, *v);
  return buf;
}

std::optional<double> eer(const std::optional<Metrics>& m) {
  return m ? std::optional(m->eer_percent) : std::nullopt;
}
std::optional<double> dcf(const std::optional<Metrics>& m) { return m ? std::optional(m->min_dcf) : std::nullopt; }

std::optional<double> delta(const std::optional<double>& before, const std::optional<double>& after) {
  if (!before || !after) return std::nullopt;
  return relative_change(*before, *after);
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

std::string EvalReport::table() const {
  std::ostringstream os;
  char line[256];
  if (has_enhanced()) {
    os << "enhancer: " << enhancer_label << '\n';
    std::snprintf(line, sizeof line, "%-18s %9s %9s %9s %9s %9s %9s\n", "condition", "EER%", "minDCF", "EER%+enh",
                  "minDCF+e", "dEER%", "dDCF%");
  } else {
    std::snprintf(line, sizeof line, "%-18s %9s %9s\n", "condition", "EER%", "minDCF");
  }
  os << line;
  for (const auto& r : rows) {
    const auto e0 = eer(r.baseline), d0 = dcf(r.baseline);
    if (has_enhanced()) {
      const auto e1 = eer(r.enhanced), d1 = dcf(r.enhanced);
      std::snprintf(line, sizeof line, "%-18s %9s %9s %9s %9s %9s %9s\n", label(r).c_str(), cell(e0, "%.2f").c_str(),
                    cell(d0, "%.4f").c_str(), cell(e1, "%.2f").c_str(), cell(d1, "%.4f").c_str(),
                    cell(delta(e0, e1), "%+.1f").c_str(), cell(delta(d0, d1), "%+.1f").c_str());
    } else {
      std::snprintf(line, sizeof line, "%-18s %9s %9s\n", label(r).c_str(), cell(e0, "%.2f").c_str(),
                    cell(d0, "%.4f").c_str());
    }
    os << line;
  }
  return os.str();
}

std::string EvalReport::json_lines() const {
  std::ostringstream os;
  for (const auto& r : rows) {
    nlohmann::json j = {{"noise_kind", r.noise_kind},
                        {"snr_db", optional_json(r.snr_db)},
                        {"eer_percent", optional_json(eer(r.baseline))},
                        {"min_dcf", optional_json(dcf(r.baseline))}};
    if (has_enhanced()) {
      j["enhancer"] = enhancer_label;
      j["eer_percent_enhanced"] = optional_json(eer(r.enhanced));
      j["min_dcf_enhanced"] = optional_json(dcf(r.enhanced));
      j["eer_change_percent"] = optional_json(delta(eer(r.baseline), eer(r.enhanced)));
      j["min_dcf_change_percent"] = optional_json(delta(dcf(r.baseline), dcf(r.enhanced)));
    }
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace dfl::eval
