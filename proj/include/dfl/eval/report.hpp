#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dfl/eval/metrics.hpp"

namespace dfl::eval {

struct Metrics {
  double eer_percent = 0.0;
  double min_dcf = 0.0;
};

Metrics compute_metrics(const ScoreSet& set, const DcfParams& params = {});

/// 100 * (after - before) / before; negative when the metric drops.
double relative_change(double before, double after);

/// One condition; `snr_db` is empty for the pooled row. A missing metric
/// marks a cell that could not be computed.
struct ReportRow {
  std::string noise_kind;
  std::optional<double> snr_db;
  std::optional<Metrics> baseline;
  std::optional<Metrics> enhanced;
};

struct EvalReport {
  std::string enhancer_label;  // empty for a baseline-only report
  std::vector<ReportRow> rows;

  bool has_enhanced() const { return !enhancer_label.empty(); }
  /// Every requested cell computed.
  bool complete() const;
  const ReportRow* pooled() const;
  const ReportRow* find(const std::string& noise_kind, double snr_db) const;

  std::string table() const;
  /// One JSON object per row, newline separated.
  std::string json_lines() const;
};

}  // namespace dfl::eval
