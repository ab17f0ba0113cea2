#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dfl::eval {

/// Parallel arrays of trial scores and labels (1 = target).
struct ScoreSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;

  void add(double score, bool target) {
    scores.push_back(score);
    labels.push_back(target ? 1 : 0);
  }
  std::size_t targets() const;
  std::size_t nontargets() const { return labels.size() - targets(); }
  /// Same length, finite scores, both classes present. Throws std::invalid_argument.
  void validate() const;
};

/// Inner product of L2-normalised vectors. Throws on a zero vector or size mismatch.
double score_cosine(std::span<const double> a, std::span<const double> b);
double score_cosine(std::span<const float> a, std::span<const float> b);

/// Accept when score > threshold.
struct OperatingPoint {
  double threshold = 0.0;
  double p_miss = 0.0;
  double p_fa = 0.0;
};

/// Thresholds at -inf, every midpoint between distinct sorted scores, and +inf.
std::vector<OperatingPoint> operating_points(const ScoreSet& set);

/// Miss rate equal to false-alarm rate, interpolated linearly between the two
/// operating points that bracket the crossing. Percent.
double compute_eer(const ScoreSet& set);

struct DcfParams {
  double p_target = 0.05;
  double c_miss = 1.0;
  double c_fa = 1.0;
};

/// c_miss P_miss p + c_fa P_fa (1 - p), divided by min(c_miss p, c_fa (1 - p)).
double normalized_dcf(const OperatingPoint& point, const DcfParams& params = {});
double compute_min_dcf(const ScoreSet& set, const DcfParams& params = {});

}  // namespace dfl::eval
