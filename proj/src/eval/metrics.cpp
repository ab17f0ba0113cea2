#include "dfl/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dfl::eval {

std::size_t ScoreSet::targets() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

void ScoreSet::validate() const {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores: length mismatch");
  for (double s : scores)
    if (!std::isfinite(s)) throw std::invalid_argument("scores: non-finite score");
  for (auto l : labels)
    if (l > 1) throw std::invalid_argument("scores: labels must be 0 or 1");
  const auto t = targets();
  if (t == 0 || t == labels.size()) throw std::invalid_argument("scores: need both target and nontarget trials");
}

namespace {

template <typename T>
double cosine(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("score_cosine: size mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw std::invalid_argument("score_cosine: zero vector");
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

}  // namespace

double score_cosine(std::span<const double> a, std::span<const double> b) { return cosine(a, b); }
double score_cosine(std::span<const float> a, std::span<const float> b) { return cosine(a, b); }

std::vector<OperatingPoint> operating_points(const ScoreSet& set) {
  set.validate();
  std::vector<std::size_t> order(set.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return set.scores[i] < set.scores[j]; });

  const double n_target = static_cast<double>(set.targets());
  const double n_nontarget = static_cast<double>(set.nontargets());
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<OperatingPoint> points;
  points.push_back({-inf, 0.0, 1.0});
  std::size_t targets_below = 0, nontargets_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    // Consume one group of tied scores.
    const double value = set.scores[order[i]];
    std::size_t j = i;
    for (; j < order.size() && set.scores[order[j]] == value; ++j) (set.labels[order[j]] ? targets_below : nontargets_below)++;
    const double threshold = j < order.size() ? 0.5 * (value + set.scores[order[j]]) : inf;
    points.push_back({threshold, targets_below / n_target, 1.0 - nontargets_below / n_nontarget});
    i = j;
  }
  return points;
}

double compute_eer(const ScoreSet& set) {
  const auto points = operating_points(set);
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    const double d0 = points[k].p_fa - points[k].p_miss;
    const double d1 = points[k + 1].p_fa - points[k + 1].p_miss;
    if (d0 > 0.0 && d1 <= 0.0) {
      const double alpha = d0 / (d0 - d1);
      return 100.0 * (points[k].p_miss + alpha * (points[k + 1].p_miss - points[k].p_miss));
    }
  }
  // The first point has d = 1 and the last d = -1, so the loop always returns.
  throw std::logic_error("compute_eer: no crossing");
}

double normalized_dcf(const OperatingPoint& point, const DcfParams& p) {
  if (!(p.p_target > 0.0 && p.p_target < 1.0) || p.c_miss <= 0.0 || p.c_fa <= 0.0)
    throw std::invalid_argument("dcf: invalid prior or costs");
  const double dcf = p.c_miss * point.p_miss * p.p_target + p.c_fa * point.p_fa * (1.0 - p.p_target);
  return dcf / std::min(p.c_miss * p.p_target, p.c_fa * (1.0 - p.p_target));
}

double compute_min_dcf(const ScoreSet& set, const DcfParams& params) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& point : operating_points(set)) best = std::min(best, normalized_dcf(point, params));
  return best;
}

}  // namespace dfl::eval
