#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "dfl/autodiff/tensor.hpp"
#include "dfl/eval/metrics.hpp"

// Loop-level reference implementations shared by the unit and acceptance tests.
namespace dfl::testing {

using eval::DcfParams;
using eval::ScoreSet;

inline double loop_l1(const ad::Tensor<double>& a, const ad::Tensor<double>& b) {
  double s = 0.0;
  for (ad::Index i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline ScoreSet random_set(std::mt19937_64& rng, std::size_t n, bool coarse) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution is_target(0.3);
  ScoreSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool t = i == 0 || (i != 1 && is_target(rng));
    double v = g(rng) + (t ? 1.2 : 0.0);
    if (coarse) v = std::round(v * 4.0) / 4.0;  // force ties
    s.add(v, t);
  }
  return s;
}

struct BruteForce {
  double eer_percent;
  double min_dcf;
};

// Every candidate threshold is evaluated by direct counting; the EER is the
// first segment of the (P_fa, P_miss) polyline that meets the diagonal.
inline BruteForce brute_force(const ScoreSet& s, const DcfParams& p = {}) {
  std::vector<double> distinct(s.scores);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> thresholds = {-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) thresholds.push_back(0.5 * (distinct[i] + distinct[i + 1]));
  thresholds.push_back(std::numeric_limits<double>::infinity());

  std::vector<double> miss, fa;
  double best = 1e300;
  for (double th : thresholds) {
    double m = 0, f = 0, nt = 0, nn = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
      if (s.labels[i]) {
        ++nt;
        if (!(s.scores[i] > th)) ++m;
      } else {
        ++nn;
        if (s.scores[i] > th) ++f;
      }
    }
    miss.push_back(m / nt);
    fa.push_back(f / nn);
    const double dcf = p.c_miss * (m / nt) * p.p_target + p.c_fa * (f / nn) * (1 - p.p_target);
    best = std::min(best, dcf / std::min(p.c_miss * p.p_target, p.c_fa * (1 - p.p_target)));
  }
  double eer = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k + 1 < thresholds.size(); ++k) {
    // Solve miss_k + a (miss_k1 - miss_k) == fa_k + a (fa_k1 - fa_k) for a in (0, 1].
    const double num = fa[k] - miss[k];
    const double den = (miss[k + 1] - miss[k]) - (fa[k + 1] - fa[k]);
    if (den == 0.0) continue;
    const double a = num / den;
    if (num > 0.0 && a > 0.0 && a <= 1.0) {
      eer = miss[k] + a * (miss[k + 1] - miss[k]);
      break;
    }
  }
  return {100.0 * eer, best};
}

}  // namespace dfl::testing
