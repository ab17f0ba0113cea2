#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "../support/oracles.hpp"
#include "dfl/eval/metrics.hpp"
#include "dfl/eval/report.hpp"
#include "dfl/eval/trials.hpp"

using namespace dfl::eval;
using dfl::testing::brute_force;
using dfl::testing::random_set;

TEST_CASE("cosine scoring") {
  const std::vector<double> a = {1.0, 2.0, -0.5}, b = {0.3, -1.0, 2.0};
  CHECK(score_cosine(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<double> x = {1.0, 0.0}, y = {0.0, 5.0};
  CHECK(score_cosine(x, y) == 0.0);
  std::vector<double> b3 = b;
  for (auto& v : b3) v *= 3.0;
  CHECK(score_cosine(a, b3) == doctest::Approx(score_cosine(a, b)).epsilon(1e-15));
  const std::vector<double> zero = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(score_cosine(a, zero), std::invalid_argument);
  const std::vector<float> fa = {1.0f, 1.0f}, fb = {-1.0f, -1.0f};
  CHECK(score_cosine(fa, fb) == doctest::Approx(-1.0));
}

TEST_CASE("EER and minDCF match exhaustive-threshold sweeps on random score sets") {
  std::mt19937_64 rng(2024);
  double worst_eer = 0.0, worst_dcf = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto s = random_set(rng, 200, rep % 2 == 1);
    const auto oracle = brute_force(s);
    worst_eer = std::max(worst_eer, std::abs(compute_eer(s) - oracle.eer_percent));
    worst_dcf = std::max(worst_dcf, std::abs(compute_min_dcf(s) - oracle.min_dcf));
  }
  CHECK(worst_eer < 1e-9);
  CHECK(worst_dcf < 1e-9);
}

TEST_CASE("metrics are invariant under strictly increasing score maps") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto s = random_set(rng, 200, rep % 2 == 0);
    auto t = s;
    for (auto& v : t.scores) v = std::exp(0.7 * v) + v * v * v;
    CHECK(compute_eer(t) == doctest::Approx(compute_eer(s)).epsilon(1e-12));
    CHECK(compute_min_dcf(t) == doctest::Approx(compute_min_dcf(s)).epsilon(1e-12));
  }
}

TEST_CASE("metric bounds and degenerate cases") {
  ScoreSet perfect;
  for (int i = 0; i < 10; ++i) perfect.add(1.0 + i, true), perfect.add(-1.0 - i, false);
  CHECK(compute_eer(perfect) == 0.0);
  CHECK(compute_min_dcf(perfect) == 0.0);

  ScoreSet tied;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) tied.add(0.25, i == 0 || (i != 1 && rng() % 2));
  CHECK(compute_eer(tied) == doctest::Approx(50.0));

  ScoreSet one_class;
  one_class.add(0.1, true);
  one_class.add(0.2, true);
  CHECK_THROWS_AS(compute_eer(one_class), std::invalid_argument);
  CHECK_THROWS_AS(compute_min_dcf(one_class), std::invalid_argument);

  for (int rep = 0; rep < 30; ++rep) {
    const auto s = random_set(rng, 200, rep % 3 == 0);
    const double eer = compute_eer(s) / 100.0;
    const double min_dcf = compute_min_dcf(s);
    CHECK(eer >= 0.0);
    CHECK(eer <= 1.0);
    CHECK(min_dcf >= 0.0);
    CHECK(min_dcf <= 1.0);
    // The interpolated EER lies between its bracketing operating points, and
    // minDCF is no worse than the DCF at either of them.
    const auto points = operating_points(s);
    CHECK(points.front().p_miss == 0.0);
    CHECK(points.back().p_fa == 0.0);
    for (std::size_t k = 0; k + 1 < points.size(); ++k) {
      if (points[k].p_fa - points[k].p_miss > 0.0 && points[k + 1].p_fa - points[k + 1].p_miss <= 0.0) {
        CHECK(eer >= points[k].p_miss - 1e-15);
        CHECK(eer <= points[k + 1].p_miss + 1e-15);
        CHECK(min_dcf <= normalized_dcf(points[k]) + 1e-15);
        CHECK(min_dcf <= normalized_dcf(points[k + 1]) + 1e-15);
      }
    }
  }
}

TEST_CASE("trial construction") {
  std::vector<LabeledUtterance> utts = {{"a1", "A"}, {"a2", "A"}, {"b1", "B"}, {"b2", "B"}};
  TrialConfig full;
  full.nontarget_ratio = 0;
  const auto cross = make_trials(utts, full);
  REQUIRE(cross.rows.size() == 4);
  CHECK(cross.targets() == 2);
  for (const auto& t : cross.rows) CHECK(t.target == (t.enroll[0] == t.test[0]));

  std::vector<LabeledUtterance> many;
  for (int s = 0; s < 12; ++s)
    for (int u = 0; u < 6; ++u) many.push_back({"s" + std::to_string(s) + "u" + std::to_string(u), "s" + std::to_string(s)});
  many.push_back({"lonely", "solo"});
  std::vector<std::string> warnings;
  TrialConfig cfg;
  cfg.seed = 3;
  const auto a = make_trials(many, cfg, &warnings);
  const auto b = make_trials(many, cfg, nullptr);
  CHECK(warnings.size() == 1);
  CHECK(a.targets() == 12 * 3 * 3);
  CHECK(a.rows.size() - a.targets() == 10 * a.targets());
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK((a.rows[i].enroll == b.rows[i].enroll && a.rows[i].test == b.rows[i].test));
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& t : a.rows) pairs.emplace(t.enroll, t.test);
  CHECK(pairs.size() == a.rows.size());
  for (const auto& t : a.rows) CHECK(t.enroll != "lonely");

  cfg.seed = 4;
  const auto c = make_trials(many, cfg);
  bool differs = false;
  for (std::size_t i = 0; i < c.rows.size(); ++i) differs |= c.rows[i].test != a.rows[i].test || c.rows[i].enroll != a.rows[i].enroll;
  CHECK(differs);

  CHECK_THROWS_AS(make_trials({{"a1", "A"}, {"a2", "A"}}), std::invalid_argument);
}

TEST_CASE("report rows, relative change and rendering") {
  CHECK(relative_change(10.0, 8.0) == doctest::Approx(-20.0));
  CHECK(relative_change(0.5, 0.6) == doctest::Approx(20.0));
  CHECK(relative_change(0.0, 0.0) == 0.0);

  EvalReport r;
  r.enhancer_label = "dfl";
  for (const char* kind : {"noise", "music", "babble"})
    for (double snr : {-5.0, 0.0, 5.0, 10.0, 15.0}) r.rows.push_back({kind, snr, Metrics{10.0, 0.5}, Metrics{8.0, 0.4}});
  r.rows.push_back({"pooled", std::nullopt, Metrics{10.0, 0.5}, Metrics{9.0, 0.45}});
  CHECK(r.complete());
  REQUIRE(r.pooled() != nullptr);
  CHECK(r.find("music", 5.0) != nullptr);
  CHECK(r.find("music", 7.0) == nullptr);
  const auto table = r.table();
  CHECK(table.find("-20.0") != std::string::npos);
  CHECK(table.find("dEER%") != std::string::npos);
  std::size_t lines = 0;
  for (const auto& line : r.json_lines())
    if (line == '\n') ++lines;
  CHECK(lines == 16);

  r.rows[3].enhanced.reset();
  CHECK_FALSE(r.complete());
  CHECK(r.table().find("n/a") != std::string::npos);

  EvalReport baseline_only;
  baseline_only.rows.push_back({"pooled", std::nullopt, Metrics{1.0, 0.1}, std::nullopt});
  CHECK(baseline_only.complete());
  CHECK(baseline_only.table().find("dEER%") == std::string::npos);
}
