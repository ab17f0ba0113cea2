#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dfl::eval {

struct Trial {
  std::string enroll;
  std::string test;
  bool target = false;
};

struct TrialList {
  std::vector<Trial> rows;

  std::size_t targets() const;
  /// No duplicate (enroll, test) pairs and both labels present. Throws std::invalid_argument.
  void validate() const;
};

struct TrialConfig {
  /// Share of each speaker's utterances used for enrollment (at least one, and
  /// at least one left for test).
  double enroll_fraction = 0.5;
  /// Nontarget trials per target trial; 0 keeps every cross-speaker pair.
  int nontarget_ratio = 10;
  std::uint64_t seed = 1;
};

struct LabeledUtterance {
  std::string utt_id;
  std::string speaker_id;
};

/// Targets: every same-speaker (enroll, test) pair. Nontargets: sampled
/// without replacement from cross-speaker pairs. Speakers with fewer than two
/// utterances are skipped and reported in `warnings`.
TrialList make_trials(std::vector<LabeledUtterance> utterances, const TrialConfig& config = {},
                      std::vector<std::string>* warnings = nullptr);

}  // namespace dfl::eval
