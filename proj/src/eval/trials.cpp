#include "dfl/eval/trials.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

namespace dfl::eval {

std::size_t TrialList::targets() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const Trial& t) { return t.target; }));
}

void TrialList::validate() const {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& t : rows)
    if (!seen.emplace(t.enroll, t.test).second)
      throw std::invalid_argument("trials: duplicate pair " + t.enroll + " / " + t.test);
  const auto n = targets();
  if (n == 0 || n == rows.size()) throw std::invalid_argument("trials: need both target and nontarget trials");
}

TrialList make_trials(std::vector<LabeledUtterance> utterances, const TrialConfig& config,
                      std::vector<std::string>* warnings) {
  if (!(config.enroll_fraction > 0.0 && config.enroll_fraction < 1.0))
    throw std::invalid_argument("trials: enroll_fraction must be in (0, 1)");
  if (config.nontarget_ratio < 0) throw std::invalid_argument("trials: nontarget_ratio must be >= 0");

  std::map<std::string, std::vector<std::string>> by_speaker;
  for (auto& u : utterances) by_speaker[u.speaker_id].push_back(std::move(u.utt_id));

  struct Side {
    std::string speaker;
    std::vector<std::string> enroll, test;
  };
  std::vector<Side> sides;
  for (auto& [speaker, ids] : by_speaker) {
    if (ids.size() < 2) {
      if (warnings) warnings->push_back("speaker " + speaker + " has fewer than 2 utterances; skipped");
      continue;
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2) continue;
    auto n_enroll = static_cast<std::size_t>(std::lround(config.enroll_fraction * ids.size()));
    n_enroll = std::clamp<std::size_t>(n_enroll, 1, ids.size() - 1);
    sides.push_back({speaker, {ids.begin(), ids.begin() + n_enroll}, {ids.begin() + n_enroll, ids.end()}});
  }
  if (sides.size() < 2) throw std::invalid_argument("trials: need at least 2 speakers with 2 utterances");

  TrialList list;
  std::vector<Trial> nontargets;
  for (const auto& a : sides)
    for (const auto& e : a.enroll)
      for (const auto& b : sides)
        for (const auto& t : b.test) (a.speaker == b.speaker ? list.rows : nontargets).push_back({e, t, a.speaker == b.speaker});

  const std::size_t wanted = config.nontarget_ratio == 0
                                 ? nontargets.size()
                                 : std::min(nontargets.size(), list.rows.size() * config.nontarget_ratio);
  if (wanted < nontargets.size()) {
    std::mt19937_64 rng(config.seed);
    // Partial Fisher-Yates, then restore generation order for stable output.
    std::vector<std::size_t> index(nontargets.size());
    for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
    for (std::size_t i = 0; i < wanted; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, index.size() - 1);
      std::swap(index[i], index[pick(rng)]);
    }
    index.resize(wanted);
    std::sort(index.begin(), index.end());
    for (auto i : index) list.rows.push_back(nontargets[i]);
  } else {
    list.rows.insert(list.rows.end(), nontargets.begin(), nontargets.end());
  }
  list.validate();
  return list;
}

}  // namespace dfl::eval
