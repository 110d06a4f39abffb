#include "medsafe/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "medsafe/util.hpp"

namespace medsafe {

InsufficientPool::InsufficientPool(std::string stratum, int needed, int available)
    : std::runtime_error("insufficient pool for " + stratum + ": need " + std::to_string(needed) + ", have " +
                         std::to_string(available)),
      stratum_(std::move(stratum)) {}

std::vector<std::string> EvaluationSet::all_ids() const {
  std::vector<std::string> out;
  for (const auto* v : {&indicator_positive, &matched_negative, &random_negative_system_positive,
                        &random_negative_system_negative}) {
    out.insert(out.end(), v->begin(), v->end());
  }
  return out;
}

namespace {

using Features = std::array<double, 4>;

Features raw_features(const PatientProfile& p, Date as_of) {
  const auto f = complexity_features(p, as_of);
  return {static_cast<double>(f.age), p.sex == Sex::female ? 1.0 : 0.0, static_cast<double>(f.active_med_count),
          static_cast<double>(f.recent_gp_events)};
}

}  // namespace

EvaluationSet sample_cases(std::span<const PatientProfile> cohort, const IndicatorRun& indicators,
                           const SampleCounts& counts, const MatcherConfig& matcher,
                           const std::map<std::string, bool>& system_flags, std::uint64_t seed) {
  if (counts.indicator_positive < 0 || counts.matched_negative < 0 || counts.random_negative_system_positive < 0 ||
      counts.random_negative_system_negative < 0) {
    throw std::invalid_argument("sample counts must be non-negative");
  }
  Rng rng(seed);
  EvaluationSet out;
  const auto matched = indicators.matched_indicators();

  std::vector<std::string> ids;  // cohort order, sorted for determinism
  for (const auto& p : cohort) ids.push_back(p.patient_id);
  std::sort(ids.begin(), ids.end());
  std::map<std::string, const PatientProfile*> by_id;
  for (const auto& p : cohort) by_id[p.patient_id] = &p;

  const auto is_positive = [&](const std::string& pid) {
    const auto it = matched.find(pid);
    return it != matched.end() && !it->second.empty();
  };

  // Strategy 1.
  std::vector<std::vector<std::string>> strata;
  for (const auto& rid : indicators.rule_ids) {
    std::vector<std::string> members;
    for (const auto& pid : ids) {
      const auto it = matched.find(pid);
      if (it != matched.end() && it->second.contains(rid)) members.push_back(pid);
    }
    rng.shuffle(members);
    if (members.empty()) out.warnings.push_back("stratum " + rid + " is empty; quota redistributed");
    strata.push_back(std::move(members));
  }
  int positives_available = 0;
  for (const auto& pid : ids) positives_available += is_positive(pid) ? 1 : 0;
  if (positives_available < counts.indicator_positive) {
    throw InsufficientPool("indicator_positive", counts.indicator_positive, positives_available);
  }
  std::set<std::string> taken;
  std::vector<std::size_t> cursor(strata.size(), 0);
  std::vector<bool> exhausted_warned(strata.size(), false);
  const int even_share = strata.empty() ? 0 : counts.indicator_positive / static_cast<int>(strata.size());
  std::vector<int> drawn(strata.size(), 0);
  while (static_cast<int>(out.indicator_positive.size()) < counts.indicator_positive) {
    bool progressed = false;
    for (std::size_t s = 0; s < strata.size() && static_cast<int>(out.indicator_positive.size()) < counts.indicator_positive; ++s) {
      auto& c = cursor[s];
      while (c < strata[s].size() && taken.contains(strata[s][c])) ++c;
      if (c >= strata[s].size()) {
        if (!exhausted_warned[s] && !strata[s].empty() && drawn[s] < even_share) {
          out.warnings.push_back("stratum " + indicators.rule_ids[s] + " exhausted after " + std::to_string(drawn[s]) +
                                 " patients; quota redistributed");
          exhausted_warned[s] = true;
        }
        continue;
      }
      const auto& pid = strata[s][c++];
      taken.insert(pid);
      out.indicator_positive.push_back(pid);
      out.stratum_of[pid] = indicators.rule_ids[s];
      ++drawn[s];
      progressed = true;
    }
    if (!progressed) break;
  }

  // Strategy 2: z-scores over the pooled candidates and positives.
  std::vector<std::string> negatives;
  for (const auto& pid : ids) {
    if (!is_positive(pid)) negatives.push_back(pid);
  }
  if (static_cast<int>(negatives.size()) < counts.matched_negative) {
    throw InsufficientPool("matched_negative", counts.matched_negative, static_cast<int>(negatives.size()));
  }
  if (counts.matched_negative > 0) {
    std::map<std::string, Features> feats;
    for (const auto* group : {&out.indicator_positive, &negatives}) {
      for (const auto& pid : *group) feats[pid] = raw_features(*by_id.at(pid), matcher.as_of);
    }
    Features mean{}, sd{};
    for (const auto& [pid, f] : feats) {
      for (std::size_t k = 0; k < 4; ++k) mean[k] += f[k];
    }
    for (auto& m : mean) m /= static_cast<double>(feats.size());
    for (const auto& [pid, f] : feats) {
      for (std::size_t k = 0; k < 4; ++k) sd[k] += (f[k] - mean[k]) * (f[k] - mean[k]);
    }
    Features scale{};
    for (std::size_t k = 0; k < 4; ++k) {
      sd[k] = std::sqrt(sd[k] / static_cast<double>(feats.size()));
      scale[k] = sd[k] > 0 ? matcher.weights[k] / sd[k] : 0.0;  // constant feature carries no information
    }
    std::set<std::string> free_negatives(negatives.begin(), negatives.end());
    for (const auto& target : out.indicator_positive) {
      if (static_cast<int>(out.matched_negative.size()) >= counts.matched_negative) break;
      const auto& ft = feats.at(target);
      double best = std::numeric_limits<double>::infinity();
      std::string best_id;
      for (const auto& cand : free_negatives) {  // ordered, so ties go to the lowest id
        const auto& fc = feats.at(cand);
        double d2 = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
          const double z = (fc[k] - ft[k]) * scale[k];
          d2 += z * z;
        }
        if (d2 < best) {
          best = d2;
          best_id = cand;
        }
      }
      free_negatives.erase(best_id);
      out.matched_negative.push_back(best_id);
      out.matched_to[best_id] = target;
    }
    // Fewer positives than requested matches: fill from the remaining pool at random.
    if (static_cast<int>(out.matched_negative.size()) < counts.matched_negative) {
      out.warnings.emplace_back("fewer indicator-positive patients than matched negatives; remainder drawn at random");
      std::vector<std::string> rest(free_negatives.begin(), free_negatives.end());
      rng.shuffle(rest);
      for (const auto& pid : rest) {
        if (static_cast<int>(out.matched_negative.size()) >= counts.matched_negative) break;
        out.matched_negative.push_back(pid);
      }
    }
  }

  // Strategy 3.
  const int need3 = counts.random_negative_system_positive + counts.random_negative_system_negative;
  if (need3 > 0) {
    std::set<std::string> used(out.matched_negative.begin(), out.matched_negative.end());
    std::vector<std::string> pool;
    for (const auto& pid : negatives) {
      if (!used.contains(pid)) pool.push_back(pid);
    }
    rng.shuffle(pool);
    std::vector<std::string> flagged, unflagged;
    for (const auto& pid : pool) {
      const auto it = system_flags.find(pid);
      if (it == system_flags.end()) continue;
      (it->second ? flagged : unflagged).push_back(pid);
    }
    if (static_cast<int>(flagged.size()) < counts.random_negative_system_positive) {
      throw InsufficientPool("random_negative_system_positive", counts.random_negative_system_positive,
                             static_cast<int>(flagged.size()));
    }
    if (static_cast<int>(unflagged.size()) < counts.random_negative_system_negative) {
      throw InsufficientPool("random_negative_system_negative", counts.random_negative_system_negative,
                             static_cast<int>(unflagged.size()));
    }
    out.random_negative_system_positive.assign(flagged.begin(), flagged.begin() + counts.random_negative_system_positive);
    out.random_negative_system_negative.assign(unflagged.begin(),
                                               unflagged.begin() + counts.random_negative_system_negative);
  }
  return out;
}

void to_json(nlohmann::json& j, const EvaluationSet& s) {
  j = nlohmann::json{{"indicator_positive", s.indicator_positive},
                     {"matched_negative", s.matched_negative},
                     {"random_negative_system_positive", s.random_negative_system_positive},
                     {"random_negative_system_negative", s.random_negative_system_negative},
                     {"stratum_of", s.stratum_of},
                     {"matched_to", s.matched_to},
                     {"warnings", s.warnings}};
}

EvaluationSet evaluation_set_from_json(const nlohmann::json& j) {
  EvaluationSet s;
  s.indicator_positive = j.at("indicator_positive").get<std::vector<std::string>>();
  s.matched_negative = j.at("matched_negative").get<std::vector<std::string>>();
  s.random_negative_system_positive = j.at("random_negative_system_positive").get<std::vector<std::string>>();
  s.random_negative_system_negative = j.at("random_negative_system_negative").get<std::vector<std::string>>();
  s.stratum_of = j.value("stratum_of", std::map<std::string, std::string>{});
  s.matched_to = j.value("matched_to", std::map<std::string, std::string>{});
  s.warnings = j.value("warnings", std::vector<std::string>{});
  return s;
}

std::array<PatientProfile, 3> make_ethnicity_variants(const PatientProfile& profile) {
  std::array<PatientProfile, 3> out{profile, profile, profile};
  out[0].ethnicity = Ethnicity::White;
  out[1].ethnicity = Ethnicity::Asian;
  out[2].ethnicity = Ethnicity::Black;
  return out;
}

}  // namespace medsafe
