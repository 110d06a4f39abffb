#include "medsafe/indicator.hpp"

#include <algorithm>
#include <sstream>

#include "medsafe/util.hpp"

namespace medsafe {

namespace {

using Days = std::vector<DayInterval>;

// Sorts and merges overlapping or adjacent spans.
Days normalize(Days v) {
  std::sort(v.begin(), v.end());
  Days out;
  for (const auto& iv : v) {
    if (iv.end < iv.start) continue;
    if (!out.empty() && iv.start <= out.back().end + 1) {
      out.back().end = std::max(out.back().end, iv.end);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

Days clip(const Days& v, DayInterval window) {
  Days out;
  for (const auto& iv : v) {
    DayInterval c{std::max(iv.start, window.start), std::min(iv.end, window.end)};
    if (c.start <= c.end) out.push_back(c);
  }
  return out;
}

Days intersect(const Days& a, const Days& b) {
  Days out;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const Date lo = std::max(a[i].start, b[j].start);
    const Date hi = std::min(a[i].end, b[j].end);
    if (lo <= hi) out.push_back({lo, hi});
    if (a[i].end < b[j].end) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

Days complement(const Days& v, DayInterval window) {
  Days out;
  Date cursor = window.start;
  for (const auto& iv : v) {
    if (iv.start > cursor) out.push_back({cursor, iv.start - 1});
    cursor = std::max(cursor, iv.end + 1);
  }
  if (cursor <= window.end) out.push_back({cursor, window.end});
  return out;
}

// Days each matching course is active: [start, end - 1], open courses run to
// the window end. `extend` widens each span forward (lookback coverage).
Days medication_days(const std::vector<MedicationInterval>& courses, const std::unordered_set<std::string>& codes,
                     DayInterval window, int extend) {
  Days spans;
  for (const auto& m : courses) {
    if (!codes.contains(m.code)) continue;
    const Date last_active = m.end ? *m.end - 1 : window.end;
    if (last_active < m.start) continue;
    spans.push_back({m.start, m.end ? last_active + extend : window.end});
  }
  return clip(normalize(std::move(spans)), window);
}

Days eval(const Condition& c, const PatientProfile& p, const std::vector<MedicationInterval>& courses,
          const CodeDictionary& dict, DayInterval window) {
  switch (c.kind) {
    case ConditionKind::on_medication:
      return medication_days(courses, dict.set(c.code_set), window, 0);

    case ConditionKind::missing_coprescription:
      return complement(medication_days(courses, dict.set(c.code_set), window, c.window_days), window);

    case ConditionKind::has_diagnosis: {
      const auto& codes = dict.set(c.code_set);
      for (const auto& e : p.events) {
        if (e.kind == EventKind::diagnosis && codes.contains(e.code)) {
          return clip({{e.date, window.end}}, window);
        }
      }
      return {};
    }

    case ConditionKind::observation_above: {
      const auto& codes = dict.set(c.code_set);
      const auto unit = to_lower(c.unit);
      // Latest reading per date; later events on the same date win.
      std::vector<std::pair<Date, double>> readings;
      for (const auto& e : p.events) {
        if ((e.kind != EventKind::observation && e.kind != EventKind::lab_result) || !codes.contains(e.code) || !e.value) {
          continue;
        }
        if (!unit.empty() && to_lower(e.value->unit) != unit) continue;
        if (!readings.empty() && readings.back().first == e.date) {
          readings.back().second = e.value->value;
        } else {
          readings.emplace_back(e.date, e.value->value);
        }
      }
      Days spans;
      for (std::size_t i = 0; i < readings.size(); ++i) {
        if (readings[i].second < c.threshold) continue;
        const Date until = i + 1 < readings.size() ? readings[i + 1].first - 1 : window.end;
        spans.push_back({readings[i].first, until});
      }
      return clip(normalize(std::move(spans)), window);
    }

    case ConditionKind::missing_monitoring: {
      const auto& codes = dict.set(c.code_set);
      Days covered;
      for (const auto& e : p.events) {
        if (e.kind == EventKind::lab_result && codes.contains(e.code)) covered.push_back({e.date, e.date + c.window_days});
      }
      return complement(clip(normalize(std::move(covered)), window), window);
    }

    case ConditionKind::all_of: {
      Days acc = eval(c.children.front(), p, courses, dict, window);
      for (std::size_t i = 1; i < c.children.size() && !acc.empty(); ++i) {
        acc = intersect(acc, eval(c.children[i], p, courses, dict, window));
      }
      return acc;
    }

    case ConditionKind::any_of: {
      Days all;
      for (const auto& ch : c.children) {
        auto d = eval(ch, p, courses, dict, window);
        all.insert(all.end(), d.begin(), d.end());
      }
      return normalize(std::move(all));
    }

    case ConditionKind::negation:
      return complement(eval(c.children.front(), p, courses, dict, window), window);
  }
  return {};
}

void require_sets(const Condition& c, const CodeDictionary& dict) {
  if (c.is_leaf()) {
    if (!dict.has_set(c.code_set)) throw UnknownCodeSet(c.code_set);
    return;
  }
  if (c.children.empty()) throw RuleError("composite condition has no children");
  for (const auto& ch : c.children) require_sets(ch, dict);
}

}  // namespace

std::vector<DayInterval> condition_days(const Condition& condition, const PatientProfile& profile,
                                        const CodeDictionary& dict, DayInterval window) {
  require_sets(condition, dict);
  if (window.end < window.start) return {};
  return eval(condition, profile, medication_intervals(profile), dict, window);
}

std::vector<MatchInterval> evaluate_rule(const IndicatorRule& rule, const PatientProfile& profile,
                                         const CodeDictionary& dict, Date horizon) {
  std::vector<MatchInterval> out;
  for (const auto& d : condition_days(rule.condition, profile, dict, {rule.since, horizon})) {
    out.push_back({profile.patient_id, d.start, d.end});
  }
  return out;
}

ContinuityResult apply_continuity(std::span<const MatchInterval> intervals, int min_days) {
  ContinuityResult r;
  for (const auto& iv : intervals) {
    if (iv.length() >= min_days) r.qualifying.push_back(iv);
  }
  r.matched = !r.qualifying.empty();
  return r;
}

std::map<std::string, std::set<std::string>> IndicatorRun::matched_indicators() const {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& [pid, outcomes] : by_patient) {
    auto& ids = out[pid];
    for (const auto& o : outcomes) {
      if (o.continuity.matched) ids.insert(o.indicator_id);
    }
  }
  return out;
}

IndicatorRun run_indicators(std::span<const PatientProfile> cohort, std::span<const IndicatorRule> rules,
                            const CodeDictionary& dict, Date horizon) {
  IndicatorRun run;
  run.horizon = horizon;
  for (const auto& r : rules) run.rule_ids.push_back(r.id);
  for (const auto& p : cohort) {
    auto& outcomes = run.by_patient[p.patient_id];
    for (const auto& r : rules) {
      RuleOutcome o;
      o.indicator_id = r.id;
      o.raw = evaluate_rule(r, p, dict, horizon);
      o.continuity = apply_continuity(o.raw, r.continuity_min_days);
      outcomes.push_back(std::move(o));
    }
  }
  return run;
}

std::vector<PrevalenceRow> prevalence_stats(const IndicatorRun& run, std::span<const IndicatorRule> rules,
                                            std::size_t cohort_size) {
  if (cohort_size == 0) throw std::invalid_argument("prevalence_stats: empty cohort");
  std::vector<PrevalenceRow> rows;
  for (std::size_t k = 0; k < rules.size(); ++k) {
    const auto& rule = rules[k];
    if (run.horizon <= rule.since) {
      throw std::invalid_argument("prevalence_stats: horizon " + run.horizon.iso() + " is not after since " +
                                  rule.since.iso() + " for " + rule.id);
    }
    const double total_days = static_cast<double>(run.horizon - rule.since + 1);
    PrevalenceRow row;
    row.indicator_id = rule.id;
    double fraction_sum = 0.0;
    double matched_fraction_sum = 0.0;
    for (const auto& [pid, outcomes] : run.by_patient) {
      const auto it = std::find_if(outcomes.begin(), outcomes.end(),
                                   [&](const RuleOutcome& o) { return o.indicator_id == rule.id; });
      if (it == outcomes.end() || !it->continuity.matched) continue;
      std::int64_t qualifying = 0;
      for (const auto& iv : it->continuity.qualifying) qualifying += iv.length();
      const double fraction = static_cast<double>(qualifying) / total_days;
      ++row.matched_patients;
      fraction_sum += fraction;
      matched_fraction_sum += fraction;
    }
    row.point_prevalence_per_million = 1e6 * fraction_sum / static_cast<double>(cohort_size);
    row.pct_time_matching = row.matched_patients ? 100.0 * matched_fraction_sum / row.matched_patients : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::vector<PrevalenceRow> prevalence_stats(std::span<const PatientProfile> cohort,
                                            std::span<const IndicatorRule> rules, const CodeDictionary& dict,
                                            Date horizon) {
  if (cohort.empty()) throw std::invalid_argument("prevalence_stats: empty cohort");
  for (const auto& r : rules) {
    if (horizon <= r.since) {
      throw std::invalid_argument("prevalence_stats: horizon " + horizon.iso() + " is not after since " +
                                  r.since.iso() + " for " + r.id);
    }
  }
  return prevalence_stats(run_indicators(cohort, rules, dict, horizon), rules, cohort.size());
}

std::string prevalence_csv(std::span<const PrevalenceRow> rows) {
  std::ostringstream out;
  out << "indicator_id,matched_patients,point_prevalence_per_million,pct_time_matching\n";
  for (const auto& r : rows) {
    out << csv_field(r.indicator_id) << ',' << r.matched_patients << ',' << format_fixed(r.point_prevalence_per_million, 3)
        << ',' << format_fixed(r.pct_time_matching, 3) << '\n';
  }
  return out.str();
}

void to_json(nlohmann::json& j, const MatchInterval& m) {
  j = nlohmann::json{{"patient_id", m.patient_id}, {"start", m.start.iso()}, {"end", m.end.iso()}};
}

void to_json(nlohmann::json& j, const IndicatorRun& run) {
  j = nlohmann::json{{"horizon", run.horizon.iso()}, {"rules", run.rule_ids}};
  auto& patients = j["patients"] = nlohmann::json::object();
  for (const auto& [pid, outcomes] : run.by_patient) {
    auto& arr = patients[pid] = nlohmann::json::array();
    for (const auto& o : outcomes) {
      arr.push_back({{"indicator_id", o.indicator_id},
                     {"raw", o.raw},
                     {"matched", o.continuity.matched},
                     {"qualifying", o.continuity.qualifying}});
    }
  }
}

IndicatorRun indicator_run_from_json(const nlohmann::json& j) {
  IndicatorRun run;
  run.horizon = Date::parse(j.at("horizon").get<std::string>());
  run.rule_ids = j.at("rules").get<std::vector<std::string>>();
  const auto intervals = [](const nlohmann::json& arr) {
    std::vector<MatchInterval> out;
    for (const auto& m : arr) {
      out.push_back({m.at("patient_id").get<std::string>(), Date::parse(m.at("start").get<std::string>()),
                     Date::parse(m.at("end").get<std::string>())});
    }
    return out;
  };
  for (const auto& [pid, arr] : j.at("patients").items()) {
    auto& outcomes = run.by_patient[pid];
    for (const auto& o : arr) {
      RuleOutcome r;
      r.indicator_id = o.at("indicator_id").get<std::string>();
      r.raw = intervals(o.at("raw"));
      r.continuity.matched = o.at("matched").get<bool>();
      r.continuity.qualifying = intervals(o.at("qualifying"));
      outcomes.push_back(std::move(r));
    }
  }
  return run;
}

}  // namespace medsafe
