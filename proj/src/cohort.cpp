#include "medsafe/cohort.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "medsafe/util.hpp"

namespace medsafe {

namespace {

const std::vector<std::string> kRegisters{"AF",       "asthma",       "CHD",          "CKD",
                                          "COPD",     "dementia",     "depression",   "diabetes",
                                          "heart_failure", "hypertension", "osteoporosis", "palliative_care",
                                          "RA"};

// Diagnoses that pair with a trigger drug in some indicator; harmless alone.
const std::vector<std::string> kLooseTriggerDiagnoses{"asthma", "heart_failure", "dementia", "peptic_ulcer"};

struct Exclusions {
  bool bmi = false;
  bool lft = false;
};

class ProfileBuilder {
 public:
  ProfileBuilder(const CodeDictionary& dict, Rng& rng, Date as_of) : dict_(dict), rng_(rng), as_of_(as_of) {}

  void event(Date d, EventKind kind, const std::string& code, std::optional<Quantity> value = std::nullopt,
             std::optional<std::string> dose = std::nullopt) {
    const auto* entry = dict_.find(code);
    events_.push_back({d, kind, code, entry ? entry->display : code, std::move(value), std::move(dose)});
  }

  void course(const std::string& code, Date start, std::optional<Date> end, std::string dose) {
    event(start, EventKind::medication_start, code, std::nullopt, std::move(dose));
    if (end) event(*end, EventKind::medication_end, code);
  }

  const std::string& pick(const std::string& set) {
    const auto& members = dict_.set_members(set);
    return members[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(members.size()) - 1))];
  }

  Date random_date(Date lo, Date hi) { return Date{static_cast<std::int32_t>(rng_.uniform_int(lo.days(), hi.days()))}; }

  void background(const Exclusions& ex) {
    const Date early{2012, 1, 1};
    const int n_dx = static_cast<int>(rng_.uniform_int(0, 4));
    for (int i = 0; i < n_dx; ++i) event(random_date(early, as_of_ - 1), EventKind::diagnosis, pick("background_diagnosis"));
    if (rng_.bernoulli(0.15)) {
      const auto& set = kLooseTriggerDiagnoses[static_cast<std::size_t>(rng_.uniform_int(0, 3))];
      event(random_date(early, as_of_ - 1), EventKind::diagnosis, pick(set));
    }

    // At most one course per code keeps start/end pairing unambiguous.
    std::set<std::string> used;
    const int n_meds = static_cast<int>(rng_.uniform_int(0, 8));
    for (int i = 0; i < n_meds; ++i) {
      const auto code = pick("background_medication");
      if (!used.insert(code).second) continue;
      const Date start = random_date(early, as_of_ - 30);
      std::optional<Date> end;
      if (rng_.bernoulli(0.35)) end = std::min(as_of_ - 1, start + static_cast<std::int32_t>(rng_.uniform_int(7, 900)));
      course(code, start, end, "as directed");
    }

    const int n_labs = static_cast<int>(rng_.uniform_int(0, 6));
    for (int i = 0; i < n_labs; ++i) {
      const bool lft = !ex.lft && rng_.bernoulli(0.2);
      const auto code = lft ? pick("liver_function_test") : pick("background_lab");
      event(random_date(early, as_of_ - 1), EventKind::lab_result, code,
            Quantity{static_cast<double>(rng_.uniform_int(5, 120)), lft ? "U/L" : "units"});
    }
    if (!ex.bmi) {
      const int n_bmi = static_cast<int>(rng_.uniform_int(0, 3));
      for (int i = 0; i < n_bmi; ++i) {
        event(random_date(early, as_of_ - 1), EventKind::observation, pick("bmi"),
              Quantity{static_cast<double>(rng_.uniform_int(180, 385)) / 10.0, "kg/m2"});
      }
    }
    if (rng_.bernoulli(0.6)) {
      event(random_date(early, as_of_ - 1), EventKind::observation, pick("systolic_bp"),
            Quantity{static_cast<double>(rng_.uniform_int(105, 165)), "mmHg"});
    }
    const int n_gp = static_cast<int>(rng_.uniform_int(0, 30));
    for (int i = 0; i < n_gp; ++i) event(random_date(Date{2015, 1, 1}, as_of_ - 1), EventKind::gp_event, pick("gp_encounter"));
    if (rng_.bernoulli(0.2)) event(random_date(early, as_of_ - 1), EventKind::hospital_episode, pick("hospital_admission"));
  }

  std::vector<ClinicalEvent> take() { return std::move(events_); }

 private:
  const CodeDictionary& dict_;
  Rng& rng_;
  Date as_of_;
  std::vector<ClinicalEvent> events_;
};

// Lays down one run of the named pattern covering exactly [s, s + days - 1].
void plant(ProfileBuilder& b, PatientProfile& p, const std::string& id, Date s, int days) {
  const Date stop = s + days;  // course end date; last active day is s + days - 1
  const auto diag_before = [&](const std::string& set) { b.event(s - 180, EventKind::diagnosis, b.pick(set)); };
  if (id == "filter_05") {
    diag_before("heart_failure");
    b.course(b.pick("rate_limiting_ccb"), s, stop, "one daily");
  } else if (id == "filter_06") {
    diag_before("asthma");
    b.course(b.pick("beta_blocker"), s, stop, "one daily");
  } else if (id == "filter_10") {
    diag_before("dementia");
    b.course(b.pick("antipsychotic"), s, stop, "one at night");
  } else if (id == "filter_23") {
    p.sex = Sex::female;
    b.event(s - 30, EventKind::observation, b.pick("bmi"), Quantity{41.0 + static_cast<double>(days % 4), "kg/m2"});
    b.course(b.pick("combined_hormonal_contraceptive"), s, stop, "one daily for 21 days then 7 day break");
  } else if (id == "filter_26") {
    // LFT coverage keeps the monitoring indicator quiet.
    b.event(s - 10, EventKind::lab_result, b.pick("liver_function_test"), Quantity{28.0, "U/L"});
    b.course(b.pick("methotrexate"), s, stop, "15mg once weekly");
  } else if (id == "filter_28") {
    diag_before("peptic_ulcer");
    b.course(b.pick("nsaid"), s, stop, "one three times daily");
  } else if (id == "filter_33") {
    b.event(s - 400, EventKind::diagnosis, "49436004");
    b.course(b.pick("warfarin"), s - 300, std::nullopt, "as directed by anticoagulation clinic");
    b.course(b.pick("interacting_antibiotic"), s, stop, "one twice daily");
  } else if (id == "filter_55") {
    // Folic acid coverage keeps the co-prescription indicator quiet.
    b.course(b.pick("folic_acid"), s - 30, std::nullopt, "5mg once weekly");
    b.course(b.pick("methotrexate"), s, stop, "15mg once weekly");
  } else {
    throw std::invalid_argument("unknown indicator id '" + id + "'");
  }
}

std::string patient_id(const std::string& prefix, int index, int size) {
  const int width = std::max(4, static_cast<int>(std::to_string(size).size()));
  auto digits = std::to_string(index + 1);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

}  // namespace

const std::vector<std::string>& plantable_indicators() {
  static const std::vector<std::string> ids{"filter_05", "filter_06", "filter_10", "filter_23",
                                            "filter_26", "filter_28", "filter_33", "filter_55"};
  return ids;
}

GeneratedCohort generate_cohort(const CohortSpec& spec, std::uint64_t seed, const CodeDictionary& dict) {
  if (spec.size < 0) throw std::invalid_argument("cohort size must be non-negative");
  if (spec.birth_year_max > spec.as_of.year() - 18) throw std::invalid_argument("birth_year_max leaves patients under 18");
  if (spec.birth_year_min > spec.birth_year_max) throw std::invalid_argument("empty birth year range");
  int planted_total = 0;
  for (const auto& pl : spec.plants) {
    const auto& known = plantable_indicators();
    if (std::find(known.begin(), known.end(), pl.indicator_id) == known.end()) {
      throw std::invalid_argument("unknown indicator id '" + pl.indicator_id + "'");
    }
    if (pl.count < 0) throw std::invalid_argument("negative plant count for " + pl.indicator_id);
    if (pl.days && *pl.days < 1) throw std::invalid_argument("plant days must be positive");
    planted_total += pl.count;
  }
  if (planted_total > spec.size) {
    throw std::invalid_argument("planted count " + std::to_string(planted_total) + " exceeds cohort size " +
                                std::to_string(spec.size));
  }

  Rng rng(seed);
  std::vector<std::string> eth_keys;
  std::vector<double> eth_weights;
  for (const auto& [k, w] : spec.ethnicity_weights) {
    if (k != "absent") (void)parse_ethnicity(k);
    eth_keys.push_back(k);
    eth_weights.push_back(w);
  }

  // Plant slots are assigned to a random subset of patients.
  std::vector<int> order(static_cast<std::size_t>(spec.size));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::map<int, std::pair<const PlantedScenario*, int>> slot;  // patient index -> scenario, days
  std::size_t next = 0;
  for (const auto& pl : spec.plants) {
    const int days = pl.days.value_or(pl.continuity == ContinuityPlan::satisfying ? 14 : 13);
    for (int k = 0; k < pl.count; ++k) slot[order[next++]] = {&pl, days};
  }

  GeneratedCohort out;
  out.manifest.seed = seed;
  out.manifest.size = spec.size;
  out.manifest.as_of = spec.as_of;
  const Date plant_lo{2020, 6, 1};
  const Date plant_hi = spec.as_of - 200;
  if (plant_hi < plant_lo && planted_total > 0) throw std::invalid_argument("as_of too early to plant scenarios");

  for (int i = 0; i < spec.size; ++i) {
    PatientProfile p;
    p.patient_id = patient_id(spec.id_prefix, i, spec.size);
    p.birth_year = static_cast<int>(rng.uniform_int(spec.birth_year_min, spec.birth_year_max));
    p.sex = rng.bernoulli(spec.female_fraction) ? Sex::female : Sex::male;
    if (!eth_keys.empty()) {
      const auto& key = eth_keys[rng.weighted_index(eth_weights)];
      if (key != "absent") p.ethnicity = parse_ethnicity(key);
    }
    p.imd_decile = static_cast<int>(rng.uniform_int(1, 10));
    const int n_reg = static_cast<int>(rng.uniform_int(0, 5));
    for (int r = 0; r < n_reg; ++r) {
      p.registers.insert(kRegisters[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(kRegisters.size()) - 1))]);
    }

    ProfileBuilder b(dict, rng, spec.as_of);
    const auto it = slot.find(i);
    Exclusions ex;
    if (it != slot.end()) {
      ex.bmi = it->second.first->indicator_id == "filter_23";
      ex.lft = it->second.first->indicator_id == "filter_55";
    }
    b.background(ex);
    if (it != slot.end()) {
      const auto& [scenario, days] = it->second;
      const Date start = b.random_date(plant_lo, plant_hi);
      plant(b, p, scenario->indicator_id, start, days);
      out.manifest.plants.push_back({p.patient_id, scenario->indicator_id, scenario->continuity, days, start});
    }
    p.events = b.take();
    sort_events(p);
    validate_profile(p, spec.as_of);
    out.profiles.push_back(std::move(p));
  }
  std::sort(out.manifest.plants.begin(), out.manifest.plants.end(),
            [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
  return out;
}

CohortSpec cohort_spec_from_json(const nlohmann::json& j) {
  CohortSpec s;
  s.size = j.at("size").get<int>();
  if (j.contains("as_of")) s.as_of = Date::parse(j.at("as_of").get<std::string>());
  if (j.contains("birth_year_range")) {
    const auto r = j.at("birth_year_range").get<std::vector<int>>();
    if (r.size() != 2) throw std::invalid_argument("birth_year_range must have two entries");
    s.birth_year_min = r[0];
    s.birth_year_max = r[1];
  }
  s.female_fraction = j.value("female_fraction", s.female_fraction);
  if (j.contains("ethnicity_weights")) s.ethnicity_weights = j.at("ethnicity_weights").get<std::map<std::string, double>>();
  s.id_prefix = j.value("id_prefix", s.id_prefix);
  for (const auto& pj : j.value("plants", nlohmann::json::array())) {
    PlantedScenario pl;
    pl.indicator_id = pj.at("indicator").get<std::string>();
    pl.count = pj.at("count").get<int>();
    const auto cont = pj.value("continuity", std::string("satisfying"));
    if (cont == "satisfying") {
      pl.continuity = ContinuityPlan::satisfying;
    } else if (cont == "violating") {
      pl.continuity = ContinuityPlan::violating;
    } else {
      throw std::invalid_argument("continuity must be 'satisfying' or 'violating'");
    }
    if (pj.contains("days")) pl.days = pj.at("days").get<int>();
    s.plants.push_back(pl);
  }
  return s;
}

void to_json(nlohmann::json& j, const CohortManifest& m) {
  j = nlohmann::json{{"seed", m.seed}, {"size", m.size}, {"as_of", m.as_of.iso()}};
  auto& plants = j["plants"] = nlohmann::json::array();
  for (const auto& p : m.plants) {
    plants.push_back({{"patient_id", p.patient_id},
                      {"indicator_id", p.indicator_id},
                      {"continuity", p.continuity == ContinuityPlan::satisfying ? "satisfying" : "violating"},
                      {"days", p.days},
                      {"start", p.start.iso()}});
  }
}

CohortManifest manifest_from_json(const nlohmann::json& j) {
  CohortManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.size = j.at("size").get<int>();
  m.as_of = Date::parse(j.at("as_of").get<std::string>());
  for (const auto& p : j.at("plants")) {
    m.plants.push_back({p.at("patient_id").get<std::string>(), p.at("indicator_id").get<std::string>(),
                        p.at("continuity").get<std::string>() == "satisfying" ? ContinuityPlan::satisfying
                                                                               : ContinuityPlan::violating,
                        p.at("days").get<int>(), Date::parse(p.at("start").get<std::string>())});
  }
  return m;
}

}  // namespace medsafe
