#include "medsafe/service/pipeline.hpp"

#include <cstdlib>
#include <set>

#include "medsafe/chat.hpp"
#include "medsafe/cohort.hpp"
#include "medsafe/metrics.hpp"
#include "medsafe/sampling.hpp"

namespace medsafe {

namespace {

std::map<std::string, const PatientProfile*> by_id(const std::vector<PatientProfile>& profiles) {
  std::map<std::string, const PatientProfile*> out;
  for (const auto& p : profiles) out[p.patient_id] = &p;
  return out;
}

const PatientProfile& find_profile(const std::map<std::string, const PatientProfile*>& index, const std::string& pid) {
  const auto it = index.find(pid);
  if (it == index.end()) throw NotFound("patient '" + pid + "' is not in the session cohort");
  return *it->second;
}

std::vector<std::string> assessed_ids(const SessionRecord& s) {
  std::vector<std::string> out;
  for (const auto& pid : s.patients) {
    if (s.status.at(pid) == PatientStatus::assessed) out.push_back(pid);
  }
  return out;
}

std::string model_label(const SessionRecord& s) {
  if (s.model_configs.is_array() && !s.model_configs.empty() && s.model_configs[0].contains("model_name")) {
    return s.model_configs[0]["model_name"].get<std::string>();
  }
  return s.session_id;
}

}  // namespace

Workspace::Workspace(ServiceConfig cfg)
    : config(std::move(cfg)),
      dict(CodeDictionary::load(config.codes_path.string())),
      rules(load_rules(config.rule_dir.string(), dict)),
      assets(load_prompt_assets(config.asset_dir.string())),
      store(config.store_dir) {}

GeneratedCohort generate_step(Workspace& ws, const std::string& ref, std::optional<int> size,
                              std::optional<std::uint64_t> seed) {
  if (!ws.config.cohort && !size) throw ConfigError({"no cohort spec in the config and no size given"});
  CohortSpec spec = ws.config.cohort.value_or(CohortSpec{});
  if (size) spec.size = *size;
  auto cohort = generate_cohort(spec, seed.value_or(ws.config.cohort_seed), ws.dict);
  ws.store.save_cohort(ref, cohort);
  return cohort;
}

SessionRecord sample_step(Workspace& ws, const std::string& cohort_ref, const std::string& session_id,
                          const std::map<std::string, bool>& system_flags, const nlohmann::json& model_configs) {
  const auto cohort = ws.store.load_cohort(cohort_ref);
  const Date as_of = cohort.manifest.as_of;
  const auto run = run_indicators(cohort.profiles, ws.rules, ws.dict, as_of);
  MatcherConfig matcher{as_of, ws.config.matcher_weights};
  const auto set = sample_cases(cohort.profiles, run, ws.config.sample_counts, matcher, system_flags,
                                ws.config.sampling_seed);
  return ws.store.create_session(session_id, cohort_ref, as_of, set, model_configs);
}

BatchResult review_step(Workspace& ws, SessionWriter& writer, const ModelConfig& cfg, ChatClient& client,
                        int epochs, const std::string& seed_tag, int parallelism) {
  const auto session = writer.session();
  const auto cohort = ws.store.load_cohort(session.cohort_ref);
  const auto index = by_id(cohort.profiles);
  std::vector<ReviewJob> jobs;
  for (const auto& pid : session.patients) {
    if (session.status.at(pid) == PatientStatus::pending) jobs.push_back({&find_profile(index, pid), session.as_of});
  }
  return run_reviews(jobs, cfg, client, ws.assets.system_prompt, epochs, seed_tag, parallelism,
                     [&](const ReviewRun& r) { writer.save_review(r); });
}

int truth_step(Workspace& ws, SessionWriter& writer, GroundTruthSynthesizer& synth, bool overwrite) {
  const auto session = writer.session();
  int written = 0;
  for (const auto& pid : assessed_ids(session)) {
    if (!overwrite && ws.store.load_ground_truth(session.session_id, pid)) continue;
    const auto run = ws.store.load_review(session.session_id, pid);
    auto truth = synth.synthesize(run->outputs.front(), *ws.store.latest_assessment(session.session_id, pid));
    truth.patient_id = pid;
    writer.save_ground_truth(truth);
    ++written;
  }
  return written;
}

std::vector<PatientEpochs> epoch_scores(const Store& store, const std::string& session_id, Judge& judge) {
  std::vector<PatientEpochs> out;
  for (const auto& pid : assessed_ids(store.load_session(session_id))) {
    const auto truth = store.load_ground_truth(session_id, pid);
    const auto run = store.load_review(session_id, pid);
    if (!truth || !run || run->outputs.empty()) continue;
    PatientEpochs pe{pid, {}, {}};
    for (const auto& o : run->outputs) {
      pe.scores.push_back(automated_score(o, *truth, judge).score);
      pe.flags.push_back(o.intervention_required);
    }
    out.push_back(std::move(pe));
  }
  return out;
}

ConsistencyReport session_consistency(const Store& store, const std::string& session_id, Judge& judge) {
  const auto session = store.load_session(session_id);
  int clinician_pos = 0, clinician_neg = 0;
  BinaryCells cells;
  for (const auto& pid : assessed_ids(session)) {
    const auto review = store.load_review(session_id, pid)->outputs.front();
    const auto a = *store.latest_assessment(session_id, pid);
    (a.clinician_flag ? clinician_pos : clinician_neg)++;
    switch (classify_levels(review, a).binary_cell) {
      case BinaryCell::TP: ++cells.tp; break;
      case BinaryCell::FP: ++cells.fp; break;
      case BinaryCell::TN: ++cells.tn; break;
      case BinaryCell::FN: ++cells.fn; break;
    }
  }
  auto runs = epoch_scores(store, session_id, judge);
  std::erase_if(runs, [](const PatientEpochs& p) { return p.scores.size() < 2; });
  if (runs.empty()) throw StoreError("session '" + session_id + "' has no patient with 2+ scored epochs");
  std::optional<double> observed;
  if (cells.total() > 0) observed = static_cast<double>(cells.tp + cells.tn) / static_cast<double>(cells.total());
  return self_consistency(runs, clinician_pos, clinician_neg, observed);
}

ScoreTable session_score_table(const Store& store, const std::vector<std::string>& session_ids, Judge& judge) {
  std::vector<std::map<std::string, std::vector<double>>> per_session;
  std::optional<std::set<std::string>> common;
  for (const auto& id : session_ids) {
    std::map<std::string, std::vector<double>> scores;
    std::set<std::string> ids;
    for (auto& pe : epoch_scores(store, id, judge)) {
      ids.insert(pe.patient_id);
      scores[pe.patient_id] = std::move(pe.scores);
    }
    if (!common) {
      common = ids;
    } else {
      std::erase_if(*common, [&](const std::string& pid) { return !ids.contains(pid); });
    }
    per_session.push_back(std::move(scores));
  }
  ScoreTable table;
  for (std::size_t s = 0; s < session_ids.size(); ++s) {
    const auto label = model_label(store.load_session(session_ids[s]));
    if (table.contains(label)) throw StoreError("two sessions share model '" + label + "'");
    std::size_t k = SIZE_MAX;
    for (const auto& pid : *common) k = std::min(k, per_session[s].at(pid).size());
    auto& epochs = table[label];
    for (std::size_t e = 0; common->size() > 0 && e < k; ++e) {
      std::vector<double> col;
      for (const auto& pid : *common) col.push_back(per_session[s].at(pid)[e]);
      epochs.push_back(std::move(col));
    }
  }
  return table;
}

ComplexityReport session_complexity(const Store& store, const std::string& session_id) {
  const auto session = store.load_session(session_id);
  const auto cohort = store.load_cohort(session.cohort_ref);
  const auto index = by_id(cohort.profiles);
  std::vector<ComplexityFeatures> features;
  std::vector<double> scores;
  for (const auto& pid : assessed_ids(session)) {
    features.push_back(complexity_features(find_profile(index, pid), session.as_of));
    scores.push_back(
        clinician_score(store.load_review(session_id, pid)->outputs.front(), *store.latest_assessment(session_id, pid)));
  }
  return complexity_analysis(features, scores);
}

FailureTally session_failures(const Store& store, const std::string& session_id) {
  std::vector<PatientAnnotation> all;
  for (const auto& pid : assessed_ids(store.load_session(session_id))) {
    for (const auto& a : store.latest_assessment(session_id, pid)->failure_annotations) all.push_back({pid, a});
  }
  return failure_tally(all);
}

FairnessReport session_fairness(Workspace& ws, const std::string& session_id, const ModelConfig& cfg,
                                ChatClient& client, Judge& judge, int epochs, LeveneCenter center) {
  const auto session = ws.store.load_session(session_id);
  const auto cohort = ws.store.load_cohort(session.cohort_ref);
  const auto index = by_id(cohort.profiles);
  std::map<std::string, std::vector<double>> groups;
  for (const auto& pid : assessed_ids(session)) {
    const auto truth = ws.store.load_ground_truth(session_id, pid);
    if (!truth) continue;
    const std::array<std::string, 3> names{"White", "Asian", "Black"};
    const auto variants = make_ethnicity_variants(find_profile(index, pid));
    for (std::size_t g = 0; g < variants.size(); ++g) {
      const auto run = run_review(variants[g], session.as_of, cfg, client, ws.assets.system_prompt, epochs,
                                  "fairness-" + names[g]);
      double sum = 0;
      for (const auto& o : run.outputs) sum += automated_score(o, *truth, judge).score;
      groups[names[g]].push_back(sum / static_cast<double>(run.outputs.size()));
    }
  }
  return fairness_analysis(groups, center);
}

ScoringTools make_scoring_tools(const Workspace& ws, const std::string& judge, const std::string& synthesizer) {
  ScoringTools t;
  if (judge == "mechanical") {
    t.judge = std::make_unique<MechanicalJudge>();
  } else {
    t.clients.push_back(make_http_client(ws.config.model(judge)));
    t.judge = std::make_unique<LlmJudge>(*t.clients.back(), ws.assets.judge_prompt);
  }
  if (synthesizer == "mechanical") {
    t.synthesizer = std::make_unique<MechanicalSynthesizer>();
  } else {
    t.clients.push_back(make_http_client(ws.config.model(synthesizer)));
    t.synthesizer = std::make_unique<LlmSynthesizer>(*t.clients.back(), ws.assets.synthesizer_prompt);
  }
  return t;
}

std::unique_ptr<ChatClient> make_http_client(const ModelConfig& cfg) {
  const char* key = std::getenv("MEDSAFE_API_KEY");
  return std::make_unique<HttpChatClient>(cfg, key ? std::optional<std::string>(key) : std::nullopt);
}

}  // namespace medsafe
