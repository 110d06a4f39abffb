#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "medsafe/analysis.hpp"
#include "medsafe/codes.hpp"
#include "medsafe/indicator.hpp"
#include "medsafe/prompt.hpp"
#include "medsafe/runner.hpp"
#include "medsafe/service/config.hpp"
#include "medsafe/store.hpp"

namespace medsafe {

/// Loaded inputs shared by pipeline steps.
struct Workspace {
  ServiceConfig config;
  CodeDictionary dict;
  std::vector<IndicatorRule> rules;
  PromptAssets assets;
  Store store;

  explicit Workspace(ServiceConfig cfg);
};

/// Generates a cohort from the configured spec and saves it under `ref`.
GeneratedCohort generate_step(Workspace& ws, const std::string& ref, std::optional<int> size = {},
                              std::optional<std::uint64_t> seed = {});

/// Samples the evaluation set from a stored cohort and opens a session on it.
/// `system_flags` are needed only when strategy-3 counts are non-zero.
SessionRecord sample_step(Workspace& ws, const std::string& cohort_ref, const std::string& session_id,
                          const std::map<std::string, bool>& system_flags = {},
                          const nlohmann::json& model_configs = nlohmann::json::array());

/// Reviews every pending patient of the session.
BatchResult review_step(Workspace& ws, SessionWriter& writer, const ModelConfig& cfg, ChatClient& client,
                        int epochs, const std::string& seed_tag, int parallelism);

/// Writes ground truth for every assessed patient that lacks one, or for all
/// of them with `overwrite`. Returns the number written.
int truth_step(Workspace& ws, SessionWriter& writer, GroundTruthSynthesizer& synth, bool overwrite = false);

/// Per-epoch automated scores of assessed patients with ground truth.
std::vector<PatientEpochs> epoch_scores(const Store& store, const std::string& session_id, Judge& judge);

/// Consistency report with the session's clinician accuracy as the observed value.
ConsistencyReport session_consistency(const Store& store, const std::string& session_id, Judge& judge);

/// Model name -> per-epoch scores over patients scored in every session.
ScoreTable session_score_table(const Store& store, const std::vector<std::string>& session_ids, Judge& judge);

/// Complexity features at the session date against clinician scores.
ComplexityReport session_complexity(const Store& store, const std::string& session_id);

FailureTally session_failures(const Store& store, const std::string& session_id);

/// Reviews White, Asian and Black variants of every patient with ground truth
/// and scores each variant's epochs against it.
FairnessReport session_fairness(Workspace& ws, const std::string& session_id, const ModelConfig& cfg,
                                ChatClient& client, Judge& judge, int epochs, LeveneCenter center);

/// HTTP client for `cfg`; the bearer token comes from MEDSAFE_API_KEY when set.
std::unique_ptr<ChatClient> make_http_client(const ModelConfig& cfg);

/// Mechanical judge or an LLM judge on the named model.
struct ScoringTools {
  std::vector<std::unique_ptr<ChatClient>> clients;
  std::unique_ptr<Judge> judge;
  std::unique_ptr<GroundTruthSynthesizer> synthesizer;
};
ScoringTools make_scoring_tools(const Workspace& ws, const std::string& judge, const std::string& synthesizer);

}  // namespace medsafe
