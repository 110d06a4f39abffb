#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/ehr.hpp"
#include "medsafe/scoring.hpp"
#include "medsafe/stats.hpp"

namespace medsafe {

struct PatientEpochs {
  std::string patient_id;
  std::vector<double> scores;  // automated score per epoch
  std::vector<bool> flags;     // intervention_required per epoch
};

struct ConsistencyReport {
  std::vector<std::string> patient_ids;
  std::vector<double> per_patient_sd;
  std::vector<double> per_patient_range;
  double mean_sd = 0.0;
  double median_sd = 0.0;
  std::optional<double> p_reflag_given_flagged;
  std::optional<double> p_stay_negative_given_negative;
  int initial_flagged_n = 0;
  int initial_negative_n = 0;
  std::optional<double> ceiling_accuracy;
  std::optional<double> observed_accuracy;
  std::optional<double> anchoring_gap;
};

/// (n_pos * p_reflag + n_neg * p_stay) / (n_pos + n_neg).
double consistency_ceiling(double p_reflag, double p_stay, int n_pos, int n_neg);

/// Epoch 0 is the anchor: conditional probabilities count agreements of
/// every later epoch with it. SDs use n - 1. The ceiling weights default to
/// the epoch-0 flagged and unflagged counts. Throws std::invalid_argument for
/// fewer than 2 epochs or mismatched lengths.
ConsistencyReport self_consistency(std::span<const PatientEpochs> runs, std::optional<int> initial_flagged_n = {},
                                   std::optional<int> initial_negative_n = {},
                                   std::optional<double> observed_accuracy = {});

struct PopulationMetrics {
  double tp = 0.0, fp = 0.0, tn = 0.0, fn = 0.0;
  std::optional<double> prevalence, sensitivity, specificity, ppv, npv, accuracy, kappa, f1;
};

/// Two-stratum reweighting: cells are population fractions built from the
/// flag rate and the per-stratum predictive values.
PopulationMetrics reweight_population(double flag_rate, double ppv, double npv);
/// Metrics of a 2x2 table given as (possibly fractional) cell weights.
PopulationMetrics metrics_from_cells(double tp, double fp, double tn, double fn);

/// model -> epoch -> per-patient scores.
using ScoreTable = std::map<std::string, std::vector<std::vector<double>>>;

struct ModelSummary {
  std::string model;
  std::vector<double> epoch_means;
  double mean = 0.0;
  std::optional<double> sem;  // needs >= 2 epochs
};

struct RelativeDelta {
  std::string a;
  std::string b;
  double delta = 0.0;  // (mean_a - mean_b) / mean_b
};

struct ModelComparison {
  std::vector<ModelSummary> models;
  std::vector<RelativeDelta> deltas;
};

double relative_delta(double a, double b);
/// Throws std::invalid_argument for an empty model column or an unknown pair member.
ModelComparison model_comparison(const ScoreTable& table, const std::vector<std::pair<std::string, std::string>>& pairs);

struct PartialResult {
  std::string predictor;
  std::optional<double> r;
  std::optional<double> p_value;
};

struct ComplexityReport {
  int n = 0;
  std::vector<std::string> variables;  // age, meds, qof, score
  std::vector<std::vector<std::optional<double>>> pearson;
  std::vector<std::vector<std::optional<double>>> pearson_p;
  std::vector<PartialResult> partials;
  std::optional<double> r_squared;
  std::optional<double> model_p_value;
  std::map<std::string, double> coefficient_p_values;
};

/// Constant columns leave their statistics absent and are dropped from the
/// regression. Throws SingularMatrix for collinear predictors and
/// std::invalid_argument for n < 4 or mismatched lengths.
ComplexityReport complexity_analysis(std::span<const ComplexityFeatures> features, std::span<const double> scores);

struct GroupStats {
  std::string group;
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct FairnessReport {
  AnovaResult anova;
  LeveneResult levene;
  LeveneCenter center = LeveneCenter::mean;
  std::vector<GroupStats> groups;
};

FairnessReport fairness_analysis(const std::map<std::string, std::vector<double>>& scores_by_group,
                                 LeveneCenter center = LeveneCenter::mean);

struct PatientAnnotation {
  std::string patient_id;
  FailureAnnotation annotation;
};

struct TallyRow {
  std::string key;
  int count = 0;
  double percent = 0.0;  // of all instances, one decimal
};

struct FailureTally {
  int instances = 0;
  int patients = 0;
  std::vector<TallyRow> by_reason;  // all five reasons, taxonomy order
  std::vector<TallyRow> by_mode;    // observed modes, by key
  std::vector<TallyRow> by_harm;    // all five categories
};

FailureTally failure_tally(std::span<const PatientAnnotation> annotations);

void to_json(nlohmann::json& j, const ConsistencyReport& r);
void to_json(nlohmann::json& j, const PopulationMetrics& m);
void to_json(nlohmann::json& j, const ModelComparison& m);
void to_json(nlohmann::json& j, const ComplexityReport& r);
void to_json(nlohmann::json& j, const FairnessReport& r);
void to_json(nlohmann::json& j, const FailureTally& t);

/// Plot-ready series: one row per (series, label, value).
std::string tally_plot_csv(const FailureTally& t);
std::string correlation_heatmap_csv(const ComplexityReport& r);
std::string model_comparison_csv(const ModelComparison& m);

}  // namespace medsafe
