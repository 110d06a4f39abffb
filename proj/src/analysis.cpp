#include "medsafe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "medsafe/metrics.hpp"
#include "medsafe/util.hpp"

namespace medsafe {

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

double round1(double v) { return std::round(v * 10.0) / 10.0; }

}  // namespace

double consistency_ceiling(double p_reflag, double p_stay, int n_pos, int n_neg) {
  if (n_pos < 0 || n_neg < 0 || n_pos + n_neg == 0) throw std::invalid_argument("ceiling needs a positive total count");
  if (p_reflag < 0 || p_reflag > 1 || p_stay < 0 || p_stay > 1) throw std::invalid_argument("probabilities must be in [0, 1]");
  return (n_pos * p_reflag + n_neg * p_stay) / static_cast<double>(n_pos + n_neg);
}

ConsistencyReport self_consistency(std::span<const PatientEpochs> runs, std::optional<int> initial_flagged_n,
                                   std::optional<int> initial_negative_n, std::optional<double> observed_accuracy) {
  if (runs.empty()) throw std::invalid_argument("self_consistency: no patients");
  ConsistencyReport r;
  long reflag = 0, reflag_n = 0, stay = 0, stay_n = 0;
  int flagged0 = 0, negative0 = 0;
  for (const auto& p : runs) {
    if (p.scores.size() < 2 || p.flags.size() < 2) {
      throw std::invalid_argument("self_consistency: patient " + p.patient_id + " has fewer than 2 epochs");
    }
    if (p.scores.size() != p.flags.size()) {
      throw std::invalid_argument("self_consistency: patient " + p.patient_id + " has mismatched scores and flags");
    }
    r.patient_ids.push_back(p.patient_id);
    r.per_patient_sd.push_back(sample_sd(p.scores));
    const auto [lo, hi] = std::minmax_element(p.scores.begin(), p.scores.end());
    r.per_patient_range.push_back(*hi - *lo);
    const bool anchor = p.flags[0];
    (anchor ? flagged0 : negative0)++;
    for (std::size_t e = 1; e < p.flags.size(); ++e) {
      if (anchor) {
        ++reflag_n;
        reflag += p.flags[e] ? 1 : 0;
      } else {
        ++stay_n;
        stay += p.flags[e] ? 0 : 1;
      }
    }
  }
  r.mean_sd = mean(r.per_patient_sd);
  r.median_sd = median(r.per_patient_sd);
  if (reflag_n) r.p_reflag_given_flagged = static_cast<double>(reflag) / static_cast<double>(reflag_n);
  if (stay_n) r.p_stay_negative_given_negative = static_cast<double>(stay) / static_cast<double>(stay_n);
  r.initial_flagged_n = initial_flagged_n.value_or(flagged0);
  r.initial_negative_n = initial_negative_n.value_or(negative0);
  const double pr = r.p_reflag_given_flagged.value_or(0.0), ps = r.p_stay_negative_given_negative.value_or(0.0);
  const bool pos_ok = r.p_reflag_given_flagged || r.initial_flagged_n == 0;
  const bool neg_ok = r.p_stay_negative_given_negative || r.initial_negative_n == 0;
  if (pos_ok && neg_ok && r.initial_flagged_n + r.initial_negative_n > 0) {
    r.ceiling_accuracy = consistency_ceiling(pr, ps, r.initial_flagged_n, r.initial_negative_n);
  }
  r.observed_accuracy = observed_accuracy;
  if (r.ceiling_accuracy && observed_accuracy) r.anchoring_gap = *observed_accuracy - *r.ceiling_accuracy;
  return r;
}

PopulationMetrics metrics_from_cells(double tp, double fp, double tn, double fn) {
  PopulationMetrics m{tp, fp, tn, fn, {}, {}, {}, {}, {}, {}, {}, {}};
  const double n = tp + fp + tn + fn;
  const auto ratio = [](double a, double b) -> std::optional<double> {
    if (b <= 0.0) return std::nullopt;
    return a / b;
  };
  m.prevalence = ratio(tp + fn, n);
  m.sensitivity = ratio(tp, tp + fn);
  m.specificity = ratio(tn, tn + fp);
  m.ppv = ratio(tp, tp + fp);
  m.npv = ratio(tn, tn + fn);
  m.accuracy = ratio(tp + tn, n);
  m.kappa = cohen_kappa(tp, fp, tn, fn);
  if (m.ppv && m.sensitivity) m.f1 = f1_score(*m.ppv, *m.sensitivity);
  return m;
}

PopulationMetrics reweight_population(double flag_rate, double ppv, double npv) {
  for (double v : {flag_rate, ppv, npv}) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("reweight_population: inputs must be in [0, 1]");
  }
  return metrics_from_cells(flag_rate * ppv, flag_rate * (1 - ppv), (1 - flag_rate) * npv, (1 - flag_rate) * (1 - npv));
}

double relative_delta(double a, double b) {
  if (b == 0.0) throw std::invalid_argument("relative_delta: reference mean is 0");
  return (a - b) / b;
}

ModelComparison model_comparison(const ScoreTable& table, const std::vector<std::pair<std::string, std::string>>& pairs) {
  ModelComparison out;
  std::map<std::string, double> means;
  for (const auto& [model, epochs] : table) {
    if (epochs.empty()) throw std::invalid_argument("model " + model + " has no epochs");
    ModelSummary s;
    s.model = model;
    for (std::size_t e = 0; e < epochs.size(); ++e) {
      if (epochs[e].empty()) throw std::invalid_argument("model " + model + " epoch " + std::to_string(e) + " is empty");
      s.epoch_means.push_back(mean(epochs[e]));
    }
    s.mean = mean(s.epoch_means);
    if (s.epoch_means.size() >= 2) s.sem = sample_sd(s.epoch_means) / std::sqrt(static_cast<double>(s.epoch_means.size()));
    means[model] = s.mean;
    out.models.push_back(std::move(s));
  }
  for (const auto& [a, b] : pairs) {
    if (!means.contains(a) || !means.contains(b)) throw std::invalid_argument("unknown model in pair " + a + " / " + b);
    out.deltas.push_back({a, b, relative_delta(means[a], means[b])});
  }
  return out;
}

ComplexityReport complexity_analysis(std::span<const ComplexityFeatures> features, std::span<const double> scores) {
  if (features.size() != scores.size()) throw std::invalid_argument("complexity_analysis: length mismatch");
  if (features.size() < 4) throw std::invalid_argument("complexity_analysis: need at least 4 patients");
  ComplexityReport r;
  r.n = static_cast<int>(features.size());
  r.variables = {"age", "meds", "qof", "score"};
  std::vector<std::vector<double>> cols(4);
  for (std::size_t i = 0; i < features.size(); ++i) {
    cols[0].push_back(features[i].age);
    cols[1].push_back(features[i].active_med_count);
    cols[2].push_back(features[i].qof_count);
    cols[3].push_back(scores[i]);
  }
  const auto k = cols.size();
  r.pearson.assign(k, std::vector<std::optional<double>>(k));
  r.pearson_p.assign(k, std::vector<std::optional<double>>(k));
  std::vector<bool> constant(k);
  for (std::size_t a = 0; a < k; ++a) {
    constant[a] = std::all_of(cols[a].begin(), cols[a].end(), [&](double v) { return v == cols[a][0]; });
  }
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      if (constant[a] || constant[b]) continue;
      if (a == b) {
        r.pearson[a][b] = 1.0;
        continue;
      }
      r.pearson[a][b] = pearson(cols[a], cols[b]);
      if (r.pearson[a][b]) r.pearson_p[a][b] = correlation_p_value(*r.pearson[a][b], r.n - 2);
    }
  }
  std::vector<std::size_t> used;
  for (std::size_t a = 0; a < 3; ++a) {
    if (!constant[a]) used.push_back(a);
  }
  if (!constant[3] && !used.empty()) {
    std::vector<std::vector<double>> preds;
    for (auto a : used) preds.push_back(cols[a]);
    try {
      const auto fit = ols(preds, cols[3]);
      r.r_squared = fit.r_squared;
      r.model_p_value = fit.f_p_value;
      for (std::size_t i = 0; i < used.size(); ++i) r.coefficient_p_values[r.variables[used[i]]] = fit.p_values[i + 1];
    } catch (const SingularMatrix&) {
    }
  }
  for (std::size_t a = 0; a < 3; ++a) {
    PartialResult pr{r.variables[a], {}, {}};
    if (!constant[a] && !constant[3]) {
      std::vector<std::vector<double>> set{cols[a], cols[3]};
      for (auto b : used) {
        if (b != a) set.push_back(cols[b]);
      }
      try {
        const auto p = partial_correlation(set, 0, 1);
        pr.r = p.r;
        pr.p_value = p.p_value;
      } catch (const SingularMatrix&) {
        // exact collinearity: undefined, left absent
      }
    }
    r.partials.push_back(pr);
  }
  return r;
}

FairnessReport fairness_analysis(const std::map<std::string, std::vector<double>>& scores_by_group, LeveneCenter center) {
  if (scores_by_group.size() < 2) throw std::invalid_argument("fairness_analysis: need at least 2 groups");
  FairnessReport r;
  r.center = center;
  std::vector<std::vector<double>> groups;
  for (const auto& [name, v] : scores_by_group) {
    if (v.size() < 2) throw std::invalid_argument("fairness_analysis: group " + name + " has fewer than 2 scores");
    r.groups.push_back({name, static_cast<int>(v.size()), mean(v), sample_sd(v)});
    groups.push_back(v);
  }
  r.anova = one_way_anova(groups);
  r.levene = levene_test(groups, center);
  return r;
}

FailureTally failure_tally(std::span<const PatientAnnotation> annotations) {
  FailureTally t;
  t.instances = static_cast<int>(annotations.size());
  std::set<std::string> patients;
  std::map<FailureReason, int> reason;
  std::map<Harm, int> harm;
  std::map<std::string, int> mode;
  for (const auto& a : annotations) {
    patients.insert(a.patient_id);
    ++reason[a.annotation.reason];
    ++harm[a.annotation.harm];
    ++mode[a.annotation.mode];
  }
  t.patients = static_cast<int>(patients.size());
  const auto pct = [&](int c) { return t.instances ? round1(100.0 * c / t.instances) : 0.0; };
  for (auto r : {FailureReason::overconfidence_in_uncertainty, FailureReason::protocol_vs_patient_gap,
                 FailureReason::protocol_vs_practice_gap, FailureReason::coherent_but_factually_incorrect,
                 FailureReason::process_blindness}) {
    t.by_reason.push_back({std::string(to_string(r)), reason[r], pct(reason[r])});
  }
  for (auto h : {Harm::none, Harm::mild, Harm::moderate, Harm::severe, Harm::death}) {
    t.by_harm.push_back({std::string(to_string(h)), harm[h], pct(harm[h])});
  }
  for (const auto& [m, c] : mode) t.by_mode.push_back({m, c, pct(c)});
  return t;
}

void to_json(nlohmann::json& j, const ConsistencyReport& r) {
  j = nlohmann::json{{"patient_ids", r.patient_ids},
                     {"per_patient_sd", r.per_patient_sd},
                     {"per_patient_range", r.per_patient_range},
                     {"mean_sd", r.mean_sd},
                     {"median_sd", r.median_sd},
                     {"p_reflag_given_flagged", opt(r.p_reflag_given_flagged)},
                     {"p_stay_negative_given_negative", opt(r.p_stay_negative_given_negative)},
                     {"initial_flagged_n", r.initial_flagged_n},
                     {"initial_negative_n", r.initial_negative_n},
                     {"ceiling_accuracy", opt(r.ceiling_accuracy)},
                     {"observed_accuracy", opt(r.observed_accuracy)},
                     {"anchoring_gap", opt(r.anchoring_gap)}};
}

void to_json(nlohmann::json& j, const PopulationMetrics& m) {
  j = nlohmann::json{{"cells", {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}}},
                     {"prevalence", opt(m.prevalence)},
                     {"sensitivity", opt(m.sensitivity)},
                     {"specificity", opt(m.specificity)},
                     {"ppv", opt(m.ppv)},
                     {"npv", opt(m.npv)},
                     {"accuracy", opt(m.accuracy)},
                     {"kappa", opt(m.kappa)},
                     {"f1", opt(m.f1)}};
}

void to_json(nlohmann::json& j, const ModelComparison& m) {
  j = nlohmann::json{{"models", nlohmann::json::array()}, {"deltas", nlohmann::json::array()}};
  for (const auto& s : m.models) {
    j["models"].push_back({{"model", s.model}, {"epoch_means", s.epoch_means}, {"mean", s.mean}, {"sem", opt(s.sem)}});
  }
  for (const auto& d : m.deltas) j["deltas"].push_back({{"a", d.a}, {"b", d.b}, {"relative_delta", d.delta}});
}

void to_json(nlohmann::json& j, const ComplexityReport& r) {
  const auto matrix = [](const std::vector<std::vector<std::optional<double>>>& m) {
    auto a = nlohmann::json::array();
    for (const auto& row : m) {
      auto jr = nlohmann::json::array();
      for (const auto& v : row) jr.push_back(opt(v));
      a.push_back(jr);
    }
    return a;
  };
  j = nlohmann::json{{"n", r.n},
                     {"variables", r.variables},
                     {"pearson", matrix(r.pearson)},
                     {"pearson_p", matrix(r.pearson_p)},
                     {"r_squared", opt(r.r_squared)},
                     {"model_p_value", opt(r.model_p_value)},
                     {"coefficient_p_values", r.coefficient_p_values},
                     {"partials", nlohmann::json::array()}};
  for (const auto& p : r.partials) j["partials"].push_back({{"predictor", p.predictor}, {"r", opt(p.r)}, {"p_value", opt(p.p_value)}});
}

void to_json(nlohmann::json& j, const FairnessReport& r) {
  j = nlohmann::json{{"anova_f", r.anova.f},
                     {"anova_p", r.anova.p},
                     {"anova_df", {r.anova.df_between, r.anova.df_within}},
                     {"levene_stat", r.levene.statistic},
                     {"levene_p", r.levene.p},
                     {"levene_center", r.center == LeveneCenter::mean ? "mean" : "median"},
                     {"groups", nlohmann::json::array()}};
  for (const auto& g : r.groups) j["groups"].push_back({{"group", g.group}, {"n", g.n}, {"mean", g.mean}, {"sd", g.sd}});
}

void to_json(nlohmann::json& j, const FailureTally& t) {
  const auto rows = [](const std::vector<TallyRow>& v) {
    auto a = nlohmann::json::array();
    for (const auto& r : v) a.push_back({{"key", r.key}, {"count", r.count}, {"percent", r.percent}});
    return a;
  };
  j = nlohmann::json{{"instances", t.instances},
                     {"patients", t.patients},
                     {"by_reason", rows(t.by_reason)},
                     {"by_mode", rows(t.by_mode)},
                     {"by_harm", rows(t.by_harm)}};
}

std::string tally_plot_csv(const FailureTally& t) {
  std::ostringstream out;
  out << "series,label,count,percent\n";
  const auto emit = [&](const char* series, const std::vector<TallyRow>& rows) {
    for (const auto& r : rows) out << series << ',' << csv_field(r.key) << ',' << r.count << ',' << format_fixed(r.percent, 1) << '\n';
  };
  emit("reason", t.by_reason);
  emit("mode", t.by_mode);
  emit("harm", t.by_harm);
  return out.str();
}

std::string correlation_heatmap_csv(const ComplexityReport& r) {
  std::ostringstream out;
  out << "row,column,r\n";
  for (std::size_t a = 0; a < r.variables.size(); ++a) {
    for (std::size_t b = 0; b < r.variables.size(); ++b) {
      out << r.variables[a] << ',' << r.variables[b] << ',' << (r.pearson[a][b] ? format_fixed(*r.pearson[a][b], 6) : "")
          << '\n';
    }
  }
  return out.str();
}

std::string model_comparison_csv(const ModelComparison& m) {
  std::ostringstream out;
  out << "model,mean,sem,epochs\n";
  for (const auto& s : m.models) {
    out << csv_field(s.model) << ',' << format_fixed(s.mean, 6) << ',' << (s.sem ? format_fixed(*s.sem, 6) : "") << ','
        << s.epoch_means.size() << '\n';
  }
  return out.str();
}

}  // namespace medsafe
