#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <pthread.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "medsafe/service/api.hpp"
#include "medsafe/service/config.hpp"
#include "medsafe/service/pipeline.hpp"
#include "medsafe/stub_model.hpp"
#include "medsafe/util.hpp"

namespace {

using namespace medsafe;
namespace fs = std::filesystem;

struct CliError : std::runtime_error {
  CliError(std::string c, const std::string& msg, int exit) : std::runtime_error(msg), code(std::move(c)), exit_code(exit) {}
  std::string code;
  int exit_code;
};

int report_error(const std::string& code, const std::string& message, int exit_code,
                 const std::vector<std::string>& problems = {}) {
  nlohmann::json err = {{"code", code}, {"message", message}};
  if (!problems.empty()) err["problems"] = problems;
  std::cerr << nlohmann::json{{"error", err}}.dump() << "\n";
  return exit_code;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(out_path, text);
  }
}

std::string pretty(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// Blocks SIGINT and SIGTERM in every thread started afterwards, then waits for one.
class SignalWaiter {
 public:
  SignalWaiter() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
  }
  void wait() const {
    int sig = 0;
    sigwait(&set_, &sig);
  }

 private:
  sigset_t set_{};
};

std::map<std::string, bool> read_flags(const std::string& path) {
  if (path.empty()) return {};
  return read_json_file(path).get<std::map<std::string, bool>>();
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Medication-safety review evaluation pipeline"};
  app.require_subcommand(1);
  std::string config_path, store_dir;
  app.add_option("--config", config_path, "Pipeline config (JSON), see docs/config.md")->check(CLI::ExistingFile);
  app.add_option("--store", store_dir, "Store directory; overrides the config");

  std::function<void()> action;
  std::optional<Workspace> ws_slot;
  const auto workspace = [&]() -> Workspace& {
    if (!ws_slot) {
      auto cfg = config_path.empty() ? default_service_config(store_dir.empty() ? "medsafe-store" : store_dir)
                                     : load_service_config(config_path);
      if (!store_dir.empty()) cfg.store_dir = store_dir;
      ws_slot.emplace(std::move(cfg));
    }
    return *ws_slot;
  };

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic cohort into the store");
  std::string gen_ref, gen_out;
  std::optional<int> gen_size;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--cohort", gen_ref, "Cohort name in the store")->required();
  gen->add_option("--size", gen_size, "Number of patients (overrides the config)");
  gen->add_option("--seed", gen_seed, "Generator seed (overrides the config)");
  gen->add_option("--out", gen_out, "Also write the profiles to this JSON file");
  gen->callback([&] {
    action = [&] {
      auto& ws = workspace();
      const auto cohort = generate_step(ws, gen_ref, gen_size, gen_seed);
      if (!gen_out.empty()) save_cohort(gen_out, cohort.profiles);
      std::cout << pretty({{"cohort", gen_ref},
                           {"patients", cohort.profiles.size()},
                           {"plants", cohort.manifest.plants.size()},
                           {"seed", cohort.manifest.seed}});
    };
  });

  // indicators
  auto* ind = app.add_subcommand("indicators", "Run indicator rules over a cohort and report prevalence");
  std::string ind_cohort, ind_rules, ind_out, ind_run_out, ind_as_of;
  ind->add_option("--cohort", ind_cohort, "Cohort JSON file or cohort name in the store")->required();
  ind->add_option("--rules", ind_rules, "Rule directory (default: from the config)");
  ind->add_option("--as-of", ind_as_of, "Evaluation date YYYY-MM-DD (default: cohort date)");
  ind->add_option("--out", ind_out, "Prevalence CSV path (default: stdout)");
  ind->add_option("--run-out", ind_run_out, "Write per-patient matches as JSON");
  ind->callback([&] {
    action = [&] {
      auto& ws = workspace();
      std::vector<PatientProfile> profiles;
      Date as_of = CohortSpec{}.as_of;
      if (fs::is_regular_file(ind_cohort)) {
        profiles = load_cohort(ind_cohort);
      } else {
        auto stored = ws.store.load_cohort(ind_cohort);
        profiles = std::move(stored.profiles);
        as_of = stored.manifest.as_of;
      }
      if (!ind_as_of.empty()) as_of = Date::parse(ind_as_of);
      const auto rules = ind_rules.empty() ? ws.rules : load_rules(ind_rules, ws.dict);
      const auto run = run_indicators(profiles, rules, ws.dict, as_of);
      if (!ind_run_out.empty()) write_file_atomic(ind_run_out, pretty(nlohmann::json(run)));
      emit(prevalence_csv(prevalence_stats(run, rules, profiles.size())), ind_out);
    };
  });

  // sample
  auto* smp = app.add_subcommand("sample", "Sample the evaluation set and open a session");
  std::string smp_cohort, smp_session, smp_flags;
  std::optional<std::uint64_t> smp_seed;
  smp->add_option("--cohort", smp_cohort, "Cohort name in the store")->required();
  smp->add_option("--session", smp_session, "New session id")->required();
  smp->add_option("--system-flags", smp_flags, "JSON object patient_id -> bool, for strategy-3 strata");
  smp->add_option("--seed", smp_seed, "Sampling seed (overrides the config)");
  smp->callback([&] {
    action = [&] {
      auto& ws = workspace();
      if (smp_seed) ws.config.sampling_seed = *smp_seed;
      const auto s = sample_step(ws, smp_cohort, smp_session, read_flags(smp_flags));
      std::cout << pretty({{"session", s.session_id},
                           {"patients", s.patients.size()},
                           {"warnings", s.evaluation_set.warnings}});
    };
  });

  // review
  auto* rev = app.add_subcommand("review", "Review every pending patient of a session");
  std::string rev_session, rev_model, rev_endpoint, rev_effort, rev_seed;
  std::optional<int> rev_epochs, rev_parallel;
  rev->add_option("--session", rev_session, "Session id")->required();
  rev->add_option("--model", rev_model, "Model name (from the config, or new with --endpoint)")->required();
  rev->add_option("--endpoint", rev_endpoint, "Chat-completions URL (overrides the config)");
  rev->add_option("--effort", rev_effort, "Reasoning effort")->check(CLI::IsMember({"low", "medium", "high"}));
  rev->add_option("--epochs", rev_epochs, "Independent completions per patient")->check(CLI::Range(1, 1000));
  rev->add_option("--parallelism", rev_parallel, "Patients in flight")->check(CLI::Range(1, 256));
  rev->add_option("--seed", rev_seed, "Seed tag for per-epoch seeds");
  rev->callback([&] {
    action = [&] {
      auto& ws = workspace();
      ModelConfig cfg;
      const bool known = std::any_of(ws.config.models.begin(), ws.config.models.end(),
                                     [&](const auto& m) { return m.model_name == rev_model; });
      if (known) {
        cfg = ws.config.model(rev_model);
      } else if (rev_endpoint.empty()) {
        throw ConfigError({"model '" + rev_model + "' is not configured; pass --endpoint"});
      } else {
        cfg.model_name = rev_model;
      }
      if (!rev_endpoint.empty()) cfg.endpoint = rev_endpoint;
      if (!rev_effort.empty()) cfg.reasoning_effort = rev_effort;
      if (const auto problems = model_config_problems(cfg); !problems.empty()) throw ConfigError(problems);
      const int epochs = rev_epochs.value_or(ws.config.review.epochs);
      auto writer = ws.store.open_writer(rev_session);
      writer->record_model_config(cfg);
      auto client = make_http_client(cfg);
      const auto result = review_step(ws, *writer, cfg, *client, epochs,
                                      rev_seed.empty() ? ws.config.review.seed_tag : rev_seed,
                                      rev_parallel.value_or(ws.config.review.parallelism));
      nlohmann::json failures = nlohmann::json::array();
      for (const auto& [pid, err] : result.failures) failures.push_back({{"patient_id", pid}, {"error", err}});
      std::cout << pretty({{"session", rev_session},
                           {"model", cfg.model_name},
                           {"epochs", epochs},
                           {"reviewed", result.runs.size()},
                           {"failures", failures}});
      if (!result.failures.empty()) {
        throw CliError("review_incomplete", std::to_string(result.failures.size()) + " patient(s) failed", 5);
      }
    };
  });

  // assess
  auto* asm_ = app.add_subcommand("assess", "Record a clinician assessment or an exclusion");
  std::string as_session, as_patient, as_file;
  bool as_insufficient = false;
  asm_->add_option("--session", as_session, "Session id")->required();
  asm_->add_option("--patient", as_patient, "Patient id")->required();
  auto* file_opt = asm_->add_option("--file", as_file, "AssessmentRecord JSON")->check(CLI::ExistingFile);
  asm_->add_flag("--insufficient", as_insufficient, "Mark the patient as having insufficient information")
      ->excludes(file_opt);
  asm_->callback([&] {
    action = [&] {
      if (!as_insufficient && as_file.empty()) throw CliError("usage", "assess needs --file or --insufficient", 2);
      auto writer = workspace().store.open_writer(as_session);
      const auto s = as_insufficient ? writer->mark_sufficiency(as_patient, false)
                                     : writer->append_assessment(as_patient, assessment_from_json(read_json_file(as_file)));
      std::cout << pretty({{"patient_id", as_patient}, {"status", to_string(s.status.at(as_patient))}});
    };
  });

  // truth
  auto* tru = app.add_subcommand("truth", "Synthesise ground truth for assessed patients");
  std::string tr_session, tr_synth;
  bool tr_overwrite = false;
  tru->add_option("--session", tr_session, "Session id")->required();
  tru->add_option("--synthesizer", tr_synth, "'mechanical' or a configured model (default: from the config)");
  tru->add_flag("--overwrite", tr_overwrite, "Replace existing ground truth");
  tru->callback([&] {
    action = [&] {
      auto& ws = workspace();
      auto tools = make_scoring_tools(ws, "mechanical", tr_synth.empty() ? ws.config.synthesizer : tr_synth);
      auto writer = ws.store.open_writer(tr_session);
      const int n = truth_step(ws, *writer, *tools.synthesizer, tr_overwrite);
      std::cout << pretty({{"session", tr_session}, {"written", n}});
    };
  });

  // score
  auto* sco = app.add_subcommand("score", "Score assessed patients and export the report bundle");
  std::string sc_session, sc_judge;
  sco->add_option("--session", sc_session, "Session id")->required();
  sco->add_option("--judge", sc_judge, "'mechanical' or a configured model (default: from the config)");
  sco->callback([&] {
    action = [&] {
      auto& ws = workspace();
      auto tools = make_scoring_tools(ws, sc_judge.empty() ? ws.config.judge : sc_judge, "mechanical");
      const auto bundle = ws.store.open_writer(sc_session)->export_report(*tools.judge);
      std::cout << bundle.files.at("metrics.json");
    };
  });

  // analyze
  auto* ana = app.add_subcommand("analyze", "Analyses over stored sessions");
  ana->require_subcommand(1);
  std::string an_session, an_sessions, an_pairs, an_judge, an_out, an_csv, an_model, an_center = "mean";
  double an_f = 0, an_ppv = 0, an_npv = 0;
  int an_epochs = 3;
  const auto judge_for = [&](Workspace& ws) {
    return make_scoring_tools(ws, an_judge.empty() ? ws.config.judge : an_judge, "mechanical");
  };
  const auto save_analysis = [&](Workspace& ws, const std::string& session, const std::string& name,
                                 const nlohmann::json& report, const std::string& csv) {
    const auto text = pretty(report);
    if (!session.empty()) {
      write_file_atomic((ws.store.session_dir(session) / "reports" / "analysis" / (name + ".json")).string(), text);
    }
    if (!an_csv.empty()) write_file_atomic(an_csv, csv);
    emit(text, an_out);
  };
  const auto common = [&](CLI::App* sub, bool session) {
    if (session) sub->add_option("--session", an_session, "Session id")->required();
    sub->add_option("--out", an_out, "Write the JSON report here instead of stdout");
  };

  auto* an_cons = ana->add_subcommand("consistency", "Epoch self-consistency and the accuracy ceiling");
  common(an_cons, true);
  an_cons->add_option("--judge", an_judge, "'mechanical' or a configured model");
  an_cons->callback([&] {
    action = [&] {
      auto& ws = workspace();
      auto tools = judge_for(ws);
      save_analysis(ws, an_session, "consistency", session_consistency(ws.store, an_session, *tools.judge), "");
    };
  });

  auto* an_pop = ana->add_subcommand("population", "Reweight stratified results to the population");
  common(an_pop, false);
  an_pop->add_option("--flag-rate", an_f, "Fraction flagged by the system")->required()->check(CLI::Range(0.0, 1.0));
  an_pop->add_option("--ppv", an_ppv, "PPV in the flagged stratum")->required()->check(CLI::Range(0.0, 1.0));
  an_pop->add_option("--npv", an_npv, "NPV in the unflagged stratum")->required()->check(CLI::Range(0.0, 1.0));
  an_pop->callback([&] {
    action = [&] { emit(pretty(reweight_population(an_f, an_ppv, an_npv)), an_out); };
  });

  auto* an_cmp = ana->add_subcommand("compare", "Mean automated score per model with SEM over epochs");
  common(an_cmp, false);
  an_cmp->add_option("--sessions", an_sessions, "Comma-separated session ids, one per model")->required();
  an_cmp->add_option("--pairs", an_pairs, "Comma-separated a:b model pairs for relative deltas");
  an_cmp->add_option("--csv", an_csv, "Plot-data CSV path");
  an_cmp->add_option("--judge", an_judge, "'mechanical' or a configured model");
  an_cmp->callback([&] {
    action = [&] {
      auto& ws = workspace();
      auto tools = judge_for(ws);
      std::vector<std::pair<std::string, std::string>> pairs;
      for (const auto& p : split_csv(an_pairs)) {
        const auto colon = p.find(':');
        if (colon == std::string::npos) throw CliError("usage", "pair '" + p + "' is not a:b", 2);
        pairs.emplace_back(p.substr(0, colon), p.substr(colon + 1));
      }
      const auto cmp = model_comparison(session_score_table(ws.store, split_csv(an_sessions), *tools.judge), pairs);
      save_analysis(ws, "", "comparison", cmp, model_comparison_csv(cmp));
    };
  });

  auto* an_cx = ana->add_subcommand("complexity", "Correlation of patient complexity with clinician score");
  common(an_cx, true);
  an_cx->add_option("--csv", an_csv, "Heatmap CSV path");
  an_cx->callback([&] {
    action = [&] {
      auto& ws = workspace();
      const auto r = session_complexity(ws.store, an_session);
      save_analysis(ws, an_session, "complexity", r, correlation_heatmap_csv(r));
    };
  });

  auto* an_fail = ana->add_subcommand("failures", "Tally failure annotations");
  common(an_fail, true);
  an_fail->add_option("--csv", an_csv, "Bar-chart CSV path");
  an_fail->callback([&] {
    action = [&] {
      auto& ws = workspace();
      const auto t = session_failures(ws.store, an_session);
      save_analysis(ws, an_session, "failures", t, tally_plot_csv(t));
    };
  });

  auto* an_fair = ana->add_subcommand("fairness", "Counterfactual ethnicity variants; ANOVA and Levene");
  common(an_fair, true);
  an_fair->add_option("--model", an_model, "Configured model to review the variants")->required();
  an_fair->add_option("--epochs", an_epochs, "Epochs per variant")->check(CLI::Range(1, 100));
  an_fair->add_option("--center", an_center, "Levene centring")->check(CLI::IsMember({"mean", "median"}));
  an_fair->add_option("--judge", an_judge, "'mechanical' or a configured model");
  an_fair->callback([&] {
    action = [&] {
      auto& ws = workspace();
      auto tools = judge_for(ws);
      const auto& cfg = ws.config.model(an_model);
      auto client = make_http_client(cfg);
      const auto r = session_fairness(ws, an_session, cfg, *client, *tools.judge, an_epochs,
                                      an_center == "median" ? LeveneCenter::median : LeveneCenter::mean);
      save_analysis(ws, an_session, "fairness", r, "");
    };
  });

  // serve
  auto* srv = app.add_subcommand("serve", "Serve the grading API for one session on localhost");
  std::string sv_session, sv_host;
  std::optional<int> sv_port;
  srv->add_option("--session", sv_session, "Session id")->required();
  srv->add_option("--host", sv_host, "Loopback host (default: from the config)");
  srv->add_option("--port", sv_port, "Port, 0 for any (default: from the config)")->check(CLI::Range(0, 65535));
  srv->callback([&] {
    action = [&] {
      auto& ws = workspace();
      const SignalWaiter signals;
      ApiServer api(ws.store, sv_session);
      const int port = api.bind(sv_host.empty() ? ws.config.server.host : sv_host, sv_port.value_or(ws.config.server.port));
      api.start();
      std::cout << nlohmann::json{{"listening", "http://127.0.0.1:" + std::to_string(port) + "/v1"}}.dump() << std::endl;
      signals.wait();
      api.stop();
    };
  });

  // stub-endpoint
  auto* stub = app.add_subcommand("stub-endpoint", "Offline chat-completions endpoint for smoke runs");
  int st_port = 0;
  double st_noise = 0.1;
  stub->add_option("--port", st_port, "Port, 0 for any")->check(CLI::Range(0, 65535));
  stub->add_option("--noise", st_noise, "Per-epoch flag flip probability")->check(CLI::Range(0.0, 1.0));
  stub->callback([&] {
    action = [&] {
      auto& ws = workspace();
      const SignalWaiter signals;
      StubModel model(ws.dict, ws.assets, st_noise);
      StubServer server([&](const nlohmann::json& body) { return model.respond(body); }, st_port);
      std::cout << nlohmann::json{{"endpoint", server.endpoint()}}.dump() << std::endl;
      signals.wait();
      server.stop();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  try {
    action();
    return 0;
  } catch (const CliError& e) {
    return report_error(e.code, e.what(), e.exit_code);
  } catch (const ConfigError& e) {
    return report_error("config", e.what(), 2, e.problems());
  } catch (const NotFound& e) {
    return report_error("not_found", e.what(), 3);
  } catch (const StatusError& e) {
    return report_error("status_conflict", e.what(), 4);
  } catch (const LockConflict& e) {
    return report_error("lock_conflict", e.what(), 4);
  } catch (const InsufficientPool& e) {
    return report_error("insufficient_pool", e.what(), 3);
  } catch (const EndpointUnavailable& e) {
    return report_error("endpoint_unavailable", e.what(), 5);
  } catch (const OutputError& e) {
    return report_error("schema_violation", e.what(), 6);
  } catch (const AssessmentError& e) {
    return report_error("assessment_mismatch", e.what(), 6);
  } catch (const std::exception& e) {
    return report_error("error", e.what(), 1);
  }
}
