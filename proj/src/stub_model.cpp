#include "medsafe/stub_model.hpp"

#include <atomic>
#include <regex>
#include <set>
#include <thread>

#include <httplib.h>

#include "medsafe/review.hpp"
#include "medsafe/scoring.hpp"
#include "medsafe/util.hpp"

namespace medsafe {

namespace {

const std::vector<std::pair<std::string, std::string>> kWatched = {
    {"methotrexate", "Check folic acid co-prescription and liver function monitoring"},
    {"warfarin", "Review interacting antibiotic and INR"},
    {"nsaid", "Add gastroprotection or stop the NSAID"},
    {"combined_hormonal_contraceptive", "Switch to a progestogen-only method"},
    {"rate_limiting_ccb", "Stop the rate-limiting calcium channel blocker"},
    {"antipsychotic", "Review the antipsychotic"},
};

std::uint64_t mix(std::uint64_t seed, std::string_view text) {
  const auto h = sha256_hex(std::to_string(seed) + "\x1f" + std::string(text));
  return std::stoull(h.substr(0, 15), nullptr, 16);
}

}  // namespace

std::string StubReviewer::complete(std::string_view profile_text, std::uint64_t seed) const {
  static const std::regex line_re(R"(^- (\d{4}-\d{2}-\d{2}) \| [^|]+\| (.*) \[(\d+)\].*prescription$)");
  ReviewOutput out;
  std::set<std::string> seen;
  for (const auto& line : split_lines(profile_text)) {
    std::smatch m;
    if (!std::regex_match(line, m, line_re)) continue;
    for (const auto& [set, action] : kWatched) {
      if (dict && dict->has_set(set) && dict->set(set).contains(m[3].str()) && seen.insert(set).second) {
        out.clinical_issues.push_back({m[2].str() + " prescribed", "Started " + m[1].str(), true});
        out.intervention += (out.intervention.empty() ? "" : "\n") + action;
      }
    }
  }
  Rng rng(mix(seed, profile_text));
  bool flag = !out.clinical_issues.empty();
  if (rng.bernoulli(noise)) flag = !flag;
  if (!flag) {
    out.clinical_issues.clear();
    out.intervention.clear();
  } else if (out.clinical_issues.empty()) {
    out.clinical_issues.push_back({"Polypharmacy review", "Multiple active prescriptions", true});
    out.intervention = "Stop the lowest-value medication";
  }
  out.intervention_required = flag;
  out.intervention_probability = flag ? 0.7 + 0.3 * rng.uniform() : 0.3 * rng.uniform();
  out.patient_review = flag ? "Prescribing safety concerns identified." : "No safety concerns identified.";
  return serialize_review_output(out);
}

StubModel::StubModel(const CodeDictionary& dict, PromptAssets assets, double noise)
    : reviewer_{&dict, noise}, assets_(std::move(assets)) {}

std::string StubModel::respond(const nlohmann::json& body) const {
  const auto& msgs = body.at("messages");
  if (!msgs.is_array() || msgs.size() != 2) throw std::invalid_argument("expected system and user messages");
  const auto system = msgs[0].at("content").get<std::string>();
  const auto user = msgs[1].at("content").get<std::string>();
  const std::uint64_t seed = body.contains("seed") ? body["seed"].get<std::uint64_t>() : 0;

  if (system == assets_.judge_prompt) {
    const auto in = nlohmann::json::parse(user);
    JudgeInput ji{in.at("system_issues"), in.at("truth_issues"), in.at("system_interventions"),
                  in.at("truth_interventions")};
    const auto res = MechanicalJudge().judge(ji);
    const auto pairs = [](const std::vector<MatchPair>& v) {
      auto a = nlohmann::json::array();
      for (const auto& p : v) a.push_back({{"system_index", p.system}, {"truth_index", p.truth}});
      return a;
    };
    return nlohmann::json{{"issue_matches", pairs(res.issue_matches)},
                          {"intervention_matches", pairs(res.intervention_matches)}}
        .dump();
  }
  if (system == assets_.synthesizer_prompt) {
    auto in = nlohmann::json::parse(user);
    AssessmentRecord a;
    a.clinician_flag = in.at("clinician_flag");
    for (const auto& v : in.at("issue_verdicts")) a.issue_verdicts.push_back(parse_issue_verdict(v.get<std::string>()));
    a.missed_issues = in.at("missed_issues").get<std::vector<std::string>>();
    a.intervention_verdict = parse_intervention_verdict(in.at("intervention_verdict").get<std::string>());
    for (const auto* k : {"issue_verdicts", "missed_issues", "intervention_verdict", "clinician_flag", "notes"}) in.erase(k);
    const auto g = MechanicalSynthesizer().synthesize(review_from_json(in), a);
    return nlohmann::json{{"no_issue", g.no_issue}, {"issues", g.issues}, {"interventions", g.interventions}}.dump();
  }
  return reviewer_.complete(user, seed);
}

struct StubServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> requests{0};
  std::atomic<bool> stopped{false};
};

StubServer::StubServer(Responder responder, int port) : impl_(std::make_unique<Impl>()) {
  auto& s = impl_->server;
  auto* impl = impl_.get();
  s.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content("{\"ok\":true}", "application/json"); });
  s.Post("/v1/chat/completions", [impl, responder](const httplib::Request& req, httplib::Response& res) {
    ++impl->requests;
    try {
      const auto body = nlohmann::json::parse(req.body);
      const auto text = responder(body);
      const nlohmann::json reply{
          {"object", "chat.completion"},
          {"model", body.value("model", std::string("stub"))},
          {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}, {"finish_reason", "stop"}}}}};
      res.set_content(reply.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  });
  impl_->port = port == 0 ? s.bind_to_any_port("127.0.0.1") : (s.bind_to_port("127.0.0.1", port) ? port : -1);
  if (impl_->port <= 0) throw std::runtime_error("stub server could not bind to 127.0.0.1:" + std::to_string(port));
  impl_->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  s.wait_until_ready();
}

StubServer::~StubServer() {
  stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int StubServer::port() const { return impl_->port; }

std::string StubServer::endpoint() const { return "http://127.0.0.1:" + std::to_string(impl_->port) + "/v1/chat/completions"; }

int StubServer::request_count() const { return impl_->requests.load(); }

void StubServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void StubServer::stop() {
  if (!impl_->stopped.exchange(true)) impl_->server.stop();
}

}  // namespace medsafe
