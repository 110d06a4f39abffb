#include "medsafe/runner.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <mutex>
#include <thread>

#include "medsafe/prompt.hpp"
#include "medsafe/util.hpp"

namespace medsafe {

std::string EpochRecord::raw_text() const {
  for (auto it = attempts.rbegin(); it != attempts.rend(); ++it) {
    if (it->error_kind != "transport") return it->raw_text;
  }
  return {};
}

int RunMetadata::total_retries() const {
  int n = 0;
  for (const auto& e : epochs) n += e.retries();
  return n;
}

int RunMetadata::fence_leniency_count() const {
  int n = 0;
  for (const auto& e : epochs) n += e.fence_stripped ? 1 : 0;
  return n;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t epoch_seed(const std::string& seed_tag, const std::string& patient_id, int epoch) {
  const auto h = sha256_hex(seed_tag + "\x1f" + patient_id + "\x1f" + std::to_string(epoch));
  // 53 bits keeps the value exact for JSON consumers that use doubles.
  return std::stoull(h.substr(0, 14), nullptr, 16) & ((1ULL << 53) - 1);
}

ReviewRun run_review(const PatientProfile& profile, Date as_of, const ModelConfig& cfg, ChatClient& client,
                     const std::string& system_prompt, int epochs, const std::string& seed_tag,
                     const PersistFn& persist) {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  ReviewRun run;
  auto& md = run.metadata;
  md.patient_id = profile.patient_id;
  md.model_name = cfg.model_name;
  md.seed_tag = seed_tag;
  md.prompt_sha256 = sha256_hex(system_prompt);
  md.sampling = sampling_overrides(cfg);
  md.started_at = utc_timestamp();

  ChatRequest request;
  request.messages = build_prompt(system_prompt, render_profile(profile, as_of));

  bool transport_exhausted = false;
  bool output_exhausted = false;
  for (int e = 0; e < epochs; ++e) {
    EpochRecord rec;
    rec.epoch = e;
    rec.seed = epoch_seed(seed_tag, profile.patient_id, e);
    rec.started_at = utc_timestamp();
    request.seed = rec.seed;
    for (int attempt = 0; attempt <= cfg.max_retries && !rec.output; ++attempt) {
      AttemptRecord a;
      try {
        a.raw_text = client.complete(request);
        auto parsed = parse_review(a.raw_text);
        rec.output = std::move(parsed.output);
        rec.fence_stripped = parsed.fence_stripped;
      } catch (const TransportError& ex) {
        a.error = ex.what();
        a.error_kind = "transport";
      } catch (const MalformedOutput& ex) {
        a.error = ex.what();
        a.error_kind = "malformed";
      } catch (const RangeViolation& ex) {
        a.error = ex.what();
        a.error_kind = "range";
      } catch (const SchemaViolation& ex) {
        a.error = ex.what();
        a.error_kind = "schema";
      }
      rec.attempts.push_back(std::move(a));
    }
    rec.finished_at = utc_timestamp();
    if (rec.output) {
      run.outputs.push_back(*rec.output);
    } else if (rec.attempts.back().error_kind == "transport") {
      transport_exhausted = true;
    } else {
      output_exhausted = true;
    }
    md.epochs.push_back(std::move(rec));
    if (transport_exhausted) break;
  }
  md.finished_at = utc_timestamp();
  if (persist) persist(run);
  if (transport_exhausted) {
    throw EndpointUnavailable("patient " + profile.patient_id + ": endpoint failed after " +
                              std::to_string(cfg.max_retries + 1) + " attempts: " +
                              md.epochs.back().attempts.back().error);
  }
  if (output_exhausted) {
    const auto failed = static_cast<int>(md.epochs.size() - run.outputs.size());
    throw IncompleteRun("patient " + profile.patient_id + ": " + std::to_string(failed) + " of " +
                            std::to_string(epochs) + " epochs produced no valid output" +
                            (run.outputs.empty() ? " (all epochs malformed)" : ""),
                        run);
  }
  return run;
}

BatchResult run_reviews(std::span<const ReviewJob> jobs, const ModelConfig& cfg, ChatClient& client,
                        const std::string& system_prompt, int epochs, const std::string& seed_tag, int parallelism,
                        const PersistFn& persist) {
  if (parallelism < 1) throw std::invalid_argument("parallelism must be at least 1");
  std::vector<std::optional<ReviewRun>> slots(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::mutex writer;
  const PersistFn serialised = [&](const ReviewRun& r) {
    if (!persist) return;
    std::lock_guard lock(writer);
    persist(r);
  };
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        slots[i] = run_review(*jobs[i].profile, jobs[i].as_of, cfg, client, system_prompt, epochs, seed_tag, serialised);
      } catch (const std::exception& ex) {
        errors[i] = ex.what();
      }
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(parallelism), jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  BatchResult out;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (slots[i]) {
      out.runs.push_back(std::move(*slots[i]));
    } else {
      out.failures.emplace_back(jobs[i].profile->patient_id, errors[i]);
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const ReviewRun& run) {
  const auto& md = run.metadata;
  auto epochs = nlohmann::json::array();
  for (const auto& e : md.epochs) {
    auto attempts = nlohmann::json::array();
    for (const auto& a : e.attempts) {
      attempts.push_back({{"raw_text", a.raw_text}, {"error", a.error}, {"error_kind", a.error_kind}});
    }
    nlohmann::json ej{{"epoch", e.epoch},           {"seed", e.seed},
                      {"started_at", e.started_at}, {"finished_at", e.finished_at},
                      {"attempts", attempts},       {"fence_stripped", e.fence_stripped},
                      {"retries", e.retries()}};
    ej["output"] = e.output ? review_to_json(*e.output) : nlohmann::json();
    epochs.push_back(std::move(ej));
  }
  j = nlohmann::json{{"patient_id", md.patient_id},
                     {"model_name", md.model_name},
                     {"seed_tag", md.seed_tag},
                     {"prompt_sha256", md.prompt_sha256},
                     {"sampling", md.sampling},
                     {"started_at", md.started_at},
                     {"finished_at", md.finished_at},
                     {"total_retries", md.total_retries()},
                     {"fence_leniency_count", md.fence_leniency_count()},
                     {"epochs", epochs}};
}

ReviewRun review_run_from_json(const nlohmann::json& j) {
  ReviewRun run;
  auto& md = run.metadata;
  md.patient_id = j.at("patient_id").get<std::string>();
  md.model_name = j.at("model_name").get<std::string>();
  md.seed_tag = j.at("seed_tag").get<std::string>();
  md.prompt_sha256 = j.at("prompt_sha256").get<std::string>();
  md.sampling = j.at("sampling");
  md.started_at = j.at("started_at").get<std::string>();
  md.finished_at = j.at("finished_at").get<std::string>();
  for (const auto& ej : j.at("epochs")) {
    EpochRecord e;
    e.epoch = ej.at("epoch").get<int>();
    e.seed = ej.at("seed").get<std::uint64_t>();
    e.started_at = ej.at("started_at").get<std::string>();
    e.finished_at = ej.at("finished_at").get<std::string>();
    e.fence_stripped = ej.at("fence_stripped").get<bool>();
    for (const auto& a : ej.at("attempts")) {
      e.attempts.push_back({a.at("raw_text").get<std::string>(), a.at("error").get<std::string>(),
                            a.at("error_kind").get<std::string>()});
    }
    if (!ej.at("output").is_null()) {
      e.output = review_from_json(ej.at("output"));
      run.outputs.push_back(*e.output);
    }
    md.epochs.push_back(std::move(e));
  }
  return run;
}

}  // namespace medsafe
