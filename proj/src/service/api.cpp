#include "medsafe/service/api.hpp"

#include <functional>
#include <mutex>
#include <optional>
#include <thread>

#include <httplib.h>

#include "medsafe/service/config.hpp"

namespace medsafe {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

Handler guarded(Handler h) {
  return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
    try {
      h(req, res);
    } catch (const NotFound& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const StatusError& e) {
      send_error(res, 409, "status_conflict", e.what());
    } catch (const LockConflict& e) {
      send_error(res, 409, "lock_conflict", e.what());
    } catch (const OutputError& e) {
      send_error(res, 422, "schema_violation", e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 422, "schema_violation", e.what());
    } catch (const AssessmentError& e) {
      send_error(res, 422, "assessment_mismatch", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedOutput(std::string("request body is not JSON: ") + e.what(), req.body);
  }
}

}  // namespace

struct ApiServer::Impl {
  Store& store;
  std::string session_id;
  std::unique_ptr<SessionWriter> writer;
  httplib::Server server;
  std::thread thread;
  int port = -1;
  std::mutex cohort_mutex;
  std::optional<StoredCohort> cohort;

  Impl(Store& s, const std::string& id) : store(s), session_id(id), writer(s.open_writer(id)) { routes(); }

  void require_session(const httplib::Request& req) const {
    const auto& id = req.path_params.at("id");
    if (id != session_id) throw NotFound("unknown session '" + id + "'");
  }

  std::string require_patient(const httplib::Request& req, const SessionRecord& s) const {
    const auto& pid = req.path_params.at("pid");
    if (!s.status.contains(pid)) throw NotFound("patient '" + pid + "' is not in session '" + session_id + "'");
    return pid;
  }

  const PatientProfile& profile(const std::string& pid, const std::string& cohort_ref) {
    std::lock_guard g(cohort_mutex);
    if (!cohort) cohort = store.load_cohort(cohort_ref);
    for (const auto& p : cohort->profiles) {
      if (p.patient_id == pid) return p;
    }
    throw NotFound("patient '" + pid + "' has no profile in cohort '" + cohort_ref + "'");
  }

  nlohmann::json progress(const SessionRecord& s) const {
    const int total = static_cast<int>(s.patients.size());
    const int excluded = s.count(PatientStatus::excluded_insufficient);
    return {{"session_id", s.session_id},
            {"total", total},
            {"pending", s.count(PatientStatus::pending)},
            {"reviewed", s.count(PatientStatus::reviewed)},
            {"assessed", s.count(PatientStatus::assessed)},
            {"excluded_insufficient", excluded},
            {"evaluable", total - excluded},
            {"remaining", s.count(PatientStatus::reviewed)}};
  }

  void routes() {
    server.set_payload_max_length(8 << 20);
    server.Get("/v1/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}, {"session_id", session_id}});
    }));

    server.Get("/v1/sessions/:id/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
      require_session(req);
      const auto s = writer->session();
      for (std::size_t i = 0; i < s.patients.size(); ++i) {
        if (s.status.at(s.patients[i]) != PatientStatus::reviewed) continue;
        send_json(res, 200, {{"patient_id", s.patients[i]},
                             {"position", i + 1},
                             {"remaining", s.count(PatientStatus::reviewed)}});
        return;
      }
      res.status = 204;
    }));

    server.Get("/v1/sessions/:id/progress", guarded([this](const httplib::Request& req, httplib::Response& res) {
      require_session(req);
      send_json(res, 200, progress(writer->session()));
    }));

    server.Get("/v1/patients/:pid/profile", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto s = writer->session();
      const auto pid = require_patient(req, s);
      const auto& p = profile(pid, s.cohort_ref);
      send_json(res, 200, {{"patient_id", pid},
                           {"as_of", s.as_of.iso()},
                           {"markdown", render_profile(p, s.as_of)},
                           {"profile", p}});
    }));

    server.Get("/v1/patients/:pid/review", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto s = writer->session();
      const auto pid = require_patient(req, s);
      const auto run = store.load_review(session_id, pid);
      if (!run || run->outputs.empty()) throw NotFound("patient '" + pid + "' has no review");
      send_json(res, 200, review_to_json(run->outputs.front()));
    }));

    server.Get("/v1/patients/:pid/assessments", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto s = writer->session();
      const auto pid = require_patient(req, s);
      send_json(res, 200, {{"patient_id", pid}, {"versions", store.assessment_versions(session_id, pid)}});
    }));

    server.Post("/v1/patients/:pid/sufficiency", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto pid = require_patient(req, writer->session());
      const auto body = parse_body(req);
      if (!body.is_object() || body.size() != 1 || !body.contains("sufficient") || !body["sufficient"].is_boolean()) {
        throw SchemaViolation("body must be {\"sufficient\": boolean}", req.body);
      }
      const auto s = writer->mark_sufficiency(pid, body["sufficient"].get<bool>());
      send_json(res, 200, {{"patient_id", pid}, {"status", to_string(s.status.at(pid))}});
    }));

    server.Post("/v1/patients/:pid/assessment", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto pid = require_patient(req, writer->session());
      const auto record = assessment_from_json(parse_body(req));
      const auto s = writer->append_assessment(pid, record);
      send_json(res, 200, {{"patient_id", pid},
                           {"status", to_string(s.status.at(pid))},
                           {"version", store.assessment_versions(session_id, pid).size()}});
    }));
  }
};

ApiServer::ApiServer(Store& store, const std::string& session_id)
    : impl_(std::make_unique<Impl>(store, session_id)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (!is_loopback_host(host)) throw std::invalid_argument("the API binds loopback hosts only, not '" + host + "'");
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return impl_->port;
}

void ApiServer::listen() { impl_->server.listen_after_bind(); }

void ApiServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int ApiServer::port() const { return impl_->port; }

}  // namespace medsafe
