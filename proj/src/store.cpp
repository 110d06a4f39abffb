#include "medsafe/store.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <system_error>

#include "medsafe/metrics.hpp"
#include "medsafe/util.hpp"

namespace medsafe {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 4> kStatusNames{"pending", "reviewed", "assessed", "excluded_insufficient"};

void require_safe_name(const std::string& name, std::string_view what) {
  static const std::regex ok("[A-Za-z0-9_.-]+");
  if (name.empty() || name == "." || name == ".." || !std::regex_match(name, ok)) {
    throw StoreError(std::string(what) + " '" + name + "' is not a valid file name");
  }
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::string version_name(int v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", v);
  return std::string(buf) + ".json";
}

std::string category_of(const EvaluationSet& set, const std::string& pid) {
  const auto in = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), pid) != v.end(); };
  if (in(set.indicator_positive)) return "indicator_positive";
  if (in(set.matched_negative)) return "matched_negative";
  if (in(set.random_negative_system_positive)) return "random_negative_system_positive";
  if (in(set.random_negative_system_negative)) return "random_negative_system_negative";
  return "unsampled";
}

fs::path existing_session_dir(const Store& store, const std::string& session_id) {
  auto dir = store.session_dir(session_id);
  if (!fs::exists(dir / "session.json")) throw NotFound("unknown session '" + session_id + "'");
  return dir;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

std::string_view to_string(PatientStatus s) { return kStatusNames[static_cast<std::size_t>(s)]; }

PatientStatus parse_patient_status(std::string_view s) {
  for (std::size_t i = 0; i < kStatusNames.size(); ++i) {
    if (kStatusNames[i] == s) return static_cast<PatientStatus>(i);
  }
  throw SchemaViolation("unknown patient status '" + std::string(s) + "'", std::string(s));
}

bool transition_allowed(PatientStatus from, PatientStatus to) {
  using S = PatientStatus;
  switch (to) {
    case S::reviewed:
      return from == S::pending;
    case S::assessed:
      return from == S::reviewed;
    case S::excluded_insufficient:
      return from == S::pending || from == S::reviewed;
    case S::pending:
      return false;
  }
  return false;
}

int SessionRecord::count(PatientStatus s) const {
  return static_cast<int>(std::count_if(status.begin(), status.end(), [&](const auto& kv) { return kv.second == s; }));
}

void to_json(nlohmann::json& j, const SessionRecord& s) {
  auto status = nlohmann::json::object();
  for (const auto& [pid, st] : s.status) status[pid] = to_string(st);
  j = {{"session_id", s.session_id},   {"created_at", s.created_at},
       {"cohort_ref", s.cohort_ref},   {"as_of", s.as_of.iso()},
       {"evaluation_set", s.evaluation_set}, {"model_configs", s.model_configs},
       {"patients", s.patients},       {"status", status}};
}

SessionRecord session_from_json(const nlohmann::json& j) {
  SessionRecord s;
  s.session_id = j.at("session_id").get<std::string>();
  s.created_at = j.at("created_at").get<std::string>();
  s.cohort_ref = j.at("cohort_ref").get<std::string>();
  s.as_of = Date::parse(j.at("as_of").get<std::string>());
  s.evaluation_set = evaluation_set_from_json(j.at("evaluation_set"));
  s.model_configs = j.at("model_configs");
  s.patients = j.at("patients").get<std::vector<std::string>>();
  for (const auto& [pid, st] : j.at("status").items()) s.status[pid] = parse_patient_status(st.get<std::string>());
  return s;
}

SessionLock::SessionLock(fs::path path) : path_(std::move(path)) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd >= 0) {
      const auto pid = std::to_string(::getpid()) + "\n";
      const auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      if (n != static_cast<ssize_t>(pid.size())) {
        ::unlink(path_.c_str());
        throw StoreError("cannot write lock file " + path_.string());
      }
      return;
    }
    if (errno != EEXIST) throw std::system_error(errno, std::generic_category(), "lock " + path_.string());
    long holder = 0;
    std::ifstream(path_) >> holder;
    const bool dead = holder > 0 && ::kill(static_cast<pid_t>(holder), 0) != 0 && errno == ESRCH;
    if (!dead || attempt > 0) break;
    ::unlink(path_.c_str());
  }
  throw LockConflict("session is locked by another writer: " + path_.string());
}

SessionLock::~SessionLock() { ::unlink(path_.c_str()); }

Store::Store(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path Store::session_dir(const std::string& session_id) const {
  require_safe_name(session_id, "session id");
  return root_ / "sessions" / session_id;
}

void Store::update_index(const std::string& kind, const std::string& name) {
  const auto path = root_ / "index.json";
  nlohmann::json index = {{"cohorts", nlohmann::json::array()}, {"sessions", nlohmann::json::array()}};
  if (fs::exists(path)) index = read_json_file(path.string());
  std::set<std::string> names = index.at(kind).get<std::set<std::string>>();
  names.insert(name);
  index[kind] = names;
  write_file_atomic(path.string(), dump(index));
}

void Store::save_cohort(const std::string& ref, const GeneratedCohort& cohort) {
  require_safe_name(ref, "cohort ref");
  const nlohmann::json j = {{"manifest", cohort.manifest}, {"profiles", cohort.profiles}};
  write_file_atomic((root_ / "cohorts" / (ref + ".json")).string(), j.dump() + "\n");
  update_index("cohorts", ref);
}

StoredCohort Store::load_cohort(const std::string& ref) const {
  require_safe_name(ref, "cohort ref");
  const auto path = root_ / "cohorts" / (ref + ".json");
  if (!fs::exists(path)) throw NotFound("unknown cohort '" + ref + "'");
  const auto j = read_json_file(path.string());
  return {j.at("profiles").get<std::vector<PatientProfile>>(), manifest_from_json(j.at("manifest"))};
}

SessionRecord Store::create_session(const std::string& session_id, const std::string& cohort_ref, Date as_of,
                                    const EvaluationSet& set, const nlohmann::json& model_configs) {
  const auto dir = session_dir(session_id);
  fs::create_directories(dir.parent_path());
  if (!fs::create_directory(dir)) throw StoreError("session '" + session_id + "' already exists");
  SessionRecord s;
  s.session_id = session_id;
  s.created_at = utc_timestamp();
  s.cohort_ref = cohort_ref;
  s.as_of = as_of;
  s.evaluation_set = set;
  s.model_configs = model_configs;
  for (const auto& pid : set.all_ids()) {
    require_safe_name(pid, "patient id");
    if (s.status.emplace(pid, PatientStatus::pending).second) s.patients.push_back(pid);
  }
  {
    SessionLock lock(dir / ".lock");
    write_file_atomic((dir / "session.json").string(), dump(s));
  }
  update_index("sessions", session_id);
  return s;
}

SessionRecord Store::load_session(const std::string& session_id) const {
  const auto path = session_dir(session_id) / "session.json";
  if (!fs::exists(path)) throw NotFound("unknown session '" + session_id + "'");
  return session_from_json(read_json_file(path.string()));
}

std::vector<std::string> Store::list_sessions() const {
  const auto path = root_ / "index.json";
  if (!fs::exists(path)) return {};
  return read_json_file(path.string()).at("sessions").get<std::vector<std::string>>();
}

std::optional<ReviewRun> Store::load_review(const std::string& session_id, const std::string& patient_id) const {
  require_safe_name(patient_id, "patient id");
  const auto path = session_dir(session_id) / "reviews" / (patient_id + ".json");
  if (!fs::exists(path)) return std::nullopt;
  return review_run_from_json(read_json_file(path.string()));
}

std::vector<AssessmentRecord> Store::assessment_versions(const std::string& session_id,
                                                         const std::string& patient_id) const {
  require_safe_name(patient_id, "patient id");
  const auto dir = session_dir(session_id) / "assessments" / patient_id;
  std::vector<std::string> names;
  if (fs::exists(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (e.is_regular_file() && e.path().extension() == ".json" && name.find(".tmp.") == std::string::npos) {
        names.push_back(name);
      }
    }
  }
  std::sort(names.begin(), names.end());
  std::vector<AssessmentRecord> out;
  for (const auto& n : names) out.push_back(assessment_from_json(read_json_file((dir / n).string())));
  return out;
}

std::optional<AssessmentRecord> Store::latest_assessment(const std::string& session_id,
                                                         const std::string& patient_id) const {
  auto v = assessment_versions(session_id, patient_id);
  if (v.empty()) return std::nullopt;
  return v.back();
}

std::optional<GroundTruth> Store::load_ground_truth(const std::string& session_id, const std::string& patient_id) const {
  require_safe_name(patient_id, "patient id");
  const auto path = session_dir(session_id) / "ground_truth" / (patient_id + ".json");
  if (!fs::exists(path)) return std::nullopt;
  return ground_truth_from_json(read_json_file(path.string()));
}

std::unique_ptr<SessionWriter> Store::open_writer(const std::string& session_id) {
  return std::make_unique<SessionWriter>(*this, session_id);
}

SessionWriter::SessionWriter(Store& store, const std::string& session_id)
    : store_(store),
      session_id_(session_id),
      lock_(existing_session_dir(store, session_id) / ".lock"),
      record_(store.load_session(session_id)) {}

SessionRecord SessionWriter::session() const {
  std::lock_guard g(mutex_);
  return record_;
}

void SessionWriter::require_patient(const std::string& patient_id) const {
  if (!record_.status.contains(patient_id)) {
    throw NotFound("patient '" + patient_id + "' is not in session '" + session_id_ + "'");
  }
}

void SessionWriter::persist_session() {
  write_file_atomic((store_.session_dir(session_id_) / "session.json").string(), dump(record_));
}

SessionRecord SessionWriter::save_review(const ReviewRun& run) {
  std::lock_guard g(mutex_);
  const auto& pid = run.metadata.patient_id;
  require_patient(pid);
  const auto st = record_.status.at(pid);
  if (st != PatientStatus::pending && st != PatientStatus::reviewed) {
    throw StatusError("patient '" + pid + "' is " + std::string(to_string(st)) + "; its review is frozen");
  }
  write_file_atomic((store_.session_dir(session_id_) / "reviews" / (pid + ".json")).string(),
                    dump(nlohmann::json(run)));
  const bool complete = !run.outputs.empty() && run.outputs.size() == run.metadata.epochs.size();
  if (st == PatientStatus::pending && complete) {
    record_.status[pid] = PatientStatus::reviewed;
    persist_session();
  }
  return record_;
}

SessionRecord SessionWriter::mark_sufficiency(const std::string& patient_id, bool sufficient) {
  std::lock_guard g(mutex_);
  require_patient(patient_id);
  const auto st = record_.status.at(patient_id);
  if (sufficient) {
    if (st != PatientStatus::reviewed) {
      throw StatusError("patient '" + patient_id + "' is " + std::string(to_string(st)) + ", not reviewed");
    }
    return record_;
  }
  if (!transition_allowed(st, PatientStatus::excluded_insufficient)) {
    throw StatusError("patient '" + patient_id + "' is " + std::string(to_string(st)) + "; cannot exclude");
  }
  record_.status[patient_id] = PatientStatus::excluded_insufficient;
  persist_session();
  return record_;
}

SessionRecord SessionWriter::append_assessment(const std::string& patient_id, const AssessmentRecord& record) {
  std::lock_guard g(mutex_);
  require_patient(patient_id);
  if (record.patient_id != patient_id) {
    throw AssessmentError("assessment is for '" + record.patient_id + "', not '" + patient_id + "'");
  }
  const auto st = record_.status.at(patient_id);
  if (st != PatientStatus::reviewed && st != PatientStatus::assessed) {
    throw StatusError("patient '" + patient_id + "' is " + std::string(to_string(st)) + ", not reviewed");
  }
  if (st == PatientStatus::assessed && !record.sufficient_information) {
    throw StatusError("patient '" + patient_id + "' is already assessed; cannot exclude");
  }
  if (record.sufficient_information) {
    const auto run = store_.load_review(session_id_, patient_id);
    if (!run || run->outputs.empty()) throw StatusError("patient '" + patient_id + "' has no review");
    const auto problems = assessment_problems(run->outputs.front(), record);
    if (!problems.empty()) {
      std::string msg = "assessment does not fit the review:";
      for (const auto& p : problems) msg += "\n  " + p;
      throw AssessmentError(msg);
    }
  }
  const auto dir = store_.session_dir(session_id_) / "assessments" / patient_id;
  const int version = static_cast<int>(store_.assessment_versions(session_id_, patient_id).size()) + 1;
  const auto path = dir / version_name(version);
  if (fs::exists(path)) throw StoreError("assessment version already exists: " + path.string());
  write_file_atomic(path.string(), dump(nlohmann::json(record)));
  const auto next = record.sufficient_information ? PatientStatus::assessed : PatientStatus::excluded_insufficient;
  if (st != next) {
    record_.status[patient_id] = next;
    persist_session();
  }
  return record_;
}

void SessionWriter::save_ground_truth(const GroundTruth& truth) {
  std::lock_guard g(mutex_);
  require_patient(truth.patient_id);
  write_file_atomic((store_.session_dir(session_id_) / "ground_truth" / (truth.patient_id + ".json")).string(),
                    dump(nlohmann::json(truth)));
}

nlohmann::json outcome_table(const std::vector<LevelOutcome>& outcomes) {
  std::map<BinaryCell, int> cells;
  std::map<Level1, int> l1;
  std::map<Level2, int> l2;
  std::map<Level3, int> l3;
  for (const auto& o : outcomes) {
    ++cells[o.binary_cell];
    ++l1[o.level1];
    if (o.level2 != Level2::not_reached) ++l2[o.level2];
    if (o.level3 != Level3::not_reached) ++l3[o.level3];
  }
  const auto n = static_cast<int>(outcomes.size());
  const auto rate = [](int a, int b) { return b > 0 ? nlohmann::json(static_cast<double>(a) / b) : nlohmann::json(); };
  nlohmann::json j;
  for (auto c : {BinaryCell::TP, BinaryCell::FP, BinaryCell::TN, BinaryCell::FN}) j["binary"][std::string(to_string(c))] = cells[c];
  for (auto v : {Level1::identified, Level1::not_identified, Level1::not_applicable}) j["level1"][std::string(to_string(v))] = l1[v];
  for (auto v : {Level2::all_correct, Level2::some_correct, Level2::none_correct}) j["level2"][std::string(to_string(v))] = l2[v];
  for (auto v : {Level3::correct, Level3::partial, Level3::incorrect}) j["level3"][std::string(to_string(v))] = l3[v];
  const int l2_all = l2[Level2::all_correct];
  const int tp = cells[BinaryCell::TP];
  j["level3_correct_rate"] = {{"of_level2_all_correct", rate(l3[Level3::correct], l2_all)},
                              {"of_true_positives", rate(l3[Level3::correct], tp)}};
  const int fully = l3[Level3::correct] + cells[BinaryCell::TN];
  j["fully_correct"] = {{"count", fully}, {"n", n}, {"rate", rate(fully, n)}};
  return j;
}

SessionRecord SessionWriter::record_model_config(const nlohmann::json& cfg) {
  std::lock_guard g(mutex_);
  auto& configs = record_.model_configs;
  if (!configs.is_array()) configs = nlohmann::json::array();
  if (std::find(configs.begin(), configs.end(), cfg) == configs.end()) {
    configs.push_back(cfg);
    persist_session();
  }
  return record_;
}

ReportBundle SessionWriter::export_report() {
  MechanicalJudge judge;
  return export_report(judge);
}

ReportBundle SessionWriter::export_report(Judge& judge) {
  std::lock_guard g(mutex_);
  if (record_.count(PatientStatus::assessed) == 0) {
    throw StoreError("session '" + session_id_ + "' has no assessed patients");
  }
  ReportBundle bundle;
  bundle.dir = store_.session_dir(session_id_) / "reports";
  std::ostringstream csv;
  csv << "patient_id,category,stratum,status,assessment_version,system_flag,clinician_flag,binary_cell,level1,level2,"
         "level3,clinician_score,automated_score\n";
  std::vector<LevelOutcome> outcomes;
  BinaryCells cells;
  double score_sum = 0;
  for (const auto& pid : record_.patients) {
    const auto st = record_.status.at(pid);
    const auto category = category_of(record_.evaluation_set, pid);
    const auto stratum_it = record_.evaluation_set.stratum_of.find(pid);
    const std::string stratum = stratum_it == record_.evaluation_set.stratum_of.end() ? "" : stratum_it->second;
    csv << csv_field(pid) << ',' << category << ',' << csv_field(stratum) << ',' << to_string(st);
    nlohmann::json pj = {{"patient_id", pid}, {"category", category}, {"stratum", stratum}, {"status", to_string(st)}};
    if (st != PatientStatus::assessed) {
      csv << ",,,,,,,,,\n";
      bundle.files["patients/" + pid + ".json"] = dump(pj);
      continue;
    }
    const auto review = store_.load_review(session_id_, pid)->outputs.front();
    const auto versions = store_.assessment_versions(session_id_, pid);
    const auto& a = versions.back();
    const auto o = classify_levels(review, a);
    const auto detail = clinician_score_detail(review, a);
    outcomes.push_back(o);
    score_sum += detail.score;
    switch (o.binary_cell) {
      case BinaryCell::TP: ++cells.tp; break;
      case BinaryCell::FP: ++cells.fp; break;
      case BinaryCell::TN: ++cells.tn; break;
      case BinaryCell::FN: ++cells.fn; break;
    }
    std::optional<AutomatedScore> automated;
    if (const auto truth = store_.load_ground_truth(session_id_, pid)) automated = automated_score(review, *truth, judge);
    csv << ',' << versions.size() << ',' << (review.intervention_required ? "true" : "false") << ','
        << (a.clinician_flag ? "true" : "false") << ',' << to_string(o.binary_cell) << ',' << to_string(o.level1)
        << ',' << to_string(o.level2) << ',' << to_string(o.level3) << ',' << format_number(detail.score) << ','
        << (automated ? format_number(automated->score) : "") << '\n';
    pj["review"] = review_to_json(review);
    pj["assessment"] = a;
    pj["assessment_version"] = versions.size();
    pj["outcome"] = {{"binary_cell", to_string(o.binary_cell)},
                     {"level1", to_string(o.level1)},
                     {"level2", to_string(o.level2)},
                     {"level3", to_string(o.level3)}};
    pj["clinician_score"] = {{"precision", opt(detail.precision)},
                             {"recall", opt(detail.recall)},
                             {"f1", opt(detail.f1)},
                             {"s_intervention", detail.s_intervention},
                             {"score", detail.score}};
    if (automated) {
      pj["automated_score"] = {{"score", automated->score},
                               {"case", to_string(automated->kind)},
                               {"report", automated->report}};
    }
    bundle.files["patients/" + pid + ".json"] = dump(pj);
  }
  bundle.files["cohort.csv"] = csv.str();
  const auto n = static_cast<int>(outcomes.size());
  nlohmann::json metrics = {{"session_id", session_id_},
                            {"patients", record_.patients.size()},
                            {"assessed", n},
                            {"excluded_insufficient", record_.count(PatientStatus::excluded_insufficient)},
                            {"pending", record_.count(PatientStatus::pending)},
                            {"reviewed", record_.count(PatientStatus::reviewed)},
                            {"binary", binary_metrics(cells)},
                            {"outcome_table", outcome_table(outcomes)},
                            {"mean_clinician_score", score_sum / n}};
  bundle.files["metrics.json"] = dump(metrics);
  for (const auto& [rel, content] : bundle.files) {
    const auto path = bundle.dir / rel;
    if (fs::exists(path) && read_file(path.string()) == content) continue;
    write_file_atomic(path.string(), content);
  }
  return bundle;
}

}  // namespace medsafe
