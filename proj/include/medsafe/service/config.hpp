#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/chat.hpp"
#include "medsafe/cohort.hpp"
#include "medsafe/sampling.hpp"

namespace medsafe {

struct ReviewSettings {
  int epochs = 10;
  int parallelism = 4;
  std::string seed_tag = "run";
};

struct ServerSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
};

/// Pipeline configuration; see docs/config.md. Relative paths resolve
/// against the directory of the config file.
struct ServiceConfig {
  std::filesystem::path store_dir;
  std::filesystem::path asset_dir;
  std::filesystem::path rule_dir;
  std::filesystem::path codes_path;
  std::optional<CohortSpec> cohort;
  std::uint64_t cohort_seed = 1;
  SampleCounts sample_counts;
  std::array<double, 4> matcher_weights{1.0, 1.0, 1.0, 1.0};
  std::uint64_t sampling_seed = 1;
  std::vector<ModelConfig> models;
  ReviewSettings review;
  /// "mechanical" or the name of a configured model.
  std::string judge = "mechanical";
  std::string synthesizer = "mechanical";
  ServerSettings server;

  /// Throws ConfigError when no model has this name.
  [[nodiscard]] const ModelConfig& model(const std::string& name) const;
};

/// Throws ConfigError listing every problem found.
ServiceConfig parse_service_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ServiceConfig load_service_config(const std::filesystem::path& path);

/// Config with no file: build-time asset and rule directories, store at `store_dir`.
ServiceConfig default_service_config(const std::filesystem::path& store_dir);

bool is_loopback_host(const std::string& host);

}  // namespace medsafe
