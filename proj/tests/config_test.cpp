#include <fstream>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "medsafe/service/config.hpp"

namespace medsafe {
namespace {

using ::testing::AllOf;
using ::testing::Contains;
using ::testing::HasSubstr;
using ::testing::SizeIs;

const std::filesystem::path kConfigs = std::filesystem::path(MEDSAFE_SOURCE_DIR) / "configs";

std::vector<std::string> problems_of(const nlohmann::json& j) {
  try {
    parse_service_config(j, "/base");
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

TEST(ServiceConfig, ShippedExampleParses) {
  const auto c = load_service_config(kConfigs / "example.json");
  EXPECT_EQ(c.store_dir, kConfigs / "../work/store");
  ASSERT_TRUE(c.cohort.has_value());
  EXPECT_EQ(c.cohort->size, 1000);
  EXPECT_EQ(c.cohort->plants.size(), 8u);
  EXPECT_EQ(c.cohort_seed, 1u);
  EXPECT_EQ(c.sample_counts.indicator_positive, 100);
  EXPECT_EQ(c.sample_counts.random_negative_system_negative, 50);
  ASSERT_THAT(c.models, SizeIs(2));
  EXPECT_EQ(c.model("gpt-oss-20b").endpoint, "http://127.0.0.1:8001/v1/chat/completions");
  EXPECT_EQ(c.review.epochs, 10);
  EXPECT_EQ(c.judge, "gpt-oss-120b");
  EXPECT_THROW((void)c.model("missing"), ConfigError);
}

TEST(ServiceConfig, ShippedSmokeParses) {
  const auto c = load_service_config(kConfigs / "smoke.json");
  EXPECT_EQ(c.cohort->size, 50);
  EXPECT_EQ(c.cohort_seed, 11u);
  EXPECT_EQ(c.review.epochs, 3);
  EXPECT_EQ(c.models.at(0).max_retries, 2);
  EXPECT_EQ(c.models.at(0).timeout, std::chrono::milliseconds(10000));
}

TEST(ServiceConfig, MinimalUsesDefaults) {
  const auto c = parse_service_config({{"store", "s"}}, "/base");
  EXPECT_EQ(c.store_dir, std::filesystem::path("/base/s"));
  EXPECT_EQ(c.rule_dir, std::filesystem::path(MEDSAFE_RULE_DIR));
  EXPECT_EQ(c.codes_path, c.asset_dir / "codes.json");
  EXPECT_FALSE(c.cohort.has_value());
  EXPECT_EQ(c.judge, "mechanical");
  EXPECT_EQ(c.server.host, "127.0.0.1");
}

TEST(ServiceConfig, PathsResolveAgainstBaseUnlessAbsolute) {
  const auto c = parse_service_config({{"store", "/abs/store"}, {"assets", "a"}, {"rules", "../r"}}, "/base/cfg");
  EXPECT_EQ(c.store_dir, std::filesystem::path("/abs/store"));
  EXPECT_EQ(c.asset_dir, std::filesystem::path("/base/cfg/a"));
  EXPECT_EQ(c.codes_path, std::filesystem::path("/base/cfg/a/codes.json"));
  EXPECT_EQ(c.rule_dir, std::filesystem::path("/base/cfg/../r"));
}

TEST(ServiceConfig, ReportsEveryProblemAtOnce) {
  const nlohmann::json j = {
      {"stor", "typo"},
      {"sampling", {{"indicator_positive", -1}, {"weights", {1, 2}}}},
      {"models",
       {{{"model_name", "m"}, {"endpoint", "http://h/v1"}},
        {{"model_name", "m"}, {"endpoint", "http://h/v1"}},
        {{"model_name", "n"}, {"endpoint", "ftp://x"}}}},
      {"review", {{"epochs", 0}, {"parallelism", 2.5}}},
      {"scoring", {{"judge", "nobody"}}},
      {"server", {{"host", "0.0.0.0"}, {"port", 70000}}},
  };
  const auto p = problems_of(j);
  EXPECT_THAT(p, Contains(HasSubstr("unknown field 'stor'")));
  EXPECT_THAT(p, Contains(HasSubstr("missing field 'store'")));
  EXPECT_THAT(p, Contains(HasSubstr("sampling.indicator_positive")));
  EXPECT_THAT(p, Contains(HasSubstr("sampling.weights")));
  EXPECT_THAT(p, Contains(HasSubstr("models[2]: ")));
  EXPECT_THAT(p, Contains(AllOf(HasSubstr("models[1]: "), HasSubstr("duplicate"))));
  EXPECT_THAT(p, Contains(HasSubstr("review.epochs")));
  EXPECT_THAT(p, Contains(HasSubstr("review.parallelism must be an integer")));
  EXPECT_THAT(p, Contains(HasSubstr("'nobody'")));
  EXPECT_THAT(p, Contains(HasSubstr("server.port")));
  EXPECT_THAT(p, Contains(HasSubstr("loopback")));
  EXPECT_GE(p.size(), 11u);
}

TEST(ServiceConfig, CohortProblemsArePrefixed) {
  const auto p = problems_of({{"store", "s"}, {"cohort", {{"size", 10}, {"plants", {{{"indicator", "filter_99"}, {"count", 1}}}}}}});
  ASSERT_FALSE(p.empty());
  EXPECT_THAT(p, Contains(HasSubstr("cohort: ")));
}

TEST(ServiceConfig, LoopbackHosts) {
  EXPECT_TRUE(is_loopback_host("127.0.0.1"));
  EXPECT_TRUE(is_loopback_host("localhost"));
  EXPECT_TRUE(is_loopback_host("::1"));
  EXPECT_FALSE(is_loopback_host("0.0.0.0"));
  EXPECT_FALSE(is_loopback_host("192.168.1.2"));
}

TEST(ServiceConfig, UnreadableFileIsConfigError) {
  fixture::TempDir dir;
  EXPECT_THROW(load_service_config(dir.file("absent.json")), ConfigError);
  std::ofstream(dir.file("bad.json")) << "{ not json";
  EXPECT_THROW(load_service_config(dir.file("bad.json")), ConfigError);
  std::ofstream(dir.file("array.json")) << "[]";
  EXPECT_THROW(load_service_config(dir.file("array.json")), ConfigError);
}

}  // namespace
}  // namespace medsafe
