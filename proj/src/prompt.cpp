#include "medsafe/prompt.hpp"

#include "medsafe/util.hpp"

namespace medsafe {

namespace {

std::string checked(const std::string& dir, const std::string& name, const nlohmann::json& manifest,
                    std::map<std::string, std::string>& digests) {
  const auto text = read_file(dir + "/" + name);
  const auto digest = sha256_hex(text);
  const auto& files = manifest.at("files");
  if (!files.contains(name)) throw AssetChecksumError("manifest has no entry for " + name);
  const auto expected = files.at(name).get<std::string>();
  if (expected != digest) {
    throw AssetChecksumError(name + ": sha256 " + digest + " does not match manifest " + expected);
  }
  digests[name] = digest;
  return text;
}

}  // namespace

PromptAssets load_prompt_assets(const std::string& dir) {
  const auto manifest = read_json_file(dir + "/manifest.json");
  PromptAssets a;
  a.system_prompt = checked(dir, "system_prompt.md", manifest, a.sha256);
  a.judge_prompt = checked(dir, "judge_prompt.md", manifest, a.sha256);
  a.synthesizer_prompt = checked(dir, "synthesizer_prompt.md", manifest, a.sha256);
  return a;
}

std::string default_asset_dir() { return MEDSAFE_ASSET_DIR; }

std::vector<ChatMessage> build_prompt(std::string_view system_prompt, std::string_view profile_text) {
  if (profile_text.empty()) throw std::invalid_argument("profile text is empty");
  return {{"system", std::string(system_prompt)}, {"user", std::string(profile_text)}};
}

}  // namespace medsafe
