#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "medsafe/chat.hpp"

namespace medsafe {

class AssetChecksumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Prompt texts loaded from an asset directory and checked against the
/// SHA-256 values in its manifest.json.
struct PromptAssets {
  std::string system_prompt;
  std::string judge_prompt;
  std::string synthesizer_prompt;
  std::map<std::string, std::string> sha256;  // file name -> hex digest
};

/// Throws AssetChecksumError when a file's digest differs from the manifest.
PromptAssets load_prompt_assets(const std::string& dir);

/// Directory the build was configured with.
std::string default_asset_dir();

/// System message then user message; nothing else. Throws
/// std::invalid_argument for empty profile text.
std::vector<ChatMessage> build_prompt(std::string_view system_prompt, std::string_view profile_text);

}  // namespace medsafe
