#include "rsmc/presets.hpp"

#include "rsmc/errors.hpp"
#include "rsmc/presets_data.hpp"

namespace rsmc {

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& p : detail::kEmbeddedPresets) out.emplace_back(p.name);
  return out;
}

std::string preset_text(const std::string& name) {
  for (const auto& p : detail::kEmbeddedPresets)
    if (p.name == name) return std::string(p.text);
  std::string known;
  for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
}

ExperimentConfig load_preset(const std::string& name) { return parse_config(preset_text(name)); }

}  // namespace rsmc
