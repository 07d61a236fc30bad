#pragma once

#include <string>
#include <vector>

#include "rsmc/config.hpp"

namespace rsmc {

std::vector<std::string> preset_names();
std::string preset_text(const std::string& name);  // throws ConfigError for unknown names
ExperimentConfig load_preset(const std::string& name);

}  // namespace rsmc
