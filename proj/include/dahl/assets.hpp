#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dahl {

// Protocol programs compiled into the binary, by file stem.
std::optional<std::string_view> find_asset(std::string_view name);
std::vector<std::string> asset_names();

}  // namespace dahl
