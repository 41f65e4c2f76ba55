#pragma once

#include <stdexcept>
#include <string_view>

namespace rubriclearn::assets {

/// Text of prompts/<name>.txt without its final newline.
std::string_view prompt(std::string_view name);

} // namespace rubriclearn::assets
