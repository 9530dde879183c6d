#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace credlens::llm {

/// Text between the first pair of ``` fences, or the whole text.
std::string stripFences(std::string_view text);

/// First balanced {...} span, honouring JSON string escapes.
std::optional<std::string> firstJsonObject(std::string_view text);

}  // namespace credlens::llm
