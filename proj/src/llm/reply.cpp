#include "credlens/llm/reply.hpp"

namespace credlens::llm {

std::string stripFences(std::string_view text) {
    const auto open = text.find("```");
    if (open == std::string_view::npos) return std::string(text);
    auto bodyStart = text.find('\n', open);
    if (bodyStart == std::string_view::npos) return std::string(text);
    ++bodyStart;
    const auto close = text.find("```", bodyStart);
    return std::string(text.substr(bodyStart, close == std::string_view::npos ? std::string_view::npos : close - bodyStart));
}

std::optional<std::string> firstJsonObject(std::string_view text) {
    const auto start = text.find('{');
    if (start == std::string_view::npos) return std::nullopt;
    int depth = 0;
    bool inString = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char c = text[i];
        if (inString) {
            if (c == '\\') ++i;
            else if (c == '"') inString = false;
            continue;
        }
        if (c == '"') inString = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return std::string(text.substr(start, i - start + 1));
    }
    return std::nullopt;
}

}  // namespace credlens::llm
