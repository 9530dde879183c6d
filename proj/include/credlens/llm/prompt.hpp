#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "credlens/corpus.hpp"
#include "credlens/llm/messages.hpp"

namespace credlens::llm {

class PromptError : public LlmError {
public:
    using LlmError::LlmError;
};

/// Which parts of a post the model sees.
enum class Level { Caption, Image, Post };

std::string_view levelName(Level level);
std::optional<Level> parseLevel(std::string_view name);

/// Placeholder names (`{{name}}`) found in a template, in order of appearance.
std::vector<std::string> templatePlaceholders(std::string_view templateText);

/// Builds a single user message from a template with `{{caption}}` and
/// `{{instructions}}` placeholders.
///   caption: text only; the caption is substituted (or appended after the
///            template when it has no caption placeholder).
///   image:   the template text with an empty caption plus the image; the
///            caption never appears.
///   post:    caption text plus exactly one image part.
MessageList renderPrompt(std::string_view templateText, const corpus::Post& post, Level level,
                         std::string_view instructions = {});

}  // namespace credlens::llm
