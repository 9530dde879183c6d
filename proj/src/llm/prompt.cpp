#include "credlens/llm/prompt.hpp"

#include <filesystem>

#include "credlens/common/io.hpp"

namespace credlens::llm {

std::string_view levelName(Level level) {
    switch (level) {
        case Level::Caption: return "caption";
        case Level::Image: return "image";
        case Level::Post: return "post";
    }
    return "post";
}

std::optional<Level> parseLevel(std::string_view name) {
    if (name == "caption") return Level::Caption;
    if (name == "image") return Level::Image;
    if (name == "post") return Level::Post;
    return std::nullopt;
}

std::vector<std::string> templatePlaceholders(std::string_view text) {
    std::vector<std::string> names;
    std::size_t pos = 0;
    while ((pos = text.find("{{", pos)) != std::string_view::npos) {
        const auto end = text.find("}}", pos + 2);
        if (end == std::string_view::npos) throw PromptError("unterminated placeholder in template");
        names.push_back(trim(text.substr(pos + 2, end - pos - 2)));
        pos = end + 2;
    }
    return names;
}

namespace {

std::string substitute(std::string_view text, std::string_view caption, std::string_view instructions) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto start = text.find("{{", pos);
        if (start == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, start - pos));
        const auto end = text.find("}}", start + 2);
        const std::string name = trim(text.substr(start + 2, end - start - 2));
        out.append(name == "caption" ? caption : instructions);
        pos = end + 2;
    }
    return out;
}

}  // namespace

MessageList renderPrompt(std::string_view templateText, const corpus::Post& post, Level level,
                         std::string_view instructions) {
    bool hasCaption = false;
    for (const auto& name : templatePlaceholders(templateText)) {
        if (name == "caption") hasCaption = true;
        else if (name != "instructions") throw PromptError("unknown placeholder '{{" + name + "}}'");
    }
    const bool withCaption = level != Level::Image;
    const bool withImage = level != Level::Caption;

    std::string text = substitute(templateText, withCaption ? std::string_view(post.caption) : std::string_view{},
                                  instructions);
    if (withCaption && !hasCaption) text += "\n\nCaption: " + post.caption;

    Message message{"user", {Part::makeText(std::move(text))}};
    if (withImage) {
        if (!std::filesystem::is_regular_file(post.imagePath)) {
            throw PromptError("image file missing for post '" + post.id + "': " + post.imagePath.string());
        }
        message.parts.push_back(Part::makeImage(ImagePayload::fromBytes(readBinaryFile(post.imagePath))));
    }
    return {std::move(message)};
}

}  // namespace credlens::llm
