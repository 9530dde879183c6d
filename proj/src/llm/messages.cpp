#include "credlens/llm/messages.hpp"

#include "credlens/common/io.hpp"

namespace credlens::llm {

using nlohmann::json;

void ModelParams::validate() const {
    if (!(temperature >= 0.0)) throw LlmError("temperature must be >= 0");
    if (maxRetries < 0) throw LlmError("max_retries must be >= 0");
    if (modelId.empty()) throw LlmError("model_id must not be empty");
}

ImagePayload ImagePayload::fromBytes(std::vector<std::uint8_t> bytes) {
    ImagePayload payload;
    payload.mediaType = detectMediaType(bytes);
    payload.sha256 = sha256Hex(std::span<const std::uint8_t>(bytes));
    payload.bytes = std::make_shared<const std::vector<std::uint8_t>>(std::move(bytes));
    return payload;
}

Part Part::makeText(std::string text) {
    Part p;
    p.kind = Kind::Text;
    p.text = std::move(text);
    return p;
}

Part Part::makeImage(ImagePayload image) {
    Part p;
    p.kind = Kind::Image;
    p.image = std::move(image);
    return p;
}

std::string detectMediaType(std::span<const std::uint8_t> b) {
    auto startsWith = [&](std::initializer_list<std::uint8_t> magic, std::size_t offset = 0) {
        if (b.size() < offset + magic.size()) return false;
        std::size_t i = offset;
        for (auto m : magic) {
            if (b[i++] != m) return false;
        }
        return true;
    };
    if (startsWith({0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A})) return "image/png";
    if (startsWith({0xFF, 0xD8, 0xFF})) return "image/jpeg";
    if (startsWith({'G', 'I', 'F', '8'})) return "image/gif";
    if (startsWith({'R', 'I', 'F', 'F'}) && startsWith({'W', 'E', 'B', 'P'}, 8)) return "image/webp";
    return "application/octet-stream";
}

json canonicalParams(const ModelParams& params) {
    // Retry budget and timeout affect delivery, not content, so they stay out of the key.
    return json{{"provider_id", params.providerId}, {"model_id", params.modelId}, {"temperature", params.temperature}};
}

json canonicalMessages(const MessageList& messages) {
    json out = json::array();
    for (const auto& message : messages) {
        json parts = json::array();
        for (const auto& part : message.parts) {
            if (part.kind == Part::Kind::Text) {
                parts.push_back({{"type", "text"}, {"text", part.text}});
            } else {
                parts.push_back({{"type", "image"}, {"media_type", part.image.mediaType}, {"sha256", part.image.sha256}});
            }
        }
        out.push_back({{"role", message.role}, {"parts", std::move(parts)}});
    }
    return out;
}

std::string cacheKey(const ModelParams& params, const MessageList& messages) {
    const json canonical{{"params", canonicalParams(params)}, {"messages", canonicalMessages(messages)}};
    return sha256Hex(canonical.dump());
}

std::string joinedText(const MessageList& messages) {
    std::string out;
    for (const auto& message : messages) {
        for (const auto& part : message.parts) {
            if (part.kind != Part::Kind::Text) continue;
            if (!out.empty()) out.push_back('\n');
            out += part.text;
        }
    }
    return out;
}

std::size_t imagePartCount(const MessageList& messages) {
    std::size_t n = 0;
    for (const auto& message : messages) {
        for (const auto& part : message.parts) n += part.kind == Part::Kind::Image;
    }
    return n;
}

}  // namespace credlens::llm
