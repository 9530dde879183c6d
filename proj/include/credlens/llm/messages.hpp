#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "credlens/common/error.hpp"

namespace credlens::llm {

class LlmError : public Error {
public:
    using Error::Error;
};

struct ModelParams {
    std::string providerId = "mock";
    std::string modelId = "gpt-4o-2024-05-13";
    double temperature = 1.0;
    int maxRetries = 3;
    std::chrono::milliseconds requestTimeout{60000};

    void validate() const;
};

/// Binary image content plus the metadata needed to transmit and hash it.
struct ImagePayload {
    std::shared_ptr<const std::vector<std::uint8_t>> bytes;
    std::string mediaType;
    std::string sha256;

    static ImagePayload fromBytes(std::vector<std::uint8_t> bytes);
};

struct Part {
    enum class Kind { Text, Image };
    Kind kind = Kind::Text;
    std::string text;
    ImagePayload image;

    static Part makeText(std::string text);
    static Part makeImage(ImagePayload image);
};

struct Message {
    std::string role;
    std::vector<Part> parts;
};

using MessageList = std::vector<Message>;

/// Media type from magic bytes: png, jpeg, gif, webp; otherwise
/// application/octet-stream.
std::string detectMediaType(std::span<const std::uint8_t> bytes);

/// Canonical form of the parts of a request that determine the response.
/// Image bytes are represented by their digest and media type.
nlohmann::json canonicalParams(const ModelParams& params);
nlohmann::json canonicalMessages(const MessageList& messages);

/// SHA-256 over the canonical serialization of (params, messages). Keys are
/// sorted, so the digest does not depend on construction order.
std::string cacheKey(const ModelParams& params, const MessageList& messages);

/// All text parts joined with newlines, in message order.
std::string joinedText(const MessageList& messages);
std::size_t imagePartCount(const MessageList& messages);

}  // namespace credlens::llm
