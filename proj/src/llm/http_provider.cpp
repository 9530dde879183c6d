#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include "credlens/common/io.hpp"
#include "credlens/llm/provider.hpp"

namespace credlens::llm {

using nlohmann::json;

HttpChatProvider::HttpChatProvider(std::string endpoint, std::string apiKeyEnv) : apiKeyEnv_(std::move(apiKeyEnv)) {
    const auto schemeEnd = endpoint.find("://");
    if (schemeEnd == std::string::npos) throw LlmError("provider endpoint must include a scheme: " + endpoint);
    const auto pathStart = endpoint.find('/', schemeEnd + 3);
    schemeHostPort_ = endpoint.substr(0, pathStart);
    basePath_ = pathStart == std::string::npos ? "" : endpoint.substr(pathStart);
    while (!basePath_.empty() && basePath_.back() == '/') basePath_.pop_back();
}

json HttpChatProvider::buildRequestBody(const ModelParams& params, const MessageList& messages) {
    json out{{"model", params.modelId}, {"temperature", params.temperature}};
    json list = json::array();
    for (const auto& message : messages) {
        json content = json::array();
        for (const auto& part : message.parts) {
            if (part.kind == Part::Kind::Text) {
                content.push_back({{"type", "text"}, {"text", part.text}});
            } else {
                const std::string url =
                    "data:" + part.image.mediaType + ";base64," +
                    base64Encode(std::span<const std::uint8_t>(*part.image.bytes));
                content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
            }
        }
        list.push_back({{"role", message.role}, {"content", std::move(content)}});
    }
    out["messages"] = std::move(list);
    return out;
}

std::string HttpChatProvider::parseResponseBody(const std::string& body) {
    try {
        const json doc = json::parse(body);
        const json& content = doc.at("choices").at(0).at("message").at("content");
        if (!content.is_string() || content.get<std::string>().empty()) {
            throw MalformedPayloadError("provider reply has no text content");
        }
        return content.get<std::string>();
    } catch (const json::exception& e) {
        throw MalformedPayloadError(std::string("malformed provider payload: ") + e.what());
    }
}

std::string HttpChatProvider::send(const ModelParams& params, const MessageList& messages) {
    httplib::Client client(schemeHostPort_);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(params.requestTimeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(params.requestTimeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers headers;
    if (const char* key = std::getenv(apiKeyEnv_.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const std::string body = buildRequestBody(params, messages).dump();
    auto result = client.Post(basePath_ + "/chat/completions", headers, body, "application/json");
    if (!result) throw TransientProviderError("provider connection failed: " + httplib::to_string(result.error()));
    const int status = result->status;
    if (status == 429 || status >= 500) {
        throw TransientProviderError("provider returned HTTP " + std::to_string(status));
    }
    if (status != 200) throw PermanentProviderError("provider returned HTTP " + std::to_string(status));
    return parseResponseBody(result->body);
}

}  // namespace credlens::llm
