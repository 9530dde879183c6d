#pragma once

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "credlens/llm/messages.hpp"

namespace credlens::llm {

/// Retryable provider failure (rate limit, 5xx, connection reset, timeout).
class TransientProviderError : public LlmError {
public:
    using LlmError::LlmError;
};

/// Non-retryable provider failure (bad request, auth, no mock rule).
class PermanentProviderError : public LlmError {
public:
    using LlmError::LlmError;
};

/// Provider reply that could not be interpreted as a chat completion.
class MalformedPayloadError : public LlmError {
public:
    using LlmError::LlmError;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string name() const = 0;
    /// Returns the assistant text for one request. Throws one of the
    /// provider error types above on failure.
    virtual std::string send(const ModelParams& params, const MessageList& messages) = 0;
};

/// One scripted reply. Every populated matcher must hold for the rule to
/// apply: `key` equals the request's cache key, each `contains` string occurs
/// in the request text, and `imageSha256` equals the digest of one of the
/// request's images. `failTimes` makes the first N requests with a given key
/// fail transiently, which exercises retry paths.
struct MockRule {
    std::optional<std::string> key;
    std::vector<std::string> contains;
    std::optional<std::string> imageSha256;
    std::string response;
    int failTimes = 0;
};

/// Deterministic scripted provider. The first rule in script order whose
/// matchers all hold supplies the reply; replies depend only on request
/// content, never on call order.
///
/// Script file: `{"rules": [{"match": {"key"?, "contains"?, "image_sha256"?},
/// "response": "...", "fail_times"?}], "fallback"?: "..."}`.
class MockProvider : public Provider {
public:
    explicit MockProvider(std::vector<MockRule> rules, std::optional<std::string> fallback = std::nullopt);

    static MockProvider fromJson(const nlohmann::json& script);
    static MockProvider fromFile(const std::filesystem::path& path);
    static std::shared_ptr<MockProvider> sharedFromFile(const std::filesystem::path& path);
    static nlohmann::json ruleToJson(const MockRule& rule);

    std::string name() const override { return "mock"; }
    std::string send(const ModelParams& params, const MessageList& messages) override;

    std::size_t callCount() const { return calls_.load(); }

private:
    bool matches(const MockRule& rule, const std::string& key, const std::string& text,
                 const MessageList& messages) const;

    std::vector<MockRule> rules_;
    std::optional<std::string> fallback_;
    std::map<std::string, std::vector<std::size_t>> byKey_;
    std::map<std::string, std::vector<std::size_t>> byImage_;
    std::vector<std::size_t> general_;
    std::atomic<std::size_t> calls_{0};
    std::mutex failMutex_;
    std::map<std::string, int> failuresServed_;
};

/// Chat-completions client for OpenAI-compatible HTTP endpoints. Images are
/// sent inline as base64 data URLs. The API key is read from the environment
/// variable named at construction and is never persisted.
class HttpChatProvider : public Provider {
public:
    HttpChatProvider(std::string endpoint, std::string apiKeyEnv);

    std::string name() const override { return "http"; }
    std::string send(const ModelParams& params, const MessageList& messages) override;

    /// Request body sent to the endpoint (exposed for tests).
    static nlohmann::json buildRequestBody(const ModelParams& params, const MessageList& messages);
    /// Extracts choices[0].message.content; throws MalformedPayloadError.
    static std::string parseResponseBody(const std::string& body);

private:
    std::string schemeHostPort_;
    std::string basePath_;
    std::string apiKeyEnv_;
};

}  // namespace credlens::llm
