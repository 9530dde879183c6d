#pragma once

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <string>

#include "credlens/llm/cache.hpp"
#include "credlens/llm/messages.hpp"
#include "credlens/llm/provider.hpp"

namespace credlens::llm {

/// Cache miss while running in replay-only mode.
class ReplayMissError : public LlmError {
public:
    explicit ReplayMissError(std::string key)
        : LlmError("replay miss: no cached response for request " + key), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

/// Provider still failing after the retry budget was spent.
class ProviderExhaustedError : public LlmError {
public:
    using LlmError::LlmError;
};

struct LlmExchange {
    std::string cacheKey;
    ModelParams params;
    nlohmann::json messagesCanonical;
    std::string responseText;
    std::string receivedAt;
    int attemptCount = 0;
    bool fromCache = false;
};

struct GatewayOptions {
    bool replayOnly = false;
    std::size_t maxInFlight = 4;
    /// Steady-state request start rate; 0 disables the limiter.
    double requestsPerMinute = 0.0;
    std::chrono::milliseconds retryBaseDelay{500};
    std::chrono::milliseconds retryMaxDelay{30000};
    /// Timestamp source for received_at; defaults to UTC wall clock.
    std::function<std::string()> clock;
};

/// Token bucket with capacity `burst` refilled at `ratePerSecond`.
class TokenBucket {
public:
    TokenBucket(double ratePerSecond, double burst);
    void acquire();

private:
    double rate_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mutex_;
};

/// Cache-first chat completion. Safe for concurrent use: the cache is
/// shared, at most `maxInFlight` provider calls run at once, and a rate
/// limiter spaces request starts.
class Gateway {
public:
    struct Counters {
        std::size_t hits = 0;
        std::size_t misses = 0;
        std::size_t providerCalls = 0;
    };

    Gateway(std::shared_ptr<Provider> provider, std::shared_ptr<ResponseCache> cache, GatewayOptions options = {});

    /// Served from cache when present (byte-identical text, no provider
    /// call). Otherwise calls the provider with exponential backoff on
    /// transient failures, stores the reply atomically, and returns it.
    LlmExchange complete(const ModelParams& params, const MessageList& messages);

    Counters counters() const;
    void resetCounters();
    bool replayOnly() const { return options_.replayOnly; }

private:
    class Slot;

    std::shared_ptr<Provider> provider_;
    std::shared_ptr<ResponseCache> cache_;
    GatewayOptions options_;
    std::unique_ptr<TokenBucket> bucket_;

    std::mutex slotMutex_;
    std::condition_variable slotFree_;
    std::size_t inFlight_ = 0;

    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
    std::atomic<std::size_t> providerCalls_{0};
};

std::string utcTimestamp();

}  // namespace credlens::llm
