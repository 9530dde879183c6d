#include "credlens/llm/gateway.hpp"

#include <algorithm>
#include <ctime>
#include <thread>

namespace credlens::llm {

std::string utcTimestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t seconds = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&seconds, &tm);
    char buffer[32];
    std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buffer;
}

TokenBucket::TokenBucket(double ratePerSecond, double burst)
    : rate_(ratePerSecond), capacity_(std::max(1.0, burst)), tokens_(capacity_), last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
    std::unique_lock lock(mutex_);
    for (;;) {
        const auto now = std::chrono::steady_clock::now();
        const double elapsed = std::chrono::duration<double>(now - last_).count();
        tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
        last_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        const double wait = (1.0 - tokens_) / rate_;
        lock.unlock();
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
        lock.lock();
    }
}

Gateway::Gateway(std::shared_ptr<Provider> provider, std::shared_ptr<ResponseCache> cache, GatewayOptions options)
    : provider_(std::move(provider)), cache_(std::move(cache)), options_(std::move(options)) {
    if (!cache_) throw LlmError("gateway requires a response cache");
    if (options_.maxInFlight == 0) options_.maxInFlight = 1;
    if (!options_.clock) options_.clock = utcTimestamp;
    if (options_.requestsPerMinute > 0.0) {
        bucket_ = std::make_unique<TokenBucket>(options_.requestsPerMinute / 60.0, 1.0);
    }
}

class Gateway::Slot {
public:
    explicit Slot(Gateway& g) : g_(g) {
        std::unique_lock lock(g_.slotMutex_);
        g_.slotFree_.wait(lock, [&] { return g_.inFlight_ < g_.options_.maxInFlight; });
        ++g_.inFlight_;
    }
    ~Slot() {
        {
            std::lock_guard lock(g_.slotMutex_);
            --g_.inFlight_;
        }
        g_.slotFree_.notify_one();
    }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

private:
    Gateway& g_;
};

LlmExchange Gateway::complete(const ModelParams& params, const MessageList& messages) {
    params.validate();
    if (messages.empty()) throw LlmError("message list must not be empty");

    LlmExchange exchange;
    exchange.cacheKey = cacheKey(params, messages);
    exchange.params = params;
    exchange.messagesCanonical = canonicalMessages(messages);

    if (auto entry = cache_->load(exchange.cacheKey)) {
        ++hits_;
        exchange.responseText = std::move(entry->responseText);
        exchange.receivedAt = std::move(entry->receivedAt);
        exchange.attemptCount = entry->attemptCount;
        exchange.fromCache = true;
        return exchange;
    }
    ++misses_;
    if (options_.replayOnly) throw ReplayMissError(exchange.cacheKey);
    if (!provider_) throw LlmError("no provider configured and request " + exchange.cacheKey + " is not cached");

    std::string lastError;
    auto delay = options_.retryBaseDelay;
    for (int attempt = 1; attempt <= params.maxRetries + 1; ++attempt) {
        try {
            std::string text;
            {
                Slot slot(*this);
                if (bucket_) bucket_->acquire();
                ++providerCalls_;
                text = provider_->send(params, messages);
            }
            if (text.empty()) throw MalformedPayloadError("provider returned an empty response");
            exchange.responseText = std::move(text);
            exchange.receivedAt = options_.clock();
            exchange.attemptCount = attempt;
            CacheEntry entry{exchange.cacheKey,         canonicalParams(params), exchange.messagesCanonical,
                             exchange.responseText,     exchange.receivedAt,     exchange.attemptCount};
            cache_->store(entry);
            return exchange;
        } catch (const TransientProviderError& e) {
            lastError = e.what();
            if (attempt <= params.maxRetries && delay.count() > 0) {
                std::this_thread::sleep_for(delay);
                delay = std::min(options_.retryMaxDelay, delay * 2);
            }
        }
    }
    throw ProviderExhaustedError("provider failed after " + std::to_string(params.maxRetries + 1) +
                                 " attempts for request " + exchange.cacheKey + ": " + lastError);
}

Gateway::Counters Gateway::counters() const { return {hits_.load(), misses_.load(), providerCalls_.load()}; }

void Gateway::resetCounters() {
    hits_ = 0;
    misses_ = 0;
    providerCalls_ = 0;
}

}  // namespace credlens::llm
