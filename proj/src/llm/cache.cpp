#include "credlens/llm/cache.hpp"

#include <fstream>

#include "credlens/common/io.hpp"
#include "credlens/llm/messages.hpp"

namespace credlens::llm {

namespace fs = std::filesystem;
using nlohmann::json;

json CacheEntry::toJson() const {
    return json{{"cache_key", cacheKey},
                {"params", params},
                {"messages_canonical", messagesCanonical},
                {"response_text", responseText},
                {"received_at", receivedAt},
                {"attempt_count", attemptCount}};
}

CacheEntry CacheEntry::fromJson(const json& doc) {
    CacheEntry e;
    e.cacheKey = doc.at("cache_key").get<std::string>();
    e.params = doc.at("params");
    e.messagesCanonical = doc.at("messages_canonical");
    e.responseText = doc.at("response_text").get<std::string>();
    e.receivedAt = doc.at("received_at").get<std::string>();
    e.attemptCount = doc.at("attempt_count").get<int>();
    return e;
}

ResponseCache::ResponseCache(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path ResponseCache::entryPath(const std::string& key) const {
    return root_ / key.substr(0, 2) / (key + ".json");
}

std::optional<CacheEntry> ResponseCache::load(const std::string& key) const {
    const fs::path path = entryPath(key);
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) return std::nullopt;
    try {
        CacheEntry entry = CacheEntry::fromJson(json::parse(readTextFile(path)));
        if (entry.cacheKey != key || entry.responseText.empty()) return std::nullopt;
        return entry;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void ResponseCache::store(const CacheEntry& entry) {
    if (entry.cacheKey.size() < 2) throw LlmError("cache entry without a key");
    writeFileAtomic(entryPath(entry.cacheKey), entry.toJson().dump(2) + "\n");
    std::lock_guard lock(indexMutex_);
    std::ofstream index(root_ / "index.jsonl", std::ios::app | std::ios::binary);
    index << json{{"cache_key", entry.cacheKey}, {"received_at", entry.receivedAt}}.dump() << '\n';
}

}  // namespace credlens::llm
