#pragma once

#include <json.hpp>

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

namespace credlens::llm {

struct CacheEntry {
    std::string cacheKey;
    nlohmann::json params;
    nlohmann::json messagesCanonical;
    std::string responseText;
    std::string receivedAt;
    int attemptCount = 1;

    nlohmann::json toJson() const;
    static CacheEntry fromJson(const nlohmann::json& doc);
};

/// Content-addressed response store: one JSON file per entry at
/// `<root>/<key[0:2]>/<key>.json` plus an append-only `index.jsonl`.
/// Entries are written to a temporary file and renamed into place. Entries
/// that fail to parse or whose key does not match their file name are
/// treated as absent.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path entryPath(const std::string& key) const;

    std::optional<CacheEntry> load(const std::string& key) const;
    void store(const CacheEntry& entry);

private:
    std::filesystem::path root_;
    std::mutex indexMutex_;
};

}  // namespace credlens::llm
