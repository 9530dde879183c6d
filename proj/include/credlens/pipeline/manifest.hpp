#pragma once

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace credlens::pipeline {

struct StageRecord {
    std::string stage;
    std::string startedAt;
    std::string finishedAt;
    /// Digest of the configuration values and flags the stage depends on.
    std::string paramsDigest;
    /// Input label -> SHA-256 of the file's bytes.
    std::map<std::string, std::string> inputs;
    /// Output path relative to the output directory -> SHA-256.
    std::map<std::string, std::string> outputs;
    std::size_t cacheHits = 0;
    std::size_t cacheMisses = 0;
    std::size_t providerCalls = 0;

    nlohmann::json toJson() const;
    static StageRecord fromJson(const nlohmann::json& doc);
};

struct RunManifest {
    std::string toolVersion;
    std::string configDigest;
    std::map<std::string, StageRecord> stages;

    nlohmann::json toJson() const;
    static RunManifest fromJson(const nlohmann::json& doc);
    /// Empty manifest when the file does not exist.
    static RunManifest load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

}  // namespace credlens::pipeline
