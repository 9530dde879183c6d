#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "credlens/common/error.hpp"
#include "credlens/llm/messages.hpp"

namespace credlens::pipeline {

class ConfigError : public Error {
public:
    using Error::Error;
};

struct ProviderConfig {
    std::string kind = "mock";  // mock | http
    std::string mockScript;
    std::string endpoint = "https://api.openai.com/v1";
    /// Name of the environment variable holding the key; the key itself
    /// never enters the config.
    std::string apiKeyEnv = "OPENAI_API_KEY";
    std::string providerId = "openai";
    std::string modelId = "gpt-4o-2024-05-13";
    double temperature = 1.0;
    int maxRetries = 3;
    int timeoutMs = 60000;
    std::size_t maxInFlight = 4;
    double requestsPerMinute = 0.0;

    llm::ModelParams modelParams() const;
};

/// Paths are kept as written; resolve() anchors relative ones at the
/// directory holding the config file.
struct RunConfig {
    std::filesystem::path baseDir;

    std::string posts;
    std::string annotations;
    std::optional<std::string> embeddings;
    std::string outputDir = "out";
    std::string cacheDir = "cache";
    std::size_t threads = 1;

    ProviderConfig provider;

    std::uint64_t splitSeed = 20240601;
    std::uint64_t discoverySeed = 20240602;
    std::uint64_t modelSeed = 20240603;

    std::size_t perTopicHoldout = 50;
    std::size_t holdoutSets = 2;

    std::optional<std::string> zeroShotTemplate;

    std::size_t discoveryPerTopic = 10;
    std::size_t maxBatches = 5;

    std::optional<std::string> catalog;
    bool excludeUnreliable = true;

    std::string featureSet = "gpt_full";
    /// Grid spec per model kind name (ols, lasso, random_forest, gbdt).
    nlohmann::json grids = nlohmann::json::object();

    std::vector<std::string> explainSets{"gpt_full", "gpt_no_zero_shot"};
    std::size_t topK = 20;

    std::filesystem::path resolve(const std::string& path) const;
    /// Every key with defaults filled in; paths as written.
    nlohmann::json toJson() const;
    /// SHA-256 of the canonical (key-sorted, compact) materialized config.
    std::string digest() const;
};

/// Rejects unknown keys at every level and validates values.
RunConfig configFromJson(const nlohmann::json& doc, std::filesystem::path baseDir);
RunConfig loadConfig(const std::filesystem::path& path);

}  // namespace credlens::pipeline
