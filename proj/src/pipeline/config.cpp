#include "credlens/pipeline/config.hpp"

#include <set>

#include "credlens/common/io.hpp"
#include "credlens/models.hpp"
#include "credlens/quantify.hpp"

namespace credlens::pipeline {

using nlohmann::json;

llm::ModelParams ProviderConfig::modelParams() const {
    llm::ModelParams p;
    p.providerId = providerId;
    p.modelId = modelId;
    p.temperature = temperature;
    p.maxRetries = maxRetries;
    p.requestTimeout = std::chrono::milliseconds(timeoutMs);
    return p;
}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    return p.is_absolute() ? p : (baseDir / p).lexically_normal();
}

namespace {

json optionalString(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

/// The object at doc[key], or an empty object when absent.
const json& section(const json& doc, const char* key) {
    static const json empty = json::object();
    if (!doc.contains(key)) return empty;
    const auto& v = doc.at(key);
    if (!v.is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
    return v;
}

void allowOnly(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown config key '" + where + key + "'");
    }
}

template <class T>
T get(const json& obj, const char* key, T fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + where + key + "' has the wrong type");
    }
}

std::optional<std::string> getOptionalString(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
    if (!obj.at(key).is_string()) throw ConfigError("config key '" + where + key + "' must be a string or null");
    return obj.at(key).get<std::string>();
}

constexpr const char* kKindNames[] = {"ols", "lasso", "random_forest", "gbdt"};

}  // namespace

json RunConfig::toJson() const {
    json g = json::object();
    for (const char* name : kKindNames) {
        g[name] = grids.contains(name) ? grids.at(name) : models::defaultGridSpec(*models::parseModelKind(name));
    }
    return {
        {"corpus", {{"posts", posts}, {"annotations", annotations}, {"embeddings", optionalString(embeddings)}}},
        {"output_dir", outputDir},
        {"cache_dir", cacheDir},
        {"threads", threads},
        {"provider",
         {{"kind", provider.kind},
          {"mock_script", provider.mockScript},
          {"endpoint", provider.endpoint},
          {"api_key_env", provider.apiKeyEnv},
          {"provider_id", provider.providerId},
          {"model_id", provider.modelId},
          {"temperature", provider.temperature},
          {"max_retries", provider.maxRetries},
          {"timeout_ms", provider.timeoutMs},
          {"max_in_flight", provider.maxInFlight},
          {"requests_per_minute", provider.requestsPerMinute}}},
        {"seeds", {{"split", splitSeed}, {"discovery", discoverySeed}, {"models", modelSeed}}},
        {"split", {{"per_topic_holdout", perTopicHoldout}, {"holdout_sets", holdoutSets}}},
        {"zero_shot", {{"template", optionalString(zeroShotTemplate)}}},
        {"discovery", {{"per_topic", discoveryPerTopic}, {"max_batches", maxBatches}}},
        {"quantify", {{"catalog", optionalString(catalog)}, {"exclude_unreliable", excludeUnreliable}}},
        {"train", {{"feature_set", featureSet}, {"grids", g}}},
        {"explain", {{"column_sets", explainSets}, {"top_k", topK}}},
    };
}

std::string RunConfig::digest() const { return sha256Hex(toJson().dump()); }

RunConfig configFromJson(const json& doc, std::filesystem::path baseDir) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    allowOnly(doc, {"corpus", "output_dir", "cache_dir", "threads", "provider", "seeds", "split", "zero_shot", "discovery",
                    "quantify", "train", "explain"},
              "");
    RunConfig c;
    c.baseDir = std::move(baseDir);

    const auto& corpus = section(doc, "corpus");
    allowOnly(corpus, {"posts", "annotations", "embeddings"}, "corpus.");
    if (!corpus.contains("posts") || !corpus.contains("annotations")) {
        throw ConfigError("config needs corpus.posts and corpus.annotations");
    }
    c.posts = get<std::string>(corpus, "posts", "", "corpus.");
    c.annotations = get<std::string>(corpus, "annotations", "", "corpus.");
    c.embeddings = getOptionalString(corpus, "embeddings", "corpus.");
    c.outputDir = get<std::string>(doc, "output_dir", c.outputDir, "");
    c.cacheDir = get<std::string>(doc, "cache_dir", c.cacheDir, "");
    c.threads = get<std::size_t>(doc, "threads", c.threads, "");
    if (c.threads == 0) throw ConfigError("threads must be >= 1");

    const auto& p = section(doc, "provider");
    allowOnly(p, {"kind", "mock_script", "endpoint", "api_key_env", "provider_id", "model_id", "temperature", "max_retries",
                  "timeout_ms", "max_in_flight", "requests_per_minute"},
              "provider.");
    auto& pc = c.provider;
    pc.kind = get<std::string>(p, "kind", pc.kind, "provider.");
    pc.mockScript = get<std::string>(p, "mock_script", pc.mockScript, "provider.");
    pc.endpoint = get<std::string>(p, "endpoint", pc.endpoint, "provider.");
    pc.apiKeyEnv = get<std::string>(p, "api_key_env", pc.apiKeyEnv, "provider.");
    pc.providerId = get<std::string>(p, "provider_id", pc.kind == "mock" ? std::string("mock") : pc.providerId, "provider.");
    pc.modelId = get<std::string>(p, "model_id", pc.modelId, "provider.");
    pc.temperature = get<double>(p, "temperature", pc.temperature, "provider.");
    pc.maxRetries = get<int>(p, "max_retries", pc.maxRetries, "provider.");
    pc.timeoutMs = get<int>(p, "timeout_ms", pc.timeoutMs, "provider.");
    pc.maxInFlight = get<std::size_t>(p, "max_in_flight", pc.maxInFlight, "provider.");
    pc.requestsPerMinute = get<double>(p, "requests_per_minute", pc.requestsPerMinute, "provider.");
    if (pc.kind != "mock" && pc.kind != "http") throw ConfigError("provider.kind must be 'mock' or 'http'");
    if (pc.kind == "mock" && pc.mockScript.empty()) throw ConfigError("provider.mock_script is required for the mock provider");
    if (pc.maxInFlight == 0) throw ConfigError("provider.max_in_flight must be >= 1");
    if (pc.timeoutMs <= 0) throw ConfigError("provider.timeout_ms must be > 0");
    try {
        pc.modelParams().validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("provider: ") + e.what());
    }

    const auto& seeds = section(doc, "seeds");
    allowOnly(seeds, {"split", "discovery", "models"}, "seeds.");
    c.splitSeed = get<std::uint64_t>(seeds, "split", c.splitSeed, "seeds.");
    c.discoverySeed = get<std::uint64_t>(seeds, "discovery", c.discoverySeed, "seeds.");
    c.modelSeed = get<std::uint64_t>(seeds, "models", c.modelSeed, "seeds.");

    const auto& split = section(doc, "split");
    allowOnly(split, {"per_topic_holdout", "holdout_sets"}, "split.");
    c.perTopicHoldout = get<std::size_t>(split, "per_topic_holdout", c.perTopicHoldout, "split.");
    c.holdoutSets = get<std::size_t>(split, "holdout_sets", c.holdoutSets, "split.");
    if (c.holdoutSets != 2) throw ConfigError("split.holdout_sets must be 2 (validation and test)");
    if (c.perTopicHoldout == 0) throw ConfigError("split.per_topic_holdout must be >= 1");

    const auto& zs = section(doc, "zero_shot");
    allowOnly(zs, {"template"}, "zero_shot.");
    c.zeroShotTemplate = getOptionalString(zs, "template", "zero_shot.");

    const auto& disc = section(doc, "discovery");
    allowOnly(disc, {"per_topic", "max_batches"}, "discovery.");
    c.discoveryPerTopic = get<std::size_t>(disc, "per_topic", c.discoveryPerTopic, "discovery.");
    c.maxBatches = get<std::size_t>(disc, "max_batches", c.maxBatches, "discovery.");
    if (c.discoveryPerTopic == 0 || c.maxBatches == 0) throw ConfigError("discovery.per_topic and max_batches must be >= 1");

    const auto& q = section(doc, "quantify");
    allowOnly(q, {"catalog", "exclude_unreliable"}, "quantify.");
    c.catalog = getOptionalString(q, "catalog", "quantify.");
    c.excludeUnreliable = get<bool>(q, "exclude_unreliable", c.excludeUnreliable, "quantify.");

    const auto& train = section(doc, "train");
    allowOnly(train, {"feature_set", "grids"}, "train.");
    c.featureSet = get<std::string>(train, "feature_set", c.featureSet, "train.");
    const auto set = quantify::parseColumnSet(c.featureSet);
    if (!set || *set == quantify::ColumnSet::ZeroShot) {
        throw ConfigError("train.feature_set must be gpt_full, gpt_no_zero_shot, baseline or embedding");
    }
    const auto& grids = section(train, "grids");
    allowOnly(grids, {"ols", "lasso", "random_forest", "gbdt"}, "train.grids.");
    c.grids = grids;

    const auto& ex = section(doc, "explain");
    allowOnly(ex, {"column_sets", "top_k"}, "explain.");
    c.explainSets = get<std::vector<std::string>>(ex, "column_sets", c.explainSets, "explain.");
    c.topK = get<std::size_t>(ex, "top_k", c.topK, "explain.");
    for (const auto& s : c.explainSets) {
        const auto parsed = quantify::parseColumnSet(s);
        if (!parsed || *parsed == quantify::ColumnSet::ZeroShot) throw ConfigError("explain.column_sets: unusable set '" + s + "'");
    }
    if (c.topK == 0) throw ConfigError("explain.top_k must be >= 1");

    // Grids must expand; resolving lambda paths needs data, so only the shape is checked here.
    for (const auto& [name, spec] : c.grids.items()) {
        if (!spec.is_object()) throw ConfigError("train.grids." + name + " must be an object");
    }
    return c;
}

RunConfig loadConfig(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(readTextFile(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return configFromJson(doc, std::filesystem::absolute(path).parent_path());
}

}  // namespace credlens::pipeline
