#include "credlens/pipeline/manifest.hpp"

#include "credlens/common/io.hpp"
#include "credlens/pipeline/config.hpp"

namespace credlens::pipeline {

using nlohmann::json;

json StageRecord::toJson() const {
    return {{"stage", stage},
            {"started_at", startedAt},
            {"finished_at", finishedAt},
            {"params_digest", paramsDigest},
            {"inputs", inputs},
            {"outputs", outputs},
            {"cache", {{"hits", cacheHits}, {"misses", cacheMisses}, {"provider_calls", providerCalls}}}};
}

StageRecord StageRecord::fromJson(const json& doc) {
    StageRecord r;
    r.stage = doc.at("stage").get<std::string>();
    r.startedAt = doc.at("started_at").get<std::string>();
    r.finishedAt = doc.at("finished_at").get<std::string>();
    r.paramsDigest = doc.at("params_digest").get<std::string>();
    r.inputs = doc.at("inputs").get<std::map<std::string, std::string>>();
    r.outputs = doc.at("outputs").get<std::map<std::string, std::string>>();
    const auto& cache = doc.at("cache");
    r.cacheHits = cache.at("hits").get<std::size_t>();
    r.cacheMisses = cache.at("misses").get<std::size_t>();
    r.providerCalls = cache.at("provider_calls").get<std::size_t>();
    return r;
}

json RunManifest::toJson() const {
    json s = json::object();
    for (const auto& [name, record] : stages) s[name] = record.toJson();
    return {{"tool_version", toolVersion}, {"config_digest", configDigest}, {"stages", s}};
}

RunManifest RunManifest::fromJson(const json& doc) {
    RunManifest m;
    m.toolVersion = doc.at("tool_version").get<std::string>();
    m.configDigest = doc.at("config_digest").get<std::string>();
    for (const auto& [name, record] : doc.at("stages").items()) m.stages[name] = StageRecord::fromJson(record);
    return m;
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return {};
    try {
        return fromJson(json::parse(readTextFile(path)));
    } catch (const json::exception& e) {
        throw ConfigError("run manifest " + path.string() + " is unreadable: " + e.what());
    }
}

void RunManifest::save(const std::filesystem::path& path) const { writeFileAtomic(path, toJson().dump(2) + "\n"); }

}  // namespace credlens::pipeline
