#include "credlens/llm/provider.hpp"

#include <algorithm>

#include "credlens/common/io.hpp"

namespace credlens::llm {

using nlohmann::json;

MockProvider::MockProvider(std::vector<MockRule> rules, std::optional<std::string> fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)) {
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& rule = rules_[i];
        if (rule.key) byKey_[*rule.key].push_back(i);
        else if (rule.imageSha256) byImage_[*rule.imageSha256].push_back(i);
        else general_.push_back(i);
    }
}

namespace {

std::pair<std::vector<MockRule>, std::optional<std::string>> parseScript(const json& script) {
    std::vector<MockRule> rules;
    try {
        for (const auto& item : script.at("rules")) {
            MockRule rule;
            const json& match = item.value("match", json::object());
            for (const auto& [field, value] : match.items()) {
                if (field == "key") rule.key = value.get<std::string>();
                else if (field == "image_sha256") rule.imageSha256 = value.get<std::string>();
                else if (field == "contains") {
                    if (value.is_string()) rule.contains.push_back(value.get<std::string>());
                    else rule.contains = value.get<std::vector<std::string>>();
                } else {
                    throw LlmError("mock script: unknown matcher '" + field + "'");
                }
            }
            rule.response = item.at("response").get<std::string>();
            rule.failTimes = item.value("fail_times", 0);
            rules.push_back(std::move(rule));
        }
    } catch (const json::exception& e) {
        throw LlmError(std::string("mock script: ") + e.what());
    }
    std::optional<std::string> fallback;
    if (script.contains("fallback") && !script["fallback"].is_null()) fallback = script["fallback"].get<std::string>();
    return {std::move(rules), std::move(fallback)};
}

json readScript(const std::filesystem::path& path) {
    try {
        return json::parse(readTextFile(path));
    } catch (const json::parse_error& e) {
        throw LlmError("mock script " + path.string() + ": " + e.what());
    }
}

}  // namespace

MockProvider MockProvider::fromJson(const json& script) {
    auto [rules, fallback] = parseScript(script);
    return MockProvider(std::move(rules), std::move(fallback));
}

MockProvider MockProvider::fromFile(const std::filesystem::path& path) { return fromJson(readScript(path)); }

std::shared_ptr<MockProvider> MockProvider::sharedFromFile(const std::filesystem::path& path) {
    auto [rules, fallback] = parseScript(readScript(path));
    return std::make_shared<MockProvider>(std::move(rules), std::move(fallback));
}

json MockProvider::ruleToJson(const MockRule& rule) {
    json match = json::object();
    if (rule.key) match["key"] = *rule.key;
    if (!rule.contains.empty()) match["contains"] = rule.contains;
    if (rule.imageSha256) match["image_sha256"] = *rule.imageSha256;
    json out{{"match", std::move(match)}, {"response", rule.response}};
    if (rule.failTimes > 0) out["fail_times"] = rule.failTimes;
    return out;
}

bool MockProvider::matches(const MockRule& rule, const std::string& key, const std::string& text,
                           const MessageList& messages) const {
    if (rule.key && *rule.key != key) return false;
    if (rule.imageSha256) {
        bool found = false;
        for (const auto& message : messages) {
            for (const auto& part : message.parts) {
                found = found || (part.kind == Part::Kind::Image && part.image.sha256 == *rule.imageSha256);
            }
        }
        if (!found) return false;
    }
    return std::all_of(rule.contains.begin(), rule.contains.end(),
                       [&](const std::string& needle) { return text.find(needle) != std::string::npos; });
}

std::string MockProvider::send(const ModelParams& params, const MessageList& messages) {
    ++calls_;
    const std::string key = cacheKey(params, messages);
    const std::string text = joinedText(messages);

    std::vector<std::size_t> candidates;
    if (const auto it = byKey_.find(key); it != byKey_.end()) candidates = it->second;
    for (const auto& message : messages) {
        for (const auto& part : message.parts) {
            if (part.kind != Part::Kind::Image) continue;
            if (const auto it = byImage_.find(part.image.sha256); it != byImage_.end()) {
                candidates.insert(candidates.end(), it->second.begin(), it->second.end());
            }
        }
    }
    candidates.insert(candidates.end(), general_.begin(), general_.end());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    for (std::size_t index : candidates) {
        const MockRule& rule = rules_[index];
        if (!matches(rule, key, text, messages)) continue;
        if (rule.failTimes > 0) {
            std::lock_guard lock(failMutex_);
            int& served = failuresServed_[key];
            if (served < rule.failTimes) {
                ++served;
                throw TransientProviderError("mock: scripted transient failure for " + key);
            }
        }
        return rule.response;
    }
    if (fallback_) return *fallback_;
    throw PermanentProviderError("mock: no rule matches request " + key);
}

}  // namespace credlens::llm
