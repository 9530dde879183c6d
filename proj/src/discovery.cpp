#include "credlens/discovery.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <cctype>
#include <regex>
#include <sstream>

#include "credlens/common/io.hpp"
#include "credlens/common/rng.hpp"
#include "credlens/zeroshot.hpp"

namespace credlens::discovery {

using nlohmann::json;

const std::string_view kSummaryPrompt =
    "Each numbered statement below explains a judgement of how trustworthy a social media post looked. "
    "Group the explanations and name the recurring post attributes that drove those judgements.";

const std::string_view kSummaryFormat =
    "Reply with only a JSON object of the form {\"criteria\": [{\"label\": \"<short name of the criterion>\", "
    "\"description\": \"<one-line description>\"}]}.";

std::string normalizeLabel(std::string_view label) {
    std::string out;
    bool pendingSpace = false;
    for (char raw : label) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            pendingSpace = !out.empty();
            continue;
        }
        if (pendingSpace) out.push_back(' ');
        pendingSpace = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

json ThemeLedger::toJson() const {
    json themeList = json::array();
    for (const auto& t : themes) {
        themeList.push_back({{"label", t.label},
                             {"description", t.description},
                             {"support_count", t.supportCount},
                             {"first_seen_batch", t.firstSeenBatch}});
    }
    json history = json::array();
    for (const auto& b : batchHistory) {
        history.push_back({{"batch_index", b.batchIndex}, {"post_ids", b.postIds}, {"new_theme_count", b.newThemeCount}});
    }
    return json{{"themes", std::move(themeList)}, {"batch_history", std::move(history)}, {"stopping_reason", stoppingReason}};
}

ThemeLedger ThemeLedger::fromJson(const json& doc) {
    ThemeLedger ledger;
    try {
        for (const auto& t : doc.at("themes")) {
            ledger.themes.push_back({t.at("label").get<std::string>(), t.value("description", std::string()),
                                     t.at("support_count").get<std::size_t>(),
                                     t.at("first_seen_batch").get<std::size_t>()});
        }
        for (const auto& b : doc.at("batch_history")) {
            ledger.batchHistory.push_back({b.at("batch_index").get<std::size_t>(),
                                           b.value("post_ids", std::vector<std::string>{}),
                                           b.at("new_theme_count").get<std::size_t>()});
        }
        ledger.stoppingReason = doc.value("stopping_reason", std::string());
    } catch (const json::exception& e) {
        throw DiscoveryError(std::string("malformed ledger: ") + e.what());
    }
    return ledger;
}

std::vector<corpus::Post> sampleDiscoveryBatch(const std::vector<corpus::Post>& trainPosts, std::size_t perTopic,
                                               std::uint64_t seed, const std::set<std::string>& exclude) {
    std::array<std::vector<const corpus::Post*>, corpus::kTopicCount> pools;
    for (const auto& post : trainPosts) {
        if (!exclude.count(post.id)) pools[corpus::topicIndex(post.topic)].push_back(&post);
    }
    std::vector<corpus::Post> batch;
    for (std::size_t t = 0; t < corpus::kTopicCount; ++t) {
        auto& pool = pools[t];
        if (pool.size() < perTopic) {
            throw DiscoveryError("topic '" + std::string(corpus::topicName(corpus::kAllTopics[t])) +
                                 "' exhausted: " + std::to_string(pool.size()) + " unsampled posts, need " +
                                 std::to_string(perTopic));
        }
        std::sort(pool.begin(), pool.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
        Rng rng(mixSeed(seed, t));
        rng.shuffle(pool);
        for (std::size_t i = 0; i < perTopic; ++i) batch.push_back(*pool[i]);
    }
    return batch;
}

llm::MessageList summaryMessages(const std::vector<std::string>& reasonings) {
    std::string text(kSummaryPrompt);
    text += "\n\n";
    text += kSummaryFormat;
    text += "\n\nStatements:\n";
    for (std::size_t i = 0; i < reasonings.size(); ++i) {
        text += std::to_string(i + 1) + ". " + reasonings[i] + "\n";
    }
    return {llm::Message{"user", {llm::Part::makeText(std::move(text))}}};
}

namespace {

std::vector<Theme> dedupe(std::vector<Theme> raw) {
    std::vector<Theme> out;
    for (auto& theme : raw) {
        theme.label = normalizeLabel(theme.label);
        if (theme.label.empty()) continue;
        const bool seen = std::any_of(out.begin(), out.end(), [&](const Theme& t) { return t.label == theme.label; });
        if (!seen) out.push_back(std::move(theme));
    }
    return out;
}

std::optional<std::vector<Theme>> parseStructuredThemes(std::string_view text) {
    const auto firstBrace = text.find_first_of("[{");
    if (firstBrace == std::string_view::npos) return std::nullopt;
    const auto lastBrace = text.find_last_of("]}");
    if (lastBrace == std::string_view::npos || lastBrace < firstBrace) return std::nullopt;
    json doc;
    try {
        doc = json::parse(text.substr(firstBrace, lastBrace - firstBrace + 1));
    } catch (const json::parse_error&) {
        return std::nullopt;
    }
    const json* list = &doc;
    if (doc.is_object()) {
        for (const char* key : {"criteria", "themes", "features"}) {
            if (doc.contains(key)) list = &doc[key];
        }
    }
    if (!list->is_array()) return std::nullopt;
    std::vector<Theme> themes;
    for (const auto& item : *list) {
        Theme t;
        if (item.is_string()) {
            t.label = item.get<std::string>();
        } else if (item.is_object()) {
            t.label = item.value("label", item.value("name", std::string()));
            t.description = item.value("description", std::string());
        }
        if (!trim(t.label).empty()) themes.push_back(std::move(t));
    }
    return themes;
}

std::vector<Theme> parseListThemes(std::string_view text) {
    static const std::regex kItem(R"(^\s*(?:\d+[.)]|[-*•])\s+(.+?)\s*$)");
    std::vector<Theme> themes;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        std::smatch m;
        if (!std::regex_match(line, m, kItem)) continue;
        std::string body = m[1].str();
        body.erase(std::remove(body.begin(), body.end(), '*'), body.end());
        Theme t;
        const auto colon = body.find(':');
        const auto dash = body.find(" - ");
        const auto cut = std::min(colon, dash);
        if (cut != std::string::npos) {
            t.label = trim(body.substr(0, cut));
            t.description = trim(body.substr(cut + (cut == colon ? 1 : 3)));
        } else {
            t.label = trim(body);
        }
        if (!t.label.empty()) themes.push_back(std::move(t));
    }
    return themes;
}

}  // namespace

std::vector<Theme> parseThemes(std::string_view text) {
    if (auto structured = parseStructuredThemes(text)) return dedupe(std::move(*structured));
    auto listed = parseListThemes(text);
    if (listed.empty()) throw zeroshot::ParseError("no criteria found in summary reply");
    return dedupe(std::move(listed));
}

std::vector<Theme> summarizeThemes(const std::vector<std::string>& reasonings, const llm::ModelParams& params,
                                   llm::Gateway& gateway) {
    if (reasonings.empty()) throw DiscoveryError("summarize_themes needs at least one reasoning statement");
    const llm::MessageList original = summaryMessages(reasonings);
    llm::MessageList messages = original;
    std::string problem;
    for (int attempt = 0; attempt <= params.maxRetries; ++attempt) {
        const auto exchange = gateway.complete(params, messages);
        try {
            return parseThemes(exchange.responseText);
        } catch (const zeroshot::ParseError& e) {
            problem = e.what();
            messages = zeroshot::repairMessages(original, exchange.responseText, problem, kSummaryFormat);
        }
    }
    throw DiscoveryError("summary reply unparseable after " + std::to_string(params.maxRetries + 1) +
                         " attempts: " + problem);
}

std::size_t mergeThemes(ThemeLedger& ledger, const std::vector<Theme>& themes, std::size_t batchIndex,
                        std::vector<std::string> postIds) {
    const std::size_t expected = ledger.batchHistory.empty() ? 1 : ledger.batchHistory.back().batchIndex + 1;
    if (batchIndex != expected) {
        throw DiscoveryError("batch index " + std::to_string(batchIndex) + " does not follow " +
                             std::to_string(expected - 1));
    }
    std::size_t added = 0;
    std::set<std::string> seenThisBatch;
    for (const auto& incoming : themes) {
        const std::string label = normalizeLabel(incoming.label);
        if (label.empty() || !seenThisBatch.insert(label).second) continue;
        auto it = std::find_if(ledger.themes.begin(), ledger.themes.end(), [&](const Theme& t) { return t.label == label; });
        if (it != ledger.themes.end()) {
            ++it->supportCount;
        } else {
            ledger.themes.push_back({label, incoming.description, 1, batchIndex});
            ++added;
        }
    }
    ledger.batchHistory.push_back({batchIndex, std::move(postIds), added});
    return added;
}

std::uint64_t batchSeed(std::uint64_t seed, std::size_t batchIndex) { return mixSeed(seed, 1000 + batchIndex); }

ThemeLedger runDiscovery(const corpus::PostCollection& posts, const corpus::SplitAssignment& splits,
                         const std::map<std::string, std::string>& reasonings, const llm::ModelParams& params,
                         llm::Gateway& gateway, const DiscoveryOptions& options) {
    if (options.maxBatches == 0) throw DiscoveryError("max_batches must be >= 1");
    std::vector<corpus::Post> train;
    for (const auto& post : posts.posts()) {
        if (splits.of(post.id) == corpus::Split::Train && reasonings.count(post.id)) train.push_back(post);
    }
    if (train.empty()) throw DiscoveryError("no training posts with zero-shot reasoning");

    ThemeLedger ledger;
    std::set<std::string> used;
    for (std::size_t batch = 1;; ++batch) {
        std::vector<corpus::Post> sample;
        try {
            sample = sampleDiscoveryBatch(train, options.perTopic, batchSeed(options.seed, batch), used);
        } catch (const DiscoveryError&) {
            if (batch == 1) throw;
            ledger.stoppingReason = "exhausted";
            break;
        }
        std::vector<std::string> ids;
        std::vector<std::string> statements;
        for (const auto& post : sample) {
            ids.push_back(post.id);
            statements.push_back(reasonings.at(post.id));
            used.insert(post.id);
        }
        const auto themes = summarizeThemes(statements, params, gateway);
        const std::size_t added = mergeThemes(ledger, themes, batch, ids);
        if (added == 0) {
            ledger.stoppingReason = "saturated";
            break;
        }
        if (batch >= options.maxBatches) {
            ledger.stoppingReason = "budget";
            break;
        }
        if (options.continueHook && !options.continueHook(ledger)) {
            ledger.stoppingReason = "user";
            break;
        }
    }
    return ledger;
}

catalog::FeatureCatalog catalogSkeleton(const ThemeLedger& ledger) {
    catalog::FeatureCatalog skeleton;
    skeleton.version = "skeleton-from-discovery";
    std::set<std::string> ids;
    for (const auto& theme : ledger.themes) {
        catalog::FeatureSpec spec;
        spec.id = catalog::slugify(theme.label);
        if (spec.id.empty()) spec.id = "theme";
        std::string base = spec.id;
        for (int n = 2; !ids.insert(spec.id).second; ++n) spec.id = base + "_" + std::to_string(n);
        spec.name = theme.label;
        spec.level = llm::Level::Post;
        std::string question = "To what extent does this post exhibit the following quality: " + theme.label;
        if (!theme.description.empty()) question += " (" + theme.description + ")";
        spec.prompts = {question + "?\n\n{{instructions}}"};
        skeleton.features.push_back(std::move(spec));
    }
    return skeleton;
}

}  // namespace credlens::discovery
