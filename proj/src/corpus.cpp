#include "credlens/corpus.hpp"

#include <json.hpp>

#include <set>
#include <sstream>

#include "credlens/common/csv.hpp"
#include "credlens/common/io.hpp"
#include "credlens/common/rng.hpp"

namespace credlens::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kTopicCount> kTopicNames = {
    "climate_change", "gmo_food",           "covid19",           "vaccines",
    "general_health", "us_election_2020",   "russo_ukrainian_war", "israeli_palestinian_conflict",
};

}  // namespace

std::string_view topicName(Topic topic) { return kTopicNames[topicIndex(topic)]; }

std::optional<Topic> parseTopic(std::string_view name) {
    for (std::size_t i = 0; i < kTopicCount; ++i) {
        if (kTopicNames[i] == name) return kAllTopics[i];
    }
    return std::nullopt;
}

PostCollection::PostCollection(std::vector<Post> posts) : posts_(std::move(posts)) {
    for (std::size_t i = 0; i < posts_.size(); ++i) {
        if (!index_.emplace(posts_[i].id, i).second) throw CorpusError("duplicate post id '" + posts_[i].id + "'");
    }
}

const Post* PostCollection::find(std::string_view id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : &posts_[it->second];
}

const Post& PostCollection::at(std::string_view id) const {
    const Post* post = find(id);
    if (!post) throw CorpusError("unknown post id '" + std::string(id) + "'");
    return *post;
}

std::array<std::size_t, kTopicCount> PostCollection::topicCounts() const {
    std::array<std::size_t, kTopicCount> counts{};
    for (const auto& post : posts_) ++counts[topicIndex(post.topic)];
    return counts;
}

PostCollection parsePosts(std::string_view text, const fs::path& baseDir) {
    std::vector<Post> posts;
    std::set<std::string, std::less<>> seen;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineNumber = 0;
    while (std::getline(in, line)) {
        ++lineNumber;
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(lineNumber);
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw CorpusError(where + ": malformed record: " + e.what());
        }
        if (!record.is_object()) throw CorpusError(where + ": malformed record: expected an object");
        for (const auto& [key, value] : record.items()) {
            if (key != "id" && key != "topic" && key != "caption" && key != "image_path" && key != "external_scores") {
                throw CorpusError(where + ": malformed record: unknown field '" + key + "'");
            }
        }
        auto requireString = [&](const char* field) -> std::string {
            if (!record.contains(field) || !record[field].is_string()) {
                throw CorpusError(where + ": malformed record: field '" + field + "' must be a string");
            }
            return record[field].get<std::string>();
        };
        Post post;
        post.id = requireString("id");
        if (post.id.empty()) throw CorpusError(where + ": malformed record: empty id");
        const std::string topicText = requireString("topic");
        const auto topic = parseTopic(topicText);
        if (!topic) throw CorpusError(where + ": unknown topic '" + topicText + "'");
        post.topic = *topic;
        post.caption = requireString("caption");
        const fs::path image = requireString("image_path");
        post.imagePath = image.is_absolute() ? image : fs::absolute(baseDir / image).lexically_normal();
        if (!fs::is_regular_file(post.imagePath)) {
            throw CorpusError(where + ": unresolvable image_ref '" + image.string() + "' for post '" + post.id + "'");
        }
        if (record.contains("external_scores")) {
            const auto& scores = record["external_scores"];
            if (!scores.is_object()) throw CorpusError(where + ": malformed record: external_scores must be an object");
            for (const auto& [name, value] : scores.items()) {
                if (!value.is_number()) {
                    throw CorpusError(where + ": malformed record: external score '" + name + "' is not numeric");
                }
                post.externalScores[name] = value.get<double>();
            }
        }
        if (!seen.insert(post.id).second) throw CorpusError(where + ": duplicate id '" + post.id + "'");
        posts.push_back(std::move(post));
    }
    return PostCollection(std::move(posts));
}

PostCollection ingestPosts(const fs::path& path) {
    if (!fs::exists(path)) throw CorpusError("corpus file not found: " + path.string());
    return parsePosts(readTextFile(path), fs::absolute(path).parent_path());
}

void validateTriple(const RatingTriple& triple) {
    for (int value : {triple.credible, triple.accurate, triple.believable}) {
        if (value < 1 || value > 7) throw CorpusError("rating " + std::to_string(value) + " outside [1,7]");
    }
}

std::vector<HumanAnnotation> parseAnnotations(std::string_view text, const PostCollection& posts) {
    const csv::Table table = csv::parse(text);
    const std::size_t postCol = table.column("post_id");
    const std::size_t raterCol = table.column("rater_id");
    const std::size_t credCol = table.column("credible");
    const std::size_t accCol = table.column("accurate");
    const std::size_t belCol = table.column("believable");

    std::vector<HumanAnnotation> out;
    out.reserve(table.rows.size());
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = "annotations line " + std::to_string(table.lineNumbers[r]);
        if (row.size() != table.header.size()) throw CorpusError(where + ": expected " +
                                                                 std::to_string(table.header.size()) + " fields");
        HumanAnnotation a;
        a.postId = row[postCol];
        a.raterId = row[raterCol];
        if (!posts.contains(a.postId)) throw CorpusError(where + ": unknown post id '" + a.postId + "'");
        try {
            a.triple.credible = static_cast<int>(parseInteger(row[credCol]));
            a.triple.accurate = static_cast<int>(parseInteger(row[accCol]));
            a.triple.believable = static_cast<int>(parseInteger(row[belCol]));
            validateTriple(a.triple);
        } catch (const Error& e) {
            throw CorpusError(where + ": " + e.what());
        }
        if (!seen.emplace(a.postId, a.raterId).second) {
            throw CorpusError(where + ": duplicate rating of post '" + a.postId + "' by rater '" + a.raterId + "'");
        }
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<HumanAnnotation> loadAnnotations(const fs::path& path, const PostCollection& posts) {
    return parseAnnotations(readTextFile(path), posts);
}

std::map<std::string, double> aggregateHumanScores(const PostCollection& posts,
                                                   const std::vector<HumanAnnotation>& annotations) {
    struct Sums {
        double credible = 0, accurate = 0, believable = 0;
        std::size_t k = 0;
    };
    std::map<std::string, Sums, std::less<>> sums;
    for (const auto& a : annotations) {
        if (!posts.contains(a.postId)) throw CorpusError("annotation for unknown post '" + a.postId + "'");
        auto& s = sums[a.postId];
        s.credible += a.triple.credible;
        s.accurate += a.triple.accurate;
        s.believable += a.triple.believable;
        ++s.k;
    }
    std::map<std::string, double> scores;
    for (const auto& post : posts.posts()) {
        const auto it = sums.find(post.id);
        if (it == sums.end()) throw CorpusError("post '" + post.id + "' has no annotations");
        const double k = static_cast<double>(it->second.k);
        const double dims = it->second.credible / k + it->second.accurate / k + it->second.believable / k;
        scores[post.id] = dims / 3.0;
    }
    return scores;
}

std::string_view splitName(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    return "train";
}

std::optional<Split> parseSplit(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "validation") return Split::Validation;
    if (name == "test") return Split::Test;
    return std::nullopt;
}

Split SplitAssignment::of(std::string_view postId) const {
    const auto it = assignments.find(std::string(postId));
    if (it == assignments.end()) throw CorpusError("post '" + std::string(postId) + "' has no split assignment");
    return it->second;
}

std::size_t SplitAssignment::count(Split split) const {
    std::size_t n = 0;
    for (const auto& [id, s] : assignments) n += s == split;
    return n;
}

std::vector<std::string> SplitAssignment::idsIn(Split split) const {
    std::vector<std::string> ids;
    for (const auto& [id, s] : assignments) {
        if (s == split) ids.push_back(id);
    }
    return ids;
}

SplitAssignment makeSplits(const PostCollection& posts, std::uint64_t seed, std::size_t perTopicHoldout,
                           std::size_t nHoldoutSets) {
    if (nHoldoutSets != 1 && nHoldoutSets != 2) throw CorpusError("n_holdout_sets must be 1 or 2");
    std::array<std::vector<std::string>, kTopicCount> byTopic;
    for (const auto& post : posts.posts()) byTopic[topicIndex(post.topic)].push_back(post.id);

    SplitAssignment out;
    out.seed = seed;
    out.perTopicHoldout = perTopicHoldout;
    Rng rng(seed);
    for (std::size_t t = 0; t < kTopicCount; ++t) {
        auto& ids = byTopic[t];
        if (ids.size() <= nHoldoutSets * perTopicHoldout) {
            throw CorpusError("insufficient posts in topic '" + std::string(topicName(kAllTopics[t])) + "': " +
                              std::to_string(ids.size()) + " posts, need more than " +
                              std::to_string(nHoldoutSets * perTopicHoldout));
        }
        rng.shuffle(ids);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            Split split = Split::Train;
            if (nHoldoutSets == 2) {
                if (i < perTopicHoldout) split = Split::Validation;
                else if (i < 2 * perTopicHoldout) split = Split::Test;
            } else if (i < perTopicHoldout) {
                split = Split::Test;
            }
            out.assignments[ids[i]] = split;
        }
    }
    return out;
}

std::string serializeSplits(const SplitAssignment& splits) {
    json doc;
    doc["seed"] = splits.seed;
    doc["per_topic_holdout"] = splits.perTopicHoldout;
    doc["rng"] = std::string(Rng::kAlgorithm);
    json assignments = json::object();
    for (const auto& [id, split] : splits.assignments) assignments[id] = std::string(splitName(split));
    doc["assignments"] = std::move(assignments);
    return doc.dump(2) + "\n";
}

SplitAssignment parseSplits(std::string_view text) {
    SplitAssignment out;
    try {
        const json doc = json::parse(text);
        out.seed = doc.at("seed").get<std::uint64_t>();
        out.perTopicHoldout = doc.value("per_topic_holdout", std::size_t{0});
        for (const auto& [id, value] : doc.at("assignments").items()) {
            const auto split = parseSplit(value.get<std::string>());
            if (!split) throw CorpusError("unknown split '" + value.get<std::string>() + "' for post '" + id + "'");
            out.assignments[id] = *split;
        }
    } catch (const json::exception& e) {
        throw CorpusError(std::string("malformed splits file: ") + e.what());
    }
    return out;
}

}  // namespace credlens::corpus
