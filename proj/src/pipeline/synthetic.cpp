#include "credlens/pipeline/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <set>

#include "credlens/baseline.hpp"
#include "credlens/catalog.hpp"
#include "credlens/common/csv.hpp"
#include "credlens/common/io.hpp"
#include "credlens/common/rng.hpp"
#include "credlens/corpus.hpp"
#include "credlens/discovery.hpp"
#include "credlens/llm/gateway.hpp"
#include "credlens/pipeline/config.hpp"
#include "credlens/quantify.hpp"
#include "credlens/zeroshot.hpp"

namespace credlens::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Latent slots; every post gets an integer 1..7 in each.
enum Latent { Source, Emotion, Specificity, Professional, Consistency, Sensational, CallToAction, kLatentCount };

struct PlantedFeature {
    const char* id;
    const char* name;
    llm::Level level;
    std::vector<std::string> prompts;
    int latent;  // -1: items are independent noise
};

std::vector<PlantedFeature> plantedFeatures() {
    using llm::Level;
    return {
        {"source_citation", "Source citation", Level::Caption,
         {"Source check. Consider the caption of a social media post: \"{{caption}}\". To what extent does the caption "
          "attribute its claim to a named, verifiable source? {{instructions}}"},
         Source},
        {"emotional_language", "Emotional language", Level::Caption,
         {"Tone check. Consider the caption of a social media post: \"{{caption}}\". How emotionally charged is its "
          "wording? {{instructions}}"},
         Emotion},
        {"claim_specificity", "Claim specificity", Level::Caption,
         {"Specificity check. Consider the caption of a social media post: \"{{caption}}\". How specific and checkable "
          "is the claim (numbers, dates, places)? {{instructions}}"},
         Specificity},
        {"call_to_action", "Call to action", Level::Caption,
         {"Call-to-action check. Consider the caption of a social media post: \"{{caption}}\". How strongly does it "
          "urge readers to share or act? {{instructions}}"},
         CallToAction},
        {"image_professionalism", "Image professionalism", Level::Image,
         {"Image quality check. Look at the attached image from a social media post. How professionally produced does "
          "it look? {{instructions}}"},
         Professional},
        {"visual_clutter", "Visual clutter", Level::Image,
         {"Clutter check A. Look at the attached image from a social media post. How busy or cluttered is it? "
          "{{instructions}}",
          "Clutter check B. Look at the attached image from a social media post. How many competing visual elements "
          "does it contain? {{instructions}}"},
         -1},
        {"image_caption_consistency", "Image-caption consistency", Level::Post,
         {"Consistency check. A social media post has the caption \"{{caption}}\" and the attached image. How well does "
          "the image support the caption? {{instructions}}"},
         Consistency},
        {"sensationalism", "Sensationalism", Level::Post,
         {"Sensationalism check A. A social media post has the caption \"{{caption}}\" and the attached image. How "
          "sensational is the post? {{instructions}}",
          "Sensationalism check B. A social media post has the caption \"{{caption}}\" and the attached image. How "
          "exaggerated are its claims? {{instructions}}",
          "Sensationalism check C. A social media post has the caption \"{{caption}}\" and the attached image. How much "
          "does it read like clickbait? {{instructions}}"},
         Sensational},
    };
}

/// Planted human-score function; s_j = (L_j - 4) / 2.
struct PlantedModel {
    double intercept = 4.0;
    std::array<double, kLatentCount> linear{0.50, -0.40, 0.30, 0.30, 0.35, -0.20, 0.0};
    double sourceByConsistency = 0.35;
    /// Applied when the picture clearly does not belong to the caption (L <= 2).
    double mismatchPenalty = 0.6;
    /// Specificity only helps when the image looks professional (L >= 5).
    double specificityIfProfessional = 0.30;
    double topicSd = 0.15;

    double operator()(const std::array<int, kLatentCount>& L, double topicEffect) const {
        std::array<double, kLatentCount> s{};
        for (int j = 0; j < kLatentCount; ++j) s[j] = (L[j] - 4) / 2.0;
        double h = intercept + topicEffect;
        for (int j = 0; j < kLatentCount; ++j) h += linear[j] * s[j];
        h += sourceByConsistency * s[Source] * s[Consistency];
        if (L[Consistency] <= 2) h -= mismatchPenalty;
        if (L[Professional] >= 5) h += specificityIfProfessional * s[Specificity];
        return h;
    }

    json toJson() const {
        const char* names[] = {"source_citation", "emotional_language", "claim_specificity", "image_professionalism",
                               "image_caption_consistency", "sensationalism", "call_to_action"};
        json lin = json::object();
        for (int j = 0; j < kLatentCount; ++j) lin[names[j]] = linear[j];
        return {{"scaled_latent", "s = (latent - 4) / 2"},
                {"intercept", intercept},
                {"linear", lin},
                {"source_citation_x_image_caption_consistency", sourceByConsistency},
                {"image_caption_consistency_le_2_penalty", mismatchPenalty},
                {"claim_specificity_if_image_professionalism_ge_5", specificityIfProfessional},
                {"topic_effect_sd", topicSd}};
    }
};

struct SynthPost {
    std::string id;
    corpus::Topic topic;
    std::array<int, kLatentCount> latent{};
    std::vector<int> clutterItems;
    std::vector<int> sensationalItems;
    double truth = 0.0;       // planted score before noise
    double zeroShotError = 0.0;
    std::string caption;
    std::string imageFile;
};

int clamp7(long v) { return static_cast<int>(std::clamp(v, 1L, 7L)); }

template <class T>
const T& pick(Rng& rng, const std::vector<T>& options) {
    return options[rng.uniformBelow(options.size())];
}

const std::map<corpus::Topic, std::vector<std::string>>& topicSubjects() {
    using corpus::Topic;
    static const std::map<Topic, std::vector<std::string>> subjects = {
        {Topic::ClimateChange, {"Sea levels", "Wildfire season", "Arctic ice cover", "Summer heat records", "River flooding"}},
        {Topic::GmoFood, {"Engineered corn yields", "GMO labelling rules", "Gene-edited rice", "Pest-resistant crops", "Seed patents"}},
        {Topic::Covid19, {"Hospital admissions", "Mask guidance", "New variant cases", "Testing capacity", "Long covid clinics"}},
        {Topic::Vaccines, {"Booster uptake", "Childhood vaccine schedules", "Vaccine side effects", "Measles outbreaks", "Flu shot supply"}},
        {Topic::GeneralHealth, {"Sugar intake", "Sleep habits", "Vitamin D levels", "Screen time", "Walking every day"}},
        {Topic::UsElection2020, {"Mail-in ballots", "Voter turnout", "Ballot counting", "Poll worker numbers", "Early voting lines"}},
        {Topic::RussoUkrainianWar, {"Grain exports", "Refugee arrivals", "Power grid repairs", "Front line shifts", "Aid convoys"}},
        {Topic::IsraeliPalestinianConflict, {"Border crossings", "Aid deliveries", "Ceasefire talks", "Hospital supplies", "Water access"}},
    };
    return subjects;
}

const std::vector<std::string> kPlaces = {"Lisbon", "Denver", "Nairobi", "Osaka", "Leeds", "Porto Alegre", "Kraków",
                                          "Halifax", "Adelaide", "Pune", "Tucson", "Ghent", "Tartu", "Cork", "Recife"};
const std::vector<std::string> kOrgs = {"the national statistics office", "a university research team", "the health ministry",
                                        "an independent audit", "the regional council", "a peer-reviewed study"};

std::string buildCaption(Rng& rng, const SynthPost& p) {
    const auto& L = p.latent;
    std::string c;
    if (rng.uniform01() < (L[Sensational] - 1) / 9.0) c += pick(rng, std::vector<std::string>{"BREAKING: ", "WOW: ", "Unbelievable: "});
    c += pick(rng, topicSubjects().at(p.topic)) + " in " + pick(rng, kPlaces);
    if (rng.uniform01() < 0.15 + 0.7 * (L[Specificity] - 1) / 6.0) {
        c += rng.uniform01() < 0.5 ? " rose " : " fell ";
        c += std::to_string(3 + rng.uniformBelow(40)) + "% since " + std::to_string(2015 + rng.uniformBelow(8));
    } else {
        c += pick(rng, std::vector<std::string>{" are changing fast", " are not what you think", " keep surprising people",
                                                " are a big deal now"});
    }
    if (rng.uniform01() < 0.1 + 0.6 * (L[Source] - 1) / 6.0) {
        c += ", according to " + pick(rng, kOrgs);
        if (L[Source] >= 6 && rng.uniform01() < 0.3) c += " https://data.example.org/r/" + std::to_string(100 + rng.uniformBelow(900));
    }
    c += ".";
    if (rng.uniform01() < (L[Emotion] - 1) / 6.0) {
        c += pick(rng, std::vector<std::string>{" This is shocking!", " Absolutely insane!", " What a disaster!",
                                                " People are furious!", " Total outrage!"});
    }
    if (rng.uniform01() < (L[CallToAction] - 1) / 7.0) {
        c += pick(rng, std::vector<std::string>{" Share this before it gets deleted!", " #wakeup", " Tell everyone you know."});
    }
    return c;
}

baseline::Image buildImage(Rng& rng, const SynthPost& p, std::uint32_t size) {
    baseline::Image img;
    img.width = img.height = size;
    img.rgb.assign(static_cast<std::size_t>(size) * size * 3, 0);
    const double top[3] = {rng.uniform(40, 220), rng.uniform(40, 220), rng.uniform(40, 220)};
    const double bottom[3] = {rng.uniform(40, 220), rng.uniform(40, 220), rng.uniform(40, 220)};
    std::vector<double> px(img.rgb.size());
    for (std::uint32_t y = 0; y < size; ++y)
        for (std::uint32_t x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) {
                const double t = static_cast<double>(y) / (size - 1);
                px[(static_cast<std::size_t>(y) * size + x) * 3 + c] = top[c] * (1 - t) + bottom[c] * t;
            }
    const std::size_t shapes = 1 + rng.uniformBelow(5);
    for (std::size_t s = 0; s < shapes; ++s) {
        const double colour[3] = {rng.uniform(0, 255), rng.uniform(0, 255), rng.uniform(0, 255)};
        const double cx = rng.uniform(0, size), cy = rng.uniform(0, size), r = rng.uniform(3, size / 3.0);
        const bool circle = rng.uniform01() < 0.5;
        for (std::uint32_t y = 0; y < size; ++y)
            for (std::uint32_t x = 0; x < size; ++x) {
                const double dx = x - cx, dy = y - cy;
                const bool inside = circle ? dx * dx + dy * dy <= r * r : std::abs(dx) <= r && std::abs(dy) <= r * 0.6;
                if (!inside) continue;
                for (int c = 0; c < 3; ++c) px[(static_cast<std::size_t>(y) * size + x) * 3 + c] = colour[c];
            }
    }
    // grain loosely tied to how professional the picture is meant to look
    const double grain = std::max(2.0, rng.uniform(6, 22) - 4.0 * (p.latent[Professional] - 4));
    for (std::size_t i = 0; i < px.size(); ++i) {
        img.rgb[i] = static_cast<std::uint8_t>(std::clamp(std::lround(px[i] + grain * rng.normal()), 0L, 255L));
    }
    return img;
}

std::string reasoningFor(const SynthPost& p) {
    const auto& L = p.latent;
    std::vector<std::pair<int, std::string>> cues;  // (salience, phrase)
    const auto cue = [&](int latent, const char* high, const char* low) {
        const int v = L[latent];
        if (v >= 5) cues.push_back({v - 4, high});
        else if (v <= 3) cues.push_back({4 - v, low});
    };
    cue(Source, "it cites a named source", "it gives no source for its claim");
    cue(Emotion, "the wording is emotionally charged", "the tone is calm and measured");
    cue(Specificity, "it quotes specific figures", "the claim is vague");
    cue(Professional, "the image looks professionally produced", "the image looks amateurish");
    cue(Consistency, "the picture matches the caption", "the picture seems unrelated to the caption");
    cue(Sensational, "it reads as sensational", "it avoids hype");
    std::stable_sort(cues.begin(), cues.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::string out = p.truth >= 4.0 ? "The post seems fairly credible because " : "The post seems not very credible because ";
    const std::size_t n = std::min<std::size_t>(cues.size(), 3);
    if (n == 0) return out + "nothing about it stands out either way.";
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) out += i + 1 == n ? " and " : ", ";
        out += cues[i].second;
    }
    return out + ".";
}

struct DiscoveryBatchReply {
    bool numbered;
    std::vector<std::pair<std::string, std::string>> criteria;
};

const std::vector<DiscoveryBatchReply>& discoveryReplies() {
    static const std::vector<DiscoveryBatchReply> replies = {
        {false,
         {{"Source citation", "whether the post names a verifiable source"},
          {"Emotional language", "how emotionally charged the wording is"},
          {"Claim specificity", "whether the claim gives checkable figures"},
          {"Image professionalism", "whether the image looks professionally produced"}}},
        {true,
         {{"source citation", "naming where the information comes from"},
          {"Image-caption consistency", "whether the picture supports the text"},
          {"Sensationalism", "hype and exaggeration in the post"},
          {"Emotional Language", "charged or calm wording"}}},
        {false,
         {{"Sensationalism", "exaggerated framing"},
          {"Claim specificity", "vague versus specific claims"},
          {"Source Citation", "presence of a named source"}}},
    };
    return replies;
}

std::string renderDiscoveryReply(const DiscoveryBatchReply& r) {
    if (r.numbered) {
        std::string out = "Common criteria:\n";
        for (std::size_t i = 0; i < r.criteria.size(); ++i) {
            out += std::to_string(i + 1) + ". " + r.criteria[i].first + ": " + r.criteria[i].second + "\n";
        }
        return out;
    }
    json items = json::array();
    for (const auto& [label, description] : r.criteria) items.push_back({{"label", label}, {"description", description}});
    return json{{"criteria", items}}.dump();
}

/// Answers every request from its content and records key -> reply.
class OracleProvider : public llm::Provider {
public:
    OracleProvider(const std::vector<SynthPost>& posts, const corpus::PostCollection& collection,
                   std::vector<PlantedFeature> features, std::uint64_t seed)
        : posts_(posts), features_(std::move(features)), seed_(seed) {
        for (std::size_t i = 0; i < posts_.size(); ++i) {
            const auto& post = collection.at(posts_[i].id);
            byCaption_.push_back({post.caption, i});
            byImage_[sha256File(post.imagePath)] = i;
        }
        // longest caption first so a caption that prefixes another never shadows it
        std::sort(byCaption_.begin(), byCaption_.end(),
                  [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
        zeroShotPrefix_ = std::string(zeroshot::kDefaultTemplate.substr(0, zeroshot::kDefaultTemplate.find("{{")));
    }

    std::string name() const override { return "synthetic-oracle"; }

    std::string send(const llm::ModelParams& params, const llm::MessageList& messages) override {
        std::lock_guard lock(mutex_);
        const std::string reply = answer(messages);
        rules_[llm::cacheKey(params, messages)] = reply;
        return reply;
    }

    json script() const {
        json rules = json::array();
        for (const auto& [key, reply] : rules_) {
            llm::MockRule rule;
            rule.key = key;
            rule.response = reply;
            rules.push_back(llm::MockProvider::ruleToJson(rule));
        }
        return {{"rules", rules}};
    }

    std::size_t ruleCount() const { return rules_.size(); }

    static constexpr std::size_t kRepairedZeroShot = 3;
    static constexpr std::size_t kMissingZeroShot = 11;
    static constexpr std::size_t kMissingFeaturePost = 5;
    static constexpr const char* kMissingFeature = "claim_specificity";

private:
    std::size_t locate(const llm::Message& m) const {
        for (const auto& part : m.parts) {
            if (part.kind != llm::Part::Kind::Image) continue;
            const auto it = byImage_.find(part.image.sha256);
            if (it != byImage_.end()) return it->second;
        }
        const std::string text = m.parts.front().text;
        for (const auto& [caption, i] : byCaption_)
            if (!caption.empty() && text.find(caption) != std::string::npos) return i;
        throw llm::PermanentProviderError("oracle: request names no known post");
    }

    std::uint64_t draw(std::size_t post, std::uint64_t salt) const { return mixSeed(mixSeed(seed_, post), salt); }

    std::string answer(const llm::MessageList& messages) {
        const auto& first = messages.front();
        const std::string text = first.parts.front().text;
        const bool repair = messages.size() > 1;
        if (text.rfind(discovery::kSummaryPrompt, 0) == 0) {
            const auto& replies = discoveryReplies();
            return renderDiscoveryReply(replies[std::min(discoveryCalls_++, replies.size() - 1)]);
        }
        const std::size_t i = locate(first);
        const SynthPost& p = posts_[i];
        if (text.rfind(zeroShotPrefix_, 0) == 0) return zeroShotReply(i, p, repair);
        for (const auto& f : features_) {
            for (std::size_t k = 0; k < f.prompts.size(); ++k) {
                const std::string prefix = f.prompts[k].substr(0, f.prompts[k].find("{{"));
                if (text.rfind(prefix, 0) == 0) return featureReply(i, p, f, k);
            }
        }
        throw llm::PermanentProviderError("oracle: unrecognised request");
    }

    std::string zeroShotReply(std::size_t i, const SynthPost& p, bool repair) const {
        if (i == kMissingZeroShot) return "I am unable to rate this post.";
        if (i == kRepairedZeroShot && !repair) return "I would rate this post as fairly credible overall.";
        Rng rng(draw(i, 0x2e70));
        const double centre = p.truth + p.zeroShotError;
        corpus::RatingTriple t;
        t.credible = clamp7(std::lround(centre + 0.4 * rng.normal()));
        t.believable = clamp7(std::lround(centre + 0.4 * rng.normal()));
        t.accurate = clamp7(std::lround(centre + 0.4 * rng.normal()));
        const std::string reasoning = reasoningFor(p);
        switch (draw(i, 0xf0) % 10) {
            case 0:
                return "```json\n" + zeroshot::renderRatingReply(t, reasoning) + "\n```";
            case 1:
                return "Credible: " + std::to_string(t.credible) + "\nBelievable: " + std::to_string(t.believable) +
                       "\nAccurate: " + std::to_string(t.accurate) + "\nReasoning: " + reasoning;
            default:
                return zeroshot::renderRatingReply(t, reasoning);
        }
    }

    std::string featureReply(std::size_t i, const SynthPost& p, const PlantedFeature& f, std::size_t item) const {
        if (i == kMissingFeaturePost && std::string(f.id) == kMissingFeature) return "The specificity is unclear.";
        const std::uint64_t salt = std::stoull(sha256Hex(std::string(f.id)).substr(0, 12), nullptr, 16) + item;
        int score;
        if (f.latent < 0) {
            score = p.clutterItems[item];
        } else if (f.latent == Sensational) {
            score = p.sensationalItems[item];
        } else {
            score = p.latent[f.latent];
            const auto jitter = draw(i, salt) % 20;  // one in ten replies is off by one
            if (jitter == 0) score = clamp7(score - 1);
            if (jitter == 1) score = clamp7(score + 1);
        }
        switch (draw(i, salt ^ 0xabcdefULL) % 8) {
            case 0: return "```json\n{\"score\": " + std::to_string(score) + "}\n```";
            case 1: return "Score: " + std::to_string(score);
            case 2: return std::to_string(score);
            default: return json{{"score", score}}.dump();
        }
    }

    const std::vector<SynthPost>& posts_;
    std::vector<PlantedFeature> features_;
    std::uint64_t seed_;
    std::vector<std::pair<std::string, std::size_t>> byCaption_;
    std::map<std::string, std::size_t> byImage_;
    std::string zeroShotPrefix_;
    std::size_t discoveryCalls_ = 0;
    std::map<std::string, std::string> rules_;
    std::mutex mutex_;
};

json syntheticConfig() {
    return {
        {"corpus", {{"posts", "posts.jsonl"}, {"annotations", "annotations.csv"}, {"embeddings", "embeddings.csv"}}},
        {"output_dir", "out"},
        {"cache_dir", "cache"},
        {"threads", 2},
        {"provider", {{"kind", "mock"}, {"mock_script", "mock_script.json"}}},
        {"seeds", {{"split", 20240601}, {"discovery", 20240602}, {"models", 20240603}}},
        {"split", {{"per_topic_holdout", 5}, {"holdout_sets", 2}}},
        {"discovery", {{"per_topic", 3}, {"max_batches", 5}}},
        {"quantify", {{"catalog", "catalog.json"}, {"exclude_unreliable", true}}},
        {"train",
         {{"feature_set", "gpt_full"},
          {"grids",
           {{"lasso", {{"lambda_path", {{"points", 20}, {"decades", 3}}}}},
            {"random_forest",
             {{"n_trees", {200}}, {"max_depth", {nullptr, 6}}, {"min_samples_leaf", {1, 3}}, {"max_features", {0.5, "sqrt"}}}},
            {"gbdt",
             {{"n_stages", {100, 200}}, {"max_depth", {2, 3}}, {"learning_rate", {0.05}}, {"subsample", {0.8, 1.0}}}}}}}},
        {"explain", {{"column_sets", {"gpt_full", "gpt_no_zero_shot"}}, {"top_k", 20}}},
    };
}

}  // namespace

SyntheticSummary generateSynthetic(const SyntheticOptions& options, const fs::path& dir) {
    if (options.perTopic < 11) throw ConfigError("synthetic corpus needs at least 11 posts per topic");
    if (options.ratersPerPost == 0 || options.ratersPerPost > options.raterPool) {
        throw ConfigError("raters per post must be between 1 and the rater pool size");
    }
    fs::create_directories(dir / "images");
    const PlantedModel planted;
    Rng rng(options.seed);

    std::array<double, corpus::kTopicCount> topicEffect{};
    for (auto& t : topicEffect) t = planted.topicSd * rng.normal();

    const std::size_t n = options.perTopic * corpus::kTopicCount;
    std::vector<SynthPost> posts(n);
    std::set<std::string> captions;
    std::string postsJsonl;
    for (std::size_t i = 0; i < n; ++i) {
        auto& p = posts[i];
        char id[32];
        std::snprintf(id, sizeof id, "p%04zu", i + 1);
        p.id = id;
        p.topic = corpus::kAllTopics[i % corpus::kTopicCount];
        for (auto& l : p.latent) l = 1 + static_cast<int>(rng.uniformBelow(7));
        for (int k = 0; k < 2; ++k) p.clutterItems.push_back(1 + static_cast<int>(rng.uniformBelow(7)));
        for (int k = 0; k < 3; ++k) {
            const double u = rng.uniform01();
            p.sensationalItems.push_back(clamp7(p.latent[Sensational] + (u < 0.15 ? -1 : u < 0.3 ? 1 : 0)));
        }
        p.truth = planted(p.latent, topicEffect[corpus::topicIndex(p.topic)]) + options.noiseSd * rng.normal();
        p.truth = std::clamp(p.truth, 1.2, 6.8);
        p.zeroShotError = options.zeroShotNoiseSd * rng.normal();
        p.caption = buildCaption(rng, p);
        for (int k = 2; !captions.insert(p.caption).second; ++k) p.caption += " (" + std::to_string(k) + ")";
        p.imageFile = "images/" + p.id + ".png";
        const auto png = baseline::encodePng(buildImage(rng, p, options.imageSize));
        writeFileAtomic(dir / p.imageFile, std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
        const json line{{"id", p.id},
                        {"topic", corpus::topicName(p.topic)},
                        {"caption", p.caption},
                        {"image_path", p.imageFile},
                        {"external_scores", {{"face_count", static_cast<double>(rng.uniformBelow(4))}}}};
        postsJsonl += line.dump() + "\n";
    }
    writeFileAtomic(dir / "posts.jsonl", postsJsonl);

    // raters: persistent leniency plus per-item noise around the planted score
    std::vector<double> leniency(options.raterPool);
    for (auto& b : leniency) b = 0.35 * rng.normal();
    std::string annotations = csv::formatRow({"post_id", "rater_id", "credible", "accurate", "believable"});
    std::size_t annotationCount = 0;
    for (const auto& p : posts) {
        std::vector<std::size_t> pool(options.raterPool);
        for (std::size_t r = 0; r < pool.size(); ++r) pool[r] = r;
        rng.shuffle(pool);
        std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<long>(options.ratersPerPost));
        std::sort(chosen.begin(), chosen.end());
        for (const auto r : chosen) {
            char rid[32];
            std::snprintf(rid, sizeof rid, "r%03zu", r + 1);
            const double c = p.truth + leniency[r];
            const auto item = [&] { return std::to_string(clamp7(std::lround(c + 0.6 * rng.normal()))); };
            const std::string credible = item(), accurate = item(), believable = item();
            annotations += csv::formatRow({p.id, rid, credible, accurate, believable});
            ++annotationCount;
        }
    }
    writeFileAtomic(dir / "annotations.csv", annotations);

    // 16-dim embeddings, weakly informative about four latents
    baseline::EmbeddingTable emb;
    emb.source = "synthetic";
    emb.dim = 16;
    for (const auto& p : posts) {
        std::vector<double> v(emb.dim);
        for (std::size_t d = 0; d < emb.dim; ++d) {
            v[d] = rng.normal();
            if (d < 4) v[d] += 0.3 * (p.latent[d] - 4) / 2.0;
            v[d] = std::round(v[d] * 1e6) / 1e6;
        }
        emb.rows[p.id] = std::move(v);
    }
    writeFileAtomic(dir / "embeddings.csv", baseline::encodeEmbeddingsCsv(emb));

    const auto features = plantedFeatures();
    catalog::FeatureCatalog cat;
    cat.version = "synthetic-v1";
    for (const auto& f : features) {
        catalog::FeatureSpec spec;
        spec.id = f.id;
        spec.name = f.name;
        spec.level = f.level;
        spec.prompts = f.prompts;
        cat.features.push_back(spec);
    }
    catalog::saveCatalog(cat, dir / "catalog.json");

    const json configDoc = syntheticConfig();
    writeFileAtomic(dir / "config.json", configDoc.dump(2) + "\n");
    const RunConfig config = configFromJson(configDoc, dir);

    // record the provider script by running the real request builders against the oracle
    const auto collection = corpus::ingestPosts(dir / "posts.jsonl");
    auto oracle = std::make_shared<OracleProvider>(posts, collection, features, mixSeed(options.seed, 0x0c1e));
    const fs::path scratch = dir / ".oracle_cache";
    fs::remove_all(scratch);
    {
        llm::GatewayOptions gopts;
        gopts.maxInFlight = 1;
        gopts.clock = [] { return std::string("1970-01-01T00:00:00Z"); };
        llm::Gateway gateway(oracle, std::make_shared<llm::ResponseCache>(scratch), gopts);
        const auto params = config.provider.modelParams();
        const auto rated = zeroshot::rateCorpus(collection, params, gateway, zeroshot::kDefaultTemplate, 1);
        std::map<std::string, std::string> reasonings;
        for (const auto& r : rated.results) reasonings[r.postId] = r.reasoning;
        const auto splits = corpus::makeSplits(collection, config.splitSeed, config.perTopicHoldout, config.holdoutSets);
        discovery::DiscoveryOptions dopts;
        dopts.perTopic = config.discoveryPerTopic;
        dopts.maxBatches = config.maxBatches;
        dopts.seed = config.discoverySeed;
        discovery::runDiscovery(collection, splits, reasonings, params, gateway, dopts);
        quantify::measureCatalog(collection, cat, params, gateway, 1);
    }
    fs::remove_all(scratch);
    writeFileAtomic(dir / "mock_script.json", oracle->script().dump(1) + "\n");

    json truth = json::array();
    const char* latentNames[] = {"source_citation", "emotional_language", "claim_specificity", "image_professionalism",
                                 "image_caption_consistency", "sensationalism", "call_to_action"};
    for (const auto& p : posts) {
        json latents = json::object();
        for (int j = 0; j < kLatentCount; ++j) latents[latentNames[j]] = p.latent[j];
        truth.push_back({{"post_id", p.id},
                         {"topic", corpus::topicName(p.topic)},
                         {"latent", latents},
                         {"visual_clutter_items", p.clutterItems},
                         {"sensationalism_items", p.sensationalItems},
                         {"planted_score", p.truth},
                         {"zero_shot_error", p.zeroShotError}});
    }
    json topics = json::object();
    for (const auto t : corpus::kAllTopics) topics[std::string(corpus::topicName(t))] = topicEffect[corpus::topicIndex(t)];
    const json plantedDoc{{"seed", options.seed},
                          {"per_topic", options.perTopic},
                          {"noise_sd", options.noiseSd},
                          {"zero_shot_noise_sd", options.zeroShotNoiseSd},
                          {"model", planted.toJson()},
                          {"topic_effects", topics},
                          {"scripted_quirks",
                           {{"zero_shot_repaired_post", posts[OracleProvider::kRepairedZeroShot].id},
                            {"zero_shot_missing_post", posts[OracleProvider::kMissingZeroShot].id},
                            {"feature_missing", {{"post", posts[OracleProvider::kMissingFeaturePost].id},
                                                 {"feature", OracleProvider::kMissingFeature}}},
                            {"unreliable_feature", "visual_clutter"}}},
                          {"posts", truth}};
    writeFileAtomic(dir / "planted.json", plantedDoc.dump(1) + "\n");

    return {n, annotationCount, oracle->ruleCount(), dir / "config.json"};
}

}  // namespace credlens::pipeline
