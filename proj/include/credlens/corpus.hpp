#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "credlens/common/error.hpp"

namespace credlens::corpus {

class CorpusError : public Error {
public:
    using Error::Error;
};

/// The closed set of issue domains a post can belong to.
enum class Topic : std::uint8_t {
    ClimateChange,
    GmoFood,
    Covid19,
    Vaccines,
    GeneralHealth,
    UsElection2020,
    RussoUkrainianWar,
    IsraeliPalestinianConflict,
};

inline constexpr std::size_t kTopicCount = 8;
inline constexpr std::array<Topic, kTopicCount> kAllTopics = {
    Topic::ClimateChange,  Topic::GmoFood,        Topic::Covid19,           Topic::Vaccines,
    Topic::GeneralHealth,  Topic::UsElection2020, Topic::RussoUkrainianWar, Topic::IsraeliPalestinianConflict,
};

std::string_view topicName(Topic topic);
std::optional<Topic> parseTopic(std::string_view name);
inline std::size_t topicIndex(Topic topic) { return static_cast<std::size_t>(topic); }

struct Post {
    std::string id;
    Topic topic = Topic::ClimateChange;
    std::string caption;
    /// Resolved absolute path of the post's single image.
    std::filesystem::path imagePath;
    /// Scores from detectors that run outside this toolkit (faces, OCR, ...).
    std::map<std::string, double> externalScores;
};

/// Posts in file order plus an id index. Immutable after load.
class PostCollection {
public:
    PostCollection() = default;
    explicit PostCollection(std::vector<Post> posts);

    const std::vector<Post>& posts() const { return posts_; }
    std::size_t size() const { return posts_.size(); }
    const Post& at(std::string_view id) const;
    const Post* find(std::string_view id) const;
    bool contains(std::string_view id) const { return find(id) != nullptr; }
    std::array<std::size_t, kTopicCount> topicCounts() const;

private:
    std::vector<Post> posts_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// Reads JSON-lines posts `{id, topic, caption, image_path, external_scores?}`.
/// Relative image paths resolve against the corpus file's directory.
PostCollection ingestPosts(const std::filesystem::path& path);
/// Same as ingestPosts on in-memory text; `baseDir` anchors relative images.
PostCollection parsePosts(std::string_view text, const std::filesystem::path& baseDir);

struct RatingTriple {
    int credible = 0;
    int accurate = 0;
    int believable = 0;
};

void validateTriple(const RatingTriple& triple);

struct HumanAnnotation {
    std::string postId;
    std::string raterId;
    RatingTriple triple;
};

/// Reads the annotation table (post_id, rater_id, credible, accurate,
/// believable). Every post id must exist in `posts`; (post, rater) pairs are
/// unique. Extra columns are ignored.
std::vector<HumanAnnotation> loadAnnotations(const std::filesystem::path& path, const PostCollection& posts);
std::vector<HumanAnnotation> parseAnnotations(std::string_view text, const PostCollection& posts);

/// Post-level credibility: mean of the three per-dimension rater means.
/// Every post in `posts` must have at least one annotation.
std::map<std::string, double> aggregateHumanScores(const PostCollection& posts,
                                                   const std::vector<HumanAnnotation>& annotations);

enum class Split : std::uint8_t { Train, Validation, Test };
std::string_view splitName(Split split);
std::optional<Split> parseSplit(std::string_view name);

struct SplitAssignment {
    std::uint64_t seed = 0;
    std::size_t perTopicHoldout = 0;
    std::map<std::string, Split> assignments;

    Split of(std::string_view postId) const;
    std::size_t count(Split split) const;
    std::vector<std::string> idsIn(Split split) const;
};

/// Per topic, shuffles the topic's posts (file order) with a seeded generator
/// and assigns the first `perTopicHoldout` to validation, the next to test
/// (nHoldoutSets = 2), and the rest to train. With nHoldoutSets = 1 only a
/// test holdout is drawn. Each topic must hold more than
/// nHoldoutSets * perTopicHoldout posts.
SplitAssignment makeSplits(const PostCollection& posts, std::uint64_t seed, std::size_t perTopicHoldout = 50,
                           std::size_t nHoldoutSets = 2);

std::string serializeSplits(const SplitAssignment& splits);
SplitAssignment parseSplits(std::string_view text);

}  // namespace credlens::corpus
