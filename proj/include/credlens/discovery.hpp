#pragma once

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "credlens/catalog.hpp"
#include "credlens/corpus.hpp"
#include "credlens/llm/gateway.hpp"

namespace credlens::discovery {

class DiscoveryError : public Error {
public:
    using Error::Error;
};

struct Theme {
    std::string label;  // normalized
    std::string description;
    std::size_t supportCount = 1;
    std::size_t firstSeenBatch = 1;
};

struct BatchRecord {
    std::size_t batchIndex = 0;
    std::vector<std::string> postIds;
    std::size_t newThemeCount = 0;
};

struct ThemeLedger {
    std::vector<Theme> themes;
    std::vector<BatchRecord> batchHistory;
    std::string stoppingReason;

    nlohmann::json toJson() const;
    static ThemeLedger fromJson(const nlohmann::json& doc);
};

/// Case-fold, trim, and collapse internal whitespace.
std::string normalizeLabel(std::string_view label);

/// Instruction sent ahead of the numbered reasoning statements.
extern const std::string_view kSummaryPrompt;
extern const std::string_view kSummaryFormat;

/// `perTopic` posts per topic, drawn without replacement from posts not in
/// `exclude`. Posts are considered in id order and shuffled per topic by a
/// generator seeded from (seed, topic).
std::vector<corpus::Post> sampleDiscoveryBatch(const std::vector<corpus::Post>& trainPosts, std::size_t perTopic,
                                               std::uint64_t seed, const std::set<std::string>& exclude);

llm::MessageList summaryMessages(const std::vector<std::string>& reasonings);

/// Parses a criteria reply: `{"criteria": [{label, description}]}`, a bare
/// array of such objects, or a numbered/bulleted "Label: description" list.
/// Labels equal after normalization collapse into one theme.
std::vector<Theme> parseThemes(std::string_view text);

std::vector<Theme> summarizeThemes(const std::vector<std::string>& reasonings, const llm::ModelParams& params,
                                   llm::Gateway& gateway);

/// Folds a batch's themes into the ledger. Matching labels increment
/// support; others are appended with firstSeenBatch = batchIndex, which must
/// be one past the last recorded batch. Returns the number appended.
std::size_t mergeThemes(ThemeLedger& ledger, const std::vector<Theme>& themes, std::size_t batchIndex,
                        std::vector<std::string> postIds = {});

struct DiscoveryOptions {
    std::size_t perTopic = 10;
    std::size_t maxBatches = 5;
    std::uint64_t seed = 0;
    /// Consulted after each unsaturated batch; returning false stops with
    /// reason "user".
    std::function<bool(const ThemeLedger&)> continueHook;
};

/// Seed used for batch `batchIndex` (1-based) of a run seeded with `seed`.
std::uint64_t batchSeed(std::uint64_t seed, std::size_t batchIndex);

/// sample -> summarize -> merge until a batch adds nothing ("saturated"),
/// the batch budget is spent ("budget"), the hook declines ("user"), or a
/// later batch cannot be drawn from the remaining posts ("exhausted").
/// Only training posts with a reasoning are eligible.
ThemeLedger runDiscovery(const corpus::PostCollection& posts, const corpus::SplitAssignment& splits,
                         const std::map<std::string, std::string>& reasonings, const llm::ModelParams& params,
                         llm::Gateway& gateway, const DiscoveryOptions& options);

/// Catalog skeleton with one post-level, single-prompt entry per theme, for
/// a researcher to curate.
catalog::FeatureCatalog catalogSkeleton(const ThemeLedger& ledger);

}  // namespace credlens::discovery
