#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "credlens/catalog.hpp"
#include "credlens/common/matrix.hpp"
#include "credlens/corpus.hpp"
#include "credlens/llm/gateway.hpp"
#include "credlens/zeroshot.hpp"

namespace credlens::quantify {

class QuantifyError : public Error {
public:
    using Error::Error;
};

struct FeatureValue {
    std::string postId;
    std::string featureId;
    /// One entry per prompt; empty where that prompt never yielded a score.
    std::vector<std::optional<double>> itemScores;
    double aggregate = 0.0;
    bool missing = false;
    /// Parse problems for dropped items, aligned with itemScores.
    std::vector<std::string> itemErrors;
};

/// Reply instructions substituted for `{{instructions}}` in feature prompts.
std::string scoreInstructions(const catalog::FeatureSpec& spec);

/// Accepts `{"score": n}` (bare, fenced or in prose); otherwise the first
/// number after the word "score", otherwise the only number in the text.
/// Throws zeroshot::ParseError / OutOfRangeError.
double parseScore(std::string_view text, int scaleMin, int scaleMax);

/// Renders every prompt at the feature's level and averages the scores that
/// parse (after repair turns). If none parse the value is missing.
/// Transport failures propagate.
FeatureValue measureFeature(const corpus::Post& post, const catalog::FeatureSpec& spec, const llm::ModelParams& params,
                            llm::Gateway& gateway);

/// All (post, feature) pairs, ordered by catalog feature then post id.
std::vector<FeatureValue> measureCatalog(const corpus::PostCollection& posts, const catalog::FeatureCatalog& catalog,
                                         const llm::ModelParams& params, llm::Gateway& gateway,
                                         std::size_t threads = 4);

std::string serializeValues(const std::vector<FeatureValue>& values);
std::vector<FeatureValue> parseValues(std::string_view text);

/// items[i][n]: score of item i on observation n. Sample (n-1) variances.
/// Throws QuantifyError when k < 2, n < 2, or the item sum has no variance.
double cronbachAlpha(const std::vector<std::vector<double>>& items);

struct ReliabilityScore {
    std::string featureId;
    std::optional<double> alpha;
    std::size_t k = 0;
    std::size_t n = 0;
    double threshold = 0.7;
    bool passed = false;
};

struct ReliabilityReport {
    std::vector<ReliabilityScore> scores;
    std::vector<std::string> warnings;
    /// Features failing the gate; excluded from default column sets.
    std::set<std::string> flagged;
};

/// Alpha over rows where every item parsed, for each multi-prompt feature.
/// alpha <= threshold, or undefined alpha, flags the feature.
ReliabilityReport reliabilityGate(const std::vector<FeatureValue>& values, const catalog::FeatureCatalog& catalog);
nlohmann::json reliabilityToJson(const ReliabilityReport& report);

enum class Provenance { Gpt, Baseline, Embedding, Dummy };
std::string_view provenanceName(Provenance p);
/// Column-name prefix that encodes provenance: gpt_, base_, emb_, topic_.
std::string_view provenancePrefix(Provenance p);
Provenance provenanceOf(std::string_view column);

inline constexpr std::string_view kZeroShotColumn = "gpt_zero_shot_credibility";

/// One named column's values by post id; absent or empty entries are missing.
struct ColumnBlock {
    std::string name;
    Provenance provenance = Provenance::Gpt;
    std::map<std::string, std::optional<double>> values;
};

std::vector<ColumnBlock> gptBlocks(const std::vector<FeatureValue>& values, const catalog::FeatureCatalog& catalog);
ColumnBlock zeroShotBlock(const std::vector<zeroshot::ZeroShotResult>& results);

class FeatureMatrix {
public:
    std::vector<std::string> rowIds;
    std::vector<corpus::Split> splits;
    std::vector<corpus::Topic> topics;
    std::vector<std::string> columns;
    DenseMatrix values;
    /// 1 where the cell was imputed; same shape as values.
    std::vector<std::uint8_t> mask;

    std::size_t rows() const { return rowIds.size(); }
    std::size_t cols() const { return columns.size(); }
    std::optional<std::size_t> columnIndex(std::string_view name) const;
    bool imputed(std::size_t r, std::size_t c) const { return mask[r * columns.size() + c] != 0; }
    std::vector<std::size_t> rowsIn(corpus::Split split) const;
    std::vector<std::size_t> columnIndices(const std::vector<std::string>& names) const;
};

/// Builds columns in (provenance, name) order, appends the eight topic
/// dummies, and imputes missing cells with the column's train-split mean.
FeatureMatrix assembleMatrix(const corpus::PostCollection& posts, const corpus::SplitAssignment& splits,
                             const std::vector<ColumnBlock>& blocks);

/// Header-first CSV `post_id,split,<columns...>` and a same-shaped 0/1 mask.
std::string serializeMatrix(const FeatureMatrix& m);
std::string serializeMask(const FeatureMatrix& m);
FeatureMatrix parseMatrix(std::string_view valuesCsv, std::string_view maskCsv);
std::filesystem::path maskPathFor(const std::filesystem::path& matrixPath);
void writeMatrix(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix readMatrix(const std::filesystem::path& path);

/// Named model inputs. zero_shot is the zero-shot column alone; the others
/// include the topic dummies.
enum class ColumnSet { ZeroShot, GptFull, GptNoZeroShot, Baseline, Embedding };
std::string_view columnSetName(ColumnSet set);
std::optional<ColumnSet> parseColumnSet(std::string_view name);

/// Columns of `set` present in the matrix, excluding gated GPT features
/// (`gpt_<id>` for id in `excludedFeatures`). Throws on an empty selection.
std::vector<std::string> selectColumns(const FeatureMatrix& m, ColumnSet set,
                                       const std::set<std::string>& excludedFeatures = {});

}  // namespace credlens::quantify
