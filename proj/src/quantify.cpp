#include "credlens/quantify.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <tuple>

#include "credlens/common/csv.hpp"
#include "credlens/common/io.hpp"
#include "credlens/common/parallel.hpp"
#include "credlens/llm/prompt.hpp"
#include "credlens/llm/reply.hpp"
#include "credlens/stats.hpp"

namespace credlens::quantify {

using nlohmann::json;
using zeroshot::OutOfRangeError;
using zeroshot::ParseError;

std::string scoreInstructions(const catalog::FeatureSpec& spec) {
    const std::string lo = std::to_string(spec.scaleMin);
    const std::string hi = std::to_string(spec.scaleMax);
    return "Answer on a scale from " + lo + " (not at all) to " + hi +
           " (extremely). Reply with only a JSON object of the form {\"score\": <integer " + lo + "-" + hi + ">}.";
}

namespace {

struct NumberToken {
    double value;
    std::size_t begin;
    std::size_t end;
};

/// Numbers not glued to letters, e.g. "5", "4.5", "-2"; skips "x5" or "5th".
std::vector<NumberToken> numbersIn(std::string_view text) {
    std::vector<NumberToken> out;
    std::size_t i = 0;
    const auto digit = [&](std::size_t k) { return k < text.size() && std::isdigit(static_cast<unsigned char>(text[k])); };
    const auto word = [&](std::size_t k) {
        return k < text.size() && (std::isalnum(static_cast<unsigned char>(text[k])) || text[k] == '_');
    };
    while (i < text.size()) {
        if (!digit(i)) {
            ++i;
            continue;
        }
        std::size_t begin = i;
        std::size_t end = i;
        while (digit(end)) ++end;
        if (end < text.size() && text[end] == '.' && digit(end + 1)) {
            ++end;
            while (digit(end)) ++end;
        }
        if (begin > 0 && text[begin - 1] == '-') --begin;
        const bool leftOk = begin == 0 || !word(begin - 1);
        const bool rightOk = !word(end);
        if (leftOk && rightOk) out.push_back({parseDouble(text.substr(begin, end - begin)), begin, end});
        i = end;
    }
    return out;
}

double checkedScore(double value, int lo, int hi) {
    if (!std::isfinite(value) || value < lo || value > hi) {
        throw OutOfRangeError("score " + formatDouble(value) + " is outside [" + std::to_string(lo) + "," +
                              std::to_string(hi) + "]");
    }
    return value;
}

}  // namespace

double parseScore(std::string_view text, int scaleMin, int scaleMax) {
    if (const auto object = llm::firstJsonObject(llm::stripFences(text))) {
        try {
            const json doc = json::parse(*object);
            for (const auto& [key, value] : doc.items()) {
                if (toLower(key) != "score") continue;
                if (value.is_number()) return checkedScore(value.get<double>(), scaleMin, scaleMax);
                if (value.is_string()) return checkedScore(parseDouble(trim(value.get<std::string>())), scaleMin, scaleMax);
            }
        } catch (const json::parse_error&) {
        } catch (const OutOfRangeError&) {
            throw;
        } catch (const Error&) {
        }
    }
    const std::string lowered = toLower(text);
    const auto numbers = numbersIn(lowered);
    const auto keyword = lowered.find("score");
    if (keyword != std::string::npos) {
        for (const auto& n : numbers) {
            if (n.begin > keyword) return checkedScore(n.value, scaleMin, scaleMax);
        }
    }
    // "5 out of 7" and "5/7" carry the scale maximum as a second number
    std::vector<NumberToken> candidates;
    for (const auto& n : numbers) {
        const std::string_view before = std::string_view(lowered).substr(0, n.begin);
        std::string_view tail = before;
        while (!tail.empty() && tail.back() == ' ') tail.remove_suffix(1);
        const bool isScaleMax = tail.ends_with("out of") || tail.ends_with('/');
        if (!isScaleMax) candidates.push_back(n);
    }
    if (candidates.size() != 1) {
        throw ParseError("expected exactly one score in reply, found " + std::to_string(candidates.size()));
    }
    return checkedScore(candidates[0].value, scaleMin, scaleMax);
}

FeatureValue measureFeature(const corpus::Post& post, const catalog::FeatureSpec& spec, const llm::ModelParams& params,
                            llm::Gateway& gateway) {
    FeatureValue out;
    out.postId = post.id;
    out.featureId = spec.id;
    const std::string instructions = scoreInstructions(spec);
    const std::string reminder = "Format reminder: " + instructions;
    double sum = 0.0;
    std::size_t parsed = 0;
    for (const auto& prompt : spec.prompts) {
        const auto original = llm::renderPrompt(prompt, post, spec.level, instructions);
        auto messages = original;
        std::optional<double> score;
        std::string problem;
        for (int attempt = 0; attempt <= params.maxRetries && !score; ++attempt) {
            const auto exchange = gateway.complete(params, messages);
            try {
                score = parseScore(exchange.responseText, spec.scaleMin, spec.scaleMax);
            } catch (const ParseError& e) {
                problem = e.what();
                messages = zeroshot::repairMessages(original, exchange.responseText, problem, reminder);
            }
        }
        out.itemScores.push_back(score);
        out.itemErrors.push_back(score ? std::string() : problem);
        if (score) {
            sum += *score;
            ++parsed;
        }
    }
    out.missing = parsed == 0;
    out.aggregate = out.missing ? 0.0 : sum / static_cast<double>(parsed);
    return out;
}

std::vector<FeatureValue> measureCatalog(const corpus::PostCollection& posts, const catalog::FeatureCatalog& catalog,
                                         const llm::ModelParams& params, llm::Gateway& gateway, std::size_t threads) {
    std::vector<const corpus::Post*> ordered;
    for (const auto& p : posts.posts()) ordered.push_back(&p);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    const std::size_t nPosts = ordered.size();
    std::vector<FeatureValue> out(catalog.features.size() * nPosts);
    parallelFor(out.size(), threads, [&](std::size_t task) {
        const auto& spec = catalog.features[task / nPosts];
        out[task] = measureFeature(*ordered[task % nPosts], spec, params, gateway);
    });
    return out;
}

std::string serializeValues(const std::vector<FeatureValue>& values) {
    std::string out;
    for (const auto& v : values) {
        json items = json::array();
        for (const auto& s : v.itemScores) items.push_back(s ? json(*s) : json(nullptr));
        json doc{{"post_id", v.postId}, {"feature_id", v.featureId}, {"item_scores", items}, {"missing", v.missing}};
        doc["aggregate"] = v.missing ? json(nullptr) : json(v.aggregate);
        doc["item_errors"] = v.itemErrors;
        out += doc.dump() + "\n";
    }
    return out;
}

std::vector<FeatureValue> parseValues(std::string_view text) {
    std::vector<FeatureValue> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineNumber = 0;
    while (std::getline(in, line)) {
        ++lineNumber;
        if (trim(line).empty()) continue;
        try {
            const json doc = json::parse(line);
            FeatureValue v;
            v.postId = doc.at("post_id").get<std::string>();
            v.featureId = doc.at("feature_id").get<std::string>();
            for (const auto& s : doc.at("item_scores")) {
                v.itemScores.push_back(s.is_null() ? std::nullopt : std::optional<double>(s.get<double>()));
            }
            v.missing = doc.at("missing").get<bool>();
            v.aggregate = v.missing ? 0.0 : doc.at("aggregate").get<double>();
            v.itemErrors = doc.value("item_errors", std::vector<std::string>(v.itemScores.size()));
            out.push_back(std::move(v));
        } catch (const json::exception& e) {
            throw QuantifyError("feature values line " + std::to_string(lineNumber) + ": " + e.what());
        }
    }
    return out;
}

double cronbachAlpha(const std::vector<std::vector<double>>& items) {
    const std::size_t k = items.size();
    if (k < 2) throw QuantifyError("cronbach alpha needs at least two items");
    const std::size_t n = items[0].size();
    if (n < 2) throw QuantifyError("cronbach alpha needs at least two observations");
    std::vector<double> total(n, 0.0);
    double itemVariance = 0.0;
    for (const auto& item : items) {
        if (item.size() != n) throw QuantifyError("cronbach alpha: items differ in length");
        itemVariance += stats::sampleVariance(item);
        for (std::size_t i = 0; i < n; ++i) total[i] += item[i];
    }
    const double totalVariance = stats::sampleVariance(total);
    if (!(totalVariance > 0.0)) throw QuantifyError("cronbach alpha: item sum has zero variance");
    const double kd = static_cast<double>(k);
    return kd / (kd - 1.0) * (1.0 - itemVariance / totalVariance);
}

ReliabilityReport reliabilityGate(const std::vector<FeatureValue>& values, const catalog::FeatureCatalog& catalog) {
    ReliabilityReport report;
    for (const auto& spec : catalog.features) {
        if (!spec.subjective()) continue;
        ReliabilityScore score;
        score.featureId = spec.id;
        score.k = spec.prompts.size();
        score.threshold = spec.reliabilityThreshold;
        std::vector<std::vector<double>> items(score.k);
        for (const auto& v : values) {
            if (v.featureId != spec.id || v.missing || v.itemScores.size() != score.k) continue;
            const bool complete = std::all_of(v.itemScores.begin(), v.itemScores.end(), [](const auto& s) { return s.has_value(); });
            if (!complete) continue;
            for (std::size_t i = 0; i < score.k; ++i) items[i].push_back(*v.itemScores[i]);
        }
        score.n = items[0].size();
        try {
            score.alpha = cronbachAlpha(items);
        } catch (const QuantifyError& e) {
            report.warnings.push_back("feature '" + spec.id + "': alpha undefined (" + e.what() + ")");
        }
        score.passed = score.alpha && *score.alpha > score.threshold;
        if (score.alpha && !score.passed) {
            report.warnings.push_back("feature '" + spec.id + "': alpha " + formatDouble(*score.alpha) +
                                      " <= threshold " + formatDouble(score.threshold));
        }
        if (!score.passed) report.flagged.insert(spec.id);
        report.scores.push_back(std::move(score));
    }
    return report;
}

json reliabilityToJson(const ReliabilityReport& report) {
    json scores = json::array();
    for (const auto& s : report.scores) {
        scores.push_back({{"feature_id", s.featureId},
                          {"alpha", s.alpha ? json(*s.alpha) : json(nullptr)},
                          {"k", s.k},
                          {"n", s.n},
                          {"threshold", s.threshold},
                          {"passed", s.passed}});
    }
    return json{{"scores", scores}, {"warnings", report.warnings}, {"flagged", report.flagged}};
}

std::string_view provenanceName(Provenance p) {
    switch (p) {
        case Provenance::Gpt: return "gpt";
        case Provenance::Baseline: return "baseline";
        case Provenance::Embedding: return "embedding";
        case Provenance::Dummy: return "dummy";
    }
    return "?";
}

std::string_view provenancePrefix(Provenance p) {
    switch (p) {
        case Provenance::Gpt: return "gpt_";
        case Provenance::Baseline: return "base_";
        case Provenance::Embedding: return "emb_";
        case Provenance::Dummy: return "topic_";
    }
    return "?";
}

Provenance provenanceOf(std::string_view column) {
    for (auto p : {Provenance::Gpt, Provenance::Baseline, Provenance::Embedding, Provenance::Dummy}) {
        if (column.starts_with(provenancePrefix(p))) return p;
    }
    throw QuantifyError("column '" + std::string(column) + "' has no provenance prefix");
}

std::vector<ColumnBlock> gptBlocks(const std::vector<FeatureValue>& values, const catalog::FeatureCatalog& catalog) {
    std::vector<ColumnBlock> blocks;
    std::map<std::string, std::size_t> byFeature;
    for (const auto& spec : catalog.features) {
        byFeature[spec.id] = blocks.size();
        blocks.push_back({"gpt_" + spec.id, Provenance::Gpt, {}});
    }
    for (const auto& v : values) {
        const auto it = byFeature.find(v.featureId);
        if (it == byFeature.end()) throw QuantifyError("value for feature '" + v.featureId + "' not in catalog");
        blocks[it->second].values[v.postId] = v.missing ? std::nullopt : std::optional<double>(v.aggregate);
    }
    return blocks;
}

ColumnBlock zeroShotBlock(const std::vector<zeroshot::ZeroShotResult>& results) {
    ColumnBlock block{std::string(kZeroShotColumn), Provenance::Gpt, {}};
    for (const auto& r : results) block.values[r.postId] = r.combined;
    return block;
}

std::optional<std::size_t> FeatureMatrix::columnIndex(std::string_view name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) return std::nullopt;
    return static_cast<std::size_t>(it - columns.begin());
}

std::vector<std::size_t> FeatureMatrix::rowsIn(corpus::Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < splits.size(); ++r)
        if (splits[r] == split) out.push_back(r);
    return out;
}

std::vector<std::size_t> FeatureMatrix::columnIndices(const std::vector<std::string>& names) const {
    std::vector<std::size_t> out;
    for (const auto& name : names) {
        const auto idx = columnIndex(name);
        if (!idx) throw QuantifyError("matrix has no column '" + name + "'");
        out.push_back(*idx);
    }
    return out;
}

namespace {

std::string dummyName(corpus::Topic t) { return "topic_" + std::string(corpus::topicName(t)); }

bool columnOrder(const std::pair<Provenance, std::string>& a, const std::pair<Provenance, std::string>& b) {
    return std::tie(a.first, a.second) < std::tie(b.first, b.second);
}

}  // namespace

FeatureMatrix assembleMatrix(const corpus::PostCollection& posts, const corpus::SplitAssignment& splits,
                             const std::vector<ColumnBlock>& blocks) {
    if (blocks.empty()) throw QuantifyError("empty column selection");
    std::map<std::string, const ColumnBlock*> byName;
    for (const auto& block : blocks) {
        if (block.provenance == Provenance::Dummy) throw QuantifyError("topic dummies are added automatically");
        if (!block.name.starts_with(provenancePrefix(block.provenance))) {
            throw QuantifyError("column '" + block.name + "' must start with '" +
                                std::string(provenancePrefix(block.provenance)) + "'");
        }
        if (!byName.emplace(block.name, &block).second) throw QuantifyError("duplicate column '" + block.name + "'");
        for (const auto& [id, value] : block.values) {
            if (!posts.contains(id)) throw QuantifyError("column '" + block.name + "': unknown post_id '" + id + "'");
            if (value && !std::isfinite(*value)) {
                throw QuantifyError("column '" + block.name + "': non-finite value for '" + id + "'");
            }
        }
    }

    std::vector<std::pair<Provenance, std::string>> order;
    for (const auto& block : blocks) order.emplace_back(block.provenance, block.name);
    for (auto t : corpus::kAllTopics) order.emplace_back(Provenance::Dummy, dummyName(t));
    std::sort(order.begin(), order.end(), columnOrder);

    FeatureMatrix m;
    for (const auto& p : posts.posts()) m.rowIds.push_back(p.id);
    std::sort(m.rowIds.begin(), m.rowIds.end());
    for (const auto& id : m.rowIds) {
        m.splits.push_back(splits.of(id));
        m.topics.push_back(posts.at(id).topic);
    }
    for (const auto& [prov, name] : order) m.columns.push_back(name);

    const std::size_t nRows = m.rowIds.size();
    const std::size_t nCols = m.columns.size();
    m.values = DenseMatrix(nRows, nCols);
    m.mask.assign(nRows * nCols, 0);
    for (std::size_t c = 0; c < nCols; ++c) {
        const auto& [prov, name] = order[c];
        if (prov == Provenance::Dummy) {
            for (std::size_t r = 0; r < nRows; ++r) m.values(r, c) = dummyName(m.topics[r]) == name ? 1.0 : 0.0;
            continue;
        }
        const ColumnBlock& block = *byName.at(name);
        double trainSum = 0.0;
        std::size_t trainCount = 0;
        std::vector<std::size_t> holes;
        for (std::size_t r = 0; r < nRows; ++r) {
            const auto it = block.values.find(m.rowIds[r]);
            if (it == block.values.end() || !it->second) {
                holes.push_back(r);
                continue;
            }
            m.values(r, c) = *it->second;
            if (m.splits[r] == corpus::Split::Train) {
                trainSum += *it->second;
                ++trainCount;
            }
        }
        if (holes.empty()) continue;
        if (trainCount == 0) throw QuantifyError("column '" + name + "' has no training values to impute from");
        const double fill = trainSum / static_cast<double>(trainCount);
        for (auto r : holes) {
            m.values(r, c) = fill;
            m.mask[r * nCols + c] = 1;
        }
    }
    return m;
}

std::string serializeMatrix(const FeatureMatrix& m) {
    std::vector<std::string> header{"post_id", "split"};
    header.insert(header.end(), m.columns.begin(), m.columns.end());
    std::string out = csv::formatRow(header);
    std::vector<std::string> fields;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        fields = {m.rowIds[r], std::string(corpus::splitName(m.splits[r]))};
        for (std::size_t c = 0; c < m.cols(); ++c) fields.push_back(formatDouble(m.values(r, c)));
        out += csv::formatRow(fields);
    }
    return out;
}

std::string serializeMask(const FeatureMatrix& m) {
    std::vector<std::string> header{"post_id"};
    header.insert(header.end(), m.columns.begin(), m.columns.end());
    std::string out = csv::formatRow(header);
    std::vector<std::string> fields;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        fields = {m.rowIds[r]};
        for (std::size_t c = 0; c < m.cols(); ++c) fields.push_back(m.imputed(r, c) ? "1" : "0");
        out += csv::formatRow(fields);
    }
    return out;
}

FeatureMatrix parseMatrix(std::string_view valuesCsv, std::string_view maskCsv) {
    const auto values = csv::parse(valuesCsv);
    const auto mask = csv::parse(maskCsv);
    if (values.header.size() < 2 || values.header[0] != "post_id" || values.header[1] != "split") {
        throw QuantifyError("matrix header must start with post_id,split");
    }
    FeatureMatrix m;
    m.columns.assign(values.header.begin() + 2, values.header.end());
    std::vector<std::string> expectedMask{"post_id"};
    expectedMask.insert(expectedMask.end(), m.columns.begin(), m.columns.end());
    if (mask.header != expectedMask) throw QuantifyError("mask header does not match matrix columns");
    if (mask.rows.size() != values.rows.size()) throw QuantifyError("mask row count does not match matrix");

    const std::size_t nCols = m.columns.size();
    m.values = DenseMatrix(values.rows.size(), nCols);
    m.mask.assign(values.rows.size() * nCols, 0);
    std::vector<std::pair<std::size_t, corpus::Topic>> dummies;
    for (auto t : corpus::kAllTopics) {
        const auto idx = m.columnIndex(dummyName(t));
        if (!idx) throw QuantifyError("matrix lacks dummy column " + dummyName(t));
        dummies.emplace_back(*idx, t);
    }
    for (std::size_t r = 0; r < values.rows.size(); ++r) {
        const auto& row = values.rows[r];
        const auto& maskRow = mask.rows[r];
        const std::string where = "matrix row " + std::to_string(r + 1) + ": ";
        if (row.size() != nCols + 2 || maskRow.size() != nCols + 1) throw QuantifyError(where + "wrong field count");
        if (maskRow[0] != row[0]) throw QuantifyError(where + "mask post_id mismatch");
        m.rowIds.push_back(row[0]);
        const auto split = corpus::parseSplit(row[1]);
        if (!split) throw QuantifyError(where + "unknown split '" + row[1] + "'");
        m.splits.push_back(*split);
        for (std::size_t c = 0; c < nCols; ++c) {
            m.values(r, c) = parseDouble(row[c + 2]);
            if (maskRow[c + 1] != "0" && maskRow[c + 1] != "1") throw QuantifyError(where + "mask must be 0/1");
            m.mask[r * nCols + c] = maskRow[c + 1] == "1";
        }
        std::optional<corpus::Topic> topic;
        for (const auto& [idx, t] : dummies) {
            if (m.values(r, idx) == 1.0) {
                if (topic) throw QuantifyError(where + "more than one topic dummy set");
                topic = t;
            } else if (m.values(r, idx) != 0.0) {
                throw QuantifyError(where + "topic dummy must be 0 or 1");
            }
        }
        if (!topic) throw QuantifyError(where + "no topic dummy set");
        m.topics.push_back(*topic);
    }
    return m;
}

std::filesystem::path maskPathFor(const std::filesystem::path& matrixPath) {
    auto p = matrixPath;
    p.replace_extension(".mask.csv");
    return p;
}

void writeMatrix(const FeatureMatrix& m, const std::filesystem::path& path) {
    writeFileAtomic(path, serializeMatrix(m));
    writeFileAtomic(maskPathFor(path), serializeMask(m));
}

FeatureMatrix readMatrix(const std::filesystem::path& path) {
    return parseMatrix(readTextFile(path), readTextFile(maskPathFor(path)));
}

std::string_view columnSetName(ColumnSet set) {
    switch (set) {
        case ColumnSet::ZeroShot: return "zero_shot";
        case ColumnSet::GptFull: return "gpt_full";
        case ColumnSet::GptNoZeroShot: return "gpt_no_zero_shot";
        case ColumnSet::Baseline: return "baseline";
        case ColumnSet::Embedding: return "embedding";
    }
    return "?";
}

std::optional<ColumnSet> parseColumnSet(std::string_view name) {
    for (auto s : {ColumnSet::ZeroShot, ColumnSet::GptFull, ColumnSet::GptNoZeroShot, ColumnSet::Baseline,
                   ColumnSet::Embedding}) {
        if (columnSetName(s) == name) return s;
    }
    return std::nullopt;
}

std::vector<std::string> selectColumns(const FeatureMatrix& m, ColumnSet set,
                                       const std::set<std::string>& excludedFeatures) {
    std::vector<std::string> out;
    if (set == ColumnSet::ZeroShot) {
        if (!m.columnIndex(kZeroShotColumn)) throw QuantifyError("matrix has no zero-shot column");
        return {std::string(kZeroShotColumn)};
    }
    std::size_t features = 0;
    for (const auto& name : m.columns) {
        const Provenance p = provenanceOf(name);
        bool keep = false;
        switch (set) {
            case ColumnSet::GptFull:
            case ColumnSet::GptNoZeroShot:
                keep = p == Provenance::Gpt && !excludedFeatures.count(name.substr(4)) &&
                       !(set == ColumnSet::GptNoZeroShot && name == kZeroShotColumn);
                break;
            case ColumnSet::Baseline: keep = p == Provenance::Baseline; break;
            case ColumnSet::Embedding: keep = p == Provenance::Embedding; break;
            case ColumnSet::ZeroShot: break;
        }
        if (keep) ++features;
        if (keep || p == Provenance::Dummy) out.push_back(name);
    }
    if (features == 0) throw QuantifyError("column set '" + std::string(columnSetName(set)) + "' selects no features");
    return out;
}

}  // namespace credlens::quantify
