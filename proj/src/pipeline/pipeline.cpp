#include "credlens/pipeline/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>
#include <sstream>

#include "credlens/baseline.hpp"
#include "credlens/catalog.hpp"
#include "credlens/common/csv.hpp"
#include "credlens/common/io.hpp"
#include "credlens/corpus.hpp"
#include "credlens/eval.hpp"
#include "credlens/llm/gateway.hpp"
#include "credlens/models.hpp"
#include "credlens/pipeline/svg.hpp"
#include "credlens/quantify.hpp"
#include "credlens/shap.hpp"
#include "credlens/stats.hpp"
#include "credlens/zeroshot.hpp"

namespace credlens::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using quantify::ColumnSet;
using quantify::FeatureMatrix;

namespace {

constexpr std::string_view kStageNames[] = {"ingest",   "split", "rate",     "discover", "quantify",
                                            "baseline", "train", "evaluate", "explain",  "report"};
constexpr double kLocalAccuracyTolerance = 1e-8;
constexpr const char* kReferenceModel = "ols_zero_shot";

json readJson(const fs::path& path) {
    try {
        return json::parse(readTextFile(path));
    } catch (const json::exception& e) {
        throw StageError(path.string() + " is not valid JSON: " + e.what());
    }
}

std::string dumpJson(const json& doc) { return doc.dump(2) + "\n"; }

json optionalJson(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json distributionJson(const stats::DistributionStats& d) {
    return {{"n", d.n},
            {"mean", d.mean},
            {"sd", d.sd},
            {"skewness", optionalJson(d.skewness)},
            {"excess_kurtosis", optionalJson(d.excessKurtosis)}};
}

std::map<std::string, double> readHumanScores(const fs::path& path) {
    const auto table = csv::readFile(path);
    const auto idCol = table.column("post_id");
    const auto scoreCol = table.column("human_score");
    std::map<std::string, double> out;
    for (const auto& row : table.rows) out[row[idCol]] = parseDouble(row[scoreCol]);
    return out;
}

/// Model label prefix for a learner kind.
std::string_view kindPrefix(models::ModelKind kind) {
    switch (kind) {
        case models::ModelKind::Ols: return "ols";
        case models::ModelKind::Lasso: return "lasso";
        case models::ModelKind::RandomForest: return "rf";
        case models::ModelKind::Gbdt: return "gbdt";
    }
    return "model";
}

std::string explainLabel(ColumnSet set) {
    switch (set) {
        case ColumnSet::GptNoZeroShot: return std::string(kReducedModelLabel);
        case ColumnSet::GptFull: return "all GPT-measured features";
        case ColumnSet::Baseline: return "curated baseline features";
        case ColumnSet::Embedding: return "embedding features";
        case ColumnSet::ZeroShot: return "zero-shot rating only";
    }
    return {};
}

ColumnSet requireColumnSet(const std::string& name, const char* where) {
    const auto set = quantify::parseColumnSet(name);
    if (!set || *set == ColumnSet::ZeroShot) {
        throw ConfigError(std::string(where) + ": unusable column set '" + name + "'");
    }
    return *set;
}

/// GPT columns, then baseline / embedding columns, then the topic dummies.
FeatureMatrix joinMatrices(const FeatureMatrix& gpt, const FeatureMatrix& base) {
    if (gpt.rowIds != base.rowIds) throw StageError("quantify and baseline matrices cover different rows");
    std::vector<std::pair<const FeatureMatrix*, std::size_t>> sources;
    std::vector<std::pair<const FeatureMatrix*, std::size_t>> dummies;
    for (const auto* m : {&gpt, &base}) {
        for (std::size_t c = 0; c < m->cols(); ++c) {
            if (quantify::provenanceOf(m->columns[c]) == quantify::Provenance::Dummy) {
                if (m == &gpt) dummies.push_back({m, c});
            } else {
                sources.push_back({m, c});
            }
        }
    }
    sources.insert(sources.end(), dummies.begin(), dummies.end());
    FeatureMatrix out;
    out.rowIds = gpt.rowIds;
    out.splits = gpt.splits;
    out.topics = gpt.topics;
    out.values = DenseMatrix(gpt.rows(), sources.size());
    out.mask.assign(gpt.rows() * sources.size(), 0);
    std::set<std::string> seen;
    for (std::size_t j = 0; j < sources.size(); ++j) {
        const auto& [m, c] = sources[j];
        if (!seen.insert(m->columns[c]).second) throw StageError("duplicate column '" + m->columns[c] + "'");
        out.columns.push_back(m->columns[c]);
        for (std::size_t r = 0; r < out.rows(); ++r) {
            out.values(r, j) = m->values(r, c);
            out.mask[r * sources.size() + j] = m->imputed(r, c) ? 1 : 0;
        }
    }
    return out;
}

DenseMatrix columnsOf(const FeatureMatrix& m, const std::vector<std::string>& names, const std::vector<std::size_t>& rows) {
    return m.values.selectRows(rows).selectColumns(m.columnIndices(names));
}

}  // namespace

std::string_view stageName(Stage stage) { return kStageNames[static_cast<std::size_t>(stage)]; }

std::optional<Stage> parseStage(std::string_view name) {
    for (const auto s : kAllStages)
        if (stageName(s) == name) return s;
    return std::nullopt;
}

std::vector<Stage> stageDependencies(Stage stage) {
    switch (stage) {
        case Stage::Ingest: return {};
        case Stage::Split: return {Stage::Ingest};
        case Stage::Rate: return {Stage::Ingest};
        case Stage::Discover: return {Stage::Split, Stage::Rate};
        case Stage::Quantify: return {Stage::Ingest, Stage::Split, Stage::Rate};
        case Stage::Baseline: return {Stage::Ingest, Stage::Split};
        case Stage::Train: return {Stage::Ingest, Stage::Split, Stage::Quantify, Stage::Baseline};
        case Stage::Evaluate: return {Stage::Ingest, Stage::Train};
        case Stage::Explain: return {Stage::Train};
        case Stage::Report: return {Stage::Evaluate, Stage::Explain};
    }
    return {};
}

MissingDependencyError::MissingDependencyError(Stage stage, Stage required, const std::string& detail)
    : Error("stage '" + std::string(stageName(stage)) + "' requires stage '" + std::string(stageName(required)) +
            "': " + detail),
      stage_(stage),
      required_(required) {}

struct Pipeline::Plan {
    json params;
    std::map<std::string, std::string> inputs;
};

class Pipeline::Context {
    Pipeline& owner_;
    Stage stage_;
    std::unique_ptr<llm::Gateway> gateway_;

public:
    Context(Pipeline& owner, Stage stage) : owner_(owner), stage_(stage), root(owner.outputDir()) {
        dir = root / stageName(stage);
    }

    fs::path root;
    fs::path dir;
    StageRecord record;

    fs::path in(std::string_view rel) const { return root / rel; }
    std::string inText(std::string_view rel) const { return readTextFile(in(rel)); }

    void write(const std::string& rel, std::string_view content) {
        const auto path = dir / rel;
        fs::create_directories(path.parent_path());
        writeFileAtomic(path, content);
        record.outputs[std::string(stageName(stage_)) + "/" + rel] = sha256Hex(content);
    }

    llm::Gateway& gateway() {
        if (!gateway_) {
            const auto& cfg = owner_.config_;
            std::shared_ptr<llm::Provider> provider;
            if (cfg.provider.kind == "mock") {
                provider = llm::MockProvider::sharedFromFile(cfg.resolve(cfg.provider.mockScript));
            } else {
                provider = std::make_shared<llm::HttpChatProvider>(cfg.provider.endpoint, cfg.provider.apiKeyEnv);
            }
            llm::GatewayOptions options;
            options.replayOnly = owner_.options_.replayOnly;
            options.maxInFlight = cfg.provider.maxInFlight;
            options.requestsPerMinute = cfg.provider.requestsPerMinute;
            gateway_ = std::make_unique<llm::Gateway>(std::move(provider),
                                                      std::make_shared<llm::ResponseCache>(owner_.cacheDir()), options);
        }
        return *gateway_;
    }

    void recordCounters() {
        if (!gateway_) return;
        const auto c = gateway_->counters();
        record.cacheHits = c.hits;
        record.cacheMisses = c.misses;
        record.providerCalls = c.providerCalls;
    }

    void log(const std::string& line) const {
        if (owner_.options_.log) *owner_.options_.log << "[" << stageName(stage_) << "] " << line << "\n";
    }
};

Pipeline::Pipeline(RunConfig config, RunOptions options) : config_(std::move(config)), options_(std::move(options)) {
    if (options_.columns) requireColumnSet(*options_.columns, "--columns");
    manifest_ = RunManifest::load(outputDir() / "manifest.json");
}

fs::path Pipeline::outputDir() const { return config_.resolve(config_.outputDir); }

fs::path Pipeline::cacheDir() const {
    if (const char* env = std::getenv("CREDLENS_CACHE_DIR"); env && *env) return fs::path(env);
    return config_.resolve(config_.cacheDir);
}

namespace {

bool outputsIntact(const StageRecord& record, const fs::path& root) {
    for (const auto& [rel, digest] : record.outputs) {
        const auto path = root / rel;
        if (!fs::is_regular_file(path) || sha256File(path) != digest) return false;
    }
    return true;
}

json providerParams(const RunConfig& c) {
    return {{"kind", c.provider.kind},
            {"endpoint", c.provider.kind == "http" ? json(c.provider.endpoint) : json(nullptr)},
            {"model", llm::canonicalParams(c.provider.modelParams())},
            {"max_retries", c.provider.maxRetries}};
}

void addCorpusInputs(const RunConfig& c, std::map<std::string, std::string>& inputs, bool withAnnotations) {
    const auto postsPath = c.resolve(c.posts);
    inputs["ext:posts"] = sha256File(postsPath);
    if (withAnnotations) inputs["ext:annotations"] = sha256File(c.resolve(c.annotations));
    const auto posts = corpus::ingestPosts(postsPath);
    for (const auto& post : posts.posts()) {
        if (!fs::is_regular_file(post.imagePath)) {
            throw corpus::CorpusError("image for post '" + post.id + "' not found: " + post.imagePath.string());
        }
        inputs["image:" + post.id] = sha256File(post.imagePath);
    }
}

}  // namespace

Pipeline::Plan Pipeline::plan(Stage stage) const {
    Plan p;
    const auto& c = config_;
    const json full = c.toJson();
    switch (stage) {
        case Stage::Ingest:
            p.params = full.at("corpus");
            addCorpusInputs(c, p.inputs, true);
            break;
        case Stage::Split:
            p.params = {{"seed", c.splitSeed}, {"split", full.at("split")}};
            break;
        case Stage::Rate:
            p.params = {{"provider", providerParams(c)}, {"template", full.at("zero_shot").at("template")}};
            addCorpusInputs(c, p.inputs, false);
            if (c.zeroShotTemplate) p.inputs["ext:zero_shot_template"] = sha256File(c.resolve(*c.zeroShotTemplate));
            if (c.provider.kind == "mock") p.inputs["ext:mock_script"] = sha256File(c.resolve(c.provider.mockScript));
            break;
        case Stage::Discover:
            p.params = {{"provider", providerParams(c)},
                        {"seed", c.discoverySeed},
                        {"per_topic", c.discoveryPerTopic},
                        {"max_batches", options_.maxBatches.value_or(c.maxBatches)},
                        {"interactive", static_cast<bool>(options_.continueDiscovery)}};
            addCorpusInputs(c, p.inputs, false);
            if (c.provider.kind == "mock") p.inputs["ext:mock_script"] = sha256File(c.resolve(c.provider.mockScript));
            break;
        case Stage::Quantify:
            p.params = {{"provider", providerParams(c)}, {"catalog", full.at("quantify").at("catalog")}};
            addCorpusInputs(c, p.inputs, false);
            if (c.catalog) p.inputs["ext:catalog"] = sha256File(c.resolve(*c.catalog));
            if (c.provider.kind == "mock") p.inputs["ext:mock_script"] = sha256File(c.resolve(c.provider.mockScript));
            break;
        case Stage::Baseline:
            p.params = {{"embeddings", full.at("corpus").at("embeddings")}, {"lexicon", baseline::kLexiconVersion}};
            addCorpusInputs(c, p.inputs, false);
            if (c.embeddings) p.inputs["ext:embeddings"] = sha256File(c.resolve(*c.embeddings));
            break;
        case Stage::Train:
            p.params = {{"seed", c.modelSeed},
                        {"feature_set", options_.columns.value_or(c.featureSet)},
                        {"grids", full.at("train").at("grids")},
                        {"exclude_unreliable", c.excludeUnreliable},
                        {"explain_sets", c.explainSets}};
            break;
        case Stage::Evaluate:
            p.params = {{"seed", c.modelSeed}, {"reference", kReferenceModel}};
            break;
        case Stage::Explain:
            p.params = {{"column_sets", options_.columns ? std::vector<std::string>{*options_.columns} : c.explainSets},
                        {"tolerance", kLocalAccuracyTolerance}};
            break;
        case Stage::Report:
            p.params = {{"top_k", c.topK}};
            break;
    }
    auto deps = stageDependencies(stage);
    if (stage == Stage::Report) {
        for (const auto extra : {Stage::Rate, Stage::Discover, Stage::Quantify})
            if (manifest_.stages.count(std::string(stageName(extra)))) deps.push_back(extra);
    }
    for (const auto dep : deps) {
        const auto it = manifest_.stages.find(std::string(stageName(dep)));
        if (it == manifest_.stages.end()) continue;
        for (const auto& [rel, digest] : it->second.outputs) p.inputs[rel] = digest;
    }
    return p;
}

void Pipeline::checkDependencies(Stage stage) const {
    const auto root = outputDir();
    for (const auto dep : stageDependencies(stage)) {
        const auto it = manifest_.stages.find(std::string(stageName(dep)));
        if (it == manifest_.stages.end()) {
            throw MissingDependencyError(stage, dep, "no outputs recorded; run '" + std::string(stageName(dep)) + "' first");
        }
        if (!outputsIntact(it->second, root)) {
            throw MissingDependencyError(stage, dep, "recorded outputs are missing or modified; rerun it");
        }
        // the dependency must itself be current with respect to its upstream outputs
        for (const auto& [key, digest] : it->second.inputs) {
            const auto slash = key.find('/');
            if (key.rfind("ext:", 0) == 0 || key.rfind("image:", 0) == 0 || slash == std::string::npos) continue;
            const auto up = manifest_.stages.find(key.substr(0, slash));
            if (up == manifest_.stages.end()) continue;
            const auto out = up->second.outputs.find(key);
            if (out == up->second.outputs.end() || out->second != digest) {
                throw MissingDependencyError(stage, dep, "its input " + key + " changed since it ran; rerun it");
            }
        }
    }
}

StageResult Pipeline::run(Stage stage) {
    checkDependencies(stage);
    const Plan p = plan(stage);
    const std::string name(stageName(stage));
    const std::string paramsDigest = sha256Hex(p.params.dump());
    const auto root = outputDir();

    manifest_.toolVersion = CREDLENS_VERSION;
    manifest_.configDigest = config_.digest();
    if (!options_.force) {
        const auto it = manifest_.stages.find(name);
        if (it != manifest_.stages.end() && it->second.paramsDigest == paramsDigest && it->second.inputs == p.inputs &&
            outputsIntact(it->second, root)) {
            if (options_.log) *options_.log << "[" << name << "] up to date\n";
            return {stage, true, it->second};
        }
    }

    Context ctx(*this, stage);
    ctx.record.stage = name;
    ctx.record.paramsDigest = paramsDigest;
    ctx.record.inputs = p.inputs;
    ctx.record.startedAt = llm::utcTimestamp();
    std::error_code ec;
    fs::remove_all(ctx.dir, ec);
    fs::create_directories(ctx.dir);
    manifest_.stages.erase(name);

    execute(stage, ctx);

    ctx.recordCounters();
    ctx.record.finishedAt = llm::utcTimestamp();
    manifest_.stages[name] = ctx.record;
    manifest_.save(root / "manifest.json");
    return {stage, false, ctx.record};
}

std::vector<StageResult> Pipeline::runAll() {
    std::vector<StageResult> out;
    for (const auto s : kAllStages) out.push_back(run(s));
    return out;
}

void Pipeline::execute(Stage stage, Context& ctx) {
    switch (stage) {
        case Stage::Ingest: return ingest(ctx);
        case Stage::Split: return split(ctx);
        case Stage::Rate: return rate(ctx);
        case Stage::Discover: return discover(ctx);
        case Stage::Quantify: return quantifyStage(ctx);
        case Stage::Baseline: return baselineStage(ctx);
        case Stage::Train: return train(ctx);
        case Stage::Evaluate: return evaluate(ctx);
        case Stage::Explain: return explain(ctx);
        case Stage::Report: return report(ctx);
    }
}

void Pipeline::ingest(Context& ctx) {
    const auto posts = corpus::ingestPosts(config_.resolve(config_.posts));
    const auto annotations = corpus::loadAnnotations(config_.resolve(config_.annotations), posts);
    const auto human = corpus::aggregateHumanScores(posts, annotations);

    std::map<std::string, std::set<std::string>> raters;
    for (const auto& a : annotations) raters[a.postId].insert(a.raterId);

    std::string scores = csv::formatRow({"post_id", "topic", "human_score", "n_raters"});
    std::string images = csv::formatRow({"post_id", "image_sha256"});
    std::vector<double> values;
    for (const auto& post : posts.posts()) {
        const double h = human.at(post.id);
        values.push_back(h);
        scores += csv::formatRow({post.id, std::string(corpus::topicName(post.topic)), formatDouble(h),
                                  std::to_string(raters[post.id].size())});
        images += csv::formatRow({post.id, sha256File(post.imagePath)});
    }
    json topics = json::object();
    const auto counts = posts.topicCounts();
    for (const auto t : corpus::kAllTopics) topics[std::string(corpus::topicName(t))] = counts[corpus::topicIndex(t)];
    std::set<std::string> allRaters;
    for (const auto& a : annotations) allRaters.insert(a.raterId);
    const json summary{{"posts", posts.size()},
                       {"annotations", annotations.size()},
                       {"raters", allRaters.size()},
                       {"topics", topics},
                       {"human_score", distributionJson(stats::distributionStats(values))}};
    ctx.write("human_scores.csv", scores);
    ctx.write("images.csv", images);
    ctx.write("corpus_summary.json", dumpJson(summary));
    ctx.log(std::to_string(posts.size()) + " posts, " + std::to_string(annotations.size()) + " annotations");
}

void Pipeline::split(Context& ctx) {
    const auto posts = corpus::ingestPosts(config_.resolve(config_.posts));
    const auto splits = corpus::makeSplits(posts, config_.splitSeed, config_.perTopicHoldout, config_.holdoutSets);
    std::map<std::string, std::map<std::string, std::size_t>> tally;
    for (const auto& post : posts.posts()) {
        ++tally[std::string(corpus::topicName(post.topic))][std::string(corpus::splitName(splits.of(post.id)))];
    }
    const json perTopic = tally;
    json counts = json::object();
    for (const auto s : {corpus::Split::Train, corpus::Split::Validation, corpus::Split::Test})
        counts[std::string(corpus::splitName(s))] = splits.count(s);
    ctx.write("splits.json", corpus::serializeSplits(splits));
    ctx.write("summary.json", dumpJson({{"seed", config_.splitSeed}, {"counts", counts}, {"per_topic", perTopic}}));
    ctx.log("train " + std::to_string(splits.count(corpus::Split::Train)) + " / validation " +
            std::to_string(splits.count(corpus::Split::Validation)) + " / test " +
            std::to_string(splits.count(corpus::Split::Test)));
}

void Pipeline::rate(Context& ctx) {
    const auto posts = corpus::ingestPosts(config_.resolve(config_.posts));
    const std::string templateText = config_.zeroShotTemplate ? readTextFile(config_.resolve(*config_.zeroShotTemplate))
                                                              : std::string(zeroshot::kDefaultTemplate);
    const auto run = zeroshot::rateCorpus(posts, config_.provider.modelParams(), ctx.gateway(), templateText,
                                          config_.threads);
    ctx.write("zero_shot.jsonl", zeroshot::serializeResults(run.results));
    ctx.write("missing.jsonl", zeroshot::serializeMissing(run.missing));

    const auto human = readHumanScores(ctx.in("ingest/human_scores.csv"));
    std::vector<double> zs, hs;
    for (const auto& r : run.results) {
        zs.push_back(r.combined);
        hs.push_back(human.at(r.postId));
    }
    json alignment{{"n_rated", run.results.size()}, {"n_missing", run.missing.size()}};
    if (zs.size() >= 3) {
        try {
            const double r = stats::pearson(zs, hs);
            alignment["pearson_r"] = r;
            alignment["p_value"] = stats::correlationPValue(r, zs.size());
        } catch (const stats::StatsError& e) {
            alignment["pearson_r"] = nullptr;
            alignment["p_value"] = nullptr;
            alignment["warning"] = e.what();
        }
        try {
            const auto t = stats::pairedTTest(zs, hs);
            alignment["paired_t"] = {{"t", t.t}, {"df", t.df}, {"p", t.p}};
        } catch (const stats::StatsError&) {
            alignment["paired_t"] = nullptr;
        }
        alignment["zero_shot"] = distributionJson(stats::distributionStats(zs));
        alignment["human"] = distributionJson(stats::distributionStats(hs));
    }
    ctx.write("alignment.json", dumpJson(alignment));
    ctx.log(std::to_string(run.results.size()) + " rated, " + std::to_string(run.missing.size()) + " missing");
}

void Pipeline::discover(Context& ctx) {
    const auto posts = corpus::ingestPosts(config_.resolve(config_.posts));
    const auto splits = corpus::parseSplits(ctx.inText("split/splits.json"));
    std::map<std::string, std::string> reasonings;
    for (const auto& r : zeroshot::parseResults(ctx.inText("rate/zero_shot.jsonl"))) reasonings[r.postId] = r.reasoning;

    discovery::DiscoveryOptions options;
    options.perTopic = config_.discoveryPerTopic;
    options.maxBatches = options_.maxBatches.value_or(config_.maxBatches);
    options.seed = config_.discoverySeed;
    options.continueHook = options_.continueDiscovery;
    const auto ledger =
        discovery::runDiscovery(posts, splits, reasonings, config_.provider.modelParams(), ctx.gateway(), options);
    ctx.write("ledger.json", dumpJson(ledger.toJson()));
    ctx.write("catalog_skeleton.json", dumpJson(catalog::catalogToJson(discovery::catalogSkeleton(ledger))));
    ctx.log(std::to_string(ledger.themes.size()) + " themes after " + std::to_string(ledger.batchHistory.size()) +
            " batches (" + ledger.stoppingReason + ")");
}

void Pipeline::quantifyStage(Context& ctx) {
    const auto posts = corpus::ingestPosts(config_.resolve(config_.posts));
    const auto splits = corpus::parseSplits(ctx.inText("split/splits.json"));
    const auto cat = config_.catalog ? catalog::loadCatalog(config_.resolve(*config_.catalog)) : catalog::defaultCatalog();
    const auto values = quantify::measureCatalog(posts, cat, config_.provider.modelParams(), ctx.gateway(), config_.threads);
    const auto reliability = quantify::reliabilityGate(values, cat);

    auto blocks = quantify::gptBlocks(values, cat);
    blocks.push_back(quantify::zeroShotBlock(zeroshot::parseResults(ctx.inText("rate/zero_shot.jsonl"))));
    const auto matrix = quantify::assembleMatrix(posts, splits, blocks);

    ctx.write("catalog.json", dumpJson(catalog::catalogToJson(cat)));
    ctx.write("values.jsonl", quantify::serializeValues(values));
    ctx.write("reliability.json", dumpJson(quantify::reliabilityToJson(reliability)));
    ctx.write("matrix.csv", quantify::serializeMatrix(matrix));
    ctx.write(quantify::maskPathFor("matrix.csv").string(), quantify::serializeMask(matrix));
    std::size_t missing = 0;
    for (const auto& v : values) missing += v.missing ? 1 : 0;
    ctx.log(std::to_string(cat.features.size()) + " features, " + std::to_string(missing) + " missing values, " +
            std::to_string(reliability.flagged.size()) + " flagged");
}

void Pipeline::baselineStage(Context& ctx) {
    const auto posts = corpus::ingestPosts(config_.resolve(config_.posts));
    const auto splits = corpus::parseSplits(ctx.inText("split/splits.json"));
    auto blocks = baseline::baselineBlocks(posts, config_.threads);
    std::size_t dim = 0;
    if (config_.embeddings) {
        const auto table = baseline::loadEmbeddings(config_.resolve(*config_.embeddings), posts);
        dim = table.dim;
        for (auto& b : baseline::embeddingBlocks(table)) blocks.push_back(std::move(b));
    }
    const auto matrix = quantify::assembleMatrix(posts, splits, blocks);
    ctx.write("matrix.csv", quantify::serializeMatrix(matrix));
    ctx.write(quantify::maskPathFor("matrix.csv").string(), quantify::serializeMask(matrix));
    ctx.write("summary.json", dumpJson({{"columns", matrix.columns}, {"embedding_dim", dim}}));
    ctx.log(std::to_string(matrix.cols()) + " columns");
}

void Pipeline::train(Context& ctx) {
    const auto gpt = quantify::readMatrix(ctx.in("quantify/matrix.csv"));
    const auto base = quantify::readMatrix(ctx.in("baseline/matrix.csv"));
    const auto m = joinMatrices(gpt, base);
    ctx.write("matrix.csv", quantify::serializeMatrix(m));
    ctx.write(quantify::maskPathFor("matrix.csv").string(), quantify::serializeMask(m));
    const auto target = readHumanScores(ctx.in("ingest/human_scores.csv"));

    std::set<std::string> excluded;
    if (config_.excludeUnreliable) {
        excluded = readJson(ctx.in("quantify/reliability.json")).at("flagged").get<std::set<std::string>>();
    }

    const std::string featureSetName = options_.columns.value_or(config_.featureSet);
    const ColumnSet featureSet = requireColumnSet(featureSetName, "train.feature_set");
    struct Job {
        std::string label;
        models::ModelKind kind;
        ColumnSet set;
    };
    std::vector<Job> jobs;
    const bool hasEmbeddings = std::any_of(m.columns.begin(), m.columns.end(), [](const std::string& c) {
        return quantify::provenanceOf(c) == quantify::Provenance::Embedding;
    });
    const auto add = [&](models::ModelKind kind, ColumnSet set) {
        std::string label = std::string(kindPrefix(kind)) + "_" + std::string(quantify::columnSetName(set));
        for (const auto& j : jobs)
            if (j.label == label) return;
        if (set == ColumnSet::Embedding && !hasEmbeddings) return;
        jobs.push_back({std::move(label), kind, set});
    };
    add(models::ModelKind::Ols, ColumnSet::ZeroShot);
    for (const auto kind : {models::ModelKind::Lasso, models::ModelKind::RandomForest, models::ModelKind::Gbdt})
        add(kind, featureSet);
    add(models::ModelKind::RandomForest, ColumnSet::Baseline);
    add(models::ModelKind::RandomForest, ColumnSet::Embedding);
    add(models::ModelKind::RandomForest, ColumnSet::GptNoZeroShot);
    for (const auto& s : config_.explainSets) add(models::ModelKind::RandomForest, requireColumnSet(s, "explain.column_sets"));

    const auto trainRows = m.rowsIn(corpus::Split::Train);
    const auto valRows = m.rowsIn(corpus::Split::Validation);
    const auto testRows = m.rowsIn(corpus::Split::Test);
    const json grids = config_.toJson().at("train").at("grids");

    json summaryModels = json::array();
    for (const auto& job : jobs) {
        const auto columns = quantify::selectColumns(m, job.set, excluded);
        const auto tr = eval::extractDataset(m, columns, trainRows, target);
        const auto va = eval::extractDataset(m, columns, valRows, target);
        const auto grid = models::expandGrid(job.kind, grids.at(std::string(models::modelKindName(job.kind))), tr.X, tr.y);
        const auto result =
            models::gridSearch(job.kind, grid, tr.X, tr.y, va.X, va.y, config_.modelSeed, columns, config_.threads);

        json evaluated = json::array();
        for (const auto& [cfg, score] : result.evaluated) {
            evaluated.push_back({{"hyperparams", cfg}, {"validation_r_squared", std::isfinite(score) ? json(score) : json(nullptr)}});
        }
        ctx.write("grids/" + job.label + ".json",
                  dumpJson({{"model", job.label}, {"kind", models::modelKindName(job.kind)}, {"best_index", result.bestIndex},
                            {"evaluated", evaluated}}));
        ctx.write("models/" + job.label + ".json", models::modelToJson(result.model).dump() + "\n");
        const double bestScore = result.evaluated[result.bestIndex].second;
        summaryModels.push_back({{"label", job.label},
                                 {"kind", models::modelKindName(job.kind)},
                                 {"column_set", quantify::columnSetName(job.set)},
                                 {"columns", columns},
                                 {"hyperparams", result.model.hyperparams},
                                 {"validation_r_squared", std::isfinite(bestScore) ? json(bestScore) : json(nullptr)},
                                 {"grid_size", grid.size()},
                                 {"n_train", trainRows.size()},
                                 {"n_validation", valRows.size()},
                                 {"n_test", testRows.size()}});
        ctx.log(job.label + ": " + std::to_string(grid.size()) + " configs, validation R2 " + formatDouble(bestScore));
    }
    ctx.write("summary.json", dumpJson({{"feature_set", featureSetName},
                                        {"excluded_features", excluded},
                                        {"reference", kReferenceModel},
                                        {"models", summaryModels}}));
}

void Pipeline::evaluate(Context& ctx) {
    const auto m = quantify::readMatrix(ctx.in("train/matrix.csv"));
    const auto summary = readJson(ctx.in("train/summary.json"));
    const auto target = readHumanScores(ctx.in("ingest/human_scores.csv"));
    const auto testRows = m.rowsIn(corpus::Split::Test);

    std::vector<eval::EvalReport> reports;
    std::vector<std::string> labels;
    std::vector<std::vector<double>> predictions;
    std::vector<double> yTest;
    for (const auto r : testRows) yTest.push_back(target.at(m.rowIds[r]));
    json reportsJson = json::array();
    for (const auto& info : summary.at("models")) {
        const std::string label = info.at("label").get<std::string>();
        const auto model = models::modelFromJson(readJson(ctx.in("train/models/" + label + ".json")));
        const auto pred = model.predict(columnsOf(m, model.columnNames, testRows));
        reports.push_back(eval::computeMetrics(yTest, pred, label, "test"));
        reportsJson.push_back(eval::reportToJson(reports.back()));
        labels.push_back(label);
        predictions.push_back(pred);
    }
    ctx.write("test_reports.json", dumpJson(reportsJson));

    csv::Row header{"post_id", "topic", "human_score"};
    header.insert(header.end(), labels.begin(), labels.end());
    std::string predCsv = csv::formatRow(header);
    for (std::size_t i = 0; i < testRows.size(); ++i) {
        csv::Row row{m.rowIds[testRows[i]], std::string(corpus::topicName(m.topics[testRows[i]])), formatDouble(yTest[i])};
        for (const auto& p : predictions) row.push_back(formatDouble(p[i]));
        predCsv += csv::formatRow(row);
    }
    ctx.write("test_predictions.csv", predCsv);

    const auto comparison = eval::compareModels(reports, kReferenceModel);
    ctx.write("comparison.json", dumpJson(eval::comparisonToJson(comparison)));
    ctx.write("comparison.csv", eval::comparisonCsv(comparison));
    ctx.write("comparison.txt", eval::comparisonText(comparison));

    // per-topic: the zero-shot reference against the feature model that won on validation
    const std::string featureSet = summary.at("feature_set").get<std::string>();
    std::optional<json> winner;
    double winnerScore = -std::numeric_limits<double>::infinity();
    for (const auto& info : summary.at("models")) {
        if (info.at("column_set") != featureSet || info.at("validation_r_squared").is_null()) continue;
        const double score = info.at("validation_r_squared").get<double>();
        if (score > winnerScore) {
            winnerScore = score;
            winner = info;
        }
    }
    std::vector<eval::ModelSpec> specs;
    for (const auto& info : summary.at("models")) {
        if (info.at("label") != kReferenceModel) continue;
        specs.push_back({kReferenceModel, models::ModelKind::Ols, info.at("hyperparams"),
                         info.at("columns").get<std::vector<std::string>>()});
    }
    if (winner) {
        specs.push_back({winner->at("label").get<std::string>(),
                         *models::parseModelKind(winner->at("kind").get<std::string>()), winner->at("hyperparams"),
                         winner->at("columns").get<std::vector<std::string>>()});
    }
    const auto table = eval::perTopicEval(m, target, specs, config_.modelSeed, config_.threads);
    ctx.write("per_topic.json", dumpJson(eval::topicTableToJson(table)));
    ctx.write("per_topic.csv", eval::topicTableCsv(table));
    ctx.write("per_topic.txt", eval::topicTableText(table));
    ctx.write("selection.json", dumpJson({{"feature_set", featureSet},
                                          {"winner", winner ? winner->at("label") : json(nullptr)},
                                          {"winner_validation_r_squared", winner ? json(winnerScore) : json(nullptr)}}));
    for (const auto& row : comparison.rows) {
        ctx.log(row.report.model + " test R2 " + (row.report.rSquared ? formatDouble(*row.report.rSquared) : "n/a"));
    }
}

void Pipeline::explain(Context& ctx) {
    const auto m = quantify::readMatrix(ctx.in("train/matrix.csv"));
    const auto summary = readJson(ctx.in("train/summary.json"));
    const auto testRows = m.rowsIn(corpus::Split::Test);
    std::vector<std::string> ids;
    for (const auto r : testRows) ids.push_back(m.rowIds[r]);

    std::set<std::string> trained;
    for (const auto& info : summary.at("models")) trained.insert(info.at("label").get<std::string>());

    const auto sets = options_.columns ? std::vector<std::string>{*options_.columns} : config_.explainSets;
    json index = json::array();
    for (const auto& setName : sets) {
        const ColumnSet set = requireColumnSet(setName, "explain");
        const std::string label = "rf_" + setName;
        if (!trained.count(label)) {
            throw StageError("model '" + label + "' was not trained; rerun train with --columns " + setName);
        }
        const auto model = models::modelFromJson(readJson(ctx.in("train/models/" + label + ".json")));
        const auto X = columnsOf(m, model.columnNames, testRows);
        const auto rows = shap::explainRows(model, X, ids, config_.threads);
        const auto s = shap::shapSummary(rows, model.columnNames, X);
        double maxError = 0.0;
        for (const auto& row : rows) {
            double total = row.baseValue;
            for (const double phi : row.phi) total += phi;
            maxError = std::max(maxError, std::abs(total - row.prediction));
        }
        const bool hasZeroShot = std::find(model.columnNames.begin(), model.columnNames.end(),
                                           std::string(quantify::kZeroShotColumn)) != model.columnNames.end();
        ctx.write(setName + "/shap_values.csv", shap::shapRowsCsv(rows, model.columnNames));
        ctx.write(setName + "/summary.csv", shap::summaryCsv(s));
        ctx.write(setName + "/beeswarm.csv", shap::beeswarmCsv(s));
        const json meta{{"column_set", setName},
                        {"model", label},
                        {"label", explainLabel(set)},
                        {"columns", model.columnNames},
                        {"includes_zero_shot", hasZeroShot},
                        {"rows", rows.size()},
                        {"max_local_accuracy_error", maxError}};
        ctx.write(setName + "/meta.json", dumpJson(meta));
        index.push_back({{"column_set", setName}, {"model", label}, {"label", explainLabel(set)}});
        ctx.log(label + ": " + std::to_string(rows.size()) + " rows, top feature " + s.ranking.front().feature);
    }
    ctx.write("index.json", dumpJson(index));

    // local accuracy of every trained model on the test rows
    json accuracy = json::array();
    bool allPassed = true;
    for (const auto& info : summary.at("models")) {
        const std::string label = info.at("label").get<std::string>();
        const auto model = models::modelFromJson(readJson(ctx.in("train/models/" + label + ".json")));
        const auto rows = shap::explainRows(model, columnsOf(m, model.columnNames, testRows), ids, config_.threads);
        double maxError = 0.0;
        for (const auto& row : rows) {
            double total = row.baseValue;
            for (const double phi : row.phi) total += phi;
            maxError = std::max(maxError, std::abs(total - row.prediction));
        }
        const bool passed = maxError < kLocalAccuracyTolerance;
        allPassed = allPassed && passed;
        accuracy.push_back({{"model", label}, {"rows", rows.size()}, {"max_abs_error", maxError}, {"passed", passed}});
    }
    ctx.write("local_accuracy.json",
              dumpJson({{"tolerance", kLocalAccuracyTolerance}, {"all_passed", allPassed}, {"models", accuracy}}));
}

void Pipeline::report(Context& ctx) {
    const std::size_t k = config_.topK;
    std::string md = "# Credibility model report\n\n";

    if (fs::exists(ctx.in("rate/alignment.json"))) {
        const auto a = readJson(ctx.in("rate/alignment.json"));
        md += "## Zero-shot alignment with human ratings\n\n";
        md += "- rated posts: " + a.at("n_rated").dump() + " (missing: " + a.at("n_missing").dump() + ")\n";
        if (a.contains("pearson_r") && !a.at("pearson_r").is_null()) {
            md += "- Pearson r: " + formatDouble(a.at("pearson_r").get<double>()) +
                  ", p = " + formatDouble(a.at("p_value").get<double>()) + "\n";
        }
        if (a.contains("paired_t") && !a.at("paired_t").is_null()) {
            const auto& t = a.at("paired_t");
            md += "- paired t (zero-shot - human): t = " + formatDouble(t.at("t").get<double>()) +
                  ", df = " + t.at("df").dump() + ", p = " + formatDouble(t.at("p").get<double>()) + "\n";
        }
        md += "\n";
    }
    if (fs::exists(ctx.in("discover/ledger.json"))) {
        const auto ledger = discovery::ThemeLedger::fromJson(readJson(ctx.in("discover/ledger.json")));
        md += "## Feature discovery\n\n";
        md += "- " + std::to_string(ledger.themes.size()) + " themes over " +
              std::to_string(ledger.batchHistory.size()) + " batches, stopped: " + ledger.stoppingReason + "\n\n";
        for (const auto& t : ledger.themes) {
            md += "  - " + t.label + " (support " + std::to_string(t.supportCount) + ", first batch " +
                  std::to_string(t.firstSeenBatch) + ")\n";
        }
        md += "\n";
    }
    if (fs::exists(ctx.in("quantify/reliability.json"))) {
        const auto rel = readJson(ctx.in("quantify/reliability.json"));
        md += "## Reliability gate\n\n| feature | items | alpha | passed |\n|---|---|---|---|\n";
        for (const auto& s : rel.at("scores")) {
            md += "| " + s.at("feature_id").get<std::string>() + " | " + s.at("k").dump() + " | " +
                  (s.at("alpha").is_null() ? std::string("n/a") : formatDouble(s.at("alpha").get<double>())) + " | " +
                  (s.at("passed").get<bool>() ? "yes" : "no") + " |\n";
        }
        md += "\n";
    }

    const std::string comparisonCsvText = ctx.inText("evaluate/comparison.csv");
    ctx.write("comparison.csv", comparisonCsvText);
    ctx.write("per_topic.csv", ctx.inText("evaluate/per_topic.csv"));
    md += "## Model comparison (test split)\n\n```\n" + ctx.inText("evaluate/comparison.txt") + "```\n\n";
    md += "## Per-topic results (test split)\n\n```\n" + ctx.inText("evaluate/per_topic.txt") + "```\n\n";

    for (const auto& entry : readJson(ctx.in("explain/index.json"))) {
        const std::string set = entry.at("column_set").get<std::string>();
        const std::string label = entry.at("label").get<std::string>();
        std::string topSummary;
        std::set<std::string> kept;
        const auto summaryTable = csv::parse(ctx.inText("explain/" + set + "/summary.csv"));
        const auto featureCol = summaryTable.column("feature");
        topSummary += csv::formatRow(summaryTable.header);
        for (std::size_t i = 0; i < summaryTable.rows.size() && i < k; ++i) {
            topSummary += csv::formatRow(summaryTable.rows[i]);
            kept.insert(summaryTable.rows[i][featureCol]);
        }
        const auto swarm = csv::parse(ctx.inText("explain/" + set + "/beeswarm.csv"));
        const auto swarmFeature = swarm.column("feature");
        std::string topSwarm = csv::formatRow(swarm.header);
        for (const auto& row : swarm.rows)
            if (kept.count(row[swarmFeature])) topSwarm += csv::formatRow(row);

        const std::string stem = "shap_" + set;
        const std::string topName = stem + "_top" + std::to_string(k);
        ctx.write(topName + ".csv", topSummary);
        ctx.write(topName + "_beeswarm.csv", topSwarm);
        ctx.write(stem + ".svg", renderShapSvg(shapPlotFromCsv(topSummary, topSwarm), "SHAP values: " + label));

        md += "## SHAP top " + std::to_string(std::min(k, summaryTable.rows.size())) + ": " + label + "\n\n";
        md += "Model `" + entry.at("model").get<std::string>() + "`; plot: `" + stem + ".svg`\n\n";
        md += "| rank | feature | mean abs SHAP |\n|---|---|---|\n";
        const auto topTable = csv::parse(topSummary);
        for (const auto& row : topTable.rows) {
            md += "| " + row[topTable.column("rank")] + " | " + row[topTable.column("feature")] + " | " +
                  row[topTable.column("mean_abs_shap")] + " |\n";
        }
        md += "\n";
    }
    const auto accuracy = readJson(ctx.in("explain/local_accuracy.json"));
    md += "## SHAP local accuracy (test rows)\n\n| model | max abs error | passed |\n|---|---|---|\n";
    for (const auto& a : accuracy.at("models")) {
        md += "| " + a.at("model").get<std::string>() + " | " + formatDouble(a.at("max_abs_error").get<double>()) + " | " +
              (a.at("passed").get<bool>() ? "yes" : "no") + " |\n";
    }
    ctx.write("report.md", md);
    ctx.log("report.md written");
}

}  // namespace credlens::pipeline
