#pragma once

#include <array>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "credlens/discovery.hpp"
#include "credlens/pipeline/config.hpp"
#include "credlens/pipeline/manifest.hpp"

namespace credlens::pipeline {

enum class Stage { Ingest, Split, Rate, Discover, Quantify, Baseline, Train, Evaluate, Explain, Report };

inline constexpr std::array<Stage, 10> kAllStages = {Stage::Ingest,   Stage::Split,    Stage::Rate,  Stage::Discover,
                                                     Stage::Quantify, Stage::Baseline, Stage::Train, Stage::Evaluate,
                                                     Stage::Explain,  Stage::Report};

std::string_view stageName(Stage stage);
std::optional<Stage> parseStage(std::string_view name);
/// Stages whose outputs `stage` reads.
std::vector<Stage> stageDependencies(Stage stage);

class MissingDependencyError : public Error {
public:
    MissingDependencyError(Stage stage, Stage required, const std::string& detail);
    Stage stage() const { return stage_; }
    Stage required() const { return required_; }

private:
    Stage stage_;
    Stage required_;
};

class StageError : public Error {
public:
    using Error::Error;
};

/// Label attached to SHAP reports whose column set drops the zero-shot rating.
inline constexpr std::string_view kReducedModelLabel = "excluding GPT-4o’s zero-shot post credibility";

struct RunOptions {
    bool force = false;
    bool replayOnly = false;
    std::optional<std::size_t> maxBatches;
    /// Column set override for train (feature learners) and explain.
    std::optional<std::string> columns;
    /// Asked after each unsaturated discovery batch; false stops discovery.
    std::function<bool(const discovery::ThemeLedger&)> continueDiscovery;
    std::ostream* log = nullptr;
};

struct StageResult {
    Stage stage = Stage::Ingest;
    bool skipped = false;
    StageRecord record;
};

/// Runs stages against one output directory. Stages talk only through
/// files under it; `manifest.json` there records every stage's inputs and
/// outputs by digest. A stage whose parameters and input digests match its
/// last record, and whose outputs are intact, is skipped unless forced.
class Pipeline {
public:
    Pipeline(RunConfig config, RunOptions options = {});

    StageResult run(Stage stage);
    std::vector<StageResult> runAll();

    const RunConfig& config() const { return config_; }
    const RunManifest& manifest() const { return manifest_; }
    std::filesystem::path outputDir() const;
    /// CREDLENS_CACHE_DIR when set, else the configured cache directory.
    std::filesystem::path cacheDir() const;

private:
    struct Plan;
    class Context;

    Plan plan(Stage stage) const;
    void execute(Stage stage, Context& ctx);
    void checkDependencies(Stage stage) const;

    void ingest(Context& ctx);
    void split(Context& ctx);
    void rate(Context& ctx);
    void discover(Context& ctx);
    void quantifyStage(Context& ctx);
    void baselineStage(Context& ctx);
    void train(Context& ctx);
    void evaluate(Context& ctx);
    void explain(Context& ctx);
    void report(Context& ctx);

    RunConfig config_;
    RunOptions options_;
    RunManifest manifest_;
};

}  // namespace credlens::pipeline
