#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "credlens/pipeline/pipeline.hpp"
#include "credlens/pipeline/synthetic.hpp"

using namespace credlens;
using namespace credlens::pipeline;

namespace {

struct StageArgs {
    std::string config;
    bool force = false;
    bool replayOnly = false;
    std::optional<std::size_t> maxBatches;
    std::optional<std::string> columns;
    bool interactive = false;
    bool quiet = false;
};

void addStageOptions(CLI::App* cmd, StageArgs& a) {
    cmd->add_option("--config", a.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_flag("--force", a.force, "Rerun even when inputs are unchanged");
    cmd->add_flag("--replay-only", a.replayOnly, "Serve every model request from the cache; fail on a miss");
    cmd->add_option("--max-batches", a.maxBatches, "Discovery batch budget")->check(CLI::PositiveNumber);
    cmd->add_option("--columns", a.columns, "Column set for train and explain (gpt_full, gpt_no_zero_shot, baseline, embedding)");
    cmd->add_flag("--interactive", a.interactive, "Ask before each further discovery batch");
    cmd->add_flag("-q,--quiet", a.quiet, "No progress output");
}

bool askToContinue(const discovery::ThemeLedger& ledger) {
    const auto& last = ledger.batchHistory.back();
    std::cerr << "batch " << last.batchIndex << ": " << last.newThemeCount << " new themes, " << ledger.themes.size()
              << " total. Run another batch? [y/N] " << std::flush;
    std::string answer;
    if (!std::getline(std::cin, answer)) return false;
    return !answer.empty() && (answer[0] == 'y' || answer[0] == 'Y');
}

int runStages(const StageArgs& a, const std::optional<Stage>& only) {
    RunOptions options;
    options.force = a.force;
    options.replayOnly = a.replayOnly;
    options.maxBatches = a.maxBatches;
    options.columns = a.columns;
    if (a.interactive) options.continueDiscovery = askToContinue;
    if (!a.quiet) options.log = &std::cerr;
    Pipeline pipeline(loadConfig(a.config), options);
    const auto results = only ? std::vector<StageResult>{pipeline.run(*only)} : pipeline.runAll();
    for (const auto& r : results) {
        if (a.quiet) continue;
        std::cout << stageName(r.stage) << (r.skipped ? " unchanged" : " done") << " (" << r.record.outputs.size()
                  << " outputs";
        if (r.record.cacheHits + r.record.cacheMisses > 0) {
            std::cout << ", cache " << r.record.cacheHits << " hits / " << r.record.cacheMisses << " misses";
        }
        std::cout << ")\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"credlens: measure, model and explain perceived credibility of social media posts"};
    app.set_version_flag("--version", std::string(CREDLENS_VERSION));
    app.require_subcommand(1);

    StageArgs stageArgs;
    std::optional<Stage> chosen;
    for (const auto stage : kAllStages) {
        auto* cmd = app.add_subcommand(std::string(stageName(stage)), "Run the " + std::string(stageName(stage)) + " stage");
        addStageOptions(cmd, stageArgs);
        cmd->callback([&chosen, stage] { chosen = stage; });
    }
    auto* all = app.add_subcommand("all", "Run every stage in order");
    addStageOptions(all, stageArgs);

    SyntheticOptions synth;
    std::string synthOut;
    auto* synthCmd = app.add_subcommand("synth", "Write the synthetic corpus, mock script and config");
    synthCmd->add_option("--out", synthOut, "Output directory")->required();
    synthCmd->add_option("--seed", synth.seed, "Generator seed");
    synthCmd->add_option("--per-topic", synth.perTopic, "Posts per topic")->check(CLI::Range(11, 100000));
    synthCmd->add_option("--noise-sd", synth.noiseSd, "Noise on the planted human score");
    synthCmd->add_option("--zero-shot-noise-sd", synth.zeroShotNoiseSd, "Error in the scripted zero-shot ratings");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synthCmd->parsed()) {
            const auto s = generateSynthetic(synth, synthOut);
            std::cout << s.posts << " posts, " << s.annotations << " annotations, " << s.mockRules
                      << " scripted replies; config " << s.config.string() << "\n";
            return 0;
        }
        return runStages(stageArgs, all->parsed() ? std::nullopt : chosen);
    } catch (const MissingDependencyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
