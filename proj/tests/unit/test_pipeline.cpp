#include <doctest.h>

#include <cstdlib>
#include <map>
#include <set>

#include "credlens/common/csv.hpp"
#include "credlens/common/io.hpp"
#include "credlens/llm/gateway.hpp"
#include "credlens/pipeline/pipeline.hpp"
#include "credlens/pipeline/svg.hpp"
#include "credlens/pipeline/synthetic.hpp"
#include "credlens/quantify.hpp"
#include "credlens/shap.hpp"
#include "test_support.hpp"

using namespace credlens;
using namespace credlens::pipeline;
using credlens::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimalConfig() {
    return {{"corpus", {{"posts", "posts.jsonl"}, {"annotations", "annotations.csv"}}},
            {"provider", {{"kind", "mock"}, {"mock_script", "mock.json"}}}};
}

/// relative path -> sha256 of every regular file under root, skipping `skip`.
std::map<std::string, std::string> digestTree(const fs::path& root, const std::set<std::string>& skip = {}) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), root).generic_string();
        bool skipped = false;
        for (const auto& s : skip) skipped = skipped || rel.rfind(s, 0) == 0;
        if (!skipped) out[rel] = sha256File(e.path());
    }
    return out;
}

struct SyntheticRun {
    TempDir tmp{"pipe"};
    fs::path data;
    RunConfig config;
    explicit SyntheticRun(const std::function<void(json&)>& edit = {}) {
        ::unsetenv("CREDLENS_CACHE_DIR");
        data = tmp / "data";
        generateSynthetic(SyntheticOptions{}, data);
        json doc = json::parse(readTextFile(data / "config.json"));
        if (edit) edit(doc);
        writeFileAtomic(data / "config.json", doc.dump(2));
        config = loadConfig(data / "config.json");
    }
};

}  // namespace

TEST_CASE("config rejects unknown keys and materializes defaults") {
    const auto c = configFromJson(minimalConfig(), "/base");
    const auto j = c.toJson();
    CHECK(j.at("seeds").at("split") == 20240601);
    CHECK(j.at("seeds").at("discovery") == 20240602);
    CHECK(j.at("seeds").at("models") == 20240603);
    CHECK(j.at("provider").at("provider_id") == "mock");  // mock kind defaults its id
    CHECK(j.at("train").at("grids").at("random_forest") == models::defaultGridSpec(models::ModelKind::RandomForest));
    CHECK(c.resolve("posts.jsonl") == fs::path("/base/posts.jsonl"));
    CHECK(c.resolve("/abs/x") == fs::path("/abs/x"));
    CHECK(configFromJson(j, "/base").digest() == c.digest());

    for (const auto& bad : {json{{"bogus", 1}}, json{{"seeds", {{"splt", 1}}}}, json{{"provider", {{"kind", "mock"}, {"mock_script", "m"}, {"key", "x"}}}},
                            json{{"train", {{"grids", {{"svm", json::object()}}}}}}}) {
        auto doc = minimalConfig();
        doc.merge_patch(bad);
        CHECK_THROWS_AS(configFromJson(doc, "/"), ConfigError);
    }
    auto doc = minimalConfig();
    doc["split"] = {{"holdout_sets", 1}};
    CHECK_THROWS_AS(configFromJson(doc, "/"), ConfigError);
    doc = minimalConfig();
    doc["threads"] = "many";
    CHECK_THROWS_AS(configFromJson(doc, "/"), ConfigError);
    doc = minimalConfig();
    doc["explain"] = {{"column_sets", {"zero_shot"}}};
    CHECK_THROWS_AS(configFromJson(doc, "/"), ConfigError);
    doc = minimalConfig();
    doc["provider"].erase("mock_script");
    CHECK_THROWS_AS(configFromJson(doc, "/"), ConfigError);
}

TEST_CASE("config digest ignores key order and tracks values") {
    const std::string a = R"({"corpus": {"posts": "p", "annotations": "a"}, "seeds": {"split": 5, "models": 7},
                              "provider": {"kind": "mock", "mock_script": "m", "temperature": 0.5}})";
    const std::string b = R"({"provider": {"temperature": 0.5, "mock_script": "m", "kind": "mock"},
                              "seeds": {"models": 7, "split": 5}, "corpus": {"annotations": "a", "posts": "p"}})";
    const auto ca = configFromJson(json::parse(a), "/x");
    const auto cb = configFromJson(json::parse(b), "/x");
    CHECK(ca.digest() == cb.digest());
    auto changed = json::parse(a);
    changed["seeds"]["split"] = 6;
    CHECK(configFromJson(changed, "/x").digest() != ca.digest());
    // materialized defaults equal explicit defaults
    auto explicitSeed = json::parse(a);
    explicitSeed["seeds"]["discovery"] = 20240602;
    CHECK(configFromJson(explicitSeed, "/x").digest() == ca.digest());
}

TEST_CASE("stage names and dependencies") {
    for (const auto s : kAllStages) CHECK(parseStage(stageName(s)) == s);
    CHECK_FALSE(parseStage("deploy"));
    // every dependency precedes its dependent
    for (std::size_t i = 0; i < kAllStages.size(); ++i) {
        for (const auto d : stageDependencies(kAllStages[i])) {
            CHECK(static_cast<std::size_t>(d) < i);
        }
    }
}

TEST_CASE("manifest round trip") {
    TempDir dir("manifest");
    RunManifest m;
    m.toolVersion = "1";
    m.configDigest = "abc";
    StageRecord r;
    r.stage = "ingest";
    r.startedAt = "t0";
    r.finishedAt = "t1";
    r.paramsDigest = "p";
    r.inputs = {{"ext:posts", "d1"}};
    r.outputs = {{"ingest/a.csv", "d2"}};
    r.cacheHits = 3;
    m.stages["ingest"] = r;
    m.save(dir / "manifest.json");
    CHECK(RunManifest::load(dir / "manifest.json").toJson() == m.toJson());
    CHECK(RunManifest::load(dir / "missing.json").stages.empty());
}

TEST_CASE("synthetic generator is deterministic and seed sensitive") {
    TempDir a("syn"), b("syn"), c("syn");
    const auto s = generateSynthetic(SyntheticOptions{}, a.path());
    CHECK(s.posts == 160);
    CHECK(s.annotations == 1600);
    generateSynthetic(SyntheticOptions{}, b.path());
    SyntheticOptions other;
    other.seed = 99;
    generateSynthetic(other, c.path());
    const auto da = digestTree(a.path());
    CHECK(da == digestTree(b.path()));
    CHECK(da.at("posts.jsonl") != digestTree(c.path()).at("posts.jsonl"));
    CHECK(da.size() == 7 + 160);

    // the bundled corpus is exactly what the generator writes
    const fs::path bundled = fs::path(CREDLENS_SOURCE_DIR) / "data" / "synthetic";
    CHECK(digestTree(bundled, {"out/", "cache/"}) == da);
}

TEST_CASE("train before quantify names the missing stage") {
    SyntheticRun run;
    Pipeline p(run.config);
    try {
        p.run(Stage::Split);
        FAIL("split ran without ingest");
    } catch (const MissingDependencyError& e) {
        CHECK(e.required() == Stage::Ingest);
    }
    p.run(Stage::Ingest);
    p.run(Stage::Split);
    try {
        p.run(Stage::Train);
        FAIL("train ran without quantify");
    } catch (const MissingDependencyError& e) {
        CHECK(e.stage() == Stage::Train);
        CHECK(e.required() == Stage::Quantify);
        CHECK(std::string(e.what()).find("quantify") != std::string::npos);
    }
}

TEST_CASE("end to end run: manifest, idempotence, determinism, report") {
    SyntheticRun first;
    SyntheticRun second;
    Pipeline p1(first.config);
    const auto results = p1.runAll();
    REQUIRE(results.size() == 10);
    for (const auto& r : results) CHECK_FALSE(r.skipped);

    const fs::path out = p1.outputDir();
    const auto manifest = RunManifest::load(out / "manifest.json");
    CHECK(manifest.stages.size() == 10);
    CHECK(manifest.configDigest == first.config.digest());
    CHECK(manifest.toolVersion == CREDLENS_VERSION);
    std::size_t listed = 0;
    for (const auto& [name, record] : manifest.stages) {
        for (const auto& [rel, digest] : record.outputs) {
            CHECK(sha256File(out / rel) == digest);
            ++listed;
        }
    }
    // every file under out/ except the manifest is listed
    CHECK(digestTree(out, {"manifest.json"}).size() == listed);
    CHECK(manifest.stages.at("rate").cacheMisses > 0);
    CHECK(manifest.stages.at("train").inputs.count("quantify/matrix.csv") == 1);
    CHECK(manifest.stages.at("ingest").inputs.count("image:p0001") == 1);

    // unchanged rerun is a no-op
    const auto before = digestTree(out, {"manifest.json"});
    Pipeline again(first.config);
    for (const auto& r : again.runAll()) CHECK(r.skipped);
    CHECK(digestTree(out, {"manifest.json"}) == before);

    // forced rerun serves every request from cache and reproduces every byte
    RunOptions force;
    force.force = true;
    Pipeline forced(first.config, force);
    for (const auto& r : forced.runAll()) CHECK_FALSE(r.skipped);
    CHECK(digestTree(out, {"manifest.json"}) == before);
    const auto m2 = RunManifest::load(out / "manifest.json");
    CHECK(m2.stages.at("rate").cacheMisses == 0);
    CHECK(m2.stages.at("rate").providerCalls == 0);

    // a second run in a fresh directory matches byte for byte
    Pipeline p2(second.config);
    p2.runAll();
    CHECK(digestTree(p2.outputDir(), {"manifest.json"}) == before);

    // report contents
    const auto comparison = csv::readFile(out / "report" / "comparison.csv");
    CHECK(comparison.rows.size() == 7);
    double previous = 1e9;
    for (const auto& row : comparison.rows) {
        const double r2 = parseDouble(row[comparison.column("r_squared")]);
        CHECK(r2 <= previous);
        previous = r2;
    }
    // generator calibration: the full-feature forest explains most of the test variance
    const auto preds = csv::readFile(out / "evaluate" / "test_predictions.csv");
    {
        const auto yc = preds.column("human_score"), fc = preds.column("rf_gpt_full");
        double m = 0, ssRes = 0, ssTot = 0;
        for (const auto& row : preds.rows) m += parseDouble(row[yc]) / static_cast<double>(preds.rows.size());
        for (const auto& row : preds.rows) {
            const double y = parseDouble(row[yc]);
            ssRes += (y - parseDouble(row[fc])) * (y - parseDouble(row[fc]));
            ssTot += (y - m) * (y - m);
        }
        CHECK(1.0 - ssRes / ssTot >= 0.55);
    }
    // fewer columns than top_k: every column is listed
    const auto explainMeta = json::parse(readTextFile(out / "explain" / "gpt_full" / "meta.json"));
    const auto top = csv::readFile(out / "report" / "shap_gpt_full_top20.csv");
    CHECK(explainMeta.at("columns").size() < 20);
    CHECK(top.rows.size() == explainMeta.at("columns").size());
    const std::string md = readTextFile(out / "report" / "report.md");
    CHECK(md.find(std::string(kReducedModelLabel)) != std::string::npos);
    CHECK(md.find("saturated") != std::string::npos);
    const std::string svg = readTextFile(out / "report" / "shap_gpt_no_zero_shot.svg");
    CHECK(svg.rfind("<svg", 0) == 0);

    const auto accuracy = json::parse(readTextFile(out / "explain" / "local_accuracy.json"));
    CHECK(accuracy.at("all_passed") == true);
    CHECK(accuracy.at("models").size() == 7);

    // gated feature never reaches a model
    const auto trainSummary = json::parse(readTextFile(out / "train" / "summary.json"));
    CHECK(trainSummary.at("excluded_features") == json{"visual_clutter"});
    for (const auto& m : trainSummary.at("models")) {
        for (const auto& col : m.at("columns")) CHECK(col != "gpt_visual_clutter");
    }
}

TEST_CASE("parameter change reruns only the affected stage; tampering is detected") {
    SyntheticRun run;
    Pipeline(run.config).runAll();
    const fs::path out = run.config.resolve(run.config.outputDir);
    auto cfg = run.config;
    cfg.topK = 5;
    Pipeline p(cfg);
    for (const auto s : kAllStages) {
        const auto r = p.run(s);
        CHECK(r.skipped == (s != Stage::Report));
    }
    CHECK(csv::readFile(out / "report" / "shap_gpt_full_top5.csv").rows.size() == 5);
    const auto swarm = csv::readFile(out / "report" / "shap_gpt_full_top5_beeswarm.csv");
    CHECK(swarm.rows.size() == 5 * 40);

    writeFileAtomic(out / "quantify" / "matrix.csv", "post_id,split\n");
    try {
        Pipeline(cfg).run(Stage::Train);
        FAIL("tampered dependency accepted");
    } catch (const MissingDependencyError& e) {
        CHECK(e.required() == Stage::Quantify);
    }
    RunOptions force;
    force.force = true;
    Pipeline(cfg, force).run(Stage::Quantify);
    // quantify is restored byte-identically, so train stays current
    CHECK(Pipeline(cfg).run(Stage::Train).skipped);
}

TEST_CASE("explain with the zero-shot column excluded") {
    SyntheticRun run;
    Pipeline(run.config).runAll();
    RunOptions options;
    options.columns = "gpt_no_zero_shot";
    Pipeline p(run.config, options);
    CHECK(p.run(Stage::Train).skipped == false);  // feature set override changes train parameters
    const auto r = p.run(Stage::Explain);
    CHECK_FALSE(r.skipped);
    const fs::path dir = p.outputDir() / "explain" / "gpt_no_zero_shot";
    const auto meta = json::parse(readTextFile(dir / "meta.json"));
    CHECK(meta.at("label") == std::string(kReducedModelLabel));
    CHECK(meta.at("includes_zero_shot") == false);
    CHECK(meta.at("max_local_accuracy_error").get<double>() < 1e-8);
    const auto summary = csv::readFile(dir / "summary.csv");
    for (const auto& row : summary.rows) CHECK(row[summary.column("feature")] != quantify::kZeroShotColumn);
    CHECK_FALSE(fs::exists(p.outputDir() / "explain" / "gpt_full"));

    CHECK_THROWS_AS(Pipeline(run.config, RunOptions{.columns = std::string("zero_shot")}), ConfigError);
}

TEST_CASE("replay-only fails on a cache miss and honours the cache override") {
    SyntheticRun run;
    TempDir cache("cache");
    ::setenv("CREDLENS_CACHE_DIR", cache.path().c_str(), 1);
    RunOptions replay;
    replay.replayOnly = true;
    Pipeline p(run.config, replay);
    CHECK(p.cacheDir() == cache.path());
    p.run(Stage::Ingest);
    CHECK_THROWS_AS(p.run(Stage::Rate), llm::ReplayMissError);

    Pipeline(run.config).run(Stage::Rate);  // fills the override directory
    CHECK(fs::exists(cache.path() / "index.jsonl"));
    CHECK_FALSE(fs::exists(run.data / "cache"));
    RunOptions forcedReplay = replay;
    forcedReplay.force = true;
    const auto r = Pipeline(run.config, forcedReplay).run(Stage::Rate);
    CHECK(r.record.cacheMisses == 0);
    CHECK(r.record.cacheHits > 0);
    ::unsetenv("CREDLENS_CACHE_DIR");
}

TEST_CASE("svg renderer draws every point and escapes labels") {
    const std::string summary = "feature,mean_abs_shap,rank\nb<&>,0.5,1\na,0.25,2\n";
    const std::string swarm = "feature,phi,feature_value,post_id\nb<&>,0.5,1,p1\nb<&>,-0.5,0,p2\na,0.25,3,p1\na,-0.25,3,p2\n";
    const auto data = shapPlotFromCsv(summary, swarm);
    REQUIRE(data.features == std::vector<std::string>{"b<&>", "a"});
    const auto svg = renderShapSvg(data, "T & U");
    std::size_t circles = 0;
    for (std::size_t pos = 0; (pos = svg.find("<circle", pos)) != std::string::npos; ++pos) ++circles;
    CHECK(circles == 4);
    CHECK(svg.find("b&lt;&amp;&gt;") != std::string::npos);
    CHECK(svg.find("T &amp; U") != std::string::npos);
    CHECK(svg.find("b<&>") == std::string::npos);
    CHECK(svg == renderShapSvg(data, "T & U"));
    CHECK_THROWS_AS(shapPlotFromCsv(summary, "feature,phi,feature_value,post_id\nzzz,1,1,p\n"), StageError);
}
