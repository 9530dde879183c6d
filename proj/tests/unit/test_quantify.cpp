#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#include "credlens/common/rng.hpp"
#include "credlens/quantify.hpp"
#include "test_support.hpp"

using namespace credlens;
using namespace credlens::quantify;
using credlens::testing::TempDir;
using credlens::testing::writeText;

namespace {

llm::GatewayOptions fastOptions() {
    llm::GatewayOptions o;
    o.retryBaseDelay = std::chrono::milliseconds(0);
    o.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
    return o;
}

struct Corpus {
    TempDir dir{"quant"};
    corpus::PostCollection posts;
    corpus::SplitAssignment splits;

    explicit Corpus(int perTopic, std::size_t holdout = 2) {
        writeText(dir / "img.png", std::string("\x89PNG\r\n\x1a\n", 8) + "pixels");
        std::string jsonl;
        int n = 0;
        for (auto topic : corpus::kAllTopics) {
            for (int i = 0; i < perTopic; ++i, ++n) {
                char id[16];
                std::snprintf(id, sizeof id, "q%04d", n);
                jsonl += std::string("{\"id\":\"") + id + "\",\"topic\":\"" + std::string(corpus::topicName(topic)) +
                         "\",\"caption\":\"caption of " + id + "\",\"image_path\":\"img.png\"}\n";
            }
        }
        posts = corpus::parsePosts(jsonl, dir.path());
        splits = corpus::makeSplits(posts, 3, holdout);
    }
};

/// Records every request and answers from a fixed rule list.
class RecordingProvider : public llm::Provider {
public:
    explicit RecordingProvider(std::vector<std::pair<std::string, std::string>> rules) : rules_(std::move(rules)) {}
    std::string name() const override { return "recording"; }
    std::string send(const llm::ModelParams&, const llm::MessageList& messages) override {
        std::lock_guard lock(mutex_);
        requests.push_back(messages);
        const auto text = llm::joinedText(messages);
        for (const auto& [needle, reply] : rules_)
            if (text.find(needle) != std::string::npos) return reply;
        return "no idea";
    }
    std::vector<llm::MessageList> requests;

private:
    std::vector<std::pair<std::string, std::string>> rules_;
    std::mutex mutex_;
};

catalog::FeatureSpec spec(std::string id, llm::Level level, std::vector<std::string> prompts) {
    catalog::FeatureSpec s;
    s.id = std::move(id);
    s.name = s.id;
    s.level = level;
    for (auto& p : prompts) s.prompts.push_back(p + "\n\n{{instructions}}");
    return s;
}

double twoPassVariance(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

double alphaOracle(const std::vector<std::vector<double>>& items) {
    const double k = static_cast<double>(items.size());
    std::vector<double> total(items[0].size(), 0.0);
    double sumVar = 0;
    for (const auto& item : items) {
        sumVar += twoPassVariance(item);
        for (std::size_t i = 0; i < item.size(); ++i) total[i] += item[i];
    }
    return k / (k - 1) * (1 - sumVar / twoPassVariance(total));
}

FeatureValue value(const std::string& post, const std::string& feature, std::vector<std::optional<double>> items) {
    FeatureValue v;
    v.postId = post;
    v.featureId = feature;
    v.itemScores = std::move(items);
    double sum = 0;
    int n = 0;
    for (const auto& s : v.itemScores)
        if (s) {
            sum += *s;
            ++n;
        }
    v.missing = n == 0;
    v.aggregate = n ? sum / n : 0.0;
    v.itemErrors.resize(v.itemScores.size());
    return v;
}

}  // namespace

TEST_CASE("score parsing") {
    CHECK(parseScore(R"({"score": 4})", 1, 7) == 4.0);
    CHECK(parseScore("Sure.\n```json\n{\"Score\": \"6\"}\n```", 1, 7) == 6.0);
    CHECK(parseScore("Score: 3. The caption is plain.", 1, 7) == 3.0);
    CHECK(parseScore("I would say 5 out of 7.", 1, 7) == 5.0);
    CHECK(parseScore("Roughly 2/7", 1, 7) == 2.0);
    CHECK(parseScore("4.5", 1, 7) == 4.5);
    CHECK_THROWS_AS(parseScore(R"({"score": 8})", 1, 7), zeroshot::OutOfRangeError);
    CHECK_THROWS_AS(parseScore("between 3 and 4", 1, 7), zeroshot::ParseError);
    CHECK_THROWS_AS(parseScore("no number", 1, 7), zeroshot::ParseError);
    CHECK_THROWS_AS(parseScore("level 0", 1, 7), zeroshot::OutOfRangeError);
}

TEST_CASE("measure feature aggregates item scores") {
    Corpus c(1, 0);
    const auto& post = c.posts.posts()[0];
    auto provider = std::make_shared<RecordingProvider>(std::vector<std::pair<std::string, std::string>>{
        {"first item", R"({"score":4})"}, {"second item", R"({"score":5})"}, {"third item", R"({"score":6})"}});
    llm::Gateway gateway(provider, std::make_shared<llm::ResponseCache>(c.dir / "cache"), fastOptions());
    const auto s = spec("detail", llm::Level::Post, {"first item?", "second item?", "third item?"});
    const auto v = measureFeature(post, s, llm::ModelParams{}, gateway);
    CHECK_FALSE(v.missing);
    CHECK(v.aggregate == 5.0);
    REQUIRE(v.itemScores.size() == 3);
    CHECK(*v.itemScores[2] == 6.0);
    for (const auto& req : provider->requests) CHECK(llm::imagePartCount(req) == 1);
}

TEST_CASE("image level requests carry no caption text") {
    Corpus c(1, 0);
    const auto& post = c.posts.posts()[0];
    auto provider = std::make_shared<RecordingProvider>(std::vector<std::pair<std::string, std::string>>{
        {"image look", R"({"score":3})"}});
    llm::Gateway gateway(provider, std::make_shared<llm::ResponseCache>(c.dir / "cache"), fastOptions());
    measureFeature(post, spec("look", llm::Level::Image, {"How does the image look? {{caption}}"}), llm::ModelParams{},
                   gateway);
    REQUIRE(provider->requests.size() == 1);
    CHECK(llm::joinedText(provider->requests[0]).find(post.caption) == std::string::npos);
    CHECK(llm::imagePartCount(provider->requests[0]) == 1);

    measureFeature(post, spec("words", llm::Level::Caption, {"image look of words?"}), llm::ModelParams{}, gateway);
    CHECK(llm::imagePartCount(provider->requests.back()) == 0);
    CHECK(llm::joinedText(provider->requests.back()).find(post.caption) != std::string::npos);
}

TEST_CASE("unparseable items are dropped or mark the value missing") {
    Corpus c(1, 0);
    const auto& post = c.posts.posts()[0];
    auto provider = std::make_shared<RecordingProvider>(std::vector<std::pair<std::string, std::string>>{
        {"good item", R"({"score":2})"}});
    llm::Gateway gateway(provider, std::make_shared<llm::ResponseCache>(c.dir / "cache"), fastOptions());
    llm::ModelParams params;
    params.maxRetries = 1;
    const auto partial = measureFeature(post, spec("mix", llm::Level::Post, {"good item?", "bad item?"}), params, gateway);
    CHECK_FALSE(partial.missing);
    CHECK(partial.aggregate == 2.0);
    CHECK_FALSE(partial.itemScores[1].has_value());
    CHECK_FALSE(partial.itemErrors[1].empty());

    const auto before = provider->requests.size();
    const auto none = measureFeature(post, spec("bad", llm::Level::Post, {"bad one?", "bad two?"}), params, gateway);
    CHECK(none.missing);
    CHECK(provider->requests.size() - before == 4);

    const auto back = parseValues(serializeValues({partial, none}));
    REQUIRE(back.size() == 2);
    CHECK(back[0].aggregate == 2.0);
    CHECK_FALSE(back[0].itemScores[1].has_value());
    CHECK(back[1].missing);
}

TEST_CASE("measure catalog covers every pair in order") {
    Corpus c(2, 0);
    auto provider = std::make_shared<RecordingProvider>(std::vector<std::pair<std::string, std::string>>{
        {"alpha", R"({"score":1})"}, {"beta", R"({"score":7})"}});
    llm::Gateway gateway(provider, std::make_shared<llm::ResponseCache>(c.dir / "cache"), fastOptions());
    catalog::FeatureCatalog cat;
    cat.features = {spec("b_feature", llm::Level::Post, {"beta?"}), spec("a_feature", llm::Level::Caption, {"alpha?"})};
    const auto values = measureCatalog(c.posts, cat, llm::ModelParams{}, gateway, 3);
    REQUIRE(values.size() == 32);
    CHECK(values[0].featureId == "b_feature");
    CHECK(values[0].postId == "q0000");
    CHECK(values[16].featureId == "a_feature");
    CHECK(values[16].aggregate == 1.0);
    CHECK(std::is_sorted(values.begin(), values.begin() + 16, [](auto& a, auto& b) { return a.postId < b.postId; }));
}

TEST_CASE("cronbach alpha examples") {
    CHECK(cronbachAlpha({{1, 2, 3}, {1, 2, 3}}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(cronbachAlpha({{1, 2, 3}, {2, 4, 6}}) - 8.0 / 9.0) < 1e-15);
    CHECK_THROWS_AS(cronbachAlpha({{1, 2, 3}, {3, 2, 1}}), QuantifyError);
    CHECK_THROWS_AS(cronbachAlpha({{1, 2, 3}}), QuantifyError);
    CHECK_THROWS_AS(cronbachAlpha({{1}, {2}}), QuantifyError);
    CHECK(cronbachAlpha({{1, 2, 3, 4}, {4, 3, 2, 1.5}}) < 0.0);
}

TEST_CASE("cronbach alpha matches the two-pass oracle and is permutation invariant") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = 2 + rng.uniformBelow(4);
        const std::size_t n = 3 + rng.uniformBelow(40);
        std::vector<std::vector<double>> items(k, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const double latent = rng.normal();
            for (auto& item : items) item[i] = latent + rng.normal() * (0.3 + rng.uniform01());
        }
        const double a = cronbachAlpha(items);
        CHECK(std::abs(a - alphaOracle(items)) < 1e-10);
        CHECK(a <= 1.0);

        auto reordered = items;
        std::reverse(reordered.begin(), reordered.end());
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        for (auto& item : reordered) {
            std::vector<double> shuffled(n);
            for (std::size_t i = 0; i < n; ++i) shuffled[i] = item[perm[i]];
            item = shuffled;
        }
        CHECK(std::abs(cronbachAlpha(reordered) - a) < 1e-12);
    }
}

TEST_CASE("reliability gate") {
    catalog::FeatureCatalog cat;
    cat.features = {spec("steady", llm::Level::Post, {"a", "b"}), spec("noisy", llm::Level::Post, {"a", "b"}),
                    spec("single", llm::Level::Post, {"a"})};
    std::vector<FeatureValue> values;
    const std::vector<double> x{1, 2, 3, 4, 5, 6};
    const std::vector<double> y{2, 1, 4, 3, 6, 5};
    const std::vector<double> z{3, 6, 1, 5, 2, 4};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::string id = "p" + std::to_string(i);
        values.push_back(value(id, "steady", {x[i], y[i]}));
        values.push_back(value(id, "noisy", {x[i], z[i]}));
        values.push_back(value(id, "single", {x[i]}));
    }
    values.push_back(value("p9", "steady", {4.0, std::nullopt}));
    const auto report = reliabilityGate(values, cat);
    REQUIRE(report.scores.size() == 2);
    CHECK(report.scores[0].featureId == "steady");
    CHECK(report.scores[0].n == 6);
    CHECK(report.scores[0].passed);
    CHECK(*report.scores[0].alpha == doctest::Approx(alphaOracle({x, y})));
    CHECK(*report.scores[0].alpha > 0.9);
    CHECK_FALSE(report.scores[1].passed);
    CHECK(*report.scores[1].alpha < 0.7);
    CHECK(report.flagged == std::set<std::string>{"noisy"});
    CHECK(report.warnings.size() == 1);
}

TEST_CASE("matrix assembly shape, dummies and imputation") {
    Corpus c(20, 4);
    catalog::FeatureCatalog cat = catalog::defaultCatalog();
    std::vector<FeatureValue> values;
    std::vector<zeroshot::ZeroShotResult> zs;
    Rng rng(5);
    for (const auto& s : cat.features) {
        for (const auto& p : c.posts.posts()) {
            std::vector<std::optional<double>> items;
            for (std::size_t i = 0; i < s.prompts.size(); ++i) items.push_back(1.0 + static_cast<double>(rng.uniformBelow(7)));
            values.push_back(value(p.id, s.id, items));
        }
    }
    for (const auto& p : c.posts.posts()) zs.push_back({p.id, {4, 4, 5}, 13.0 / 3.0, "r", "k"});

    // one missing cell in a train row of a column whose train mean is 4.2
    const auto trainIds = c.splits.idsIn(corpus::Split::Train);
    for (auto& v : values) {
        if (v.featureId != "formality") continue;
        const bool isTrain = c.splits.of(v.postId) == corpus::Split::Train;
        v.itemScores = {isTrain ? 4.0 : 6.0, isTrain ? 4.0 : 6.0};
        v.aggregate = isTrain ? 4.0 : 6.0;
        if (v.postId == trainIds[0]) v = value(v.postId, "formality", {std::nullopt, std::nullopt});
        if (v.postId == trainIds[1]) v = value(v.postId, "formality", {7.0, 7.0});
    }
    // train: 94 rows at 4.0, one at 7.0, one missing -> (94*4 + 7)/95
    REQUIRE(trainIds.size() == 96);

    auto blocks = gptBlocks(values, cat);
    blocks.push_back(zeroShotBlock(zs));
    const auto m = assembleMatrix(c.posts, c.splits, blocks);
    CHECK(m.rows() == 160);
    CHECK(m.cols() == 21);
    CHECK(std::is_sorted(m.rowIds.begin(), m.rowIds.end()));
    CHECK(m.columns.front() == "gpt_aesthetic_quality");
    CHECK(m.columns[6] == "gpt_information_concreteness");
    const auto zsIdx = m.columnIndex(kZeroShotColumn);
    REQUIRE(zsIdx);
    CHECK(*zsIdx == 12);
    CHECK(m.columns[13] == "topic_climate_change");

    for (std::size_t r = 0; r < m.rows(); ++r) {
        int ones = 0, zeros = 0;
        for (std::size_t col = 13; col < 21; ++col) {
            if (m.values(r, col) == 1.0) ++ones;
            else if (m.values(r, col) == 0.0) ++zeros;
        }
        CHECK(ones == 1);
        CHECK(zeros == 7);
    }

    const std::size_t f = *m.columnIndex("gpt_formality");
    const auto row = static_cast<std::size_t>(std::find(m.rowIds.begin(), m.rowIds.end(), trainIds[0]) - m.rowIds.begin());
    CHECK(m.imputed(row, f));
    CHECK(m.values(row, f) == (94.0 * 4.0 + 7.0) / 95.0);
    std::size_t imputedCells = 0;
    for (auto b : m.mask) imputedCells += b;
    CHECK(imputedCells == 1);

    SUBCASE("round trip is bit exact and deterministic") {
        TempDir dir("mat");
        writeMatrix(m, dir / "matrix.csv");
        const auto back = readMatrix(dir / "matrix.csv");
        CHECK(back.values == m.values);
        CHECK(back.mask == m.mask);
        CHECK(back.rowIds == m.rowIds);
        CHECK(back.splits == m.splits);
        CHECK(back.topics == m.topics);
        CHECK(serializeMatrix(back) == serializeMatrix(m));
        CHECK(serializeMatrix(assembleMatrix(c.posts, c.splits, blocks)) == serializeMatrix(m));
    }

    SUBCASE("test split values never leak into imputation") {
        auto perturbed = blocks;
        for (auto& [id, v] : perturbed[0].values)
            if (c.splits.of(id) == corpus::Split::Test) v = 1.0;
        for (auto& [id, v] : perturbed[1].values)
            if (c.splits.of(id) == corpus::Split::Test) v = std::nullopt;
        const auto other = assembleMatrix(c.posts, c.splits, perturbed);
        CHECK(other.values(row, f) == m.values(row, f));
        const auto trainRows = m.rowsIn(corpus::Split::Train);
        for (auto r : trainRows)
            for (std::size_t col = 0; col < m.cols(); ++col) CHECK(other.values(r, col) == m.values(r, col));
    }

    SUBCASE("column sets") {
        const auto full = selectColumns(m, ColumnSet::GptFull);
        CHECK(full.size() == 21);
        const auto reduced = selectColumns(m, ColumnSet::GptNoZeroShot);
        CHECK(reduced.size() == 20);
        CHECK(std::find(reduced.begin(), reduced.end(), kZeroShotColumn) == reduced.end());
        CHECK(selectColumns(m, ColumnSet::ZeroShot) == std::vector<std::string>{std::string(kZeroShotColumn)});
        CHECK(selectColumns(m, ColumnSet::GptFull, {"formality", "readability"}).size() == 19);
        CHECK_THROWS_AS(selectColumns(m, ColumnSet::Baseline), QuantifyError);
        CHECK(parseColumnSet("gpt_no_zero_shot") == ColumnSet::GptNoZeroShot);
        CHECK_FALSE(parseColumnSet("everything"));
    }
}

TEST_CASE("matrix assembly errors") {
    Corpus c(3, 1);
    CHECK_THROWS_AS(assembleMatrix(c.posts, c.splits, {}), QuantifyError);
    ColumnBlock unknown{"gpt_x", Provenance::Gpt, {{"nobody", 1.0}}};
    CHECK_THROWS_AS(assembleMatrix(c.posts, c.splits, {unknown}), QuantifyError);
    ColumnBlock badPrefix{"x", Provenance::Baseline, {}};
    CHECK_THROWS_AS(assembleMatrix(c.posts, c.splits, {badPrefix}), QuantifyError);
    ColumnBlock empty{"base_empty", Provenance::Baseline, {}};
    CHECK_THROWS_AS(assembleMatrix(c.posts, c.splits, {empty}), QuantifyError);
}
