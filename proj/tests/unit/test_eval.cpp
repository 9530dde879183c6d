#include <doctest.h>

#include <cmath>
#include <numeric>

#include "credlens/common/rng.hpp"
#include "credlens/eval.hpp"
#include "credlens/stats.hpp"

using namespace credlens;
using namespace credlens::eval;

namespace {

struct Oracle {
    double r, r2, mse;
};

Oracle directFormulas(const std::vector<double>& y, const std::vector<double>& p) {
    const double n = static_cast<double>(y.size());
    double sy = 0.0, sp = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sy += y[i];
        sp += p[i];
    }
    const double my = sy / n, mp = sp / n;
    double num = 0.0, dy = 0.0, dp = 0.0, res = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        num += (y[i] - my) * (p[i] - mp);
        dy += (y[i] - my) * (y[i] - my);
        dp += (p[i] - mp) * (p[i] - mp);
        res += (y[i] - p[i]) * (y[i] - p[i]);
    }
    return {num / std::sqrt(dy) / std::sqrt(dp), 1.0 - res / dy, res / n};
}

/// 8 topics x (fitRows + testRows) rows; column "signal" drives the target,
/// "weak" is a noisy copy. Splits: first fitRows train/val, rest test.
quantify::FeatureMatrix topicMatrix(Rng& rng, std::size_t fitRows, std::size_t testRows,
                                    std::map<std::string, double>& target) {
    quantify::FeatureMatrix m;
    m.columns = {"gpt_signal", "gpt_zero_shot_credibility"};
    const std::size_t per = fitRows + testRows;
    m.values = DenseMatrix(8 * per, 2);
    std::size_t row = 0;
    for (auto topic : corpus::kAllTopics) {
        for (std::size_t i = 0; i < per; ++i, ++row) {
            char id[16];
            std::snprintf(id, sizeof id, "p%04zu", row);
            m.rowIds.push_back(id);
            m.topics.push_back(topic);
            m.splits.push_back(i < fitRows ? (i % 5 == 0 ? corpus::Split::Validation : corpus::Split::Train)
                                           : corpus::Split::Test);
            const double s = rng.uniform(1.0, 7.0);
            m.values(row, 0) = s;
            m.values(row, 1) = s + 3.0 * rng.normal();
            target[id] = std::sin(s) * 2.0 + s + 0.05 * rng.normal();
        }
    }
    m.mask.assign(m.values.rows() * 2, 0);
    return m;
}

}  // namespace

TEST_CASE("metrics identity and mean predictor") {
    const std::vector<double> y{1.0, 2.5, 3.0, 7.0, 4.0};
    const auto id = computeMetrics(y, y, "m", "test");
    CHECK(*id.r == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(*id.rSquared == 1.0);
    CHECK(id.mse == 0.0);
    CHECK(id.n == 5);
    CHECK(id.model == "m");
    CHECK(id.split == "test");

    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= 5.0;
    const auto flat = computeMetrics(y, std::vector<double>(5, mean));
    CHECK(*flat.rSquared == 0.0);
    CHECK_FALSE(flat.r.has_value());
    CHECK_FALSE(flat.pValue.has_value());

    const auto degenerate = computeMetrics(std::vector<double>(4, 2.0), std::vector<double>{1, 2, 3, 4});
    CHECK_FALSE(degenerate.rSquared.has_value());
    CHECK_FALSE(degenerate.r.has_value());
    CHECK(degenerate.mse == doctest::Approx(1.5));

    CHECK_THROWS_AS(computeMetrics(std::vector<double>{1}, std::vector<double>{1}), EvalError);
    CHECK_THROWS_AS(computeMetrics(std::vector<double>{1, 2}, std::vector<double>{1}), EvalError);
}

TEST_CASE("metrics match direct formulas on 1000 random instances") {
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.uniformBelow(150);
        std::vector<double> y(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.uniform(1.0, 7.0);
            p[i] = 0.5 * y[i] + rng.normal();
        }
        const auto rep = computeMetrics(y, p);
        const auto o = directFormulas(y, p);
        CHECK(std::abs(*rep.r - o.r) < 1e-10);
        CHECK(std::abs(*rep.rSquared - o.r2) < 1e-10);
        CHECK(std::abs(rep.mse - o.mse) < 1e-10);
        CHECK(rep.mse >= 0.0);
        CHECK(*rep.rSquared <= 1.0);
        CHECK(std::abs(*rep.r) <= 1.0);
        if (n >= 3) CHECK(*rep.pValue == doctest::Approx(stats::correlationPValue(*rep.r, n)));
    }
}

TEST_CASE("correlation affine invariance") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> y(40), p(40);
        for (std::size_t i = 0; i < 40; ++i) {
            y[i] = rng.normal();
            p[i] = y[i] + rng.normal();
        }
        const double base = *computeMetrics(y, p).r;
        const double a = rng.uniform(0.1, 10.0), b = rng.uniform(-5.0, 5.0);
        std::vector<double> scaled(40), flipped(40), ys(40);
        for (std::size_t i = 0; i < 40; ++i) {
            scaled[i] = a * p[i] + b;
            flipped[i] = -a * p[i] + b;
            ys[i] = a * y[i] - b;
        }
        CHECK(*computeMetrics(y, scaled).r == doctest::Approx(base).epsilon(1e-12));
        CHECK(*computeMetrics(ys, p).r == doctest::Approx(base).epsilon(1e-12));
        CHECK(*computeMetrics(y, flipped).r == doctest::Approx(-base).epsilon(1e-12));
    }
}

TEST_CASE("train mean predictor has zero R2 on its own data") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> y(2 + rng.uniformBelow(60));
        for (auto& v : y) v = rng.uniform(1.0, 7.0);
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= static_cast<double>(y.size());
        CHECK(*computeMetrics(y, std::vector<double>(y.size(), mean)).rSquared == 0.0);
    }
}

TEST_CASE("compare models deltas") {
    EvalReport ref{"zero_shot", "test", 400, 0.7, 0.45, 1e-9, 0.37};
    EvalReport rf{"rf", "test", 400, 0.76, 0.58, 1e-9, 0.28};
    EvalReport base{"baseline", "test", 400, 0.54, 0.29, 1e-9, 0.48};
    const auto c = compareModels({ref, base, rf}, "zero_shot");
    REQUIRE(c.rows.size() == 3);
    CHECK(c.rows[0].report.model == "rf");
    CHECK(c.rows[1].report.model == "zero_shot");
    CHECK(c.rows[2].report.model == "baseline");
    const auto& top = c.rows[0];
    CHECK(*top.deltaRSquared * 100.0 == doctest::Approx(13.0).epsilon(1e-12));
    CHECK(*top.relativeRSquared == doctest::Approx(0.13 / 0.45).epsilon(1e-12));
    CHECK(std::round(*top.relativeRSquared * 1000.0) / 10.0 == 28.9);
    CHECK(top.deltaMse == doctest::Approx(-0.09).epsilon(1e-12));
    CHECK(std::round(*top.relativeMse * 1000.0) / 10.0 == -24.3);
    const auto text = comparisonText(c);
    CHECK(text.find("+13.0") != std::string::npos);
    CHECK(text.find("+28.9%") != std::string::npos);
    CHECK(text.find("-24.3%") != std::string::npos);
    const auto csv = comparisonCsv(c);
    CHECK(csv.rfind("model,split,n,r,p_value,r_squared,mse", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

    const auto self = compareModels({ref, ref}, "zero_shot");
    for (const auto& row : self.rows) {
        CHECK(*row.deltaRSquared == 0.0);
        CHECK(row.deltaMse == 0.0);
        CHECK(*row.relativeMse == 0.0);
    }

    EvalReport other = rf;
    other.split = "validation";
    CHECK_THROWS_AS(compareModels({ref, other}, "zero_shot"), EvalError);
    CHECK_THROWS_AS(compareModels({ref}, "zero_shot"), EvalError);
    CHECK_THROWS_AS(compareModels({ref, rf}, "lasso"), EvalError);
    CHECK(comparisonToJson(c)["rows"].size() == 3);
}

TEST_CASE("report json round trip") {
    EvalReport r{"x", "test", 10, std::nullopt, -0.25, std::nullopt, 1.5};
    const auto back = reportFromJson(nlohmann::json::parse(reportToJson(r).dump()));
    CHECK(back.model == "x");
    CHECK_FALSE(back.r.has_value());
    CHECK(*back.rSquared == -0.25);
    CHECK(back.mse == 1.5);
    CHECK_THROWS_AS(reportFromJson(nlohmann::json{{"model", "x"}}), EvalError);
}

TEST_CASE("per-topic evaluation shape and dominance") {
    Rng rng(4);
    std::map<std::string, double> target;
    const auto m = topicMatrix(rng, 40, 12, target);
    const std::vector<ModelSpec> specs{
        {"zero_shot", models::ModelKind::Ols, nlohmann::json::object(), {"gpt_zero_shot_credibility"}},
        {"features", models::ModelKind::RandomForest, {{"n_trees", 30}}, {"gpt_signal"}}};
    const auto table = perTopicEval(m, target, specs, 7);
    REQUIRE(table.reports.size() == 8);
    for (const auto& [topic, reports] : table.reports) {
        REQUIRE(reports.size() == 2);
        for (const auto& r : reports) CHECK(r.n == 12);
        CHECK(reports[0].model == "zero_shot");
        CHECK(*reports[1].rSquared > *reports[0].rSquared);
        CHECK(reports[0].split == "test:" + std::string(corpus::topicName(topic)));
    }
    const auto csv = topicTableCsv(table);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);
    CHECK(topicTableToJson(table).size() == 8);
    CHECK(topicTableText(table).find("climate_change") != std::string::npos);

    auto broken = m;
    for (std::size_t r = 0; r < broken.rows(); ++r)
        if (broken.topics[r] == corpus::Topic::Vaccines) broken.splits[r] = corpus::Split::Train;
    CHECK_THROWS_AS(perTopicEval(broken, target, specs, 7), EvalError);
    auto missing = target;
    missing.erase(m.rowIds[0]);
    CHECK_THROWS_AS(perTopicEval(m, missing, specs, 7), EvalError);
}

TEST_CASE("per-topic test size at full scale is 50") {
    Rng rng(5);
    std::map<std::string, double> target;
    const auto m = topicMatrix(rng, 60, 50, target);
    const std::vector<ModelSpec> specs{{"zero_shot", models::ModelKind::Ols, nlohmann::json::object(), {"gpt_zero_shot_credibility"}}};
    const auto table = perTopicEval(m, target, specs, 1);
    for (const auto& [topic, reports] : table.reports) CHECK(reports[0].n == 50);
}
