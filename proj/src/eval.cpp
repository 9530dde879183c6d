#include "credlens/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "credlens/common/csv.hpp"
#include "credlens/common/io.hpp"
#include "credlens/stats.hpp"

namespace credlens::eval {

using nlohmann::json;

EvalReport computeMetrics(std::span<const double> yTrue, std::span<const double> yPred, std::string model,
                          std::string split) {
    if (yTrue.size() != yPred.size()) throw EvalError("y_true and y_pred differ in length");
    if (yTrue.size() < 2) throw EvalError("metrics need at least two observations");
    const std::size_t n = yTrue.size();
    const double nd = static_cast<double>(n);
    double mt = 0.0, mp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mt += yTrue[i];
        mp += yPred[i];
    }
    mt /= nd;
    mp /= nd;
    double sres = 0.0, stt = 0.0, spp = 0.0, stp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = yTrue[i] - yPred[i], dt = yTrue[i] - mt, dp = yPred[i] - mp;
        sres += e * e;
        stt += dt * dt;
        spp += dp * dp;
        stp += dt * dp;
    }
    EvalReport rep;
    rep.model = std::move(model);
    rep.split = std::move(split);
    rep.n = n;
    rep.mse = sres / nd;
    if (stt > 0.0) rep.rSquared = 1.0 - sres / stt;
    if (stt > 0.0 && spp > 0.0) {
        rep.r = std::clamp(stp / std::sqrt(stt * spp), -1.0, 1.0);
        if (n >= 3) rep.pValue = stats::correlationPValue(*rep.r, n);
    }
    return rep;
}

namespace {

json optionalJson(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optionalFrom(const json& v) {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
}

std::string csvNumber(const std::optional<double>& v) { return v ? formatDouble(*v) : std::string(); }

std::string fixed(const std::optional<double>& v, int digits = 4, bool sign = false) {
    if (!v) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, sign ? "%+.*f" : "%.*f", digits, *v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width, bool right = true) {
    if (s.size() >= width) return s;
    const std::string fill(width - s.size(), ' ');
    return right ? fill + s : s + fill;
}

/// Aligned table: first column left-justified, the rest right-justified.
std::string alignedTable(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& row : rows) {
        widths.resize(std::max(widths.size(), row.size()), 0);
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
    }
    std::string out;
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) line += "  ";
            line += pad(row[c], widths[c], c != 0);
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    }
    return out;
}

}  // namespace

json reportToJson(const EvalReport& r) {
    return {{"model", r.model},          {"split", r.split}, {"n", r.n},   {"r", optionalJson(r.r)},
            {"r_squared", optionalJson(r.rSquared)}, {"p_value", optionalJson(r.pValue)}, {"mse", r.mse}};
}

EvalReport reportFromJson(const json& doc) {
    try {
        EvalReport r;
        r.model = doc.at("model").get<std::string>();
        r.split = doc.at("split").get<std::string>();
        r.n = doc.at("n").get<std::size_t>();
        r.r = optionalFrom(doc.at("r"));
        r.rSquared = optionalFrom(doc.at("r_squared"));
        r.pValue = optionalFrom(doc.at("p_value"));
        r.mse = doc.at("mse").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw EvalError(std::string("malformed eval report: ") + e.what());
    }
}

Dataset extractDataset(const quantify::FeatureMatrix& m, const std::vector<std::string>& columns,
                       std::span<const std::size_t> rows, const std::map<std::string, double>& target) {
    const auto cols = m.columnIndices(columns);
    Dataset d;
    d.X = DenseMatrix(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows[i];
        const auto& id = m.rowIds.at(r);
        const auto it = target.find(id);
        if (it == target.end()) throw EvalError("no target score for post '" + id + "'");
        d.ids.push_back(id);
        d.y.push_back(it->second);
        for (std::size_t c = 0; c < cols.size(); ++c) d.X(i, c) = m.values(r, cols[c]);
    }
    return d;
}

TopicEvalTable perTopicEval(const quantify::FeatureMatrix& m, const std::map<std::string, double>& target,
                            const std::vector<ModelSpec>& specs, std::uint64_t seed, std::size_t threads) {
    if (specs.empty()) throw EvalError("per-topic evaluation needs at least one model");
    TopicEvalTable table;
    for (auto topic : corpus::kAllTopics) {
        std::vector<std::size_t> fitRows, testRows;
        for (std::size_t r = 0; r < m.rows(); ++r) {
            if (m.topics[r] != topic) continue;
            (m.splits[r] == corpus::Split::Test ? testRows : fitRows).push_back(r);
        }
        const std::string name(corpus::topicName(topic));
        if (fitRows.empty() || testRows.empty()) throw EvalError("topic '" + name + "' has an empty train or test partition");
        auto& reports = table.reports[topic];
        for (const auto& spec : specs) {
            const auto fit = extractDataset(m, spec.columns, fitRows, target);
            const auto test = extractDataset(m, spec.columns, testRows, target);
            const auto model = models::fitModel(spec.kind, spec.hyperparams, fit.X, fit.y, seed, spec.columns, threads);
            reports.push_back(computeMetrics(test.y, model.predict(test.X), spec.label, "test:" + name));
        }
    }
    return table;
}

json topicTableToJson(const TopicEvalTable& table) {
    json out = json::object();
    for (const auto& [topic, reports] : table.reports) {
        json list = json::array();
        for (const auto& r : reports) list.push_back(reportToJson(r));
        out[std::string(corpus::topicName(topic))] = list;
    }
    return out;
}

std::string topicTableCsv(const TopicEvalTable& table) {
    std::string out = csv::formatRow({"topic", "model", "n", "r", "r_squared", "mse"});
    for (const auto& [topic, reports] : table.reports) {
        for (const auto& r : reports) {
            out += csv::formatRow({std::string(corpus::topicName(topic)), r.model, std::to_string(r.n), csvNumber(r.r),
                                   csvNumber(r.rSquared), formatDouble(r.mse)});
        }
    }
    return out;
}

std::string topicTableText(const TopicEvalTable& table) {
    std::vector<std::vector<std::string>> rows{{"topic", "model", "n", "r", "R2", "MSE"}};
    for (const auto& [topic, reports] : table.reports) {
        for (const auto& r : reports) {
            rows.push_back({std::string(corpus::topicName(topic)), r.model, std::to_string(r.n), fixed(r.r),
                            fixed(r.rSquared), fixed(r.mse)});
        }
    }
    return alignedTable(rows);
}

Comparison compareModels(const std::vector<EvalReport>& reports, const std::string& referenceModel) {
    if (reports.size() < 2) throw EvalError("comparison needs at least two reports");
    const auto& split = reports.front().split;
    for (const auto& r : reports)
        if (r.split != split) throw EvalError("cannot compare reports from splits '" + split + "' and '" + r.split + "'");
    const auto ref = std::find_if(reports.begin(), reports.end(), [&](const auto& r) { return r.model == referenceModel; });
    if (ref == reports.end()) throw EvalError("reference model '" + referenceModel + "' not among the reports");

    Comparison c;
    c.reference = referenceModel;
    c.split = split;
    for (const auto& r : reports) {
        ComparisonRow row;
        row.report = r;
        if (r.rSquared && ref->rSquared) {
            row.deltaRSquared = *r.rSquared - *ref->rSquared;
            if (*ref->rSquared != 0.0) row.relativeRSquared = *row.deltaRSquared / std::abs(*ref->rSquared);
        }
        row.deltaMse = r.mse - ref->mse;
        if (ref->mse != 0.0) row.relativeMse = row.deltaMse / ref->mse;
        c.rows.push_back(std::move(row));
    }
    std::stable_sort(c.rows.begin(), c.rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
        const auto& x = a.report.rSquared;
        const auto& y = b.report.rSquared;
        if (x.has_value() != y.has_value()) return x.has_value();
        if (x && *x != *y) return *x > *y;
        return a.report.model < b.report.model;
    });
    return c;
}

json comparisonToJson(const Comparison& c) {
    json rows = json::array();
    for (const auto& row : c.rows) {
        json j = reportToJson(row.report);
        j["delta_r_squared"] = optionalJson(row.deltaRSquared);
        j["relative_r_squared"] = optionalJson(row.relativeRSquared);
        j["delta_mse"] = row.deltaMse;
        j["relative_mse"] = optionalJson(row.relativeMse);
        rows.push_back(std::move(j));
    }
    return {{"reference", c.reference}, {"split", c.split}, {"rows", rows}};
}

std::string comparisonCsv(const Comparison& c) {
    std::string out = csv::formatRow({"model", "split", "n", "r", "p_value", "r_squared", "mse", "delta_r_squared",
                                      "relative_r_squared", "delta_mse", "relative_mse"});
    for (const auto& row : c.rows) {
        const auto& r = row.report;
        out += csv::formatRow({r.model, r.split, std::to_string(r.n), csvNumber(r.r), csvNumber(r.pValue),
                               csvNumber(r.rSquared), formatDouble(r.mse), csvNumber(row.deltaRSquared),
                               csvNumber(row.relativeRSquared), formatDouble(row.deltaMse), csvNumber(row.relativeMse)});
    }
    return out;
}

std::string comparisonText(const Comparison& c) {
    const auto points = [](const std::optional<double>& d) -> std::optional<double> {
        if (!d) return std::nullopt;
        return *d * 100.0;
    };
    const auto percent = [](const std::optional<double>& d) -> std::string {
        return d ? fixed(*d * 100.0, 1, true) + "%" : "n/a";
    };
    std::vector<std::vector<std::string>> rows{
        {"model", "n", "r", "R2", "MSE", "dR2 (pts)", "dR2 rel", "dMSE", "dMSE rel"}};
    for (const auto& row : c.rows) {
        const auto& r = row.report;
        rows.push_back({r.model, std::to_string(r.n), fixed(r.r), fixed(r.rSquared), fixed(r.mse),
                        fixed(points(row.deltaRSquared), 1, true), percent(row.relativeRSquared),
                        fixed(row.deltaMse, 4, true), percent(row.relativeMse)});
    }
    return "split: " + c.split + "  reference: " + c.reference + "\n" + alignedTable(rows);
}

}  // namespace credlens::eval
