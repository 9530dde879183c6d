#pragma once

#include <json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "credlens/common/error.hpp"
#include "credlens/models.hpp"
#include "credlens/quantify.hpp"

namespace credlens::eval {

class EvalError : public Error {
public:
    using Error::Error;
};

struct EvalReport {
    std::string model;
    std::string split;
    std::size_t n = 0;
    /// Empty when either input has zero variance.
    std::optional<double> r;
    /// Empty when y_true is constant. SS_tot uses this split's own mean.
    std::optional<double> rSquared;
    /// Two-sided p for r under H0 rho = 0; empty with r or when n < 3.
    std::optional<double> pValue;
    double mse = 0.0;
};

EvalReport computeMetrics(std::span<const double> yTrue, std::span<const double> yPred, std::string model = {},
                          std::string split = {});

nlohmann::json reportToJson(const EvalReport& report);
EvalReport reportFromJson(const nlohmann::json& doc);

struct Dataset {
    std::vector<std::string> ids;
    DenseMatrix X;
    std::vector<double> y;
};

/// Rows of `m` (by index) restricted to `columns`, with targets from
/// `target`; a row without a target raises EvalError.
Dataset extractDataset(const quantify::FeatureMatrix& m, const std::vector<std::string>& columns,
                       std::span<const std::size_t> rows, const std::map<std::string, double>& target);

struct ModelSpec {
    std::string label;
    models::ModelKind kind = models::ModelKind::Ols;
    nlohmann::json hyperparams = nlohmann::json::object();
    std::vector<std::string> columns;
};

/// topic -> one report per spec, in spec order.
struct TopicEvalTable {
    std::map<corpus::Topic, std::vector<EvalReport>> reports;
};

/// For each topic, fits every spec on that topic's train + validation rows
/// and scores it on the topic's test rows.
TopicEvalTable perTopicEval(const quantify::FeatureMatrix& m, const std::map<std::string, double>& target,
                            const std::vector<ModelSpec>& specs, std::uint64_t seed, std::size_t threads = 1);

nlohmann::json topicTableToJson(const TopicEvalTable& table);
std::string topicTableCsv(const TopicEvalTable& table);
std::string topicTableText(const TopicEvalTable& table);

struct ComparisonRow {
    EvalReport report;
    /// Absolute and relative (over |reference|) differences from the reference.
    std::optional<double> deltaRSquared;
    std::optional<double> relativeRSquared;
    double deltaMse = 0.0;
    std::optional<double> relativeMse;
};

struct Comparison {
    std::string reference;
    std::string split;
    /// Sorted by R^2 descending (undefined last), then model label.
    std::vector<ComparisonRow> rows;
};

Comparison compareModels(const std::vector<EvalReport>& reports, const std::string& referenceModel);

nlohmann::json comparisonToJson(const Comparison& c);
std::string comparisonCsv(const Comparison& c);
std::string comparisonText(const Comparison& c);

}  // namespace credlens::eval
