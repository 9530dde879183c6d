#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "credlens/common/error.hpp"

namespace credlens::stats {

class StatsError : public Error {
public:
    using Error::Error;
};

double mean(std::span<const double> values);
/// Sample variance with the n-1 denominator. Requires n >= 2.
double sampleVariance(std::span<const double> values);

/// Mean, sample SD, and moment-based shape statistics of a sample.
/// Skewness is m3 / m2^1.5 and excess kurtosis is m4 / m2^2 - 3, with the
/// central moments m_j taken with the 1/n denominator. When every value is
/// equal the shape statistics are undefined and left empty.
struct DistributionStats {
    double mean = 0.0;
    double sd = 0.0;
    std::optional<double> skewness;
    std::optional<double> excessKurtosis;
    std::size_t n = 0;

    bool zeroVariance() const { return !skewness.has_value(); }
};

DistributionStats distributionStats(std::span<const double> values);

struct PairedTestResult {
    double t = 0.0;
    std::size_t df = 0;
    double p = 1.0;
};

/// Paired Student t test on d = a - b, two-sided.
PairedTestResult pairedTTest(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a, b), Lentz continued fraction to 1e-12.
double regularizedIncompleteBeta(double x, double a, double b);

/// Two-sided tail probability P(|T| >= |t|) for Student t with df degrees.
double studentTwoSidedP(double t, double df);

/// Sample Pearson correlation. Throws if either input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Two-sided p of H0: rho = 0 using t = r sqrt((n-2)/(1-r^2)).
double correlationPValue(double r, std::size_t n);

}  // namespace credlens::stats
