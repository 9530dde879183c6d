#include "credlens/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace credlens::stats {

double mean(std::span<const double> values) {
    if (values.empty()) throw StatsError("mean of empty sample");
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

double sampleVariance(std::span<const double> values) {
    if (values.size() < 2) throw StatsError("sample variance needs n >= 2");
    const double m = mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return ss / static_cast<double>(values.size() - 1);
}

DistributionStats distributionStats(std::span<const double> values) {
    if (values.size() < 2) throw StatsError("distribution stats need n >= 2, got " + std::to_string(values.size()));
    DistributionStats out;
    out.n = values.size();
    out.mean = mean(values);
    const double n = static_cast<double>(values.size());
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : values) {
        const double d = v - out.mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    out.sd = std::sqrt(m2 / (n - 1.0));
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (m2 > 0.0) {
        out.skewness = m3 / std::pow(m2, 1.5);
        out.excessKurtosis = m4 / (m2 * m2) - 3.0;
    }
    return out;
}

PairedTestResult pairedTTest(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw StatsError("paired t test: length mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    }
    if (a.size() < 2) throw StatsError("paired t test needs n >= 2");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double sd = std::sqrt(sampleVariance(d));
    if (!(sd > 0.0)) throw StatsError("paired t test: differences have zero variance");
    PairedTestResult out;
    out.df = d.size() - 1;
    out.t = mean(d) / (sd / std::sqrt(static_cast<double>(d.size())));
    out.p = studentTwoSidedP(out.t, static_cast<double>(out.df));
    return out;
}

namespace {

// Continued fraction for I_x(a,b) (modified Lentz); valid for x < (a+1)/(a+b+2).
double betaContinuedFraction(double x, double a, double b) {
    constexpr double kTiny = 1e-300;
    constexpr double kEps = 1e-12;
    constexpr int kMaxIter = 10000;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) return h;
    }
    throw StatsError("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularizedIncompleteBeta(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw StatsError("incomplete beta requires a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double logFront =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(logFront);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betaContinuedFraction(x, a, b) / a;
    return 1.0 - front * betaContinuedFraction(1.0 - x, b, a) / b;
}

double studentTwoSidedP(double t, double df) {
    if (!(df > 0.0)) throw StatsError("student t requires df > 0");
    if (std::isinf(t)) return 0.0;
    const double x = df / (df + t * t);
    const double p = regularizedIncompleteBeta(x, 0.5 * df, 0.5);
    return std::clamp(p, 0.0, 1.0);
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw StatsError("pearson: length mismatch");
    if (x.size() < 2) throw StatsError("pearson needs n >= 2");
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw StatsError("pearson: zero variance input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double correlationPValue(double r, std::size_t n) {
    if (n < 3) throw StatsError("correlation p-value needs n >= 3");
    if (std::fabs(r) >= 1.0) return 0.0;
    const double df = static_cast<double>(n - 2);
    const double t = r * std::sqrt(df / (1.0 - r * r));
    return studentTwoSidedP(t, df);
}

}  // namespace credlens::stats
