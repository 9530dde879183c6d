#include <Eigen/Dense>

#include <cmath>

#include "credlens/models.hpp"

namespace credlens::models {

namespace {

struct Standardization {
    std::vector<double> means;
    std::vector<double> sds;
    std::vector<std::size_t> active;  // columns with sd > 0
};

Standardization standardize(const DenseMatrix& X) {
    const std::size_t n = X.rows(), p = X.cols();
    Standardization s{std::vector<double>(p, 0.0), std::vector<double>(p, 0.0), {}};
    for (std::size_t j = 0; j < p; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += X(i, j);
        m /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) ss += (X(i, j) - m) * (X(i, j) - m);
        s.means[j] = m;
        s.sds[j] = std::sqrt(ss / static_cast<double>(n));
        if (s.sds[j] > 0.0) s.active.push_back(j);
    }
    return s;
}

/// Active standardized columns, column-major.
std::vector<std::vector<double>> standardizedColumns(const DenseMatrix& X, const Standardization& s) {
    std::vector<std::vector<double>> z;
    for (auto j : s.active) {
        std::vector<double> col(X.rows());
        for (std::size_t i = 0; i < X.rows(); ++i) col[i] = (X(i, j) - s.means[j]) / s.sds[j];
        z.push_back(std::move(col));
    }
    return z;
}

double meanOf(std::span<const double> y) {
    double m = 0.0;
    for (double v : y) m += v;
    return m / static_cast<double>(y.size());
}

void checkShapes(const DenseMatrix& X, std::span<const double> y) {
    if (X.rows() != y.size()) throw ModelError("X has " + std::to_string(X.rows()) + " rows but y has " + std::to_string(y.size()));
    if (X.rows() == 0) throw ModelError("no training rows");
    for (double v : X.data())
        if (!std::isfinite(v)) throw ModelError("non-finite value in X");
    for (double v : y)
        if (!std::isfinite(v)) throw ModelError("non-finite value in y");
}

LinearModel finish(std::string kind, double lambda, const Standardization& s, const std::vector<double>& betaStd,
                   double ybar) {
    LinearModel m;
    m.kind = std::move(kind);
    m.lambda = lambda;
    m.means = s.means;
    m.sds = s.sds;
    m.coefficients.assign(s.means.size(), 0.0);
    m.intercept = ybar;
    for (std::size_t a = 0; a < s.active.size(); ++a) {
        const auto j = s.active[a];
        m.coefficients[j] = betaStd[a] / s.sds[j];
        m.intercept -= m.coefficients[j] * s.means[j];
    }
    return m;
}

}  // namespace

double LinearModel::predictRow(std::span<const double> x) const {
    if (x.size() != coefficients.size()) throw ModelError("linear model expects " + std::to_string(coefficients.size()) + " columns");
    double out = intercept;
    for (std::size_t j = 0; j < x.size(); ++j) out += coefficients[j] * x[j];
    return out;
}

LinearModel fitOls(const DenseMatrix& X, std::span<const double> y) {
    checkShapes(X, y);
    if (X.rows() < X.cols() + 1) throw ModelError("ols needs at least columns + 1 rows");
    const auto s = standardize(X);
    const auto z = standardizedColumns(X, s);
    const double ybar = meanOf(y);
    const std::size_t n = X.rows(), a = z.size();
    const double nd = static_cast<double>(n);

    Eigen::MatrixXd gram(a, a);
    Eigen::VectorXd rhs(a);
    for (std::size_t j = 0; j < a; ++j) {
        double r = 0.0;
        for (std::size_t i = 0; i < n; ++i) r += z[j][i] * (y[i] - ybar);
        rhs(j) = r / nd;
        for (std::size_t k = j; k < a; ++k) {
            double g = 0.0;
            for (std::size_t i = 0; i < n; ++i) g += z[j][i] * z[k][i];
            gram(j, k) = gram(k, j) = g / nd;
        }
    }
    double jitter = 0.0;
    std::vector<double> beta(a, 0.0);
    if (a > 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
        const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
        if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-12 * d.maxCoeff())) {
            jitter = 1e-10;
            gram.diagonal().array() += jitter;
            ldlt.compute(gram);
        }
        const Eigen::VectorXd b = ldlt.solve(rhs);
        for (std::size_t j = 0; j < a; ++j) beta[j] = b(j);
    }
    auto m = finish("ols", 0.0, s, beta, ybar);
    m.jitter = jitter;
    return m;
}

double lassoLambdaMax(const DenseMatrix& X, std::span<const double> y) {
    checkShapes(X, y);
    const auto s = standardize(X);
    const auto z = standardizedColumns(X, s);
    const double ybar = meanOf(y);
    double best = 0.0;
    for (const auto& col : z) {
        double r = 0.0;
        for (std::size_t i = 0; i < col.size(); ++i) r += col[i] * (y[i] - ybar);
        best = std::max(best, std::abs(r) / static_cast<double>(col.size()));
    }
    return best;
}

std::vector<double> lassoPath(const DenseMatrix& X, std::span<const double> y, std::size_t points, double decades) {
    if (points == 0) throw ModelError("lasso path needs at least one point");
    const double top = lassoLambdaMax(X, y);
    if (top == 0.0) return {0.0};
    std::vector<double> out(points);
    for (std::size_t k = 0; k < points; ++k) {
        const double frac = points == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(points - 1);
        out[k] = top * std::pow(10.0, -decades * frac);
    }
    return out;
}

LinearModel fitLasso(const DenseMatrix& X, std::span<const double> y, double lambda, const LassoOptions& options) {
    checkShapes(X, y);
    if (!(lambda >= 0.0)) throw ModelError("lasso lambda must be >= 0");
    const auto s = standardize(X);
    const auto z = standardizedColumns(X, s);
    const double ybar = meanOf(y);
    const std::size_t n = X.rows(), a = z.size();
    const double nd = static_cast<double>(n);

    std::vector<double> r(n), beta(a, 0.0), norm(a);
    for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - ybar;
    for (std::size_t j = 0; j < a; ++j) {
        double q = 0.0;
        for (double v : z[j]) q += v * v;
        norm[j] = q / nd;
    }
    bool converged = a == 0;
    std::size_t iter = 0;
    while (!converged && iter < options.maxIter) {
        ++iter;
        double maxChange = 0.0;
        for (std::size_t j = 0; j < a; ++j) {
            const auto& col = z[j];
            double rho = 0.0;
            for (std::size_t i = 0; i < n; ++i) rho += col[i] * r[i];
            rho = rho / nd + norm[j] * beta[j];
            const double shrunk = std::copysign(std::max(std::abs(rho) - lambda, 0.0), rho) / norm[j];
            const double delta = shrunk - beta[j];
            if (delta != 0.0) {
                for (std::size_t i = 0; i < n; ++i) r[i] -= col[i] * delta;
                beta[j] = shrunk;
                maxChange = std::max(maxChange, std::abs(delta));
            }
        }
        converged = maxChange < options.tol;
    }
    auto m = finish("lasso", lambda, s, beta, ybar);
    m.converged = converged;
    m.iterations = iter;
    return m;
}

}  // namespace credlens::models
