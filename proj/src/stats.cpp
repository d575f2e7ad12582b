#include "pohedge/stats.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "pohedge/errors.hpp"

namespace pohedge {

MeanSe mean_se(const std::vector<double>& v) {
    MeanSe r;
    r.n = v.size();
    if (v.empty()) return r;
    double m = 0.0;
    for (double a : v) m += a;
    m /= static_cast<double>(v.size());
    r.mean = m;
    if (v.size() > 1) r.se = std::sqrt(sample_variance(v) / static_cast<double>(v.size()));
    return r;
}

double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = 0.0;
    for (double a : v) m += a;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double a : v) ss += (a - m) * (a - m);
    return ss / static_cast<double>(v.size() - 1);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

OlsResult ols_hc0(const std::vector<std::vector<double>>& columns, const std::vector<double>& y,
                  const std::vector<std::string>& names) {
    OlsResult r;
    r.n = y.size();
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c].size() != y.size()) throw SampleSizeError("regressor length mismatch");
        if (c == 0) {
            keep.push_back(c);
            continue;
        }
        double m = 0.0, scale = 0.0;
        for (double v : columns[c]) {
            m += v;
            scale = std::max(scale, std::fabs(v));
        }
        m /= static_cast<double>(y.size());
        double ss = 0.0;
        for (double v : columns[c]) ss += (v - m) * (v - m);
        double sd = std::sqrt(ss / static_cast<double>(y.size()));
        if (sd > 1e-9 * std::max(1.0, scale))
            keep.push_back(c);
        else
            r.dropped.push_back(names[c]);
    }
    const auto n = static_cast<Eigen::Index>(y.size());
    const auto p = static_cast<Eigen::Index>(keep.size());
    if (n <= p) throw SampleSizeError("regression needs more observations than regressors");
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd Y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Y(i) = y[i];
        for (Eigen::Index c = 0; c < p; ++c) X(i, c) = columns[keep[c]][i];
    }
    Eigen::MatrixXd XtX = X.transpose() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(XtX);
    Eigen::VectorXd b = ldlt.solve(X.transpose() * Y);
    Eigen::VectorXd e = Y - X * b;
    Eigen::MatrixXd meat = X.transpose() * e.array().square().matrix().asDiagonal() * X;
    Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd cov = inv * meat * inv;
    for (Eigen::Index c = 0; c < p; ++c) {
        r.names.push_back(names[keep[c]]);
        r.coef.push_back(b(c));
        double se = std::sqrt(std::max(0.0, cov(c, c)));
        r.se.push_back(se);
        r.t.push_back(se > 0.0 ? b(c) / se : b(c) == 0.0 ? 0.0 : std::copysign(HUGE_VAL, b(c)));
    }
    return r;
}

}  // namespace pohedge
