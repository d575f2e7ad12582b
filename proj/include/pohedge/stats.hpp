#pragma once

#include <string>
#include <vector>

namespace pohedge {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

MeanSe mean_se(const std::vector<double>& v);
double sample_variance(const std::vector<double>& v);
double normal_cdf(double x);

// Least squares with heteroskedasticity-robust (HC0) standard errors.
// Columns with no variation (other than the first, the intercept) are
// dropped and reported as such.
struct OlsResult {
    std::vector<std::string> names;
    std::vector<double> coef;
    std::vector<double> se;
    std::vector<double> t;
    std::vector<std::string> dropped;
    std::size_t n = 0;
};

OlsResult ols_hc0(const std::vector<std::vector<double>>& columns, const std::vector<double>& y,
                  const std::vector<std::string>& names);

}  // namespace pohedge
