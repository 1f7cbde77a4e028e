#pragma once

#include <functional>
#include <vector>

namespace pdmp {

/// Kolmogorov-Smirnov statistic sup |F_n - F| of the samples against `cdf`.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

/// Asymptotic KS p-value with the Stephens finite-sample correction.
double ks_pvalue(double d, int n);

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom (regularized upper incomplete gamma).
double chi2_sf(double x, int dof);

/// Pearson chi-square p-value of observed counts against expected counts.
double chi2_test(const std::vector<double>& observed, const std::vector<double>& expected,
                 int constraints = 1);

}  // namespace pdmp
