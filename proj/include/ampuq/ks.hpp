#pragma once

#include <span>

namespace ampuq {

struct KsResult {
  double statistic = 0.0; // sup-norm distance between the compared CDFs
  double p_value = 1.0;
  double alpha = 0.01; // significance the rejection flag refers to
  bool rejected = false;
};

/// Survival function of the asymptotic Kolmogorov distribution,
/// P(K > lambda).
double kolmogorov_survival(double lambda);

/// One-sample KS test against a normal with the sample mean and standard
/// deviation. Requires n >= 20; throws DataError on zero variance.
KsResult ks_test_normal(std::span<const double> samples, double alpha = 0.01);

/// Two-sample KS test; p-value from the asymptotic distribution at the
/// effective size n*m/(n+m).
KsResult ks_test_two_sample(std::span<const double> a, std::span<const double> b,
                            double alpha = 0.01);

} // namespace ampuq
