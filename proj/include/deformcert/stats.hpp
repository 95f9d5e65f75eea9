#pragma once

#include <cstdint>

namespace deformcert {

/// Phi(x) via erfc.
double std_normal_cdf(double x);

/// Phi^{-1}(p) for p in (0, 1), Wichura's AS241 (PPND16) rational
/// approximation; relative accuracy about 1e-16 over the whole open interval.
/// Throws std::domain_error outside (0, 1).
double std_normal_quantile(double p);

/// Regularized incomplete beta I_x(a, b), a, b > 0, x in [0, 1].
double regularized_incomplete_beta(double a, double b, double x);

/// Inverse of I_x(a, b) in x.
double beta_quantile(double p, double a, double b);

/// One-sided (1 - alpha) Clopper-Pearson lower confidence bound for a binomial
/// proportion after k successes in n trials: the alpha quantile of
/// Beta(k, n - k + 1), with the closed forms 0 at k = 0 and alpha^(1/n) at k = n.
double clopper_pearson_lower(std::uint64_t k, std::uint64_t n, double alpha);

/// Exact two-sided binomial test of H0: p = 1/2 for k successes in n trials.
double binomial_two_sided_pvalue(std::uint64_t k, std::uint64_t n);

}  // namespace deformcert
