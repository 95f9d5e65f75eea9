#include "deformcert/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace deformcert {

namespace {

// AS241 coefficients, lowest order first.
constexpr double kA[8] = {3.3871328727963666080e0, 1.3314166789178437745e+2, 1.9715909503065514427e+3,
                          1.3731693765509461125e+4, 4.5921953931549871457e+4, 6.7265770927008700853e+4,
                          3.3430575583588128105e+4, 2.5090809287301226727e+3};
constexpr double kB[8] = {1.0,
                          4.2313330701600911252e+1,
                          6.8718700749205790830e+2,
                          5.3941960214247511077e+3,
                          2.1213794301586595867e+4,
                          3.9307895800092710610e+4,
                          2.8729085735721942674e+4,
                          5.2264952788528545610e+3};
constexpr double kC[8] = {1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
                          3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
                          2.27238449892691845833e-2, 7.74545014278341407640e-4};
constexpr double kD[8] = {1.0,
                          2.05319162663775882187e0,
                          1.67638483018380384940e0,
                          6.89767334985100004550e-1,
                          1.48103976427480074590e-1,
                          1.51986665636164571966e-2,
                          5.47593808499534494600e-4,
                          1.05075007164441684324e-9};
constexpr double kE[8] = {6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
                          2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
                          2.71155556874348757815e-5, 2.01033439929228813265e-7};
constexpr double kF[8] = {1.0,
                          5.99832206555887937690e-1,
                          1.36929880922735805310e-1,
                          1.48753612908506148525e-2,
                          7.86869131145613259100e-4,
                          1.84631831751005468180e-5,
                          1.42151175831644588870e-7,
                          2.04426310338993978564e-15};

double rational(const double (&num)[8], const double (&den)[8], double r) {
    double n = num[7];
    double d = den[7];
    for (int i = 6; i >= 0; --i) {
        n = n * r + num[i];
        d = d * r + den[i];
    }
    return n / d;
}

// Continued fraction for I_x(a, b) (modified Lentz), valid for x < (a + 1) / (a + b + 2).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 20000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw std::runtime_error("incomplete beta continued fraction did not converge");
}

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

}  // namespace

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("std_normal_quantile: p must lie in (0, 1)");
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q * rational(kA, kB, r);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    const double value = r <= 5.0 ? rational(kC, kD, r - 1.6) : rational(kE, kF, r - 5.0);
    return q < 0.0 ? -value : value;
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw std::domain_error("incomplete beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("incomplete beta: x must lie in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double beta_quantile(double p, double a, double b) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("beta_quantile: p must lie in [0, 1]");
    if (p == 0.0) return 0.0;
    if (p == 1.0) return 1.0;
    double lo = 0.0;
    double hi = 1.0;
    // I_x is increasing in x; bisect down to adjacent doubles.
    for (int i = 0; i < 2000; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (regularized_incomplete_beta(a, b, mid) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double clopper_pearson_lower(std::uint64_t k, std::uint64_t n, double alpha) {
    if (n == 0) throw std::domain_error("clopper_pearson_lower: n must be at least 1");
    if (k > n) throw std::domain_error("clopper_pearson_lower: k must not exceed n");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("clopper_pearson_lower: alpha must lie in (0, 1)");
    if (k == 0) return 0.0;
    if (k == n) return std::pow(alpha, 1.0 / static_cast<double>(n));
    return beta_quantile(alpha, static_cast<double>(k), static_cast<double>(n - k + 1));
}

double binomial_two_sided_pvalue(std::uint64_t k, std::uint64_t n) {
    if (k > n) throw std::domain_error("binomial_two_sided_pvalue: k must not exceed n");
    if (n == 0) return 1.0;
    const std::uint64_t m = std::min(k, n - k);
    if (2 * m == n) return 1.0;
    const double dn = static_cast<double>(n);
    const double log_half_n = dn * std::log(0.5);
    const double lg_n1 = std::lgamma(dn + 1.0);
    double tail = 0.0;
    for (std::uint64_t j = 0; j <= m; ++j) {
        const double dj = static_cast<double>(j);
        tail += std::exp(lg_n1 - std::lgamma(dj + 1.0) - std::lgamma(dn - dj + 1.0) + log_half_n);
    }
    return std::min(1.0, 2.0 * tail);
}

}  // namespace deformcert
