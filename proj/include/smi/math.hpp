#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "smi/errors.hpp"

namespace smi {

using Vector = std::vector<double>;
using ConstSpan = std::span<const double>;

inline constexpr double log_2pi = 1.8378770664093454836;
inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();
inline constexpr double pos_inf = std::numeric_limits<double>::infinity();

inline double log_normal_pdf(double x, double mean, double var) {
    if (!(var > 0.0)) return neg_inf;
    const double d = x - mean;
    return -0.5 * (log_2pi + std::log(var) + d * d / var);
}

inline double normal_cdf(double x, double mean = 0.0, double sd = 1.0) {
    return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

// log(exp(a) + exp(b)) without overflow; -inf operands behave as zeros.
inline double log_add_exp(double a, double b) {
    if (a == neg_inf) return b;
    if (b == neg_inf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::fabs(a - b)));
}

// log(exp(a) - exp(b)), requires a >= b.
inline double log_diff_exp(double a, double b) {
    if (b == neg_inf) return a;
    if (a < b) return std::numeric_limits<double>::quiet_NaN();
    if (a == b) return neg_inf;
    return a + std::log1p(-std::exp(b - a));
}

inline double log_sum_exp(std::span<const double> xs) {
    double m = neg_inf;
    for (double x : xs) m = std::max(m, x);
    if (m == neg_inf || std::isinf(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

inline double log_mean_exp(std::span<const double> xs) {
    if (xs.empty()) return neg_inf;
    return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

// Regularized incomplete gamma functions P(a,x) and Q(a,x) = 1 - P(a,x).
inline double gamma_p(double a, double x) { return boost::math::gamma_p(a, x); }
inline double gamma_q(double a, double x) { return boost::math::gamma_q(a, x); }

inline double poisson_log_pmf(double k, double mu) {
    if (k < 0.0 || std::floor(k) != k) return neg_inf;
    if (mu <= 0.0) return k == 0.0 ? 0.0 : neg_inf;
    return k * std::log(mu) - mu - std::lgamma(k + 1.0);
}

// P(X <= k) for X ~ Poisson(mu), evaluated through the regularized upper
// incomplete gamma: F(k; mu) = Q(floor(k) + 1, mu).  F(k < 0) = 0.
inline double poisson_cdf(double k, double mu) {
    if (k < 0.0) return 0.0;
    if (mu <= 0.0) return 1.0;
    return gamma_q(std::floor(k) + 1.0, mu);
}

// P(X >= k) = P(k, mu) for X ~ Poisson(mu); complements poisson_cdf so the
// smaller of the two tails can always be formed without cancellation.
inline double poisson_sf_inclusive(double k, double mu) {
    if (k <= 0.0) return 1.0;
    if (mu <= 0.0) return 0.0;
    return gamma_p(std::floor(k), mu);
}

inline double binomial_log_pmf(double k, double n, double p) {
    if (k < 0.0 || k > n || std::floor(k) != k) return neg_inf;
    if (p <= 0.0) return k == 0.0 ? 0.0 : neg_inf;
    if (p >= 1.0) return k == n ? 0.0 : neg_inf;
    const double log_choose =
        std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    return log_choose + k * std::log(p) + (n - k) * std::log1p(-p);
}

struct QuadratureResult {
    double value;
    double error_estimate;
};

namespace detail {

struct SimpsonWork {
    const std::function<double(double)>& f;
    double tol;
    int max_depth;

    double recurse(double a, double b, double fa, double fm, double fb,
                   double whole, double eps, int depth, double& worst_err) const {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
        const double flm = f(lm), frm = f(rm);
        const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        const double err = (left + right - whole) / 15.0;
        if (std::fabs(err) <= eps || depth >= max_depth) {
            worst_err = std::max(worst_err, std::fabs(err));
            if (std::fabs(err) > eps && depth >= max_depth)
                throw quadrature_error("adaptive Simpson: depth limit reached",
                                       std::fabs(err));
            return left + right + err;
        }
        return recurse(a, m, fa, flm, fm, left, 0.5 * eps, depth + 1, worst_err) +
               recurse(m, b, fm, frm, fb, right, 0.5 * eps, depth + 1, worst_err);
    }
};

}  // namespace detail

// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance tol.
// Throws quadrature_error (carrying the achieved tolerance) on failure.
inline QuadratureResult integrate(const std::function<double(double)>& f,
                                  double a, double b, double tol = 1e-10,
                                  int max_depth = 48) {
    if (!(b > a)) return {0.0, 0.0};
    detail::SimpsonWork work{f, tol, max_depth};
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    double worst = 0.0;
    // Seed split keeps symmetric integrands from terminating spuriously early.
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double value =
        work.recurse(a, m, fa, flm, fm, left, 0.5 * tol, 1, worst) +
        work.recurse(m, b, fm, frm, fb, right, 0.5 * tol, 1, worst);
    (void)whole;
    return {value, worst};
}

// log of integral exp(g(t)) dt over [a, b], stabilized by a coarse scan for
// the mode before the adaptive pass.
inline double log_integrate_exp(const std::function<double(double)>& g,
                                double a, double b, double tol = 1e-10) {
    if (!(b > a)) return neg_inf;
    const int n_scan = 128;
    double gmax = neg_inf;
    for (int i = 0; i <= n_scan; ++i) {
        const double t = a + (b - a) * i / n_scan;
        gmax = std::max(gmax, g(t));
    }
    if (gmax == neg_inf) return neg_inf;
    auto f = [&](double t) { return std::exp(g(t) - gmax); };
    const QuadratureResult q = integrate(f, a, b, tol);
    if (q.value <= 0.0) return neg_inf;
    return gmax + std::log(q.value);
}

// Trapezoid moments of an unnormalized 1-D log-density tabulated on an even
// grid; spectrally accurate for smooth, rapidly decaying integrands.
struct GridMoments {
    double log_norm;
    double mean;
    double var;
};

inline GridMoments grid_moments(const std::function<double(double)>& logf,
                                double lo, double hi, int n_points) {
    const double h = (hi - lo) / (n_points - 1);
    std::vector<double> lw(n_points);
    double m = neg_inf;
    for (int i = 0; i < n_points; ++i) {
        lw[i] = logf(lo + i * h);
        m = std::max(m, lw[i]);
    }
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n_points; ++i) {
        const double x = lo + i * h;
        double w = std::exp(lw[i] - m);
        if (i == 0 || i == n_points - 1) w *= 0.5;
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
    }
    const double mean = s1 / s0;
    return {m + std::log(s0 * h), mean, s2 / s0 - mean * mean};
}

}  // namespace smi
