#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "smi/errors.hpp"
#include "smi/math.hpp"

namespace smi {

inline double mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Unbiased sample variance.
inline double variance(std::span<const double> xs) {
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

inline double sample_covariance(std::span<const double> xs,
                                std::span<const double> ys) {
    const double mx = mean(xs), my = mean(ys);
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (xs[i] - mx) * (ys[i] - my);
    return s / static_cast<double>(xs.size() - 1);
}

struct KsResult {
    double statistic;
    double p_value;
};

// Survival function of the Kolmogorov distribution, switching between the
// small-lambda theta-function series and the large-lambda alternating series.
inline double kolmogorov_sf(double lambda) {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 1.18) {
        const double t = std::exp(-M_PI * M_PI / (8.0 * lambda * lambda));
        const double cdf = std::sqrt(2.0 * M_PI) / lambda *
                           (t + std::pow(t, 9.0) + std::pow(t, 25.0) + std::pow(t, 49.0));
        return std::clamp(1.0 - cdf, 0.0, 1.0);
    }
    double q = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term =
            2.0 * ((k & 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
        q += term;
        if (std::fabs(term) < 1e-16) break;
    }
    return std::clamp(q, 0.0, 1.0);
}

// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
inline KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2)
        throw data_error("ks_two_sample: need at least 2 points per sample");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double na = static_cast<double>(x.size());
    const double nb = static_cast<double>(y.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= v) ++i;
        while (j < y.size() && y[j] <= v) ++j;
        d = std::max(d, std::fabs(i / na - j / nb));
    }
    const double lambda = std::sqrt(na * nb / (na + nb)) * d;
    return {d, kolmogorov_sf(lambda)};
}

// Bhattacharyya distance between Gaussian approximations fitted to two
// bivariate samples; used as a separation score for draw clouds.
inline double bhattacharyya_gaussian_2d(std::span<const double> x1,
                                        std::span<const double> y1,
                                        std::span<const double> x2,
                                        std::span<const double> y2) {
    const double m1[2] = {mean(x1), mean(y1)};
    const double m2[2] = {mean(x2), mean(y2)};
    const double s1[3] = {variance(x1), sample_covariance(x1, y1), variance(y1)};
    const double s2[3] = {variance(x2), sample_covariance(x2, y2), variance(y2)};
    const double sb[3] = {0.5 * (s1[0] + s2[0]), 0.5 * (s1[1] + s2[1]),
                          0.5 * (s1[2] + s2[2])};
    const double det1 = s1[0] * s1[2] - s1[1] * s1[1];
    const double det2 = s2[0] * s2[2] - s2[1] * s2[1];
    const double detb = sb[0] * sb[2] - sb[1] * sb[1];
    const double d0 = m1[0] - m2[0], d1 = m1[1] - m2[1];
    // d' Sb^{-1} d via the 2x2 adjugate.
    const double quad = (d0 * (sb[2] * d0 - sb[1] * d1) + d1 * (sb[0] * d1 - sb[1] * d0)) / detb;
    return 0.125 * quad + 0.5 * std::log(detb / std::sqrt(det1 * det2));
}

}  // namespace smi
