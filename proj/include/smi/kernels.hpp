#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "smi/errors.hpp"
#include "smi/math.hpp"

namespace smi {

// Smoothing kernel K_delta(y, .), a normalized density/pmf in its second
// argument for every fixed observed y.  The discrete kinds live on the
// non-negative integers; ScaledTopHat widens with the observation
// (half-width delta * sqrt(y), and delta at y = 0).
struct KernelSpec {
    enum class Kind { Gaussian, TopHat, DiscreteUniform, ScaledTopHat };

    Kind kind;
    double delta;

    static KernelSpec gaussian(double delta) {
        require_positive(delta, "GaussianKernel");
        return {Kind::Gaussian, delta};
    }
    static KernelSpec top_hat(double delta) {
        require_positive(delta, "TopHat");
        return {Kind::TopHat, delta};
    }
    static KernelSpec discrete_uniform(double delta) {
        if (!(delta >= 0.0)) throw std::invalid_argument("DiscreteUniform: delta must be >= 0");
        return {Kind::DiscreteUniform, delta};
    }
    static KernelSpec scaled_top_hat(double delta) {
        require_positive(delta, "ScaledTopHat");
        return {Kind::ScaledTopHat, delta};
    }

    bool discrete() const {
        return kind == Kind::DiscreteUniform || kind == Kind::ScaledTopHat;
    }

    // Half-width of the window around an observation y.
    double half_width(double y) const {
        if (kind == Kind::ScaledTopHat) return y > 0.0 ? delta * std::sqrt(y) : delta;
        return delta;
    }

  private:
    static void require_positive(double d, const char* name) {
        if (!(d > 0.0) && !std::isinf(d))
            throw std::invalid_argument(std::string(name) + ": delta must be > 0");
    }
};

// Integer window V(y, h) = {j >= 0 : |j - y| <= h} for discrete kernels.
struct DiscreteWindow {
    long long lo;
    long long hi;
    double size() const { return static_cast<double>(hi - lo + 1); }
};

inline DiscreteWindow discrete_window(double y, double half_width) {
    if (std::isinf(half_width))
        throw std::invalid_argument("discrete_window: infinite half-width");
    const long long lo = std::max(0LL, static_cast<long long>(std::ceil(y - half_width)));
    const long long hi = static_cast<long long>(std::floor(y + half_width));
    return {lo, std::max(hi, lo)};
}

// log K_delta(y, y_tilde).
inline double kernel_log_density(const KernelSpec& k, double y, double y_tilde) {
    switch (k.kind) {
        case KernelSpec::Kind::Gaussian:
            return log_normal_pdf(y_tilde, y, k.delta * k.delta);
        case KernelSpec::Kind::TopHat:
            return std::fabs(y_tilde - y) <= k.delta ? -std::log(2.0 * k.delta) : neg_inf;
        case KernelSpec::Kind::DiscreteUniform:
        case KernelSpec::Kind::ScaledTopHat: {
            if (y_tilde < 0.0 || std::floor(y_tilde) != y_tilde) return neg_inf;
            const double h = k.half_width(y);
            if (std::fabs(y_tilde - y) > h) return neg_inf;
            return -std::log(discrete_window(y, h).size());
        }
    }
    return neg_inf;
}

// log smoothed likelihood of one observation,
//   log integral p(y_tilde) K_delta(y, y_tilde) d y_tilde,
// against an arbitrary pointwise log-density.  Continuous kernels use
// adaptive quadrature over the kernel's effective support; discrete kernels
// sum exactly over the window.  At delta = inf the smoothed factor no longer
// depends on the model, and its data-only constant is reported as 0 so that
// every downstream posterior object attains the Cut limit exactly.
inline double smoothed_point_loglik(const std::function<double(double)>& log_density,
                                    double y, const KernelSpec& k,
                                    double tol = 1e-9) {
    if (std::isinf(k.delta)) return 0.0;
    switch (k.kind) {
        case KernelSpec::Kind::Gaussian: {
            auto g = [&](double t) { return log_density(t) + kernel_log_density(k, y, t); };
            return log_integrate_exp(g, y - 12.0 * k.delta, y + 12.0 * k.delta, tol);
        }
        case KernelSpec::Kind::TopHat: {
            auto g = [&](double t) { return log_density(t); };
            return log_integrate_exp(g, y - k.delta, y + k.delta, tol) -
                   std::log(2.0 * k.delta);
        }
        case KernelSpec::Kind::DiscreteUniform:
        case KernelSpec::Kind::ScaledTopHat: {
            const DiscreteWindow w = discrete_window(y, k.half_width(y));
            std::vector<double> terms;
            terms.reserve(static_cast<std::size_t>(w.hi - w.lo + 1));
            for (long long j = w.lo; j <= w.hi; ++j)
                terms.push_back(log_density(static_cast<double>(j)));
            return log_sum_exp(terms) - std::log(w.size());
        }
    }
    return neg_inf;
}

// Closed form for a N(mean_i, sd_y^2) observation model under the Gaussian
// kernel: each smoothed factor is N(y_i; mean_i, sd_y^2 + delta^2).
inline double smoothed_normal_loglik(std::span<const double> y,
                                     std::span<const double> mean, double sd_y,
                                     double delta) {
    if (y.size() != mean.size())
        throw std::invalid_argument("smoothed_normal_loglik: size mismatch");
    if (std::isinf(delta)) return 0.0;
    const double var = sd_y * sd_y + delta * delta;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += log_normal_pdf(y[i], mean[i], var);
    return s;
}

namespace detail {

// Poisson window mass F(b; mu) - F(a - 1; mu) through the tail that avoids
// cancellation; exact log-pmf summation for narrow windows.
inline double poisson_window_log_mass(long long a, long long b, double mu) {
    if (a == b) return poisson_log_pmf(static_cast<double>(a), mu);
    if (b - a + 1 <= 64) {
        std::vector<double> terms;
        terms.reserve(static_cast<std::size_t>(b - a + 1));
        for (long long j = a; j <= b; ++j)
            terms.push_back(poisson_log_pmf(static_cast<double>(j), mu));
        return log_sum_exp(terms);
    }
    const double da = static_cast<double>(a), db = static_cast<double>(b);
    double mass;
    if (da > mu) {
        mass = poisson_sf_inclusive(da, mu) - poisson_sf_inclusive(db + 1.0, mu);
    } else {
        mass = poisson_cdf(db, mu) - (a > 0 ? poisson_cdf(da - 1.0, mu) : 0.0);
    }
    return mass > 0.0 ? std::log(mass) : neg_inf;
}

}  // namespace detail

// log smoothed Poisson likelihood of one count y under mean mu:
//   log { [F(floor(y + h)) - F(max(0, ceil(y - h)) - 1)] / |V(y, h)| },
// with h the kernel half-width at y and F the Poisson CDF.  The 1/|V|
// normalizer keeps the kernel a pmf in its second argument; it carries no
// (phi, theta) dependence and cancels from every posterior.
inline double smoothed_poisson_log_pmf(double y, double mu, const KernelSpec& k) {
    if (!k.discrete())
        throw std::invalid_argument("smoothed_poisson_log_pmf: discrete kernel required");
    if (std::isinf(k.delta)) return 0.0;
    const DiscreteWindow w = discrete_window(y, k.half_width(y));
    return detail::poisson_window_log_mass(w.lo, w.hi, mu) - std::log(w.size());
}

inline double smoothed_poisson_loglik(std::span<const double> y,
                                      std::span<const double> mu,
                                      const KernelSpec& k) {
    if (y.size() != mu.size())
        throw std::invalid_argument("smoothed_poisson_loglik: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        s += smoothed_poisson_log_pmf(y[i], mu[i], k);
    return s;
}

// Generic smoothed log-likelihood with the Gaussian kernel against a
// pointwise observation log-density f(i, y_tilde); per-point adaptive
// quadrature with the closed normal form available via smoothed_normal_loglik.
inline double smoothed_loglik_gaussian(
    const std::function<double(std::size_t, double)>& pointwise_log_density,
    std::span<const double> y, double delta, double tol = 1e-9) {
    const KernelSpec k = KernelSpec::gaussian(delta);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        auto f = [&](double t) { return pointwise_log_density(i, t); };
        s += smoothed_point_loglik(f, y[i], k, tol);
    }
    return s;
}

}  // namespace smi
