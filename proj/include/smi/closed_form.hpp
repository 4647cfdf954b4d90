#pragma once

#include <cmath>
#include <memory>
#include <utility>

#include "smi/errors.hpp"
#include "smi/kernels.hpp"
#include "smi/math.hpp"
#include "smi/model.hpp"
#include "smi/rng.hpp"
#include "smi/stats.hpp"

namespace smi {

struct GaussianPosterior {
    double mean;
    double var;
    double sd() const { return std::sqrt(var); }
};

// ---------------------------------------------------------------------------
// Biased-data example: Z_j ~ N(phi, sd_z^2), Y_i ~ N(phi + theta, sd_y^2),
// theta ~ N(0, sd_theta^2), flat prior on phi.  The y-module is biased for
// phi unless theta = 0.
// ---------------------------------------------------------------------------

struct BiasedDataConfig {
    int n = 50;  // y-observations
    int m = 25;  // z-observations
    double sd_theta = 0.33;
    double sd_y = 1.0;
    double sd_z = 3.0;
    double phi_true = 0.0;
    double theta_true = 1.0;
};

struct BiasedData {
    Vector y;
    Vector z;
    double ybar;
    double zbar;
};

inline BiasedData simulate_biased_data(const BiasedDataConfig& cfg, Rng& rng) {
    BiasedData d;
    d.y.resize(cfg.n);
    d.z.resize(cfg.m);
    for (double& v : d.y) v = rng.normal(cfg.phi_true + cfg.theta_true, cfg.sd_y);
    for (double& v : d.z) v = rng.normal(cfg.phi_true, cfg.sd_z);
    d.ybar = mean(d.y);
    d.zbar = mean(d.z);
    return d;
}

namespace detail {

// phi-posterior with an effective per-observation y-variance s2: the delta
// family has s2 = sd_y^2 + delta^2, the eta family s2 = sd_y^2 / eta.  Both
// endpoints come out of the same arithmetic through IEEE infinities.
inline GaussianPosterior biased_phi_posterior_s2(const BiasedDataConfig& cfg,
                                                 double ybar, double zbar,
                                                 double s2) {
    const double wz = cfg.m / (cfg.sd_z * cfg.sd_z);
    const double wy = cfg.n / (s2 + cfg.n * cfg.sd_theta * cfg.sd_theta);
    const double lambda = wz / (wz + wy);
    return {lambda * zbar + (1.0 - lambda) * ybar,
            lambda * (cfg.sd_z * cfg.sd_z / cfg.m)};
}

}  // namespace detail

// lambda-weighted phi-posterior N(mu_delta, sd_delta^2) with
//   mu_delta = lambda zbar + (1 - lambda) ybar,
//   sd_delta^2 = lambda sd_z^2 / m,
//   lambda = (m/sd_z^2) / (m/sd_z^2 + n/(sd_y^2 + delta^2 + n sd_theta^2)).
inline GaussianPosterior biased_phi_posterior(const BiasedDataConfig& cfg, double ybar,
                                              double zbar, double delta) {
    if (!(delta >= 0.0)) throw std::invalid_argument("biased_phi_posterior: delta < 0");
    return detail::biased_phi_posterior_s2(cfg, ybar, zbar,
                                           cfg.sd_y * cfg.sd_y + delta * delta);
}

inline GaussianPosterior biased_phi_posterior_eta(const BiasedDataConfig& cfg,
                                                  double ybar, double zbar,
                                                  double eta) {
    if (!(eta >= 0.0 && eta <= 1.0))
        throw std::invalid_argument("biased_phi_posterior_eta: eta outside [0, 1]");
    return detail::biased_phi_posterior_s2(cfg, ybar, zbar, cfg.sd_y * cfg.sd_y / eta);
}

// Gaussian-kernel smoothing with bandwidth delta matches the eta-powered
// likelihood exactly at eta = sd_y^2 / (sd_y^2 + delta^2).
inline double eta_delta_equivalence(double sd_y, double delta) {
    const double v = sd_y * sd_y;
    return v / (v + delta * delta);
}

inline double delta_from_eta(double sd_y, double eta) {
    if (!(eta > 0.0 && eta <= 1.0))
        throw std::invalid_argument("delta_from_eta: eta outside (0, 1]");
    return sd_y * std::sqrt(1.0 / eta - 1.0);
}

// Analysis-stage conditional theta | Y, phi ~ N(rho (ybar - phi), (1 - rho)
// sd_theta^2) with rho = sd_theta^2 / (sd_theta^2 + sd_y^2 / n); it never
// depends on the influence parameter.
inline GaussianPosterior biased_theta_given_phi(const BiasedDataConfig& cfg,
                                                double ybar, double phi) {
    const double st2 = cfg.sd_theta * cfg.sd_theta;
    const double rho = st2 / (st2 + cfg.sd_y * cfg.sd_y / cfg.n);
    return {rho * (ybar - phi), (1.0 - rho) * st2};
}

// theta-marginal of the SMI posterior: phi integrated out of the conditional.
inline GaussianPosterior biased_theta_marginal(const BiasedDataConfig& cfg, double ybar,
                                               double zbar, double delta) {
    const GaussianPosterior phi = biased_phi_posterior(cfg, ybar, zbar, delta);
    const double st2 = cfg.sd_theta * cfg.sd_theta;
    const double rho = st2 / (st2 + cfg.sd_y * cfg.sd_y / cfg.n);
    return {rho * (ybar - phi.mean), rho * rho * phi.var + (1.0 - rho) * st2};
}

// Exact expected log posterior-predictive density of a new (y, z) pair under
// the data-generating truth.  Writing y = (1 - rho) phi + rho ybar + xi + eps
// with xi ~ N(0, (1 - rho) sd_theta^2), the joint predictive is the bivariate
// normal
//   mu_yz    = ((1 - rho) mu_delta + rho ybar, mu_delta),
//   Sigma_yz = [(1 - rho)^2 sd_delta^2 + var_theta_cond + sd_y^2,
//               (1 - rho) sd_delta^2;
//               (1 - rho) sd_delta^2, sd_delta^2 + sd_z^2],
// and the truth is N((phi* + theta*, phi*), diag(sd_y^2, sd_z^2)).
inline double exact_elpd_biased(const BiasedDataConfig& cfg, double ybar, double zbar,
                                double delta) {
    const GaussianPosterior phi = biased_phi_posterior(cfg, ybar, zbar, delta);
    const double st2 = cfg.sd_theta * cfg.sd_theta;
    const double rho = st2 / (st2 + cfg.sd_y * cfg.sd_y / cfg.n);
    const double var_theta_cond = (1.0 - rho) * st2;

    const double mu_y = (1.0 - rho) * phi.mean + rho * ybar;
    const double mu_z = phi.mean;
    const double s00 = (1.0 - rho) * (1.0 - rho) * phi.var + var_theta_cond +
                       cfg.sd_y * cfg.sd_y;
    const double s01 = (1.0 - rho) * phi.var;
    const double s11 = phi.var + cfg.sd_z * cfg.sd_z;

    const double det = s00 * s11 - s01 * s01;
    const double d0 = cfg.phi_true + cfg.theta_true - mu_y;
    const double d1 = cfg.phi_true - mu_z;
    const double trace =
        (s11 * cfg.sd_y * cfg.sd_y + s00 * cfg.sd_z * cfg.sd_z) / det;
    const double quad = (s11 * d0 * d0 - 2.0 * s01 * d0 * d1 + s00 * d1 * d1) / det;
    return -log_2pi - 0.5 * std::log(det) - 0.5 * (trace + quad);
}

inline TwoModuleModel make_biased_data_model(const BiasedDataConfig& cfg) {
    TwoModuleModel model;
    model.dims = {1, 1, 1, 1};
    const double vy = cfg.sd_y * cfg.sd_y;
    const double vz = cfg.sd_z * cfg.sd_z;
    const double vt = cfg.sd_theta * cfg.sd_theta;
    model.z_loglik = [vz](ConstSpan phi, ConstSpan z) {
        double s = 0.0;
        for (double v : z) s += log_normal_pdf(v, phi[0], vz);
        return s;
    };
    model.y_loglik = [vy](ConstSpan phi, ConstSpan theta, ConstSpan y) {
        double s = 0.0;
        for (double v : y) s += log_normal_pdf(v, phi[0] + theta[0], vy);
        return s;
    };
    model.y_loglik_pointwise = [vy](ConstSpan phi, ConstSpan theta, std::size_t,
                                    double y_i) {
        return log_normal_pdf(y_i, phi[0] + theta[0], vy);
    };
    model.z_loglik_pointwise = [vz](ConstSpan phi, std::size_t, double z_j) {
        return log_normal_pdf(z_j, phi[0], vz);
    };
    model.log_prior_phi = [](ConstSpan) { return 0.0; };
    model.improper_phi_prior = true;
    model.log_prior_theta_given_phi = [vt](ConstSpan theta, ConstSpan) {
        return log_normal_pdf(theta[0], 0.0, vt);
    };
    model.simulate_y = [cfg](ConstSpan phi, ConstSpan theta, Rng& rng) {
        Vector y(cfg.n);
        for (double& v : y) v = rng.normal(phi[0] + theta[0], cfg.sd_y);
        return y;
    };
    model.simulate_z = [cfg](ConstSpan phi, Rng& rng) {
        Vector z(cfg.m);
        for (double& v : z) v = rng.normal(phi[0], cfg.sd_z);
        return z;
    };
    return model;
}

// Evaluators for the biased-data model: exchangeable-normal marginal
// log p(Y | phi) via the Woodbury identity on sd_y^2 I + sd_theta^2 J, and
// the closed smoothed form under the Gaussian kernel.
inline Evaluators make_biased_data_evaluators(const BiasedDataConfig& cfg) {
    Evaluators evals;
    const double vy = cfg.sd_y * cfg.sd_y;
    const double vt = cfg.sd_theta * cfg.sd_theta;
    evals.marginal_y_loglik = [vy, vt](ConstSpan phi, ConstSpan y) {
        const double n = static_cast<double>(y.size());
        double ss = 0.0, rbar = 0.0;
        for (double v : y) {
            const double r = v - phi[0];
            ss += r * r;
            rbar += r;
        }
        rbar /= n;
        const double denom = vy + n * vt;
        const double quad = (ss - n * n * vt * rbar * rbar / denom) / vy;
        const double logdet = n * std::log(vy) + std::log(denom / vy);
        return -0.5 * (n * log_2pi + logdet + quad);
    };
    evals.smoothed_y_loglik = [cfg, vy](ConstSpan phi, ConstSpan theta_tilde,
                                        ConstSpan y, const KernelSpec& kernel) {
        if (kernel.kind == KernelSpec::Kind::Gaussian) {
            Vector means(y.size(), phi[0] + theta_tilde[0]);
            return smoothed_normal_loglik(y, means, cfg.sd_y, kernel.delta);
        }
        if (std::isinf(kernel.delta)) return 0.0;
        double s = 0.0;
        for (double v : y) {
            auto f = [&](double t) { return log_normal_pdf(t, phi[0] + theta_tilde[0], vy); };
            s += smoothed_point_loglik(f, v, kernel);
        }
        return s;
    };
    return evals;
}

// ---------------------------------------------------------------------------
// Misspecified-regression example: Z_j ~ N(phi, sd_z^2),
// Y_i ~ N(phi* + theta* x_i^k, sd_y^2) generated, fitted as phi + theta x_i;
// flat priors on both phi and theta.
// ---------------------------------------------------------------------------

struct RegressionConfig {
    int n = 50;
    int m = 50;
    double sd_y = 0.25;
    double sd_z = 3.0;
    double k = 2.0;  // covariate power in the data-generating mean
    double phi_true = 0.0;
    double theta_true = 1.0;
    double x_lo = 0.0;
    double x_hi = 2.0;
};

struct RegressionData {
    Vector x;
    Vector y;
    Vector z;
};

inline RegressionData simulate_regression_data(const RegressionConfig& cfg, Rng& rng) {
    RegressionData d;
    d.x.resize(cfg.n);
    d.y.resize(cfg.n);
    d.z.resize(cfg.m);
    for (int i = 0; i < cfg.n; ++i) {
        d.x[i] = rng.uniform(cfg.x_lo, cfg.x_hi);
        d.y[i] = rng.normal(cfg.phi_true + cfg.theta_true * std::pow(d.x[i], cfg.k),
                            cfg.sd_y);
    }
    for (double& v : d.z) v = rng.normal(cfg.phi_true, cfg.sd_z);
    return d;
}

struct RegressionSuffStats {
    double n, m;
    double mx, mx2, my, mxy, mz;
};

inline RegressionSuffStats regression_suff_stats(const RegressionData& d) {
    if (d.x.size() != d.y.size() || d.x.empty() || d.z.empty())
        throw data_error("regression_suff_stats: empty or mismatched data");
    RegressionSuffStats s{};
    s.n = static_cast<double>(d.x.size());
    s.m = static_cast<double>(d.z.size());
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        s.mx += d.x[i];
        s.mx2 += d.x[i] * d.x[i];
        s.my += d.y[i];
        s.mxy += d.x[i] * d.y[i];
    }
    s.mx /= s.n;
    s.mx2 /= s.n;
    s.my /= s.n;
    s.mxy /= s.n;
    s.mz = mean(d.z);
    if (s.mx2 - s.mx * s.mx <= 1e-12)
        throw data_error("regression_suff_stats: degenerate design (constant x)");
    return s;
}

// Analysis-stage conditional theta | Y, phi ~ N(a - b phi, var); affine in
// phi with slope -b.
struct ThetaConditional {
    double a;
    double b;
    double var;
    double mean(double phi) const { return a - b * phi; }
};

struct RegressionPosterior {
    GaussianPosterior phi;
    ThetaConditional theta_given_phi;

    GaussianPosterior theta_marginal() const {
        return {theta_given_phi.mean(phi.mean),
                theta_given_phi.b * theta_given_phi.b * phi.var + theta_given_phi.var};
    }
};

namespace detail {

inline RegressionPosterior regression_posterior_s2(const RegressionSuffStats& s,
                                                   double sd_y, double sd_z,
                                                   double s2) {
    const double vz = sd_z * sd_z;
    RegressionPosterior out;
    out.theta_given_phi = {s.mxy / s.mx2, s.mx / s.mx2, sd_y * sd_y / (s.n * s.mx2)};
    if (std::isinf(s2)) {
        out.phi = {s.mz, vz / s.m};
        return out;
    }
    const double rho = s2 / vz * (s.m / s.n);
    const double denom = rho + 1.0 - s.mx * s.mx / s.mx2;
    out.phi = {(rho * s.mz + s.my - s.mx * s.mxy / s.mx2) / denom,
               (rho * vz / s.m) / denom};
    return out;
}

}  // namespace detail

// delta-SMI posterior of the regression example:
//   rho        = (sd_y^2 + delta^2) m / (sd_z^2 n),
//   mu~_phi    = [rho zbar + ybar - mx mxy / mx2] / (rho + 1 - mx^2 / mx2),
//   sd~^2_phi  = (rho sd_z^2 / m) / (rho + 1 - mx^2 / mx2),
//   theta|Y,phi ~ N((mxy - phi mx) / mx2, sd_y^2 / (n mx2)),
// the conditional always using sd_y, never the inflated variance.
inline RegressionPosterior regression_smi_posterior(const RegressionSuffStats& s,
                                                    double sd_y, double sd_z,
                                                    double delta) {
    if (!(delta >= 0.0))
        throw std::invalid_argument("regression_smi_posterior: delta < 0");
    return detail::regression_posterior_s2(s, sd_y, sd_z, sd_y * sd_y + delta * delta);
}

inline RegressionPosterior regression_smi_posterior_eta(const RegressionSuffStats& s,
                                                        double sd_y, double sd_z,
                                                        double eta) {
    if (!(eta >= 0.0 && eta <= 1.0))
        throw std::invalid_argument("regression_smi_posterior_eta: eta outside [0, 1]");
    return detail::regression_posterior_s2(s, sd_y, sd_z, sd_y * sd_y / eta);
}

// Population pseudo-true values (phi*_delta, theta*_delta) of the fitted
// linear y-model combined with the z-module, for X ~ U(x_lo, x_hi) and
// m/n -> alpha:
//   phi*_delta  = phi* + theta* (M2 Mk - M1 Mk+1) /
//                 (Var X + alpha M2 (sd_y^2 + delta^2) / sd_z^2),
//   theta*_delta = (theta* Mk+1 + M1 phi* - M1 phi*_delta) / M2,
// with Mr the r-th moment of X.
inline std::pair<double, double> pseudo_true_values(const RegressionConfig& cfg,
                                                    double delta) {
    auto moment = [&](double r) {
        // E X^r for X ~ U(x_lo, x_hi)
        return (std::pow(cfg.x_hi, r + 1.0) - std::pow(cfg.x_lo, r + 1.0)) /
               ((cfg.x_hi - cfg.x_lo) * (r + 1.0));
    };
    const double m1 = moment(1.0), m2 = moment(2.0);
    const double mk = moment(cfg.k), mk1 = moment(cfg.k + 1.0);
    const double alpha = static_cast<double>(cfg.m) / cfg.n;
    const double s2 = cfg.sd_y * cfg.sd_y + delta * delta;
    const double num = cfg.theta_true * (m2 * mk - m1 * mk1);
    const double den = (m2 - m1 * m1) + alpha * m2 * s2 / (cfg.sd_z * cfg.sd_z);
    const double phi_d = cfg.phi_true + (std::isinf(delta) ? 0.0 : num / den);
    const double theta_d =
        (cfg.theta_true * mk1 + m1 * cfg.phi_true - m1 * phi_d) / m2;
    return {phi_d, theta_d};
}

// Exact expected log predictive density of a new z under the truth
// N(phi*, sd_z^2), for the Gaussian z-predictive N(mu~_phi, sd~^2_phi + sd_z^2).
inline double regression_elpd_z(const GaussianPosterior& phi_post, double sd_z,
                                double phi_true) {
    const double v = phi_post.var + sd_z * sd_z;
    const double d = phi_true - phi_post.mean;
    return -0.5 * (log_2pi + std::log(v)) - (sd_z * sd_z + d * d) / (2.0 * v);
}

// Leave-one-out CV estimate of the z-predictive utility,
//   (1/m) sum_j log p~(Z_j | Y, Z_{-j}),
// with each fold's phi-posterior recomputed from the m-1 remaining z's.
inline double regression_loocv_elpd_z(const RegressionSuffStats& s, ConstSpan z,
                                      double sd_y, double sd_z, double delta) {
    if (z.size() < 2) throw data_error("regression_loocv_elpd_z: need m >= 2");
    const double m = static_cast<double>(z.size());
    double zsum = 0.0;
    for (double v : z) zsum += v;
    RegressionSuffStats fold = s;
    fold.m = m - 1.0;
    double acc = 0.0;
    for (double zj : z) {
        fold.mz = (zsum - zj) / (m - 1.0);
        const RegressionPosterior post =
            regression_smi_posterior(fold, sd_y, sd_z, delta);
        acc += log_normal_pdf(zj, post.phi.mean, post.phi.var + sd_z * sd_z);
    }
    return acc / m;
}

inline TwoModuleModel make_regression_model(const RegressionConfig& cfg, Vector x) {
    TwoModuleModel model;
    model.dims = {1, 1, 1, 1};
    const double vy = cfg.sd_y * cfg.sd_y;
    const double vz = cfg.sd_z * cfg.sd_z;
    auto xs = std::make_shared<Vector>(std::move(x));
    model.z_loglik = [vz](ConstSpan phi, ConstSpan z) {
        double s = 0.0;
        for (double v : z) s += log_normal_pdf(v, phi[0], vz);
        return s;
    };
    model.y_loglik = [vy, xs](ConstSpan phi, ConstSpan theta, ConstSpan y) {
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i)
            s += log_normal_pdf(y[i], phi[0] + theta[0] * (*xs)[i], vy);
        return s;
    };
    model.y_loglik_pointwise = [vy, xs](ConstSpan phi, ConstSpan theta, std::size_t i,
                                        double y_i) {
        return log_normal_pdf(y_i, phi[0] + theta[0] * (*xs)[i], vy);
    };
    model.z_loglik_pointwise = [vz](ConstSpan phi, std::size_t, double z_j) {
        return log_normal_pdf(z_j, phi[0], vz);
    };
    model.log_prior_phi = [](ConstSpan) { return 0.0; };
    model.log_prior_theta_given_phi = [](ConstSpan, ConstSpan) { return 0.0; };
    model.improper_phi_prior = true;
    model.improper_theta_prior = true;
    model.simulate_z = [cfg](ConstSpan phi, Rng& rng) {
        Vector z(cfg.m);
        for (double& v : z) v = rng.normal(phi[0], cfg.sd_z);
        return z;
    };
    return model;
}

inline Evaluators make_regression_evaluators(const RegressionConfig& cfg,
                                             const Vector& x) {
    Evaluators evals;
    auto xs = std::make_shared<Vector>(x);
    const double sd_y = cfg.sd_y;
    evals.smoothed_y_loglik = [sd_y, xs](ConstSpan phi, ConstSpan theta_tilde,
                                         ConstSpan y, const KernelSpec& kernel) {
        if (kernel.kind == KernelSpec::Kind::Gaussian) {
            Vector means(y.size());
            for (std::size_t i = 0; i < y.size(); ++i)
                means[i] = phi[0] + theta_tilde[0] * (*xs)[i];
            return smoothed_normal_loglik(y, means, sd_y, kernel.delta);
        }
        if (std::isinf(kernel.delta)) return 0.0;
        const double vy = sd_y * sd_y;
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double mu = phi[0] + theta_tilde[0] * (*xs)[i];
            auto f = [&](double t) { return log_normal_pdf(t, mu, vy); };
            s += smoothed_point_loglik(f, y[i], kernel);
        }
        return s;
    };
    return evals;
}

}  // namespace smi
