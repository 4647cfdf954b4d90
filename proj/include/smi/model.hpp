#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smi/errors.hpp"
#include "smi/kernels.hpp"
#include "smi/math.hpp"
#include "smi/rng.hpp"

namespace smi {

struct ModelDims {
    int phi_dim = 1;
    int theta_dim = 1;
    int y_dim = 1;
    int z_dim = 1;
};

// A two-module model: a Z-module p(Z | phi), a Y-module p(Y | phi, theta),
// and a prior factored as pi0(phi) pi0(theta | phi).  Data sets are flat
// vectors of scalar observations; per-observation covariates or exposures are
// captured inside the closures, keyed by observation index.
struct TwoModuleModel {
    ModelDims dims;

    std::function<double(ConstSpan phi, ConstSpan z)> z_loglik;
    std::function<double(ConstSpan phi, ConstSpan theta, ConstSpan y)> y_loglik;
    std::function<double(ConstSpan phi, ConstSpan theta, std::size_t i, double y_i)>
        y_loglik_pointwise;
    std::function<double(ConstSpan phi, std::size_t j, double z_j)> z_loglik_pointwise;

    std::function<double(ConstSpan phi)> log_prior_phi;
    std::function<double(ConstSpan theta, ConstSpan phi)> log_prior_theta_given_phi;

    // Set when the corresponding prior factor is improper (flat, coded as
    // log-density 0).  Prior-predictive quantities such as log p(Y | phi)
    // integrate over pi0(theta | phi), so they require either a proper theta
    // factor or an explicitly registered evaluator.
    bool improper_phi_prior = false;
    bool improper_theta_prior = false;

    std::function<Vector(ConstSpan phi, ConstSpan theta, Rng&)> simulate_y;
    std::function<Vector(ConstSpan phi, Rng&)> simulate_z;

    double log_prior(ConstSpan phi, ConstSpan theta) const {
        return log_prior_phi(phi) + log_prior_theta_given_phi(theta, phi);
    }
};

// (phi, theta_tilde, theta) with theta_tilde the imputation-stage copy.
struct AugmentedParams {
    Vector phi;
    Vector theta_tilde;
    Vector theta;
};

// Belief-update family and its influence parameter.  Construction
// canonicalizes the exact endpoint identities: Eta(1), Gamma(1) and
// Delta(0, .) denote Bayes; Eta(0) and Gamma(0) denote Cut.
class InfluenceSetting {
  public:
    enum class Family { Bayes, Cut, Eta, Delta, Gamma };

    static InfluenceSetting bayes() { return InfluenceSetting(Family::Bayes, 1.0, {}); }
    static InfluenceSetting cut() { return InfluenceSetting(Family::Cut, 0.0, {}); }

    static InfluenceSetting eta(double value) {
        check_unit("eta", value);
        if (value == 0.0) return cut();
        if (value == 1.0) return bayes();
        return InfluenceSetting(Family::Eta, value, {});
    }

    static InfluenceSetting gamma(double value) {
        check_unit("gamma", value);
        if (value == 0.0) return cut();
        if (value == 1.0) return bayes();
        return InfluenceSetting(Family::Gamma, value, {});
    }

    static InfluenceSetting delta(const KernelSpec& kernel) {
        if (kernel.delta == 0.0) return bayes();
        return InfluenceSetting(Family::Delta, kernel.delta, kernel);
    }

    static InfluenceSetting delta(double value, KernelSpec::Kind kind) {
        if (value == 0.0) return bayes();
        return delta(KernelSpec{kind, value});
    }

    Family family() const { return family_; }

    // Scalar influence value: eta, gamma, or delta; 1 for Bayes, 0 for Cut
    // on the eta/gamma scale.
    double value() const { return value_; }

    const KernelSpec& kernel() const {
        if (!kernel_) throw std::invalid_argument("InfluenceSetting: no kernel attached");
        return *kernel_;
    }

    bool needs_theta_tilde() const {
        return family_ == Family::Eta || family_ == Family::Delta;
    }

    std::string label() const {
        switch (family_) {
            case Family::Bayes: return "bayes";
            case Family::Cut: return "cut";
            case Family::Eta: return "eta=" + std::to_string(value_);
            case Family::Delta: return "delta=" + std::to_string(value_);
            case Family::Gamma: return "gamma=" + std::to_string(value_);
        }
        return "?";
    }

  private:
    InfluenceSetting(Family f, double v, std::optional<KernelSpec> k)
        : family_(f), value_(v), kernel_(k) {}

    static void check_unit(const char* name, double v) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
    }

    Family family_;
    double value_;
    std::optional<KernelSpec> kernel_;
};

// Evaluators for the two loss ingredients that are not part of the model
// proper: the prior predictive log p(Y | phi) and the smoothed likelihood
// log p_delta(Y | phi, theta_tilde).
struct Evaluators {
    std::function<double(ConstSpan phi, ConstSpan y)> marginal_y_loglik;
    std::function<double(ConstSpan phi, ConstSpan theta_tilde, ConstSpan y,
                         const KernelSpec& kernel)>
        smoothed_y_loglik;
};

inline double bayes_loss(const TwoModuleModel& model, ConstSpan phi, ConstSpan theta,
                         ConstSpan y, ConstSpan z) {
    return -model.z_loglik(phi, z) - model.y_loglik(phi, theta, y);
}

namespace detail {
inline double require_marginal(const Evaluators& evals, ConstSpan phi, ConstSpan y) {
    if (!evals.marginal_y_loglik)
        throw marginal_unavailable("log p(Y|phi) evaluator not registered");
    return evals.marginal_y_loglik(phi, y);
}
}  // namespace detail

inline double cut_loss(const TwoModuleModel& model, const Evaluators& evals,
                       ConstSpan phi, ConstSpan theta, ConstSpan y, ConstSpan z) {
    return bayes_loss(model, phi, theta, y, z) + detail::require_marginal(evals, phi, y);
}

// Loss of the belief update identified by `setting`, split into the shared
// base term and the influence-specific corrections.
struct LossBreakdown {
    double total;
    double base;            // -log p(Z|phi) - log p(Y|phi,theta)
    double marginal_term;   // multiple of log p(Y|phi)
    double influence_term;  // theta_tilde-dependent term (eta/delta families)
};

inline LossBreakdown smi_losses(const TwoModuleModel& model,
                                const InfluenceSetting& setting,
                                const Evaluators& evals, ConstSpan phi,
                                ConstSpan theta_tilde, ConstSpan theta,
                                ConstSpan y, ConstSpan z) {
    LossBreakdown out{};
    out.base = bayes_loss(model, phi, theta, y, z);
    switch (setting.family()) {
        case InfluenceSetting::Family::Bayes:
            break;
        case InfluenceSetting::Family::Cut:
            out.marginal_term = detail::require_marginal(evals, phi, y);
            break;
        case InfluenceSetting::Family::Gamma:
            out.marginal_term =
                (1.0 - setting.value()) * detail::require_marginal(evals, phi, y);
            break;
        case InfluenceSetting::Family::Eta:
            out.marginal_term = detail::require_marginal(evals, phi, y);
            out.influence_term =
                -setting.value() * model.y_loglik(phi, theta_tilde, y);
            break;
        case InfluenceSetting::Family::Delta: {
            if (!evals.smoothed_y_loglik)
                throw marginal_unavailable("log p_delta(Y|phi,theta~) evaluator not registered");
            out.marginal_term = detail::require_marginal(evals, phi, y);
            out.influence_term =
                -evals.smoothed_y_loglik(phi, theta_tilde, y, setting.kernel());
            break;
        }
    }
    out.total = out.base + out.marginal_term + out.influence_term;
    return out;
}

// log of the augmented prior Pi0(phi, theta_tilde, theta) =
// pi0(phi, theta_tilde) pi0(theta | phi) under which the Gibbs update of an
// eta/delta loss reproduces the corresponding SMI posterior.
inline double log_augmented_prior(const TwoModuleModel& model, ConstSpan phi,
                                  ConstSpan theta_tilde, ConstSpan theta) {
    return model.log_prior(phi, theta_tilde) +
           model.log_prior_theta_given_phi(theta, phi);
}

// Prior predictive log p(Y | phi) by exact enumeration of a discrete
// pi0(theta | phi) supported on `atoms` with the given log-weights.
inline std::function<double(ConstSpan, ConstSpan)> make_enumeration_marginal(
    const TwoModuleModel& model, std::vector<Vector> atoms,
    std::vector<double> log_weights) {
    if (atoms.size() != log_weights.size() || atoms.empty())
        throw std::invalid_argument("make_enumeration_marginal: bad support");
    return [&model, atoms = std::move(atoms), log_weights = std::move(log_weights)](
               ConstSpan phi, ConstSpan y) {
        std::vector<double> terms(atoms.size());
        for (std::size_t k = 0; k < atoms.size(); ++k)
            terms[k] = log_weights[k] + model.y_loglik(phi, atoms[k], y);
        return log_sum_exp(terms);
    };
}

// Prior predictive log p(Y | phi) by 1-D adaptive quadrature over a scalar
// theta on [lo, hi]; requires a proper pi0(theta | phi).
inline std::function<double(ConstSpan, ConstSpan)> make_quadrature_marginal(
    const TwoModuleModel& model, double lo, double hi, double tol = 1e-10) {
    if (model.dims.theta_dim != 1)
        throw marginal_unavailable("quadrature marginal requires a scalar theta");
    if (model.improper_theta_prior)
        throw marginal_unavailable("quadrature marginal requires a proper pi0(theta|phi)");
    return [&model, lo, hi, tol](ConstSpan phi, ConstSpan y) {
        auto g = [&](double theta) {
            const double th[1] = {theta};
            return model.y_loglik(phi, th, y) +
                   model.log_prior_theta_given_phi(th, phi);
        };
        return log_integrate_exp(g, lo, hi, tol);
    };
}

// Default smoothed-likelihood evaluator built from the pointwise observation
// density: exact window sums for discrete kernels, per-point quadrature for
// continuous ones.
inline Evaluators make_generic_evaluators(const TwoModuleModel& model,
                                          double quad_tol = 1e-9) {
    Evaluators evals;
    evals.smoothed_y_loglik = [&model, quad_tol](ConstSpan phi, ConstSpan theta_tilde,
                                                 ConstSpan y, const KernelSpec& kernel) {
        if (std::isinf(kernel.delta)) return 0.0;
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            auto f = [&](double t) {
                return model.y_loglik_pointwise(phi, theta_tilde, i, t);
            };
            s += smoothed_point_loglik(f, y[i], kernel, quad_tol);
        }
        return s;
    };
    return evals;
}

}  // namespace smi
