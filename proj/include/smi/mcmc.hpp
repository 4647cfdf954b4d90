#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smi/errors.hpp"
#include "smi/math.hpp"
#include "smi/model.hpp"
#include "smi/rng.hpp"

namespace smi {

struct McmcConfig {
    int outer_steps = 20000;
    int inner_steps = 50;
    double outer_burn_frac = 0.3;
    // Initial proposal scale shared by all blocks unless per-block values are
    // given (phi blocks first, then theta_tilde, then inner theta).
    double init_scale = 0.5;
    std::vector<double> proposal_scales;
    std::uint64_t seed = 20240801;
    bool adapt = true;

    int burn_in() const {
        return static_cast<int>(outer_burn_frac * outer_steps);
    }
};

struct PosteriorDraws {
    std::vector<Vector> phi;
    std::vector<Vector> theta_tilde;  // empty for settings without a copy
    std::vector<Vector> theta;
    std::vector<Vector> y_tilde;      // augmented sampler only
    std::vector<std::string> block_names;
    std::vector<double> acceptance;   // per block, post-burn-in
    std::vector<double> ess;          // per scalar component of (phi, theta)
    std::uint64_t seed = 0;

    std::vector<double> component(const std::vector<Vector>& draws, int j) const {
        std::vector<double> out(draws.size());
        for (std::size_t s = 0; s < draws.size(); ++s) out[s] = draws[s][j];
        return out;
    }
};

// Geyer initial-monotone-sequence estimator of the effective sample size.
inline double effective_sample_size(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 10) throw mcmc_error("effective_sample_size: chain shorter than 10");
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }))
        return 1.0;  // flat chain: flag as a single draw
    const double mu = [&] {
        double s = 0.0;
        for (double v : x) s += v;
        return s / static_cast<double>(n);
    }();
    std::vector<double> c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) c[i] = x[i] - mu;
    auto gamma_lag = [&](std::size_t t) {
        double s = 0.0;
        for (std::size_t i = 0; i + t < n; ++i) s += c[i] * c[i + t];
        return s / static_cast<double>(n);
    };
    const double g0 = gamma_lag(0);
    if (!(g0 > 1e-300)) return 1.0;  // flat chain: flag as a single draw
    double tau = -1.0;
    double prev_pair = pos_inf;
    for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
        const double pair = (gamma_lag(2 * m) + gamma_lag(2 * m + 1)) / g0;
        if (pair <= 0.0) break;
        const double capped = std::min(pair, prev_pair);
        tau += 2.0 * capped;
        prev_pair = capped;
    }
    return static_cast<double>(n) / std::max(tau, 1.0 / static_cast<double>(n));
}

namespace detail {

// Scalar-block adaptive random-walk Metropolis.  Adaptation follows a
// Robbins-Monro recursion on the log proposal scale toward a 0.44 acceptance
// rate and is frozen once `adapting` is cleared.
struct RwmBlock {
    std::string name;
    int index = 0;          // coordinate this block updates
    double scale = 0.5;
    double target_accept = 0.44;
    long proposals = 0;
    long accepted = 0;
    long adapt_count = 0;

    void adapt(double alpha) {
        ++adapt_count;
        const double gamma = 1.0 / std::pow(static_cast<double>(adapt_count), 0.6);
        scale *= std::exp(gamma * (alpha - target_accept));
        scale = std::clamp(scale, 1e-8, 1e8);
    }

    double rate() const {
        return proposals > 0 ? static_cast<double>(accepted) / proposals : 0.0;
    }
};

inline void rwm_sweep(const std::function<double(ConstSpan)>& log_target,
                      Vector& state, double& current, std::vector<RwmBlock>& blocks,
                      bool adapting, Rng& rng) {
    for (RwmBlock& b : blocks) {
        const double old = state[b.index];
        state[b.index] = old + b.scale * rng.normal();
        const double proposed = log_target(state);
        const double log_ratio = proposed - current;
        const double alpha = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
        ++b.proposals;
        if (rng.uniform() < alpha) {
            current = proposed;
            ++b.accepted;
        } else {
            state[b.index] = old;
        }
        if (adapting) b.adapt(std::isfinite(alpha) ? alpha : 0.0);
    }
}

inline void check_burn_in_acceptance(const std::vector<RwmBlock>& blocks) {
    for (const RwmBlock& b : blocks) {
        if (b.proposals >= 100 && b.accepted == 0) {
            std::string report = "zero acceptance over burn-in; proposal scales:";
            for (const RwmBlock& o : blocks)
                report += " " + o.name + "=" + std::to_string(o.scale);
            throw mcmc_error(report);
        }
    }
}

inline std::vector<RwmBlock> make_blocks(const std::string& prefix, int dim,
                                         int offset, const McmcConfig& cfg,
                                         std::size_t scale_pos) {
    std::vector<RwmBlock> blocks(dim);
    for (int j = 0; j < dim; ++j) {
        blocks[j].name = prefix + "[" + std::to_string(j) + "]";
        blocks[j].index = offset + j;
        blocks[j].scale = scale_pos + j < cfg.proposal_scales.size()
                              ? cfg.proposal_scales[scale_pos + j]
                              : cfg.init_scale;
        if (!(blocks[j].scale > 0.0))
            throw mcmc_error("proposal scale must be positive for " + blocks[j].name);
    }
    return blocks;
}

}  // namespace detail

// Markov kernel for theta | Y, phi: `steps` sweeps of adaptive RWM on
// pi(theta | Y, phi) starting from theta (updated in place).
class ThetaConditionalSampler {
  public:
    ThetaConditionalSampler(const TwoModuleModel& model, ConstSpan y,
                            const McmcConfig& cfg, std::size_t scale_pos)
        : model_(model),
          y_(y.begin(), y.end()),
          blocks_(detail::make_blocks("theta", model.dims.theta_dim, 0, cfg, scale_pos)) {}

    void advance(ConstSpan phi, Vector& theta, int steps, bool adapting, Rng& rng) {
        auto target = [&](ConstSpan th) {
            return model_.y_loglik(phi, th, y_) +
                   model_.log_prior_theta_given_phi(th, phi);
        };
        double current = target(theta);
        if (!std::isfinite(current))
            throw mcmc_error("theta sampler initialized off the target support");
        for (int s = 0; s < steps; ++s)
            detail::rwm_sweep(target, theta, current, blocks_, adapting, rng);
    }

    const std::vector<detail::RwmBlock>& blocks() const { return blocks_; }

  private:
    const TwoModuleModel& model_;
    Vector y_;
    std::vector<detail::RwmBlock> blocks_;
};

// Draws from pi(theta | Y, phi) at fixed phi: one long adaptive chain,
// burn-in discarded.
inline std::vector<Vector> sample_theta_given_phi(const TwoModuleModel& model,
                                                  ConstSpan phi, ConstSpan y,
                                                  const McmcConfig& cfg) {
    Rng rng(cfg.seed, 0x7e7a);
    ThetaConditionalSampler sampler(model, y, cfg, 0);
    Vector theta(model.dims.theta_dim, 0.0);
    const int burn = cfg.burn_in();
    std::vector<Vector> draws;
    draws.reserve(cfg.outer_steps - burn);
    for (int s = 0; s < cfg.outer_steps; ++s) {
        sampler.advance(phi, theta, 1, cfg.adapt && s < burn, rng);
        if (s >= burn) draws.push_back(theta);
    }
    return draws;
}

namespace detail {

inline double outer_log_target(const TwoModuleModel& model,
                               const InfluenceSetting& setting,
                               const Evaluators& evals, ConstSpan y, ConstSpan z,
                               ConstSpan phi, ConstSpan theta_tilde) {
    const double lp_phi = model.log_prior_phi(phi);
    if (!std::isfinite(lp_phi)) return neg_inf;
    const double lz = model.z_loglik(phi, z);
    switch (setting.family()) {
        case InfluenceSetting::Family::Cut:
            return lz + lp_phi;
        case InfluenceSetting::Family::Gamma:
            return lz + lp_phi +
                   setting.value() * detail::require_marginal(evals, phi, y);
        case InfluenceSetting::Family::Bayes:
        case InfluenceSetting::Family::Eta: {
            const double lp = model.log_prior_theta_given_phi(theta_tilde, phi);
            if (!std::isfinite(lp)) return neg_inf;
            return lz + lp_phi + lp +
                   setting.value() * model.y_loglik(phi, theta_tilde, y);
        }
        case InfluenceSetting::Family::Delta: {
            const double lp = model.log_prior_theta_given_phi(theta_tilde, phi);
            if (!std::isfinite(lp)) return neg_inf;
            if (!evals.smoothed_y_loglik)
                throw marginal_unavailable("delta sampling needs a smoothed evaluator");
            return lz + lp_phi + lp +
                   evals.smoothed_y_loglik(phi, theta_tilde, y, setting.kernel());
        }
    }
    return neg_inf;
}

}  // namespace detail

// Nested MCMC: an outer adaptive RWM chain on the imputation posterior of
// (phi[, theta_tilde]), and for every retained outer draw a warm-started
// inner chain of `inner_steps` sweeps targeting pi(theta | Y, phi), whose
// last state is kept.  Adaptation of all blocks is frozen after the outer
// burn-in.
inline PosteriorDraws run_nested_mcmc(const TwoModuleModel& model,
                                      const InfluenceSetting& setting,
                                      const Evaluators& evals, ConstSpan y,
                                      ConstSpan z, const McmcConfig& cfg,
                                      Vector phi_init, Vector theta_init) {
    const bool with_tilde = setting.family() == InfluenceSetting::Family::Bayes ||
                            setting.needs_theta_tilde();
    const int p = model.dims.phi_dim;
    const int q = model.dims.theta_dim;
    if (static_cast<int>(phi_init.size()) != p ||
        static_cast<int>(theta_init.size()) != q)
        throw mcmc_error("run_nested_mcmc: initial state has wrong dimensions");

    Vector state = phi_init;
    if (with_tilde) state.insert(state.end(), theta_init.begin(), theta_init.end());

    auto target = [&](ConstSpan s) {
        return detail::outer_log_target(model, setting, evals, y, z,
                                        s.subspan(0, p),
                                        with_tilde ? s.subspan(p, q) : ConstSpan{});
    };

    std::vector<detail::RwmBlock> outer_blocks = detail::make_blocks("phi", p, 0, cfg, 0);
    if (with_tilde) {
        auto tilde = detail::make_blocks("theta_tilde", q, p, cfg, p);
        outer_blocks.insert(outer_blocks.end(), tilde.begin(), tilde.end());
    }

    Rng outer_rng(cfg.seed, 1);
    Rng inner_rng(cfg.seed, 2);

    double current = target(state);
    if (!std::isfinite(current))
        throw mcmc_error("run_nested_mcmc: initial state off the target support");

    ThetaConditionalSampler inner(model, y, cfg, static_cast<std::size_t>(p) +
                                                     (with_tilde ? q : 0));
    Vector theta = theta_init;

    const int burn = cfg.burn_in();
    PosteriorDraws out;
    out.seed = cfg.seed;
    out.phi.reserve(cfg.outer_steps - burn);
    out.theta.reserve(cfg.outer_steps - burn);
    if (with_tilde) out.theta_tilde.reserve(cfg.outer_steps - burn);

    for (int s = 0; s < cfg.outer_steps; ++s) {
        const bool adapting = cfg.adapt && s < burn;
        detail::rwm_sweep(target, state, current, outer_blocks, adapting, outer_rng);
        if (s == burn - 1) detail::check_burn_in_acceptance(outer_blocks);
        // The inner chain also runs during burn-in so its scales are tuned
        // (and frozen) by the time draws are retained.
        inner.advance(ConstSpan(state).subspan(0, p), theta, cfg.inner_steps,
                      adapting, inner_rng);
        if (s >= burn) {
            out.phi.emplace_back(state.begin(), state.begin() + p);
            if (with_tilde)
                out.theta_tilde.emplace_back(state.begin() + p, state.end());
            out.theta.push_back(theta);
        }
    }

    for (const auto& b : outer_blocks) {
        out.block_names.push_back(b.name);
        out.acceptance.push_back(b.rate());
    }
    for (const auto& b : inner.blocks()) {
        out.block_names.push_back(b.name + "(inner)");
        out.acceptance.push_back(b.rate());
    }
    for (int j = 0; j < p; ++j)
        out.ess.push_back(effective_sample_size(out.component(out.phi, j)));
    for (int j = 0; j < q; ++j)
        out.ess.push_back(effective_sample_size(out.component(out.theta, j)));
    return out;
}

// Augmented sampler for the delta family: targets the joint
//   p(Z|phi) K_delta(Y, Y~) p(Y~ | phi, theta_tilde) pi(phi, theta_tilde)
// over (phi, theta_tilde, Y~), whose (phi, theta_tilde) marginal is the
// smoothed imputation posterior.  Continuous kernels move Y~ by random walk;
// discrete kernels propose uniformly inside the window V(Y_i, h).
inline PosteriorDraws run_augmented_mcmc(const TwoModuleModel& model,
                                         const InfluenceSetting& setting,
                                         ConstSpan y, ConstSpan z,
                                         const McmcConfig& cfg, Vector phi_init,
                                         Vector theta_init) {
    if (setting.family() != InfluenceSetting::Family::Delta)
        throw mcmc_error("run_augmented_mcmc: delta-family setting required");
    const KernelSpec kernel = setting.kernel();
    if (std::isinf(kernel.delta))
        throw mcmc_error("run_augmented_mcmc: delta must be finite");
    const int p = model.dims.phi_dim;
    const int q = model.dims.theta_dim;
    const int n = static_cast<int>(y.size());

    // state = [phi, theta_tilde, y_tilde]
    Vector state = phi_init;
    state.insert(state.end(), theta_init.begin(), theta_init.end());
    state.insert(state.end(), y.begin(), y.end());

    auto target = [&](ConstSpan s) {
        const ConstSpan phi = s.subspan(0, p);
        const ConstSpan tilde = s.subspan(p, q);
        const ConstSpan ytil = s.subspan(p + q, n);
        const double lp = model.log_prior_phi(phi);
        if (!std::isfinite(lp)) return neg_inf;
        const double lpt = model.log_prior_theta_given_phi(tilde, phi);
        if (!std::isfinite(lpt)) return neg_inf;
        double acc = model.z_loglik(phi, z) + lp + lpt;
        for (int i = 0; i < n; ++i) {
            acc += kernel_log_density(kernel, y[i], ytil[i]) +
                   model.y_loglik_pointwise(phi, tilde, static_cast<std::size_t>(i),
                                            ytil[i]);
            if (!std::isfinite(acc)) return neg_inf;
        }
        return acc;
    };

    std::vector<detail::RwmBlock> blocks = detail::make_blocks("phi", p, 0, cfg, 0);
    {
        auto tilde = detail::make_blocks("theta_tilde", q, p, cfg, p);
        blocks.insert(blocks.end(), tilde.begin(), tilde.end());
    }
    std::vector<detail::RwmBlock> ytil_blocks =
        kernel.discrete() ? std::vector<detail::RwmBlock>()
                          : detail::make_blocks("y_tilde", n, p + q, cfg, p + q);

    Rng outer_rng(cfg.seed, 3);
    Rng inner_rng(cfg.seed, 4);

    double current = target(state);
    if (!std::isfinite(current))
        throw mcmc_error("run_augmented_mcmc: initial state off the target support");

    ThetaConditionalSampler inner(model, y, cfg,
                                  static_cast<std::size_t>(p) + q + n);
    Vector theta = theta_init;

    long ytil_prop = 0, ytil_acc = 0;
    const int burn = cfg.burn_in();
    PosteriorDraws out;
    out.seed = cfg.seed;

    for (int s = 0; s < cfg.outer_steps; ++s) {
        const bool adapting = cfg.adapt && s < burn;
        detail::rwm_sweep(target, state, current, blocks, adapting, outer_rng);
        if (kernel.discrete()) {
            for (int i = 0; i < n; ++i) {
                const DiscreteWindow w = discrete_window(y[i], kernel.half_width(y[i]));
                const double old = state[p + q + i];
                state[p + q + i] =
                    static_cast<double>(outer_rng.uniform_int(w.lo, w.hi));
                const double proposed = target(state);
                ++ytil_prop;
                const double lr = proposed - current;
                if (lr >= 0.0 || outer_rng.uniform() < std::exp(lr)) {
                    current = proposed;
                    ++ytil_acc;
                } else {
                    state[p + q + i] = old;
                }
            }
        } else {
            detail::rwm_sweep(target, state, current, ytil_blocks, adapting, outer_rng);
        }
        if (s == burn - 1) detail::check_burn_in_acceptance(blocks);
        inner.advance(ConstSpan(state).subspan(0, p), theta, cfg.inner_steps,
                      adapting, inner_rng);
        if (s >= burn) {
            out.phi.emplace_back(state.begin(), state.begin() + p);
            out.theta_tilde.emplace_back(state.begin() + p, state.begin() + p + q);
            out.y_tilde.emplace_back(state.begin() + p + q, state.end());
            out.theta.push_back(theta);
        }
    }

    for (const auto& b : blocks) {
        out.block_names.push_back(b.name);
        out.acceptance.push_back(b.rate());
    }
    if (kernel.discrete()) {
        out.block_names.push_back("y_tilde");
        out.acceptance.push_back(ytil_prop > 0 ? static_cast<double>(ytil_acc) / ytil_prop
                                               : 0.0);
    } else {
        for (const auto& b : ytil_blocks) {
            out.block_names.push_back(b.name);
            out.acceptance.push_back(b.rate());
        }
    }
    for (const auto& b : inner.blocks()) {
        out.block_names.push_back(b.name + "(inner)");
        out.acceptance.push_back(b.rate());
    }
    for (int j = 0; j < p; ++j)
        out.ess.push_back(effective_sample_size(out.component(out.phi, j)));
    for (int j = 0; j < q; ++j)
        out.ess.push_back(effective_sample_size(out.component(out.theta, j)));
    return out;
}

// Plain joint-space adaptive RWM; reference sampler for full-Bayes checks.
inline std::vector<Vector> run_plain_mcmc(const std::function<double(ConstSpan)>& log_target,
                                          Vector init, const McmcConfig& cfg) {
    Rng rng(cfg.seed, 5);
    std::vector<detail::RwmBlock> blocks =
        detail::make_blocks("x", static_cast<int>(init.size()), 0, cfg, 0);
    double current = log_target(init);
    if (!std::isfinite(current))
        throw mcmc_error("run_plain_mcmc: initial state off the target support");
    const int burn = cfg.burn_in();
    std::vector<Vector> draws;
    draws.reserve(cfg.outer_steps - burn);
    for (int s = 0; s < cfg.outer_steps; ++s) {
        detail::rwm_sweep(log_target, init, current, blocks, cfg.adapt && s < burn, rng);
        if (s == burn - 1) detail::check_burn_in_acceptance(blocks);
        if (s >= burn) draws.push_back(init);
    }
    return draws;
}

}  // namespace smi
