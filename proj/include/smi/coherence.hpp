#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "smi/errors.hpp"
#include "smi/kernels.hpp"
#include "smi/math.hpp"
#include "smi/model.hpp"
#include "smi/rng.hpp"

namespace smi {

// Fully enumerable two-module model: phi and theta live on finite grids,
// observations on finite alphabets, so every belief update is an exact table
// and the coherence definitions can be checked to machine precision.
struct DiscreteTwoModuleModel {
    int n_phi = 2;
    int n_theta = 2;
    int n_y = 2;  // y-alphabet {0, ..., n_y - 1}
    int n_z = 2;  // z-alphabet {0, ..., n_z - 1}
    std::vector<double> log_pz;     // [n_phi][n_z]
    std::vector<double> log_py;     // [n_phi][n_theta][n_y]
    std::vector<double> log_prior;  // [n_phi][n_theta], normalized

    double lpz(int a, int v) const { return log_pz[a * n_z + v]; }
    double lpy(int a, int b, int w) const {
        return log_py[(a * n_theta + b) * n_y + w];
    }
    double lprior(int a, int b) const { return log_prior[a * n_theta + b]; }

    double lprior_phi(int a) const {
        std::vector<double> terms(n_theta);
        for (int b = 0; b < n_theta; ++b) terms[b] = lprior(a, b);
        return log_sum_exp(terms);
    }

    // log pi0(theta = b | phi = a)
    double lprior_cond(int a, int b) const { return lprior(a, b) - lprior_phi(a); }
};

struct Observation {
    bool is_y;
    int value;
};

using ObsBlock = std::vector<Observation>;

// An ordered partition of the observations into (possibly empty) blocks.
struct DataPartition {
    std::vector<ObsBlock> blocks;

    static DataPartition from_assignment(const ObsBlock& data,
                                         const std::vector<int>& assignment,
                                         int n_blocks) {
        DataPartition part;
        part.blocks.resize(n_blocks);
        for (std::size_t i = 0; i < data.size(); ++i)
            part.blocks[assignment[i]].push_back(data[i]);
        return part;
    }
};

// Probability table over (phi, theta_tilde, theta); families without an
// imputation copy use T == 1.
struct BeliefTable {
    int A = 0, T = 0, B = 0;
    std::vector<double> v;

    BeliefTable() = default;
    BeliefTable(int a, int t, int b) : A(a), T(t), B(b), v(a * t * b, 0.0) {}

    double& at(int a, int t, int b) { return v[(a * T + t) * B + b]; }
    double at(int a, int t, int b) const { return v[(a * T + t) * B + b]; }

    void normalize() {
        double s = 0.0;
        for (double x : v) s += x;
        for (double& x : v) x /= s;
    }

    // (phi, theta) marginal with the imputation copy summed out.
    BeliefTable phi_theta_marginal() const {
        BeliefTable out(A, 1, B);
        for (int a = 0; a < A; ++a)
            for (int t = 0; t < T; ++t)
                for (int b = 0; b < B; ++b) out.at(a, 0, b) += at(a, t, b);
        return out;
    }

    // Conditional q(theta = b | phi = a) as a log-table [A][B].
    std::vector<double> log_theta_conditional() const {
        std::vector<double> cond(A * B, 0.0);
        for (int a = 0; a < A; ++a) {
            double mass = 0.0;
            std::vector<double> by_b(B, 0.0);
            for (int t = 0; t < T; ++t)
                for (int b = 0; b < B; ++b) {
                    by_b[b] += at(a, t, b);
                    mass += at(a, t, b);
                }
            for (int b = 0; b < B; ++b) cond[a * B + b] = std::log(by_b[b] / mass);
        }
        return cond;
    }
};

inline double total_variation(const BeliefTable& p, const BeliefTable& q) {
    if (p.v.size() != q.v.size())
        throw data_error("total_variation: incompatible tables");
    double s = 0.0;
    for (std::size_t i = 0; i < p.v.size(); ++i) s += std::fabs(p.v[i] - q.v[i]);
    return 0.5 * s;
}

namespace lab {

// Loss table of the belief update identified by `setting`, over the full
// (phi, theta_tilde, theta) grid, evaluated on one data block.  `log_cond`
// is the log theta | phi conditional the prior-predictive term integrates
// against; at stage k of a prequential sum it comes from the current belief.
struct LossTable {
    int A = 0, T = 0, B = 0;
    std::vector<double> v;
    double& at(int a, int t, int b) { return v[(a * T + t) * B + b]; }
    double at(int a, int t, int b) const { return v[(a * T + t) * B + b]; }
};

inline double block_z_loglik(const DiscreteTwoModuleModel& m, const ObsBlock& block,
                             int a) {
    double s = 0.0;
    for (const Observation& o : block)
        if (!o.is_y) s += m.lpz(a, o.value);
    return s;
}

inline double block_y_loglik(const DiscreteTwoModuleModel& m, const ObsBlock& block,
                             int a, int b) {
    double s = 0.0;
    for (const Observation& o : block)
        if (o.is_y) s += m.lpy(a, b, o.value);
    return s;
}

// log p(Y_block | phi = a) = log sum_b q(b | a) p(Y_block | a, b), the joint
// prior predictive of the block's y-observations.
inline double block_y_marginal(const DiscreteTwoModuleModel& m, const ObsBlock& block,
                               int a, const std::vector<double>& log_cond) {
    std::vector<double> terms(m.n_theta);
    for (int b = 0; b < m.n_theta; ++b)
        terms[b] = log_cond[a * m.n_theta + b] + block_y_loglik(m, block, a, b);
    return log_sum_exp(terms);
}

// log p_delta(Y_block | a, b~): product over y-observations of the
// kernel-smoothed pmf, the window clipped to the alphabet.
inline double block_y_smoothed(const DiscreteTwoModuleModel& m, const ObsBlock& block,
                               int a, int t, const KernelSpec& kernel) {
    double s = 0.0;
    for (const Observation& o : block) {
        if (!o.is_y) continue;
        if (std::isinf(kernel.delta)) continue;  // constant factor, reported as 0
        const DiscreteWindow w =
            discrete_window(static_cast<double>(o.value), kernel.half_width(o.value));
        std::vector<double> terms;
        for (long long j = w.lo; j <= w.hi && j < m.n_y; ++j)
            terms.push_back(m.lpy(a, t, static_cast<int>(j)));
        s += log_sum_exp(terms) - std::log(w.size());
    }
    return s;
}

inline LossTable loss_table(const DiscreteTwoModuleModel& m,
                            const InfluenceSetting& setting, const ObsBlock& block,
                            const std::vector<double>& log_cond) {
    const bool tilde = setting.needs_theta_tilde();
    LossTable loss;
    loss.A = m.n_phi;
    loss.T = tilde ? m.n_theta : 1;
    loss.B = m.n_theta;
    loss.v.assign(loss.A * loss.T * loss.B, 0.0);
    for (int a = 0; a < loss.A; ++a) {
        const double lz = block_z_loglik(m, block, a);
        const double lmarg =
            setting.family() == InfluenceSetting::Family::Bayes
                ? 0.0
                : block_y_marginal(m, block, a, log_cond);
        for (int t = 0; t < loss.T; ++t) {
            double influence = 0.0;
            double marg_weight = 1.0;
            switch (setting.family()) {
                case InfluenceSetting::Family::Bayes:
                    marg_weight = 0.0;
                    break;
                case InfluenceSetting::Family::Cut:
                    break;
                case InfluenceSetting::Family::Gamma:
                    marg_weight = 1.0 - setting.value();
                    break;
                case InfluenceSetting::Family::Eta:
                    influence = -setting.value() * block_y_loglik(m, block, a, t);
                    break;
                case InfluenceSetting::Family::Delta:
                    influence = -block_y_smoothed(m, block, a, t, setting.kernel());
                    break;
            }
            for (int b = 0; b < loss.B; ++b)
                loss.at(a, t, b) = -lz - block_y_loglik(m, block, a, b) +
                                   marg_weight * lmarg + influence;
        }
    }
    return loss;
}

inline void accumulate(LossTable& into, const LossTable& other) {
    for (std::size_t i = 0; i < into.v.size(); ++i) into.v[i] += other.v[i];
}

inline double max_abs_diff(const LossTable& x, const LossTable& y) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.v.size(); ++i)
        d = std::max(d, std::fabs(x.v[i] - y.v[i]));
    return d;
}

// Prior belief table matching the loss-table shape: the augmented prior
// pi0(phi, theta~) pi0(theta | phi) when an imputation copy is present,
// pi0(phi, theta) otherwise.
inline BeliefTable prior_table(const DiscreteTwoModuleModel& m, bool tilde) {
    BeliefTable prior(m.n_phi, tilde ? m.n_theta : 1, m.n_theta);
    for (int a = 0; a < m.n_phi; ++a)
        for (int t = 0; t < prior.T; ++t)
            for (int b = 0; b < m.n_theta; ++b)
                prior.at(a, t, b) =
                    tilde ? std::exp(m.lprior(a, t) + m.lprior_cond(a, b))
                          : std::exp(m.lprior(a, b));
    return prior;
}

// Belief update q proportional to exp(-temper * loss) * prior; temper = 1 is
// the Gibbs update every SMI family is defined with, temper != 1 is the
// deliberately mismatched rule used in the counterexamples.
inline BeliefTable apply_update(const LossTable& loss, const BeliefTable& prior,
                                double temper = 1.0) {
    BeliefTable post(loss.A, loss.T, loss.B);
    std::vector<double> lw(post.v.size());
    for (std::size_t i = 0; i < post.v.size(); ++i)
        lw[i] = std::log(prior.v[i]) - temper * loss.v[i];
    const double norm = log_sum_exp(lw);
    for (std::size_t i = 0; i < post.v.size(); ++i) post.v[i] = std::exp(lw[i] - norm);
    return post;
}

}  // namespace lab

// Exact posterior table of the given belief update: Gibbs update of the loss
// with the (augmented) prior.
inline BeliefTable enumerate_posterior(const DiscreteTwoModuleModel& m,
                                       const InfluenceSetting& setting,
                                       const ObsBlock& data) {
    std::vector<double> cond(m.n_phi * m.n_theta);
    for (int a = 0; a < m.n_phi; ++a)
        for (int b = 0; b < m.n_theta; ++b)
            cond[a * m.n_theta + b] = m.lprior_cond(a, b);
    const lab::LossTable loss = lab::loss_table(m, setting, data, cond);
    return lab::apply_update(loss, lab::prior_table(m, setting.needs_theta_tilde()));
}

// The same posterior built from the product-form factorizations
// (imputation stage times conditional analysis stage); independent oracle
// for enumerate_posterior.
inline BeliefTable direct_posterior(const DiscreteTwoModuleModel& m,
                                    const InfluenceSetting& setting,
                                    const ObsBlock& data) {
    using Family = InfluenceSetting::Family;
    const bool tilde = setting.needs_theta_tilde();
    BeliefTable post(m.n_phi, tilde ? m.n_theta : 1, m.n_theta);

    // Analysis stage: pi(theta | Y, phi).
    std::vector<double> analysis(m.n_phi * m.n_theta);
    for (int a = 0; a < m.n_phi; ++a) {
        std::vector<double> lw(m.n_theta);
        for (int b = 0; b < m.n_theta; ++b)
            lw[b] = m.lprior_cond(a, b) + lab::block_y_loglik(m, data, a, b);
        const double norm = log_sum_exp(lw);
        for (int b = 0; b < m.n_theta; ++b)
            analysis[a * m.n_theta + b] = std::exp(lw[b] - norm);
    }

    for (int a = 0; a < m.n_phi; ++a) {
        const double lz = lab::block_z_loglik(m, data, a);
        for (int t = 0; t < post.T; ++t) {
            double lw = neg_inf;
            switch (setting.family()) {
                case Family::Bayes:
                    // handled through the joint formula below
                    break;
                case Family::Cut:
                    lw = m.lprior_phi(a) + lz;
                    break;
                case Family::Gamma: {
                    std::vector<double> cond(m.n_phi * m.n_theta);
                    for (int aa = 0; aa < m.n_phi; ++aa)
                        for (int b = 0; b < m.n_theta; ++b)
                            cond[aa * m.n_theta + b] = m.lprior_cond(aa, b);
                    lw = m.lprior_phi(a) + lz +
                         setting.value() * lab::block_y_marginal(m, data, a, cond);
                    break;
                }
                case Family::Eta:
                    lw = m.lprior(a, t) + lz +
                         setting.value() * lab::block_y_loglik(m, data, a, t);
                    break;
                case Family::Delta:
                    lw = m.lprior(a, t) + lz +
                         lab::block_y_smoothed(m, data, a, t, setting.kernel());
                    break;
            }
            for (int b = 0; b < m.n_theta; ++b) {
                if (setting.family() == Family::Bayes) {
                    post.at(a, t, b) = std::exp(m.lprior(a, b) + lz +
                                                lab::block_y_loglik(m, data, a, b));
                } else {
                    post.at(a, t, b) =
                        std::exp(lw) * analysis[a * m.n_theta + b];
                }
            }
        }
    }
    post.normalize();
    return post;
}

struct CoherenceCheckResult {
    double max_deviation = 0.0;
    std::vector<int> worst_assignment;
    int worst_n_blocks = 0;
};

// Plain additivity (fixed prior in every term): max over ordered partitions
// into up to max_blocks blocks, and over the parameter grid, of
// | l(D; pi0) - sum_k l(D_k; pi0) |.
inline CoherenceCheckResult check_additivity(const DiscreteTwoModuleModel& m,
                                             const InfluenceSetting& setting,
                                             const ObsBlock& data, int max_blocks) {
    const std::size_t n = data.size();
    if (n > 6) throw data_error("check_additivity: more than 6 observations");
    std::vector<double> cond(m.n_phi * m.n_theta);
    for (int a = 0; a < m.n_phi; ++a)
        for (int b = 0; b < m.n_theta; ++b)
            cond[a * m.n_theta + b] = m.lprior_cond(a, b);
    const lab::LossTable total = lab::loss_table(m, setting, data, cond);

    CoherenceCheckResult result;
    for (int K = 2; K <= max_blocks; ++K) {
        std::vector<int> assign(n, 0);
        const std::size_t count = static_cast<std::size_t>(std::pow(K, n));
        for (std::size_t code = 0; code < count; ++code) {
            std::size_t c = code;
            for (std::size_t i = 0; i < n; ++i) {
                assign[i] = static_cast<int>(c % K);
                c /= K;
            }
            const DataPartition part = DataPartition::from_assignment(data, assign, K);
            lab::LossTable sum;
            bool first = true;
            for (const ObsBlock& block : part.blocks) {
                const lab::LossTable lt = lab::loss_table(m, setting, block, cond);
                if (first) {
                    sum = lt;
                    first = false;
                } else {
                    lab::accumulate(sum, lt);
                }
            }
            const double dev = lab::max_abs_diff(sum, total);
            if (dev > result.max_deviation) {
                result.max_deviation = dev;
                result.worst_assignment = assign;
                result.worst_n_blocks = K;
            }
        }
    }
    return result;
}

// Prequential additivity (Def. of stagewise losses): block k is scored
// against the belief q~_{k-1} produced by updating the prior with the first
// k-1 blocks.  `update_temper` selects the belief-update rule used to form
// q~; 1 is the matched Gibbs rule, anything else deliberately mismatches the
// pairing.
inline double prequential_deviation(const DiscreteTwoModuleModel& m,
                                    const InfluenceSetting& setting,
                                    const DataPartition& part,
                                    double update_temper = 1.0,
                                    const InfluenceSetting* update_setting = nullptr) {
    std::vector<double> prior_cond(m.n_phi * m.n_theta);
    for (int a = 0; a < m.n_phi; ++a)
        for (int b = 0; b < m.n_theta; ++b)
            prior_cond[a * m.n_theta + b] = m.lprior_cond(a, b);

    ObsBlock all;
    for (const ObsBlock& block : part.blocks)
        all.insert(all.end(), block.begin(), block.end());
    const lab::LossTable total = lab::loss_table(m, setting, all, prior_cond);

    const InfluenceSetting& upd = update_setting ? *update_setting : setting;
    const BeliefTable prior = lab::prior_table(m, upd.needs_theta_tilde());
    std::vector<double> cond = prior_cond;
    ObsBlock seen;
    lab::LossTable sum;
    bool first = true;
    for (const ObsBlock& block : part.blocks) {
        const lab::LossTable lt = lab::loss_table(m, setting, block, cond);
        if (first) {
            sum = lt;
            first = false;
        } else {
            lab::accumulate(sum, lt);
        }
        seen.insert(seen.end(), block.begin(), block.end());
        // q~_k from the one-shot update on everything seen so far.
        const lab::LossTable seen_loss = lab::loss_table(m, upd, seen, prior_cond);
        cond = lab::apply_update(seen_loss, prior, update_temper).log_theta_conditional();
    }
    return lab::max_abs_diff(sum, total);
}

inline CoherenceCheckResult check_prequential_additivity(
    const DiscreteTwoModuleModel& m, const InfluenceSetting& setting,
    const ObsBlock& data, int max_blocks, double update_temper = 1.0,
    const InfluenceSetting* update_setting = nullptr) {
    const std::size_t n = data.size();
    if (n > 6) throw data_error("check_prequential_additivity: more than 6 observations");
    CoherenceCheckResult result;
    std::vector<int> assign(n, 0);
    for (int K = 2; K <= max_blocks; ++K) {
        const std::size_t count = static_cast<std::size_t>(std::pow(K, n));
        for (std::size_t code = 0; code < count; ++code) {
            std::size_t c = code;
            for (std::size_t i = 0; i < n; ++i) {
                assign[i] = static_cast<int>(c % K);
                c /= K;
            }
            const double dev = prequential_deviation(
                m, setting, DataPartition::from_assignment(data, assign, K),
                update_temper, update_setting);
            if (dev > result.max_deviation) {
                result.max_deviation = dev;
                result.worst_assignment = assign;
                result.worst_n_blocks = K;
            }
        }
    }
    return result;
}

// Order coherence: total-variation distance between the one-shot update on
// all data and the two-stage update (first block, then second block against
// the intermediate belief).  Stage tempering (t1, t2) != (1, 1) mismatches
// the rule on purpose.
inline double order_coherence_tv(const DiscreteTwoModuleModel& m,
                                 const InfluenceSetting& setting,
                                 const ObsBlock& first, const ObsBlock& second,
                                 double temper1 = 1.0, double temper2 = 1.0) {
    std::vector<double> prior_cond(m.n_phi * m.n_theta);
    for (int a = 0; a < m.n_phi; ++a)
        for (int b = 0; b < m.n_theta; ++b)
            prior_cond[a * m.n_theta + b] = m.lprior_cond(a, b);
    const BeliefTable prior = lab::prior_table(m, setting.needs_theta_tilde());

    ObsBlock all = first;
    all.insert(all.end(), second.begin(), second.end());
    const BeliefTable one_shot =
        lab::apply_update(lab::loss_table(m, setting, all, prior_cond), prior, temper2);

    const BeliefTable stage1 = lab::apply_update(
        lab::loss_table(m, setting, first, prior_cond), prior, temper1);
    const std::vector<double> cond1 = stage1.log_theta_conditional();
    const BeliefTable stage2 =
        lab::apply_update(lab::loss_table(m, setting, second, cond1), stage1, temper2);

    return total_variation(one_shot, stage2);
}

inline CoherenceCheckResult check_order_coherence(const DiscreteTwoModuleModel& m,
                                                  const InfluenceSetting& setting,
                                                  const ObsBlock& data,
                                                  double temper1 = 1.0,
                                                  double temper2 = 1.0) {
    const std::size_t n = data.size();
    if (n > 6) throw data_error("check_order_coherence: more than 6 observations");
    CoherenceCheckResult result;
    const std::size_t count = std::size_t{1} << n;
    for (std::size_t code = 0; code < count; ++code) {
        ObsBlock first, second;
        std::vector<int> assign(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (code & (std::size_t{1} << i)) {
                assign[i] = 0;
                first.push_back(data[i]);
            } else {
                assign[i] = 1;
                second.push_back(data[i]);
            }
        }
        const double tv = order_coherence_tv(m, setting, first, second, temper1, temper2);
        if (tv > result.max_deviation) {
            result.max_deviation = tv;
            result.worst_assignment = assign;
            result.worst_n_blocks = 2;
        }
    }
    return result;
}

// Generic strictly positive random model; entries bounded away from zero so
// log-tables stay finite and deviations are never masked by -inf.
inline DiscreteTwoModuleModel random_discrete_model(Rng& rng) {
    DiscreteTwoModuleModel m;
    m.n_phi = static_cast<int>(rng.uniform_int(2, 4));
    m.n_theta = static_cast<int>(rng.uniform_int(2, 4));
    m.n_y = static_cast<int>(rng.uniform_int(2, 4));
    m.n_z = static_cast<int>(rng.uniform_int(2, 4));
    auto fill = [&](std::vector<double>& table, int rows, int cols) {
        table.resize(rows * cols);
        for (int r = 0; r < rows; ++r) {
            double s = 0.0;
            for (int c = 0; c < cols; ++c) {
                const double w = rng.uniform(0.2, 1.0);
                table[r * cols + c] = w;
                s += w;
            }
            for (int c = 0; c < cols; ++c)
                table[r * cols + c] = std::log(table[r * cols + c] / s);
        }
    };
    fill(m.log_pz, m.n_phi, m.n_z);
    fill(m.log_py, m.n_phi * m.n_theta, m.n_y);
    fill(m.log_prior, 1, m.n_phi * m.n_theta);
    return m;
}

inline ObsBlock random_dataset(const DiscreteTwoModuleModel& m, Rng& rng, int n_y_obs,
                               int n_z_obs) {
    ObsBlock data;
    for (int i = 0; i < n_y_obs; ++i)
        data.push_back({true, static_cast<int>(rng.uniform_int(0, m.n_y - 1))});
    for (int j = 0; j < n_z_obs; ++j)
        data.push_back({false, static_cast<int>(rng.uniform_int(0, m.n_z - 1))});
    return data;
}

}  // namespace smi
