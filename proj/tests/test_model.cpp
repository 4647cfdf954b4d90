#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "smi/closed_form.hpp"
#include "smi/coherence.hpp"
#include "smi/errors.hpp"
#include "smi/model.hpp"
#include "smi/rng.hpp"

using namespace smi;

namespace {

// Fully enumerable discrete model with an independent prior, so a fixed-weight
// enumeration marginal is exact.
DiscreteTwoModuleModel small_discrete_model() {
    DiscreteTwoModuleModel m;
    m.n_phi = 3;
    m.n_theta = 3;
    m.n_y = 4;
    m.n_z = 3;
    m.log_pz = {std::log(0.5), std::log(0.3), std::log(0.2),
                std::log(0.2), std::log(0.5), std::log(0.3),
                std::log(0.3), std::log(0.2), std::log(0.5)};
    const std::vector<std::vector<double>> py = {
        {0.4, 0.3, 0.2, 0.1}, {0.1, 0.4, 0.3, 0.2}, {0.2, 0.1, 0.4, 0.3},
        {0.3, 0.2, 0.1, 0.4}, {0.25, 0.25, 0.25, 0.25}, {0.1, 0.2, 0.3, 0.4},
        {0.4, 0.1, 0.3, 0.2}, {0.2, 0.4, 0.1, 0.3}, {0.3, 0.3, 0.2, 0.2}};
    for (const auto& row : py)
        for (double p : row) m.log_py.push_back(std::log(p));
    const std::vector<double> pphi = {0.5, 0.3, 0.2};
    const std::vector<double> ptheta = {0.2, 0.5, 0.3};
    for (double pa : pphi)
        for (double pt : ptheta) m.log_prior.push_back(std::log(pa * pt));
    return m;
}

// TwoModuleModel view of the same discrete model: parameters are grid indices
// carried as doubles.
TwoModuleModel wrap_discrete(const DiscreteTwoModuleModel& dm) {
    TwoModuleModel m;
    m.dims = {1, 1, 1, 1};
    auto idx = [](double v) { return static_cast<int>(std::lround(v)); };
    m.z_loglik = [&dm, idx](ConstSpan phi, ConstSpan z) {
        double s = 0.0;
        for (double v : z) s += dm.lpz(idx(phi[0]), idx(v));
        return s;
    };
    m.y_loglik = [&dm, idx](ConstSpan phi, ConstSpan theta, ConstSpan y) {
        double s = 0.0;
        for (double v : y) s += dm.lpy(idx(phi[0]), idx(theta[0]), idx(v));
        return s;
    };
    m.y_loglik_pointwise = [&dm, idx](ConstSpan phi, ConstSpan theta, std::size_t,
                                      double y_i) {
        const int w = idx(y_i);
        if (w < 0 || w >= dm.n_y) return neg_inf;
        return dm.lpy(idx(phi[0]), idx(theta[0]), w);
    };
    m.z_loglik_pointwise = [&dm, idx](ConstSpan phi, std::size_t, double z_j) {
        return dm.lpz(idx(phi[0]), idx(z_j));
    };
    m.log_prior_phi = [&dm, idx](ConstSpan phi) { return dm.lprior_phi(idx(phi[0])); };
    m.log_prior_theta_given_phi = [&dm, idx](ConstSpan theta, ConstSpan phi) {
        return dm.lprior_cond(idx(phi[0]), idx(theta[0]));
    };
    return m;
}

Evaluators discrete_evaluators(const DiscreteTwoModuleModel& dm,
                               const TwoModuleModel& m) {
    std::vector<Vector> atoms;
    std::vector<double> log_w;
    for (int b = 0; b < dm.n_theta; ++b) {
        atoms.push_back({static_cast<double>(b)});
        log_w.push_back(dm.lprior_cond(0, b));  // independent prior: same for all phi
    }
    Evaluators evals = make_generic_evaluators(m);
    evals.marginal_y_loglik = make_enumeration_marginal(m, atoms, log_w);
    return evals;
}

}  // namespace

TEST_CASE("bayes loss on the biased-data gaussian model") {
    BiasedDataConfig cfg;  // sd_y = 1
    cfg.sd_z = 2.0;
    const TwoModuleModel model = make_biased_data_model(cfg);
    const Vector phi{0.0}, theta{0.0}, y{0.0}, z{0.0};
    // -log N(0;0,1) - log N(0;0,4) = 0.5 log(2 pi) + 0.5 log(8 pi).
    CHECK(bayes_loss(model, phi, theta, y, z) ==
          Catch::Approx(2.531024246969290793).epsilon(1e-14));

    const Vector none{};
    CHECK(bayes_loss(model, phi, theta, none, none) == 0.0);
}

TEST_CASE("bayes loss is additive over dataset splits") {
    const BiasedDataConfig cfg;
    const TwoModuleModel model = make_biased_data_model(cfg);
    Rng rng(42, 1);
    Vector y, z;
    for (int i = 0; i < 8; ++i) y.push_back(rng.normal(1.0, 1.0));
    for (int j = 0; j < 6; ++j) z.push_back(rng.normal(0.0, 2.0));
    const Vector phi{0.2}, theta{0.7};

    const double whole = bayes_loss(model, phi, theta, y, z);
    for (std::size_t cut_y : {0u, 3u, 8u}) {
        for (std::size_t cut_z : {0u, 2u, 6u}) {
            const Vector y1(y.begin(), y.begin() + cut_y), y2(y.begin() + cut_y, y.end());
            const Vector z1(z.begin(), z.begin() + cut_z), z2(z.begin() + cut_z, z.end());
            const double parts = bayes_loss(model, phi, theta, y1, z1) +
                                 bayes_loss(model, phi, theta, y2, z2);
            CHECK(whole == Catch::Approx(parts).epsilon(1e-13));
        }
    }
}

TEST_CASE("cut loss equals bayes loss plus the enumerated marginal") {
    const DiscreteTwoModuleModel dm = small_discrete_model();
    const TwoModuleModel model = wrap_discrete(dm);
    const Evaluators evals = discrete_evaluators(dm, model);

    const Vector y{1.0, 2.0}, z{0.0, 2.0};
    for (int a = 0; a < dm.n_phi; ++a) {
        for (int b = 0; b < dm.n_theta; ++b) {
            const Vector phi{static_cast<double>(a)}, theta{static_cast<double>(b)};
            // Hand-computed joint marginal p(Y | phi) over the theta atoms.
            double marg = 0.0;
            for (int t = 0; t < dm.n_theta; ++t)
                marg += std::exp(dm.lprior_cond(a, t) + dm.lpy(a, t, 1) + dm.lpy(a, t, 2));
            const double expect =
                bayes_loss(model, phi, theta, y, z) + std::log(marg);
            CHECK(cut_loss(model, evals, phi, theta, y, z) ==
                  Catch::Approx(expect).epsilon(1e-13));
        }
    }
}

TEST_CASE("cut loss on an empty y-set reduces to the bayes loss") {
    const DiscreteTwoModuleModel dm = small_discrete_model();
    const TwoModuleModel model = wrap_discrete(dm);
    const Evaluators evals = discrete_evaluators(dm, model);
    const Vector phi{1.0}, theta{2.0}, y{}, z{1.0};
    CHECK(cut_loss(model, evals, phi, theta, y, z) ==
          Catch::Approx(bayes_loss(model, phi, theta, y, z)).margin(1e-14));
}

TEST_CASE("missing evaluators raise typed errors") {
    const DiscreteTwoModuleModel dm = small_discrete_model();
    const TwoModuleModel model = wrap_discrete(dm);
    const Evaluators none{};
    const Vector phi{0.0}, theta{0.0}, tt{0.0}, y{1.0}, z{0.0};

    CHECK_THROWS_AS(cut_loss(model, none, phi, theta, y, z), marginal_unavailable);
    CHECK_THROWS_AS(
        smi_losses(model, InfluenceSetting::eta(0.5), none, phi, tt, theta, y, z),
        marginal_unavailable);

    Evaluators marg_only = discrete_evaluators(dm, model);
    marg_only.smoothed_y_loglik = nullptr;
    CHECK_THROWS_AS(
        smi_losses(model, InfluenceSetting::delta(KernelSpec::discrete_uniform(1.0)),
                   marg_only, phi, tt, theta, y, z),
        marginal_unavailable);

    CHECK_THROWS_AS(InfluenceSetting::bayes().kernel(), std::invalid_argument);
}

TEST_CASE("influence settings canonicalize their endpoints") {
    using Family = InfluenceSetting::Family;
    CHECK(InfluenceSetting::eta(1.0).family() == Family::Bayes);
    CHECK(InfluenceSetting::eta(0.0).family() == Family::Cut);
    CHECK(InfluenceSetting::gamma(1.0).family() == Family::Bayes);
    CHECK(InfluenceSetting::gamma(0.0).family() == Family::Cut);
    CHECK(InfluenceSetting::delta(0.0, KernelSpec::Kind::Gaussian).family() ==
          Family::Bayes);
    CHECK(InfluenceSetting::eta(0.5).family() == Family::Eta);
    CHECK(InfluenceSetting::gamma(0.5).family() == Family::Gamma);

    CHECK(InfluenceSetting::bayes().value() == 1.0);
    CHECK(InfluenceSetting::cut().value() == 0.0);
    CHECK(InfluenceSetting::eta(0.37).value() == 0.37);

    CHECK(InfluenceSetting::eta(0.5).needs_theta_tilde());
    CHECK(InfluenceSetting::delta(1.0, KernelSpec::Kind::DiscreteUniform)
              .needs_theta_tilde());
    CHECK_FALSE(InfluenceSetting::gamma(0.5).needs_theta_tilde());
    CHECK_FALSE(InfluenceSetting::cut().needs_theta_tilde());
    CHECK_FALSE(InfluenceSetting::bayes().needs_theta_tilde());

    CHECK_THROWS_AS(InfluenceSetting::eta(1.2), std::invalid_argument);
    CHECK_THROWS_AS(InfluenceSetting::eta(-0.1), std::invalid_argument);
    CHECK_THROWS_AS(InfluenceSetting::gamma(1.0001), std::invalid_argument);
}

TEST_CASE("loss breakdown terms follow the family definitions") {
    const DiscreteTwoModuleModel dm = small_discrete_model();
    const TwoModuleModel model = wrap_discrete(dm);
    const Evaluators evals = discrete_evaluators(dm, model);
    const Vector phi{1.0}, tt{2.0}, theta{0.0}, y{1.0, 3.0}, z{2.0};

    const double base = bayes_loss(model, phi, theta, y, z);
    const double marg = evals.marginal_y_loglik(phi, y);

    const auto lb_bayes =
        smi_losses(model, InfluenceSetting::bayes(), evals, phi, tt, theta, y, z);
    CHECK(lb_bayes.total == Catch::Approx(base).margin(1e-14));
    CHECK(lb_bayes.marginal_term == 0.0);
    CHECK(lb_bayes.influence_term == 0.0);

    const auto lb_cut =
        smi_losses(model, InfluenceSetting::cut(), evals, phi, tt, theta, y, z);
    CHECK(lb_cut.total ==
          Catch::Approx(cut_loss(model, evals, phi, theta, y, z)).margin(1e-14));
    CHECK(lb_cut.marginal_term == Catch::Approx(marg).margin(1e-14));

    const auto lb_gamma =
        smi_losses(model, InfluenceSetting::gamma(0.3), evals, phi, tt, theta, y, z);
    CHECK(lb_gamma.marginal_term == Catch::Approx(0.7 * marg).epsilon(1e-14));
    CHECK(lb_gamma.influence_term == 0.0);
    CHECK(lb_gamma.total ==
          Catch::Approx(lb_gamma.base + lb_gamma.marginal_term).epsilon(1e-14));

    const auto lb_eta =
        smi_losses(model, InfluenceSetting::eta(0.6), evals, phi, tt, theta, y, z);
    CHECK(lb_eta.influence_term ==
          Catch::Approx(-0.6 * model.y_loglik(phi, tt, y)).epsilon(1e-14));
    CHECK(lb_eta.marginal_term == Catch::Approx(marg).margin(1e-14));
    CHECK(lb_eta.total ==
          Catch::Approx(base + marg - 0.6 * model.y_loglik(phi, tt, y)).epsilon(1e-13));

    // A sub-unit discrete bandwidth leaves the pmf untouched, so the delta
    // influence term is exactly the eta = 1 shape.
    const auto lb_delta = smi_losses(
        model, InfluenceSetting::delta(KernelSpec::discrete_uniform(0.4)), evals, phi,
        tt, theta, y, z);
    CHECK(lb_delta.influence_term ==
          Catch::Approx(-model.y_loglik(phi, tt, y)).epsilon(1e-13));

    // The eta loss at eta != 1 differs from it by (1 - eta) log p(Y|phi,tt).
    CHECK(lb_delta.total - lb_eta.total ==
          Catch::Approx(-0.4 * model.y_loglik(phi, tt, y)).epsilon(1e-12));
}

TEST_CASE("gibbs update of the smi loss reproduces the exact posterior table") {
    const DiscreteTwoModuleModel dm = small_discrete_model();
    const TwoModuleModel model = wrap_discrete(dm);
    const Evaluators evals = discrete_evaluators(dm, model);

    const Vector y{1.0, 3.0}, z{0.0, 2.0};
    ObsBlock data;
    for (double v : y) data.push_back({true, static_cast<int>(v)});
    for (double v : z) data.push_back({false, static_cast<int>(v)});

    const std::vector<InfluenceSetting> settings = {
        InfluenceSetting::bayes(),
        InfluenceSetting::cut(),
        InfluenceSetting::gamma(0.3),
        InfluenceSetting::eta(0.6),
        InfluenceSetting::delta(KernelSpec::discrete_uniform(1.0)),
        InfluenceSetting::delta(KernelSpec::scaled_top_hat(0.8))};

    for (const auto& setting : settings) {
        const bool tilde = setting.needs_theta_tilde();
        BeliefTable table(dm.n_phi, tilde ? dm.n_theta : 1, dm.n_theta);
        for (int a = 0; a < dm.n_phi; ++a) {
            const Vector phi{static_cast<double>(a)};
            for (int t = 0; t < (tilde ? dm.n_theta : 1); ++t) {
                const Vector tt{static_cast<double>(t)};
                for (int b = 0; b < dm.n_theta; ++b) {
                    const Vector theta{static_cast<double>(b)};
                    const double loss =
                        smi_losses(model, setting, evals, phi, tt, theta, y, z).total;
                    const double lprior =
                        tilde ? log_augmented_prior(model, phi, tt, theta)
                              : model.log_prior(phi, theta);
                    table.at(a, t, b) = std::exp(lprior - loss);
                }
            }
        }
        table.normalize();

        const BeliefTable expect = enumerate_posterior(dm, setting, data);
        INFO(setting.label());
        CHECK(total_variation(table, expect) < 1e-12);
    }
}

TEST_CASE("quadrature marginal matches the closed-form gaussian marginal") {
    const BiasedDataConfig cfg;
    const TwoModuleModel model = make_biased_data_model(cfg);
    const Evaluators closed = make_biased_data_evaluators(cfg);
    const auto quad = make_quadrature_marginal(model, -6.0, 6.0, 1e-12);

    Rng rng(7, 3);
    for (double phi_v : {-0.4, 0.0, 0.8}) {
        Vector y;
        for (int i = 0; i < 5; ++i) y.push_back(rng.normal(phi_v + 1.0, 1.0));
        const Vector phi{phi_v};
        CHECK(quad(phi, y) ==
              Catch::Approx(closed.marginal_y_loglik(phi, y)).epsilon(1e-8));
    }
}

TEST_CASE("quadrature marginal refuses unusable priors") {
    const RegressionConfig rcfg;
    Rng rng(3, 1);
    const RegressionData d = simulate_regression_data(rcfg, rng);
    const TwoModuleModel reg = make_regression_model(rcfg, d.x);
    CHECK(reg.improper_theta_prior);
    CHECK_THROWS_AS(make_quadrature_marginal(reg, -1.0, 1.0), marginal_unavailable);

    TwoModuleModel multi = make_biased_data_model(BiasedDataConfig{});
    multi.dims.theta_dim = 2;
    CHECK_THROWS_AS(make_quadrature_marginal(multi, -1.0, 1.0), marginal_unavailable);
}

TEST_CASE("simulation closures are deterministic under a fixed seed") {
    const BiasedDataConfig cfg;
    const TwoModuleModel model = make_biased_data_model(cfg);
    const Vector phi{0.3}, theta{1.1};

    Rng r1(123, 9), r2(123, 9);
    const Vector y1 = model.simulate_y(phi, theta, r1);
    const Vector y2 = model.simulate_y(phi, theta, r2);
    REQUIRE(y1.size() == static_cast<std::size_t>(cfg.n));
    CHECK(y1 == y2);

    const Vector z1 = model.simulate_z(phi, r1);
    REQUIRE(z1.size() == static_cast<std::size_t>(cfg.m));

    Rng r3(124, 9);
    CHECK(model.simulate_y(phi, theta, r3) != y1);
}
