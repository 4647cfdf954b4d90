#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <utility>
#include <vector>

#include "smi/closed_form.hpp"
#include "smi/math.hpp"
#include "smi/rng.hpp"
#include "smi/stats.hpp"

using namespace smi;

TEST_CASE("biased-data phi posterior at delta = 0 has the hand-derived weight") {
    BiasedDataConfig cfg;  // n=50, m=25, sd_theta=0.33, sd_y=1
    cfg.sd_z = 2.0;
    // lambda = (m/sd_z^2) / (m/sd_z^2 + n/(sd_y^2 + n sd_theta^2))
    //        = 6.25 / (6.25 + 50/(1 + 50*0.1089)).
    const auto post = biased_phi_posterior(cfg, 1.0, 0.0, 0.0);
    const double lambda = 0.44617514710972654898;
    CHECK(post.mean == Catch::Approx(1.0 - lambda).epsilon(1e-14));
    CHECK(post.var == Catch::Approx(lambda * 4.0 / 25.0).epsilon(1e-14));

    // The y-precision term itself: 50 / (1 + 50 * 0.33^2).
    const double wy = 50.0 / (1.0 + 50.0 * 0.33 * 0.33);
    CHECK(wy == Catch::Approx(7.7579519006982156711).epsilon(1e-15));
}

TEST_CASE("biased-data posterior endpoints are exact") {
    const BiasedDataConfig cfg;
    const double ybar = 0.93, zbar = -0.11;

    const auto cut = biased_phi_posterior(cfg, ybar, zbar, pos_inf);
    CHECK(cut.mean == zbar);
    CHECK(cut.var == cfg.sd_z * cfg.sd_z / cfg.m);

    const auto cut_eta = biased_phi_posterior_eta(cfg, ybar, zbar, 0.0);
    CHECK(cut_eta.mean == cut.mean);
    CHECK(cut_eta.var == cut.var);

    const auto bayes = biased_phi_posterior(cfg, ybar, zbar, 0.0);
    const auto bayes_eta = biased_phi_posterior_eta(cfg, ybar, zbar, 1.0);
    CHECK(bayes.mean == bayes_eta.mean);
    CHECK(bayes.var == bayes_eta.var);

    CHECK_THROWS_AS(biased_phi_posterior(cfg, ybar, zbar, -0.5), std::invalid_argument);
    CHECK_THROWS_AS(biased_phi_posterior_eta(cfg, ybar, zbar, 1.5), std::invalid_argument);
}

TEST_CASE("eta and delta parameterizations produce the same posterior") {
    const BiasedDataConfig cfg;
    CHECK(eta_delta_equivalence(1.0, 0.0) == 1.0);
    CHECK(eta_delta_equivalence(1.0, 3.5) ==
          Catch::Approx(0.07547169811320754717).epsilon(1e-15));

    for (double delta : {0.3, 1.0, 5.0, 40.0}) {
        const double eta = eta_delta_equivalence(cfg.sd_y, delta);
        const auto pd = biased_phi_posterior(cfg, 0.7, -0.2, delta);
        const auto pe = biased_phi_posterior_eta(cfg, 0.7, -0.2, eta);
        CHECK(pd.mean == Catch::Approx(pe.mean).epsilon(1e-12));
        CHECK(pd.var == Catch::Approx(pe.var).epsilon(1e-12));
        CHECK(delta_from_eta(cfg.sd_y, eta) == Catch::Approx(delta).epsilon(1e-12));
    }
    CHECK_THROWS_AS(delta_from_eta(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("biased-data phi posterior agrees with grid integration") {
    const BiasedDataConfig cfg;
    Rng rng(314, 2);
    const BiasedData d = simulate_biased_data(cfg, rng);

    for (double delta : {0.0, 1.0, 4.0}) {
        const auto closed = biased_phi_posterior(cfg, d.ybar, d.zbar, delta);

        // Independent path: the smoothed y-module is the same exchangeable
        // normal with per-observation variance sd_y^2 + delta^2; integrate the
        // resulting log-posterior for phi on a fine grid.
        BiasedDataConfig smoothed = cfg;
        smoothed.sd_y = std::sqrt(cfg.sd_y * cfg.sd_y + delta * delta);
        const Evaluators evals = make_biased_data_evaluators(smoothed);
        const double vz = cfg.sd_z * cfg.sd_z;

        const auto gm = grid_moments(
            [&](double phi) {
                double s = evals.marginal_y_loglik(std::vector<double>{phi}, d.y);
                for (double zj : d.z) s += log_normal_pdf(zj, phi, vz);
                return s;
            },
            closed.mean - 10.0 * closed.sd(), closed.mean + 10.0 * closed.sd(), 3001);
        CHECK(gm.mean == Catch::Approx(closed.mean).margin(1e-8));
        CHECK(gm.var == Catch::Approx(closed.var).epsilon(1e-6));
    }
}

TEST_CASE("analysis conditional matches grid integration and its limits") {
    const BiasedDataConfig cfg;
    Rng rng(99, 5);
    const BiasedData d = simulate_biased_data(cfg, rng);
    const double phi = 0.23;
    const auto cond = biased_theta_given_phi(cfg, d.ybar, phi);

    const double vt = cfg.sd_theta * cfg.sd_theta;
    const double vy = cfg.sd_y * cfg.sd_y;
    const auto gm = grid_moments(
        [&](double th) {
            double s = log_normal_pdf(th, 0.0, vt);
            for (double yi : d.y) s += log_normal_pdf(yi, phi + th, vy);
            return s;
        },
        cond.mean - 10.0 * cond.sd(), cond.mean + 10.0 * cond.sd(), 3001);
    CHECK(gm.mean == Catch::Approx(cond.mean).margin(1e-8));
    CHECK(gm.var == Catch::Approx(cond.var).epsilon(1e-6));

    // sd_theta -> 0: the conditional collapses onto the prior at zero.
    BiasedDataConfig tight = cfg;
    tight.sd_theta = 1e-8;
    const auto c0 = biased_theta_given_phi(tight, d.ybar, phi);
    CHECK(std::fabs(c0.mean) < 1e-12);
    CHECK(c0.var == Catch::Approx(1e-16).epsilon(1e-3));

    // n -> infinity: rho -> 1 and the conditional concentrates at ybar - phi.
    BiasedDataConfig big = cfg;
    big.n = 100000000;
    const auto c1 = biased_theta_given_phi(big, d.ybar, phi);
    CHECK(c1.mean == Catch::Approx(d.ybar - phi).margin(1e-6));
    CHECK(c1.var < 1e-7);
}

TEST_CASE("theta marginal composes the conditional with the phi posterior") {
    const BiasedDataConfig cfg;
    const double ybar = 0.87, zbar = 0.05;
    for (double delta : {0.0, 2.0, pos_inf}) {
        const auto phi_post = biased_phi_posterior(cfg, ybar, zbar, delta);
        const auto tm = biased_theta_marginal(cfg, ybar, zbar, delta);
        const double vt = cfg.sd_theta * cfg.sd_theta;
        const double rho = vt / (vt + cfg.sd_y * cfg.sd_y / cfg.n);
        CHECK(tm.mean == Catch::Approx(rho * (ybar - phi_post.mean)).epsilon(1e-14));
        CHECK(tm.var ==
              Catch::Approx(rho * rho * phi_post.var + (1.0 - rho) * vt).epsilon(1e-14));
    }
}

TEST_CASE("exact biased-data elpd agrees with monte carlo integration") {
    const BiasedDataConfig cfg;
    Rng rng(2718, 4);
    const BiasedData d = simulate_biased_data(cfg, rng);

    for (double delta : {0.0, 1.5, pos_inf}) {
        const double exact = exact_elpd_biased(cfg, d.ybar, d.zbar, delta);

        // Predictive moments recomputed from the posterior pieces.
        const auto phi_post = biased_phi_posterior(cfg, d.ybar, d.zbar, delta);
        const double vt = cfg.sd_theta * cfg.sd_theta;
        const double rho = vt / (vt + cfg.sd_y * cfg.sd_y / cfg.n);
        const double mu_y = (1.0 - rho) * phi_post.mean + rho * d.ybar;
        const double mu_z = phi_post.mean;
        const double s00 =
            (1.0 - rho) * phi_post.var + (1.0 - rho) * vt + cfg.sd_y * cfg.sd_y;
        const double s01 = (1.0 - rho) * phi_post.var;
        const double s11 = phi_post.var + cfg.sd_z * cfg.sd_z;
        const double det = s00 * s11 - s01 * s01;

        Rng mc(555, 6);
        const int draws = 400000;
        std::vector<double> lp(draws);
        for (int s = 0; s < draws; ++s) {
            const double ynew = mc.normal(cfg.phi_true + cfg.theta_true, cfg.sd_y);
            const double znew = mc.normal(cfg.phi_true, cfg.sd_z);
            const double d0 = ynew - mu_y, d1 = znew - mu_z;
            lp[s] = -log_2pi - 0.5 * std::log(det) -
                    0.5 * (s11 * d0 * d0 - 2.0 * s01 * d0 * d1 + s00 * d1 * d1) / det;
        }
        const double mc_mean = mean(lp);
        const double mc_se = std::sqrt(variance(lp) / draws);
        INFO("delta = " << delta);
        CHECK(std::fabs(mc_mean - exact) < 3.0 * mc_se);
    }
}

TEST_CASE("exact elpd curve is smooth in delta") {
    const BiasedDataConfig cfg;
    const double ybar = 1.02, zbar = -0.07;
    for (double delta : {0.5, 2.0, 8.0}) {
        auto slope = [&](double h) {
            return (exact_elpd_biased(cfg, ybar, zbar, delta + h) -
                    exact_elpd_biased(cfg, ybar, zbar, delta - h)) /
                   (2.0 * h);
        };
        const double d1 = slope(1e-3), d2 = slope(5e-4);
        CHECK(std::fabs(d1 - d2) < 1e-4 * std::max(1.0, std::fabs(d1)));
    }
}

TEST_CASE("regression posterior at delta = 0 solves the normal equations") {
    const RegressionConfig cfg;
    Rng rng(77, 8);
    const RegressionData d = simulate_regression_data(cfg, rng);
    const auto s = regression_suff_stats(d);
    const auto post = regression_smi_posterior(s, cfg.sd_y, cfg.sd_z, 0.0);

    // Independent 2x2 solve of the joint gaussian posterior for (phi, theta).
    const double vy = cfg.sd_y * cfg.sd_y, vz = cfg.sd_z * cfg.sd_z;
    const double a00 = s.n / vy + s.m / vz;
    const double a01 = s.n * s.mx / vy;
    const double a11 = s.n * s.mx2 / vy;
    const double b0 = s.n * s.my / vy + s.m * s.mz / vz;
    const double b1 = s.n * s.mxy / vy;
    const double det = a00 * a11 - a01 * a01;
    const double mu_phi = (a11 * b0 - a01 * b1) / det;
    const double mu_theta = (a00 * b1 - a01 * b0) / det;

    CHECK(post.phi.mean == Catch::Approx(mu_phi).epsilon(1e-12));
    CHECK(post.phi.var == Catch::Approx(a11 / det).epsilon(1e-12));

    const auto tm = post.theta_marginal();
    CHECK(tm.mean == Catch::Approx(mu_theta).epsilon(1e-12));
    CHECK(tm.var == Catch::Approx(a00 / det).epsilon(1e-12));

    // Conditional slope and variance against the same solve.
    CHECK(post.theta_given_phi.mean(0.4) ==
          Catch::Approx((s.mxy - 0.4 * s.mx) / s.mx2).epsilon(1e-13));
    CHECK(post.theta_given_phi.var == Catch::Approx(vy / (s.n * s.mx2)).epsilon(1e-13));
}

TEST_CASE("regression posterior endpoints and eta equivalence") {
    const RegressionConfig cfg;
    Rng rng(78, 8);
    const RegressionData d = simulate_regression_data(cfg, rng);
    const auto s = regression_suff_stats(d);

    const auto cut = regression_smi_posterior(s, cfg.sd_y, cfg.sd_z, pos_inf);
    CHECK(cut.phi.mean == s.mz);
    CHECK(cut.phi.var == cfg.sd_z * cfg.sd_z / s.m);

    const auto cut_eta = regression_smi_posterior_eta(s, cfg.sd_y, cfg.sd_z, 0.0);
    CHECK(cut_eta.phi.mean == cut.phi.mean);
    CHECK(cut_eta.phi.var == cut.phi.var);

    for (double delta : {0.0, 0.4, 2.5}) {
        const double eta = eta_delta_equivalence(cfg.sd_y, delta);
        const auto pd = regression_smi_posterior(s, cfg.sd_y, cfg.sd_z, delta);
        const auto pe = regression_smi_posterior_eta(s, cfg.sd_y, cfg.sd_z, eta);
        CHECK(pd.phi.mean == Catch::Approx(pe.phi.mean).epsilon(1e-12));
        CHECK(pd.phi.var == Catch::Approx(pe.phi.var).epsilon(1e-12));
    }
}

TEST_CASE("regression phi posterior agrees with 2-d grid integration") {
    RegressionConfig cfg;
    cfg.n = 20;
    cfg.m = 15;
    Rng rng(11, 13);
    const RegressionData d = simulate_regression_data(cfg, rng);
    const auto s = regression_suff_stats(d);
    const double delta = 1.7;
    const auto closed = regression_smi_posterior(s, cfg.sd_y, cfg.sd_z, delta);

    const double s2 = cfg.sd_y * cfg.sd_y + delta * delta;
    const double vz = cfg.sd_z * cfg.sd_z;
    const int nt = 601;
    std::vector<double> row_ls(nt);
    // theta~ ranges wide around the least-squares fit.
    const double t_mid = s.mxy / s.mx2;
    const auto gm = grid_moments(
        [&](double phi) {
            for (int j = 0; j < nt; ++j) {
                const double tt = t_mid - 8.0 + 16.0 * j / (nt - 1);
                double lw = 0.0;
                for (int r = 0; r < cfg.n; ++r)
                    lw += log_normal_pdf(d.y[r], phi + tt * d.x[r], s2);
                row_ls[j] = lw;
            }
            double base = 0.0;
            for (double zj : d.z) base += log_normal_pdf(zj, phi, vz);
            return base + log_sum_exp(row_ls);
        },
        closed.phi.mean - 10.0 * closed.phi.sd(),
        closed.phi.mean + 10.0 * closed.phi.sd(), 301);
    CHECK(gm.mean == Catch::Approx(closed.phi.mean).margin(2e-6));
    CHECK(gm.var == Catch::Approx(closed.phi.var).epsilon(1e-4));
}

TEST_CASE("pseudo-true values in the regression example") {
    RegressionConfig cfg;  // k = 2, x ~ U(0, 2), alpha = 1, sd_y = 0.25, sd_z = 3

    // Correctly specified k = 1 curve: no drift at any delta.
    RegressionConfig lin = cfg;
    lin.k = 1.0;
    for (double delta : {0.0, 1.0, 100.0, pos_inf}) {
        const auto [p, t] = pseudo_true_values(lin, delta);
        CHECK(p == Catch::Approx(lin.phi_true).margin(1e-14));
        CHECK(t == Catch::Approx(lin.theta_true).margin(1e-14));
    }

    // k = 2 at delta = 0: phi*_0 = -24/37 by hand.
    const auto [p0, t0] = pseudo_true_values(cfg, 0.0);
    CHECK(p0 == Catch::Approx(-24.0 / 37.0).epsilon(1e-14));
    CHECK(t0 == Catch::Approx(147.0 / 74.0).epsilon(1e-14));

    // delta -> inf: the z-module alone identifies phi, and
    // theta*_inf = theta* M_{k+1} / M_2 = 2 / (4/3) = 3/2.
    const auto [pi, ti] = pseudo_true_values(cfg, pos_inf);
    CHECK(pi == cfg.phi_true);
    CHECK(ti == Catch::Approx(1.5).epsilon(1e-12));

    // Large finite delta approaches the limit.
    const auto [pl, tl] = pseudo_true_values(cfg, 1e6);
    CHECK(pl == Catch::Approx(pi).margin(1e-9));
    CHECK(tl == Catch::Approx(ti).margin(1e-9));
}

TEST_CASE("loocv matches a brute-force refit") {
    const RegressionConfig cfg;
    Rng rng(5150, 3);
    RegressionData d = simulate_regression_data(cfg, rng);
    const auto s = regression_suff_stats(d);

    for (double delta : {0.0, 1.2, pos_inf}) {
        const double fast = regression_loocv_elpd_z(s, d.z, cfg.sd_y, cfg.sd_z, delta);

        double brute = 0.0;
        for (std::size_t j = 0; j < d.z.size(); ++j) {
            RegressionData fold = d;
            fold.z.erase(fold.z.begin() + j);
            const auto fs = regression_suff_stats(fold);
            const auto post = regression_smi_posterior(fs, cfg.sd_y, cfg.sd_z, delta);
            brute += log_normal_pdf(d.z[j], post.phi.mean,
                                    post.phi.var + cfg.sd_z * cfg.sd_z);
        }
        brute /= static_cast<double>(d.z.size());
        CHECK(fast == Catch::Approx(brute).epsilon(1e-12));
    }
}

TEST_CASE("loocv folds coincide for exchangeable equal z") {
    const RegressionConfig cfg;
    Rng rng(808, 1);
    RegressionData d = simulate_regression_data(cfg, rng);
    std::fill(d.z.begin(), d.z.end(), 0.4);
    const auto s = regression_suff_stats(d);

    RegressionSuffStats fold = s;
    fold.m = s.m - 1.0;
    fold.mz = 0.4;
    const auto post = regression_smi_posterior(fold, cfg.sd_y, cfg.sd_z, 0.7);
    const double single =
        log_normal_pdf(0.4, post.phi.mean, post.phi.var + cfg.sd_z * cfg.sd_z);
    CHECK(regression_loocv_elpd_z(s, d.z, cfg.sd_y, cfg.sd_z, 0.7) ==
          Catch::Approx(single).epsilon(1e-13));
}

TEST_CASE("regression elpd_z is maximized at the truth") {
    GaussianPosterior at_truth{0.0, 0.01};
    GaussianPosterior off{0.5, 0.01};
    CHECK(regression_elpd_z(at_truth, 3.0, 0.0) > regression_elpd_z(off, 3.0, 0.0));
}
