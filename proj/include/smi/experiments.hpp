#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smi/closed_form.hpp"
#include "smi/coherence.hpp"
#include "smi/errors.hpp"
#include "smi/hpv.hpp"
#include "smi/io.hpp"
#include "smi/mcmc.hpp"
#include "smi/model.hpp"
#include "smi/selection.hpp"
#include "smi/stats.hpp"

namespace smi {

struct ExperimentConfig {
    std::string out_dir = "out";
    std::uint64_t seed = 20240801;

    BiasedDataConfig biased;
    std::vector<double> delta_grid;  // empty -> per-experiment default
    std::vector<double> eta_grid;
    int replicates = 50;
    int n_export_draws = 2000;

    RegressionConfig regression;
    std::vector<double> k_grid = {1.0, 1.25, 1.5, 1.75, 2.0};
    int regression_replicates = 100;

    std::string hpv_csv;  // empty -> bundled data set
    int hpv_delta_max = 64;
    McmcConfig mcmc;

    int coherence_models = 50;
    int coherence_max_blocks = 3;
};

inline std::vector<double> log_spaced_grid(double lo, double hi, int n) {
    std::vector<double> grid(n);
    const double llo = std::log10(lo), lhi = std::log10(hi);
    for (int i = 0; i < n; ++i)
        grid[i] = std::pow(10.0, llo + (lhi - llo) * i / (n - 1));
    return grid;
}

inline std::vector<double> default_biased_delta_grid() {
    std::vector<double> grid{0.0};
    for (double d : log_spaced_grid(1e-2, 1e3, 41)) grid.push_back(d);
    grid.push_back(pos_inf);
    return grid;
}

inline std::vector<double> default_regression_delta_grid() {
    std::vector<double> grid{0.0};
    for (double d : log_spaced_grid(1e-2, 1e2, 33)) grid.push_back(d);
    grid.push_back(pos_inf);
    return grid;
}

inline std::vector<double> default_hpv_eta_grid() {
    return {0.0, 0.01, 0.025, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.85, 1.0};
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw data_error("median: empty");
    std::sort(xs.begin(), xs.end());
    const std::size_t mid = xs.size() / 2;
    return xs.size() % 2 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

// ---------------------------------------------------------------------------
// Biased-data experiment: exact utility and PMSE curves over the bandwidth
// grid, posterior draw clouds at delta in {0, delta*, inf}, and a replicate
// study of where the selected bandwidth lands.
// ---------------------------------------------------------------------------

inline json run_biased_data(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const std::vector<double> grid =
        cfg.delta_grid.empty() ? default_biased_delta_grid() : cfg.delta_grid;
    const BiasedDataConfig& bc = cfg.biased;

    Rng rng(cfg.seed, 100);
    const BiasedData data = simulate_biased_data(bc, rng);

    std::vector<UtilityPoint> pts;
    std::vector<std::vector<double>> pmse_rows;
    for (double d : grid) {
        pts.push_back({d, exact_elpd_biased(bc, data.ybar, data.zbar, d), 0.0});
        const GaussianPosterior phi = biased_phi_posterior(bc, data.ybar, data.zbar, d);
        const GaussianPosterior th = biased_theta_marginal(bc, data.ybar, data.zbar, d);
        const double pmse_phi = phi.var + (phi.mean - bc.phi_true) * (phi.mean - bc.phi_true);
        const double pmse_theta = th.var + (th.mean - bc.theta_true) * (th.mean - bc.theta_true);
        pmse_rows.push_back({d, pmse_phi, pmse_theta});
    }
    const UtilityCurve curve("delta", pts);
    write_curve_csv(cfg.out_dir + "/elpd_delta.csv", curve);
    write_csv(cfg.out_dir + "/pmse_delta.csv", {"delta", "pmse_phi", "pmse_theta"},
              pmse_rows);

    const double delta_star = curve.best_param();
    auto export_cloud = [&](double d, const std::string& name, std::uint64_t stream) {
        Rng draw_rng(cfg.seed, stream);
        const GaussianPosterior phi = biased_phi_posterior(bc, data.ybar, data.zbar, d);
        std::vector<std::vector<double>> rows;
        rows.reserve(cfg.n_export_draws);
        for (int s = 0; s < cfg.n_export_draws; ++s) {
            const double ph = draw_rng.normal(phi.mean, phi.sd());
            const GaussianPosterior th = biased_theta_given_phi(bc, data.ybar, ph);
            rows.push_back({ph, draw_rng.normal(th.mean, th.sd())});
        }
        write_csv(cfg.out_dir + "/" + name, {"phi", "theta"}, rows);
    };
    export_cloud(0.0, "draws_bayes.csv", 101);
    export_cloud(delta_star, "draws_smi.csv", 102);
    export_cloud(pos_inf, "draws_cut.csv", 103);

    // Replicate study of the selected bandwidth.
    int in_range = 0, star_at_least_endpoints = 0;
    std::vector<std::vector<double>> rep_rows;
    for (int rep = 0; rep < cfg.replicates; ++rep) {
        Rng rep_rng(cfg.seed, 200 + static_cast<std::uint64_t>(rep));
        const BiasedData d = simulate_biased_data(bc, rep_rng);
        std::vector<UtilityPoint> rp;
        for (double dd : grid)
            rp.push_back({dd, exact_elpd_biased(bc, d.ybar, d.zbar, dd), 0.0});
        const UtilityCurve rc("delta", rp);
        const double star = rc.best_param();
        const double e0 = rp.front().value;
        const double einf = rp.back().value;
        if (star >= 0.5 && star <= 20.0) ++in_range;
        if (rc.best_value() >= std::max(e0, einf)) ++star_at_least_endpoints;
        rep_rows.push_back({static_cast<double>(rep), star, e0, einf, rc.best_value()});
    }
    write_csv(cfg.out_dir + "/replicates.csv",
              {"rep", "delta_star", "elpd_bayes", "elpd_cut", "elpd_star"}, rep_rows);

    json summary{
        {"experiment", "biased-data"},
        {"seed", cfg.seed},
        {"config",
         {{"n", bc.n},
          {"m", bc.m},
          {"sd_theta", bc.sd_theta},
          {"sd_y", bc.sd_y},
          {"sd_z", bc.sd_z},
          {"phi_true", bc.phi_true},
          {"theta_true", bc.theta_true}}},
        {"ybar", data.ybar},
        {"zbar", data.zbar},
        {"delta_star", std::isinf(delta_star) ? json("inf") : json(delta_star)},
        {"elpd", curve_to_json(curve)},
        {"replicates", cfg.replicates},
        {"frac_delta_star_in_0p5_20",
         static_cast<double>(in_range) / std::max(1, cfg.replicates)},
        {"frac_star_at_least_endpoints",
         static_cast<double>(star_at_least_endpoints) / std::max(1, cfg.replicates)}};
    write_json(cfg.out_dir + "/summary.json", summary);
    return summary;
}

// ---------------------------------------------------------------------------
// Misspecified-regression experiment: per covariate power k and replicate,
// select delta by LOOCV of the z-predictive and compare PMSE / exact ELPD_z
// against the Bayes and Cut endpoints.
// ---------------------------------------------------------------------------

inline json run_regression(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const std::vector<double> grid =
        cfg.delta_grid.empty() ? default_regression_delta_grid() : cfg.delta_grid;

    std::vector<std::vector<double>> rows;
    json per_k = json::array();
    for (std::size_t ki = 0; ki < cfg.k_grid.size(); ++ki) {
        RegressionConfig rc = cfg.regression;
        rc.k = cfg.k_grid[ki];
        std::vector<double> pmse_b, pmse_c, pmse_s, elpd_b, elpd_c, elpd_s, stars;
        for (int rep = 0; rep < cfg.regression_replicates; ++rep) {
            Rng rng(cfg.seed, 300 + 1000 * ki + static_cast<std::uint64_t>(rep));
            const RegressionData data = simulate_regression_data(rc, rng);
            const RegressionSuffStats stats = regression_suff_stats(data);

            double best_delta = grid.front(), best_loocv = neg_inf;
            for (double d : grid) {
                const double v =
                    regression_loocv_elpd_z(stats, data.z, rc.sd_y, rc.sd_z, d);
                if (v > best_loocv) {
                    best_loocv = v;
                    best_delta = d;
                }
            }
            auto eval = [&](double d) {
                const RegressionPosterior post =
                    regression_smi_posterior(stats, rc.sd_y, rc.sd_z, d);
                const double pm = post.phi.var + (post.phi.mean - rc.phi_true) *
                                                     (post.phi.mean - rc.phi_true);
                return std::pair<double, double>(
                    pm, regression_elpd_z(post.phi, rc.sd_z, rc.phi_true));
            };
            const auto [pm_b, el_b] = eval(0.0);
            const auto [pm_c, el_c] = eval(pos_inf);
            const auto [pm_s, el_s] = eval(best_delta);
            pmse_b.push_back(pm_b);
            pmse_c.push_back(pm_c);
            pmse_s.push_back(pm_s);
            elpd_b.push_back(el_b);
            elpd_c.push_back(el_c);
            elpd_s.push_back(el_s);
            stars.push_back(best_delta);
            rows.push_back({rc.k, static_cast<double>(rep), best_delta, pm_b, pm_c,
                            pm_s, el_b, el_c, el_s});
        }
        per_k.push_back(json{{"k", rc.k},
                             {"median_pmse_bayes", median(pmse_b)},
                             {"median_pmse_cut", median(pmse_c)},
                             {"median_pmse_smi", median(pmse_s)},
                             {"median_elpdz_bayes", median(elpd_b)},
                             {"median_elpdz_cut", median(elpd_c)},
                             {"median_elpdz_smi", median(elpd_s)},
                             {"median_delta_star",
                              std::isinf(median(stars)) ? json("inf") : json(median(stars))}});
    }
    write_csv(cfg.out_dir + "/regression_results.csv",
              {"k", "rep", "delta_star", "pmse_bayes", "pmse_cut", "pmse_smi",
               "elpdz_bayes", "elpdz_cut", "elpdz_smi"},
              rows);
    json summary{{"experiment", "regression"},
                 {"seed", cfg.seed},
                 {"replicates", cfg.regression_replicates},
                 {"per_k", per_k}};
    write_json(cfg.out_dir + "/summary.json", summary);
    return summary;
}

// ---------------------------------------------------------------------------
// HPV experiment: nested MCMC over the bandwidth and eta grids, WAIC
// utilities for both modules, the isotonic eta -> delta map, and draw clouds
// for the analysis-stage parameters.
// ---------------------------------------------------------------------------

namespace detail {

struct HpvChainSummary {
    WaicResult waic_y;
    WaicResult waic_z;
    PosteriorDraws draws;
};

inline HpvChainSummary run_hpv_chain(const TwoModuleModel& model,
                                     const Evaluators& evals,
                                     const std::vector<HpvRecord>& records,
                                     const InfluenceSetting& setting, ConstSpan y,
                                     ConstSpan z, McmcConfig mcfg) {
    const int n = static_cast<int>(records.size());
    Vector phi0(n), theta0(2);
    double cases = 0.0, years = 0.0;
    for (const HpvRecord& r : records) {
        cases += r.ncases;
        years += r.person_years;
    }
    theta0[0] = std::log(cases / years);
    theta0[1] = 0.0;
    for (int i = 0; i < n; ++i)
        phi0[i] = (records[i].ninf + 0.5) / (records[i].npart + 1.0);

    mcfg.proposal_scales.assign(n, 0.05);          // phi blocks
    mcfg.proposal_scales.insert(mcfg.proposal_scales.end(), {0.1, 0.3});  // theta~
    mcfg.proposal_scales.insert(mcfg.proposal_scales.end(), {0.1, 0.3});  // inner

    HpvChainSummary out{WaicResult{}, WaicResult{},
                        run_nested_mcmc(model, setting, evals, y, z, mcfg, phi0, theta0)};

    const std::size_t S = out.draws.phi.size();
    std::vector<std::vector<double>> ll_y(S, std::vector<double>(n));
    std::vector<std::vector<double>> ll_z(S, std::vector<double>(n));
    for (std::size_t s = 0; s < S; ++s) {
        for (int i = 0; i < n; ++i) {
            ll_y[s][i] = model.y_loglik_pointwise(out.draws.phi[s], out.draws.theta[s],
                                                  static_cast<std::size_t>(i), y[i]);
            ll_z[s][i] = model.z_loglik_pointwise(out.draws.phi[s],
                                                  static_cast<std::size_t>(i), z[i]);
        }
    }
    out.waic_y = waic_elpd(ll_y);
    out.waic_z = waic_elpd(ll_z);
    return out;
}

}  // namespace detail

inline json run_hpv(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const std::string data_path =
        cfg.hpv_csv.empty() ? std::string(SMI_DATA_DIR) + "/hpv.csv" : cfg.hpv_csv;
    const std::vector<HpvRecord> records = load_hpv_csv(data_path);
    const TwoModuleModel model = make_hpv_model(records);
    const Evaluators evals = make_hpv_evaluators(records);
    const Vector y = hpv_y_data(records);
    const Vector z = hpv_z_data(records);

    const std::vector<double> eta_grid =
        cfg.eta_grid.empty() ? default_hpv_eta_grid() : cfg.eta_grid;
    std::vector<double> delta_grid = cfg.delta_grid;
    if (delta_grid.empty())
        for (int d = 0; d <= cfg.hpv_delta_max; ++d) delta_grid.push_back(d);

    auto chain_at = [&](const InfluenceSetting& setting, std::uint64_t stream) {
        McmcConfig mcfg = cfg.mcmc;
        mcfg.seed = cfg.seed + stream;
        return detail::run_hpv_chain(model, evals, records, setting, y, z, mcfg);
    };

    std::vector<UtilityPoint> dy, dz;
    PosteriorDraws draws_bayes, draws_matched_delta;
    const double matched_delta_export = 8.0;
    for (std::size_t i = 0; i < delta_grid.size(); ++i) {
        const InfluenceSetting setting =
            InfluenceSetting::delta(delta_grid[i], KernelSpec::Kind::DiscreteUniform);
        detail::HpvChainSummary s = chain_at(setting, 500 + i);
        dy.push_back({delta_grid[i], s.waic_y.elpd, s.waic_y.se});
        dz.push_back({delta_grid[i], s.waic_z.elpd, s.waic_z.se});
        if (delta_grid[i] == 0.0) draws_bayes = std::move(s.draws);
        else if (delta_grid[i] == matched_delta_export) draws_matched_delta = std::move(s.draws);
    }
    std::vector<UtilityPoint> ey, ez;
    PosteriorDraws draws_cut, draws_matched_eta;
    const double matched_eta_export = 0.1;
    for (std::size_t i = 0; i < eta_grid.size(); ++i) {
        detail::HpvChainSummary s =
            chain_at(InfluenceSetting::eta(eta_grid[i]), 600 + i);
        ey.push_back({eta_grid[i], s.waic_y.elpd, s.waic_y.se});
        ez.push_back({eta_grid[i], s.waic_z.elpd, s.waic_z.se});
        if (eta_grid[i] == 0.0) draws_cut = std::move(s.draws);
        else if (eta_grid[i] == matched_eta_export) draws_matched_eta = std::move(s.draws);
    }

    const UtilityCurve curve_dy("delta", dy), curve_dz("delta", dz);
    const UtilityCurve curve_ey("eta", ey), curve_ez("eta", ez);
    write_curve_csv(cfg.out_dir + "/elpd_y_delta.csv", curve_dy);
    write_curve_csv(cfg.out_dir + "/elpd_z_delta.csv", curve_dz);
    write_curve_csv(cfg.out_dir + "/elpd_y_eta.csv", curve_ey);
    write_curve_csv(cfg.out_dir + "/elpd_z_eta.csv", curve_ez);

    const EtaDeltaMap map = eta_to_delta_matching(curve_ey, curve_dy);
    {
        std::vector<std::vector<double>> rows;
        for (const auto& p : map.points) rows.push_back({p.eta, p.delta, p.residual});
        write_csv(cfg.out_dir + "/eta_delta_map.csv", {"eta", "delta", "residual"}, rows);
    }

    write_draws_csv(cfg.out_dir + "/draws_bayes.csv", draws_bayes);
    write_draws_csv(cfg.out_dir + "/draws_cut.csv", draws_cut);
    if (!draws_matched_delta.phi.empty())
        write_draws_csv(cfg.out_dir + "/draws_delta_8.csv", draws_matched_delta);
    if (!draws_matched_eta.phi.empty())
        write_draws_csv(cfg.out_dir + "/draws_eta_0.1.csv", draws_matched_eta);

    // Separation of the (theta1, theta2) clouds under full and cut updates.
    auto comp = [&](const PosteriorDraws& d, int j) { return d.component(d.theta, j); };
    const double bhatt = bhattacharyya_gaussian_2d(
        comp(draws_bayes, 0), comp(draws_bayes, 1), comp(draws_cut, 0),
        comp(draws_cut, 1));

    double matched_delta_at_eta01 = -1.0;
    for (const auto& p : map.points)
        if (std::fabs(p.eta - 0.1) < 1e-12) matched_delta_at_eta01 = p.delta;

    json summary{{"experiment", "hpv"},
                 {"seed", cfg.seed},
                 {"data", data_path},
                 {"populations", records.size()},
                 {"elpd_y_delta", curve_to_json(curve_dy)},
                 {"elpd_z_delta", curve_to_json(curve_dz)},
                 {"elpd_y_eta", curve_to_json(curve_ey)},
                 {"elpd_z_eta", curve_to_json(curve_ez)},
                 {"matched_delta_at_eta_0.1", matched_delta_at_eta01},
                 {"bhattacharyya_bayes_vs_cut", bhatt},
                 {"min_ess_bayes",
                  *std::min_element(draws_bayes.ess.begin(), draws_bayes.ess.end())},
                 {"min_ess_cut",
                  *std::min_element(draws_cut.ess.begin(), draws_cut.ess.end())}};
    write_json(cfg.out_dir + "/summary.json", summary);
    return summary;
}

// ---------------------------------------------------------------------------
// Coherence suite: randomized prequential-additivity and order-coherence
// checks for every belief-update family, plus the canned witnesses that the
// plain Cut loss is not additive and that mismatched update rules break the
// identities.
// ---------------------------------------------------------------------------

inline DiscreteTwoModuleModel cut_witness_model() {
    // Two-point theta with sharply theta-dependent y-law: the prior
    // predictive of two y's is far from the product of single predictives.
    DiscreteTwoModuleModel m;
    m.n_phi = 2;
    m.n_theta = 2;
    m.n_y = 2;
    m.n_z = 2;
    auto lp = [](std::initializer_list<double> ps) {
        std::vector<double> out;
        for (double p : ps) out.push_back(std::log(p));
        return out;
    };
    m.log_pz = lp({0.7, 0.3, 0.4, 0.6});
    m.log_py = lp({0.9, 0.1, 0.1, 0.9, 0.8, 0.2, 0.2, 0.8});
    m.log_prior = lp({0.25, 0.25, 0.25, 0.25});
    return m;
}

inline json run_coherence(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    const std::vector<InfluenceSetting> settings{
        InfluenceSetting::bayes(),
        InfluenceSetting::cut(),
        InfluenceSetting::gamma(0.5),
        InfluenceSetting::eta(0.5),
        InfluenceSetting::delta(KernelSpec::discrete_uniform(1.0)),
        InfluenceSetting::delta(KernelSpec::scaled_top_hat(0.8))};

    double max_preq = 0.0, max_order = 0.0, max_oracle_tv = 0.0;
    json worst = json::object();
    for (int rep = 0; rep < cfg.coherence_models; ++rep) {
        Rng rng(cfg.seed, 700 + static_cast<std::uint64_t>(rep));
        const DiscreteTwoModuleModel m = random_discrete_model(rng);
        const ObsBlock data = random_dataset(m, rng, 2, 2);
        for (const InfluenceSetting& s : settings) {
            const CoherenceCheckResult preq =
                check_prequential_additivity(m, s, data, cfg.coherence_max_blocks);
            const CoherenceCheckResult order = check_order_coherence(m, s, data);
            const double oracle_tv =
                total_variation(enumerate_posterior(m, s, data), direct_posterior(m, s, data));
            if (preq.max_deviation > max_preq) {
                max_preq = preq.max_deviation;
                worst["prequential"] = {{"model", rep}, {"setting", s.label()}};
            }
            if (order.max_deviation > max_order) {
                max_order = order.max_deviation;
                worst["order"] = {{"model", rep}, {"setting", s.label()}};
            }
            max_oracle_tv = std::max(max_oracle_tv, oracle_tv);
        }
    }

    // Witnesses: the identities must fail when the pieces are mismatched.
    const DiscreteTwoModuleModel witness = cut_witness_model();
    const ObsBlock witness_data{{true, 0}, {true, 1}, {false, 0}, {false, 1}};
    const double cut_additivity =
        check_additivity(witness, InfluenceSetting::cut(), witness_data, 2).max_deviation;
    const double bayes_additivity =
        check_additivity(witness, InfluenceSetting::bayes(), witness_data, 3).max_deviation;
    const double mismatched_preq =
        check_prequential_additivity(witness, InfluenceSetting::cut(), witness_data, 2,
                                     /*update_temper=*/0.5)
            .max_deviation;
    const double mismatched_order =
        check_order_coherence(witness, InfluenceSetting::bayes(), witness_data,
                              /*temper1=*/0.5, /*temper2=*/1.0)
            .max_deviation;

    const double tol_matched = 1e-10;
    const double tol_witness = 1e-2;
    const bool passed = max_preq < tol_matched && max_order < tol_matched &&
                        max_oracle_tv < 1e-12 && bayes_additivity < 1e-12 &&
                        cut_additivity > tol_witness && mismatched_preq > tol_witness &&
                        mismatched_order > tol_witness;

    json report{{"experiment", "coherence"},
                {"seed", cfg.seed},
                {"models", cfg.coherence_models},
                {"max_blocks", cfg.coherence_max_blocks},
                {"matched",
                 {{"max_prequential_deviation", max_preq},
                  {"max_order_coherence_tv", max_order},
                  {"max_gibbs_vs_direct_tv", max_oracle_tv},
                  {"bayes_plain_additivity", bayes_additivity}}},
                {"witnesses",
                 {{"cut_plain_additivity", cut_additivity},
                  {"mismatched_prequential", mismatched_preq},
                  {"mismatched_order_tv", mismatched_order}}},
                {"thresholds",
                 {{"matched", tol_matched}, {"witness", tol_witness}}},
                {"worst", worst},
                {"passed", passed}};
    write_json(cfg.out_dir + "/coherence_report.json", report);
    return report;
}

}  // namespace smi
