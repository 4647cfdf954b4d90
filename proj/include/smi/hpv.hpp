#pragma once

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "smi/errors.hpp"
#include "smi/kernels.hpp"
#include "smi/math.hpp"
#include "smi/model.hpp"

namespace smi {

// One population: cervical-cancer incidence (ncases over person_years of
// follow-up) and HPV prevalence (ninf positives among npart tested).
struct HpvRecord {
    std::string pop_id;
    double ncases;
    double person_years;
    double ninf;
    double npart;
};

inline void validate_hpv_records(const std::vector<HpvRecord>& records) {
    if (records.empty()) throw data_error("hpv: no records");
    for (const HpvRecord& r : records) {
        if (!(r.person_years > 0.0))
            throw data_error("hpv: person_years must be positive (" + r.pop_id + ")");
        if (r.ncases < 0.0 || std::floor(r.ncases) != r.ncases)
            throw data_error("hpv: ncases must be a non-negative integer (" + r.pop_id + ")");
        if (r.ninf < 0.0 || r.npart <= 0.0 || r.ninf > r.npart ||
            std::floor(r.ninf) != r.ninf || std::floor(r.npart) != r.npart)
            throw data_error("hpv: need integer 0 <= ninf <= npart (" + r.pop_id + ")");
    }
}

// CSV with header pop_id,ncases,person_years,ninf,npart.
inline std::vector<HpvRecord> load_hpv_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("hpv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw data_error("hpv: empty file " + path);
    if (line.ends_with("\r")) line.pop_back();
    if (line != "pop_id,ncases,person_years,ninf,npart")
        throw data_error("hpv: unexpected header '" + line + "'");
    std::vector<HpvRecord> records;
    while (std::getline(in, line)) {
        if (line.ends_with("\r")) line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        HpvRecord r;
        std::string field;
        auto next = [&](const char* what) {
            if (!std::getline(ss, field, ','))
                throw data_error("hpv: missing " + std::string(what) + " in '" + line + "'");
            return field;
        };
        r.pop_id = next("pop_id");
        try {
            r.ncases = std::stod(next("ncases"));
            r.person_years = std::stod(next("person_years"));
            r.ninf = std::stod(next("ninf"));
            r.npart = std::stod(next("npart"));
        } catch (const std::exception&) {
            throw data_error("hpv: non-numeric field in '" + line + "'");
        }
        records.push_back(r);
    }
    validate_hpv_records(records);
    return records;
}

struct HpvPriors {
    double theta_sd = 100.0;  // iid N(0, theta_sd^2) on (theta1, theta2)
};

// Two-module HPV model:
//   Z-module: ninf_i ~ Binomial(npart_i, phi_i), phi_i ~ U(0, 1) iid,
//   Y-module: ncases_i ~ Poisson(person_years_i exp(theta1 + theta2 phi_i)).
// Y data vector = ncases, Z data vector = ninf; exposures and denominators
// ride inside the closures by observation index.
inline TwoModuleModel make_hpv_model(std::vector<HpvRecord> records,
                                     const HpvPriors& priors = {}) {
    validate_hpv_records(records);
    auto recs = std::make_shared<std::vector<HpvRecord>>(std::move(records));
    const int n = static_cast<int>(recs->size());
    const double tvar = priors.theta_sd * priors.theta_sd;

    TwoModuleModel model;
    model.dims = {n, 2, 1, 1};
    model.z_loglik = [recs](ConstSpan phi, ConstSpan z) {
        double s = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j)
            s += binomial_log_pmf(z[j], (*recs)[j].npart, phi[j]);
        return s;
    };
    model.z_loglik_pointwise = [recs](ConstSpan phi, std::size_t j, double z_j) {
        return binomial_log_pmf(z_j, (*recs)[j].npart, phi[j]);
    };
    model.y_loglik = [recs](ConstSpan phi, ConstSpan theta, ConstSpan y) {
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double mu = (*recs)[i].person_years * std::exp(theta[0] + theta[1] * phi[i]);
            s += poisson_log_pmf(y[i], mu);
        }
        return s;
    };
    model.y_loglik_pointwise = [recs](ConstSpan phi, ConstSpan theta, std::size_t i,
                                      double y_i) {
        const double mu = (*recs)[i].person_years * std::exp(theta[0] + theta[1] * phi[i]);
        return poisson_log_pmf(y_i, mu);
    };
    model.log_prior_phi = [n](ConstSpan phi) {
        for (int i = 0; i < n; ++i)
            if (!(phi[i] > 0.0 && phi[i] < 1.0)) return neg_inf;
        return 0.0;
    };
    model.log_prior_theta_given_phi = [tvar](ConstSpan theta, ConstSpan) {
        return log_normal_pdf(theta[0], 0.0, tvar) + log_normal_pdf(theta[1], 0.0, tvar);
    };
    return model;
}

// mu_i implied by (phi, theta); exposed for pointwise WAIC matrices.
inline Vector hpv_poisson_means(const std::vector<HpvRecord>& records, ConstSpan phi,
                                ConstSpan theta) {
    Vector mu(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
        mu[i] = records[i].person_years * std::exp(theta[0] + theta[1] * phi[i]);
    return mu;
}

inline Evaluators make_hpv_evaluators(const std::vector<HpvRecord>& records) {
    auto recs = std::make_shared<std::vector<HpvRecord>>(records);
    Evaluators evals;
    evals.smoothed_y_loglik = [recs](ConstSpan phi, ConstSpan theta_tilde, ConstSpan y,
                                     const KernelSpec& kernel) {
        const Vector mu = hpv_poisson_means(*recs, phi, theta_tilde);
        return smoothed_poisson_loglik(y, mu, kernel);
    };
    return evals;
}

inline Vector hpv_y_data(const std::vector<HpvRecord>& records) {
    Vector y(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) y[i] = records[i].ncases;
    return y;
}

inline Vector hpv_z_data(const std::vector<HpvRecord>& records) {
    Vector z(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) z[i] = records[i].ninf;
    return z;
}

}  // namespace smi
