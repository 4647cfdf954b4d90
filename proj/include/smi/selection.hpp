#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "smi/errors.hpp"
#include "smi/math.hpp"
#include "smi/stats.hpp"

namespace smi {

struct UtilityPoint {
    double param;  // influence value this point was evaluated at
    double value;  // estimated utility (ELPD-type, larger is better)
    double se;     // Monte Carlo standard error, 0 for exact values
};

// A predictive-utility curve over a strictly increasing influence grid.
class UtilityCurve {
  public:
    UtilityCurve(std::string param_name, std::vector<UtilityPoint> points)
        : param_name_(std::move(param_name)), points_(std::move(points)) {
        if (points_.empty()) throw selection_error("UtilityCurve: empty grid");
        for (std::size_t i = 1; i < points_.size(); ++i)
            if (!(points_[i].param > points_[i - 1].param))
                throw selection_error("UtilityCurve: grid must be strictly increasing");
    }

    const std::string& param_name() const { return param_name_; }
    const std::vector<UtilityPoint>& points() const { return points_; }
    std::size_t size() const { return points_.size(); }

    std::size_t argmax() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < points_.size(); ++i)
            if (points_[i].value > points_[best].value) best = i;
        return best;
    }

    double best_param() const { return points_[argmax()].param; }
    double best_value() const { return points_[argmax()].value; }

    double min_value() const {
        double v = points_[0].value;
        for (const auto& p : points_) v = std::min(v, p.value);
        return v;
    }
    double max_value() const { return points_[argmax()].value; }

    // Piecewise-linear utility over the finite part of the grid; clamped at
    // the ends, never extrapolated.
    double value_at(double param) const {
        if (param <= points_.front().param) return points_.front().value;
        if (param >= finite_back().param) return finite_back().value;
        for (std::size_t i = 1; i < points_.size(); ++i) {
            if (points_[i].param >= param) {
                const auto& a = points_[i - 1];
                const auto& b = points_[i];
                const double t = (param - a.param) / (b.param - a.param);
                return a.value + t * (b.value - a.value);
            }
        }
        return points_.back().value;
    }

  private:
    const UtilityPoint& finite_back() const {
        for (std::size_t i = points_.size(); i-- > 0;)
            if (std::isfinite(points_[i].param)) return points_[i];
        return points_.back();
    }

    std::string param_name_;
    std::vector<UtilityPoint> points_;
};

struct LoocvResult {
    double elpd;
    double se;
    std::vector<double> pointwise;
};

// Leave-one-out CV of the z-predictive utility: the callback returns
// log p~(z_j | Y, Z_{-j}) for fold j.
inline LoocvResult loocv_elpd_z(
    const std::function<double(std::size_t fold, double z_j)>& log_predictive,
    ConstSpan z) {
    if (z.size() < 2) throw selection_error("loocv_elpd_z: need at least 2 folds");
    LoocvResult out;
    out.pointwise.resize(z.size());
    double total = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        out.pointwise[j] = log_predictive(j, z[j]);
        total += out.pointwise[j];
    }
    out.elpd = total;
    out.se = std::sqrt(static_cast<double>(z.size()) * variance(out.pointwise));
    return out;
}

struct WaicResult {
    double elpd;
    double se;
    std::vector<double> pointwise;
};

// WAIC estimate of the expected log predictive density from a draws-by-
// observations log-likelihood matrix:
//   elpd_i = log (1/S) sum_s exp(ll_si)  -  Var_s(ll_si),
// summed over observations, with the usual sqrt(n Var_i(elpd_i)) standard
// error.  Columns are max-subtracted before exponentiation.
inline WaicResult waic_elpd(const std::vector<std::vector<double>>& loglik) {
    const std::size_t s_draws = loglik.size();
    if (s_draws < 2) throw selection_error("waic_elpd: need at least 2 draws");
    const std::size_t n_obs = loglik.front().size();
    if (n_obs == 0) throw selection_error("waic_elpd: no observations");
    for (const auto& row : loglik)
        if (row.size() != n_obs) throw selection_error("waic_elpd: ragged matrix");

    WaicResult out;
    out.pointwise.resize(n_obs);
    std::vector<double> col(s_draws);
    for (std::size_t i = 0; i < n_obs; ++i) {
        for (std::size_t s = 0; s < s_draws; ++s) col[s] = loglik[s][i];
        const double lpd = log_mean_exp(col);
        const double p_waic = variance(col);
        out.pointwise[i] = lpd - p_waic;
    }
    double total = 0.0;
    for (double v : out.pointwise) total += v;
    out.elpd = total;
    out.se = std::sqrt(static_cast<double>(n_obs) * variance(out.pointwise));
    return out;
}

// Posterior mean squared error (1/S) sum_s (x_s - truth)^2 of a scalar
// posterior component against its data-generating value.
inline double pmse(ConstSpan draws, double truth) {
    if (draws.empty()) throw selection_error("pmse: no draws");
    double s = 0.0;
    for (double v : draws) s += (v - truth) * (v - truth);
    return s / static_cast<double>(draws.size());
}

namespace detail {

// Pool-adjacent-violators for a least-squares non-increasing fit.
inline std::vector<double> pava_non_increasing(const std::vector<double>& y) {
    struct Block {
        double sum;
        double count;
    };
    std::vector<Block> blocks;
    // Non-increasing fit of y == non-decreasing fit of -y.
    for (double v : y) {
        blocks.push_back({-v, 1.0});
        while (blocks.size() > 1) {
            const auto& b = blocks.back();
            const auto& a = blocks[blocks.size() - 2];
            if (a.sum / a.count <= b.sum / b.count) break;
            blocks[blocks.size() - 2] = {a.sum + b.sum, a.count + b.count};
            blocks.pop_back();
        }
    }
    std::vector<double> fit;
    fit.reserve(y.size());
    for (const auto& b : blocks) {
        const double level = -(b.sum / b.count);
        for (int i = 0; i < static_cast<int>(b.count); ++i) fit.push_back(level);
    }
    return fit;
}

// Parameter value on the piecewise-linear curve whose utility is closest to
// u; returns (param, |utility gap|).  Ties prefer the smaller parameter.
inline std::pair<double, double> closest_param(const UtilityCurve& curve, double u) {
    double best_param = curve.points().front().param;
    double best_gap = std::fabs(curve.points().front().value - u);
    auto consider = [&](double param, double gap) {
        if (gap < best_gap - 1e-15) {
            best_gap = gap;
            best_param = param;
        }
    };
    const auto& pts = curve.points();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (!std::isfinite(pts[i].param)) continue;
        consider(pts[i].param, std::fabs(pts[i].value - u));
        if (i + 1 < pts.size() && std::isfinite(pts[i + 1].param)) {
            const double lo = std::min(pts[i].value, pts[i + 1].value);
            const double hi = std::max(pts[i].value, pts[i + 1].value);
            if (u >= lo && u <= hi && pts[i + 1].value != pts[i].value) {
                const double t = (u - pts[i].value) / (pts[i + 1].value - pts[i].value);
                consider(pts[i].param + t * (pts[i + 1].param - pts[i].param), 0.0);
            }
        }
    }
    return {best_param, best_gap};
}

}  // namespace detail

struct EtaDeltaPoint {
    double eta;
    double delta;     // matched (isotonic) delta
    double residual;  // |U_delta(delta) - U_eta(eta)| after the isotonic fit
};

struct EtaDeltaMap {
    std::vector<EtaDeltaPoint> points;
};

// Matches each eta-grid utility onto the interpolated delta-curve and makes
// the map monotone non-increasing in eta by isotonic regression, so growing
// y-module influence (eta -> 1) corresponds to shrinking bandwidth.  Raw
// per-point matches may disagree with monotonicity; residuals report the
// utility gap after the fit.  Throws when the two utility ranges do not
// overlap at all.
inline EtaDeltaMap eta_to_delta_matching(const UtilityCurve& eta_curve,
                                         const UtilityCurve& delta_curve) {
    if (eta_curve.min_value() > delta_curve.max_value() ||
        delta_curve.min_value() > eta_curve.max_value())
        throw selection_error("eta_to_delta_matching: utility ranges do not overlap");

    std::vector<double> raw;
    raw.reserve(eta_curve.size());
    for (const auto& p : eta_curve.points())
        raw.push_back(detail::closest_param(delta_curve, p.value).first);

    const std::vector<double> fit = detail::pava_non_increasing(raw);

    EtaDeltaMap map;
    map.points.resize(eta_curve.size());
    for (std::size_t i = 0; i < eta_curve.size(); ++i) {
        const double u = eta_curve.points()[i].value;
        map.points[i] = {eta_curve.points()[i].param, fit[i],
                         std::fabs(delta_curve.value_at(fit[i]) - u)};
    }
    return map;
}

}  // namespace smi
