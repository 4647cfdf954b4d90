#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "smi/errors.hpp"
#include "smi/mcmc.hpp"
#include "smi/selection.hpp"

namespace smi {

using json = nlohmann::json;

// Shortest exact decimal form; round-trips and is stable across reruns.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw data_error("write_csv: cannot open " + path);
    for (std::size_t c = 0; c < header.size(); ++c)
        out << (c ? "," : "") << header[c];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c)
            out << (c ? "," : "") << format_double(row[c]);
        out << "\n";
    }
}

// Plain numeric CSV reader (header skipped); used by round-trip checks.
inline std::vector<std::vector<double>> read_numeric_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("read_numeric_csv: cannot open " + path);
    std::string line;
    std::vector<std::vector<double>> rows;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.ends_with("\r")) line.pop_back();
        if (line.empty()) continue;
        if (first) {
            first = false;
            continue;
        }
        std::vector<double> row;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            const std::size_t next = line.find(',', pos);
            const std::string field =
                line.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
            row.push_back(std::strtod(field.c_str(), nullptr));
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_draws_csv(const std::string& path, const PosteriorDraws& draws,
                            int chain_id = 0) {
    std::vector<std::string> header{"chain", "iter"};
    const std::size_t p = draws.phi.empty() ? 0 : draws.phi.front().size();
    const std::size_t t = draws.theta_tilde.empty() ? 0 : draws.theta_tilde.front().size();
    const std::size_t q = draws.theta.empty() ? 0 : draws.theta.front().size();
    for (std::size_t j = 0; j < p; ++j) header.push_back("phi_" + std::to_string(j));
    for (std::size_t j = 0; j < t; ++j)
        header.push_back("theta_tilde_" + std::to_string(j));
    for (std::size_t j = 0; j < q; ++j) header.push_back("theta_" + std::to_string(j));

    std::vector<std::vector<double>> rows;
    rows.reserve(draws.phi.size());
    for (std::size_t s = 0; s < draws.phi.size(); ++s) {
        std::vector<double> row{static_cast<double>(chain_id), static_cast<double>(s)};
        row.insert(row.end(), draws.phi[s].begin(), draws.phi[s].end());
        if (t) row.insert(row.end(), draws.theta_tilde[s].begin(), draws.theta_tilde[s].end());
        row.insert(row.end(), draws.theta[s].begin(), draws.theta[s].end());
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

inline void write_curve_csv(const std::string& path, const UtilityCurve& curve) {
    std::vector<std::vector<double>> rows;
    rows.reserve(curve.size());
    for (const auto& p : curve.points()) rows.push_back({p.param, p.value, p.se});
    write_csv(path, {curve.param_name(), "utility", "se"}, rows);
}

inline json curve_to_json(const UtilityCurve& curve) {
    json points = json::array();
    for (const auto& p : curve.points()) {
        // JSON has no inf literal; the curve parameter may include one.
        json param = std::isinf(p.param) ? json("inf") : json(p.param);
        points.push_back({{"param", param}, {"utility", p.value}, {"se", p.se}});
    }
    return json{{"param_name", curve.param_name()},
                {"points", points},
                {"best_param", std::isinf(curve.best_param()) ? json("inf")
                                                              : json(curve.best_param())},
                {"best_utility", curve.best_value()}};
}

inline void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw data_error("write_json: cannot open " + path);
    out << j.dump(2) << "\n";
}

}  // namespace smi
