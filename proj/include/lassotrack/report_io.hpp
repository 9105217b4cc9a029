#pragma once

#include <charconv>
#include <ostream>
#include <string>

#include <json.hpp>

#include "lassotrack/csv.hpp"
#include "lassotrack/inference.hpp"

namespace lassotrack {

/// Shortest round-trip decimal form; keeps emitted files byte-stable.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline nlohmann::json interval_to_json(const TruncationInterval& iv) {
    return {{"nu_minus", iv.nu_minus}, {"nu_plus", iv.nu_plus}, {"nu_zero", iv.nu_zero}};
}

inline nlohmann::json report_to_json(const InferenceReport& report, bool include_eta = true) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& rec : report.records) {
        nlohmann::json r = {
            {"ticker", rec.ticker},
            {"j", rec.j},
            {"beta_selected", rec.beta_selected},
            {"interval", interval_to_json(rec.interval)},
            {"p_value", rec.p_value},
            {"ci", {rec.ci.first, rec.ci.second}},
            {"retained", rec.retained},
        };
        if (include_eta) {
            nlohmann::json eta = nlohmann::json::array();
            for (Eigen::Index t = 0; t < rec.eta.size(); ++t) eta.push_back(rec.eta[t]);
            r["eta"] = std::move(eta);
        }
        records.push_back(std::move(r));
    }
    const auto& d = report.diagnostics;
    return {
        {"records", std::move(records)},
        {"p_selected", report.p_selected},
        {"p_retained", report.p_retained},
        {"lambda", report.lambda},
        {"alpha", report.alpha},
        {"sigma2", report.sigma2},
        {"diagnostics",
         {{"lasso_iterations", d.lasso_iterations},
          {"lasso_converged", d.lasso_converged},
          {"kkt_max_violation", d.kkt_max_violation},
          {"membership_violation", d.membership_violation},
          {"polyhedron_rows", d.polyhedron_rows},
          {"critical_lambda", d.critical_lambda},
          {"sigma2_dof", d.sigma2_dof},
          {"sigma2_floored", d.sigma2_floored},
          {"warnings", d.warnings}}},
    };
}

/// One row per selected coefficient: ticker, beta, p_value, ci_lo, ci_hi, retained.
inline void write_coefficients_csv(std::ostream& out, const InferenceReport& report) {
    csv::write_row(out, {"ticker", "beta", "p_value", "ci_lo", "ci_hi", "retained"});
    for (const auto& rec : report.records)
        csv::write_row(out, {rec.ticker, format_double(rec.beta_selected), format_double(rec.p_value),
                             format_double(rec.ci.first), format_double(rec.ci.second),
                             rec.retained ? "1" : "0"});
}

/// Confidence-interval plot data: ticker, beta, ci_lo, ci_hi.
inline void write_ci_csv(std::ostream& out, const InferenceReport& report) {
    csv::write_row(out, {"ticker", "beta", "ci_lo", "ci_hi"});
    for (const auto& rec : report.records)
        csv::write_row(out, {rec.ticker, format_double(rec.beta_selected),
                             format_double(rec.ci.first), format_double(rec.ci.second)});
}

} // namespace lassotrack
