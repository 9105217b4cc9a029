#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lassotrack/data.hpp"
#include "lassotrack/errors.hpp"
#include "lassotrack/inference.hpp"
#include "lassotrack/parallel.hpp"
#include "lassotrack/report_io.hpp"
#include "lassotrack/tracking.hpp"

namespace lassotrack {

// One experiment configuration; defaults are the fixed parameters used across
// every case (alpha 0.05, tol 1e-6, max_iter 100000).
struct ExperimentCase {
    std::string case_id = "run";
    double lambda = 0.0;
    int n = 1;
    int m = 0;  // 0 → one block spanning all rows after the offset
    int offset = 0;
    double alpha = 0.05;
    double tol = 1e-6;
    int max_iter = 100000;
    std::uint64_t seed = 1;

    void validate() const {
        if (case_id.empty()) throw io_error("experiment case: empty case_id");
        if (!(lambda > 0.0)) throw io_error("case " + case_id + ": require lambda > 0");
        if (!(alpha > 0.0 && alpha < 1.0)) throw io_error("case " + case_id + ": require 0 < alpha < 1");
        if (n < 1 || m < 0 || offset < 0) throw io_error("case " + case_id + ": bad event shape");
        if (!(tol > 0.0) || max_iter < 1) throw io_error("case " + case_id + ": bad solver settings");
    }
};

struct RunOptions {
    int threads = 1;
    bool restrict_to_events = false;   // select/infer on the event window instead of the full series
    bool ete_on_event_window = false;  // tracking metrics on the event window instead of the full series
    Sigma2Mode sigma2_mode = Sigma2Mode::PooledRows;
    CsvSchema schema;
    BenchmarkSpec benchmark;
    bool include_eta_json = true;
};

struct LoadedData {
    AssembledPanel assembled;
    std::vector<DroppedTicker> drops;
    std::string input_path;
};

struct SweepRow {
    std::string case_id;
    double lambda = 0.0;
    int n = 0;
    int m = 0;
    double corr = std::numeric_limits<double>::quiet_NaN();
    double ete = std::numeric_limits<double>::quiet_NaN();
    int p_retained = 0;
    int p_selected = 0;
    std::string status = "ok";
};

struct CaseResult {
    ExperimentCase config;
    EventBlocks events;
    InferenceReport report;
    Eigen::VectorXd tracked;  // X·beta on the tracking window
    std::vector<std::string> tracking_dates;
    Eigen::VectorXd tracking_benchmark;
    SweepRow row;
    std::vector<std::string> notices;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    std::vector<std::string> case_errors;  // "<case_id>: <stage>: <message>"
};

namespace detail {

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const io_error& e) {
        throw io_error("stage " + stage + ": " + e.what());
    } catch (const numeric_error& e) {
        throw numeric_error("stage " + stage + ": " + e.what());
    } catch (const std::exception& e) {
        throw numeric_error("stage " + stage + ": " + e.what());
    }
}

inline ReturnsPanel slice_rows(const ReturnsPanel& panel, int first, int count) {
    ReturnsPanel out;
    out.X = panel.X.middleRows(first, count);
    out.r_b = panel.r_b.segment(first, count);
    out.tickers = panel.tickers;
    out.dates.assign(panel.dates.begin() + first, panel.dates.begin() + first + count);
    return out;
}

inline EventBlocks rebase_events(const EventBlocks& events) {
    EventBlocks out = events;
    out.offset = 0;
    out.ranges.clear();
    for (int i = 0; i < events.n; ++i)
        out.ranges.emplace_back(i * events.m, (i + 1) * events.m);
    return out;
}

} // namespace detail

inline LoadedData load_input(const std::string& input_path, const RunOptions& options) {
    return detail::run_stage("ingest", [&] {
        std::ifstream in(input_path);
        if (!in) throw io_error("cannot open input file '" + input_path + "'");
        LoadedData data;
        data.input_path = input_path;
        LoadResult loaded = load_prices(in, options.schema);
        data.drops = std::move(loaded.drops);
        if (options.benchmark.mode == BenchmarkMode::ExternalFile) {
            std::ifstream bench(options.benchmark.path);
            if (!bench) throw io_error("cannot open benchmark file '" + options.benchmark.path + "'");
            data.assembled = make_returns_panel(loaded.panel, options.benchmark, &bench);
        } else {
            data.assembled = make_returns_panel(loaded.panel, options.benchmark);
        }
        return data;
    });
}

// ingest → events → selective inference → tracking, without touching the
// filesystem. Selection runs on the full series unless restrict_to_events is
// set; the event blocks always exist (they validate n·m against the data and
// drive the optional per-event variance pooling).
inline CaseResult execute_case(const LoadedData& data, const ExperimentCase& config,
                               const RunOptions& options) {
    config.validate();
    const ReturnsPanel& full = data.assembled.panel;

    CaseResult result;
    result.config = config;
    result.notices = data.assembled.warnings;

    result.events = detail::run_stage("events", [&] {
        const int m = config.m > 0 ? config.m
                                   : static_cast<int>((full.T() - config.offset) / config.n);
        return make_events(full, config.n, m, config.offset);
    });

    const bool restricted = options.restrict_to_events;
    const ReturnsPanel window =
        restricted ? detail::slice_rows(full, result.events.offset, result.events.n * result.events.m)
                   : full;

    result.report = detail::run_stage("inference", [&] {
        PosiOptions opts;
        opts.tol = config.tol;
        opts.max_iter = config.max_iter;
        opts.threads = options.threads;
        opts.sigma2_mode = options.sigma2_mode;
        if (options.sigma2_mode == Sigma2Mode::PerEvent)
            opts.events = restricted ? detail::rebase_events(result.events) : result.events;
        return run_exact_posi(window, config.lambda, config.alpha, opts);
    });

    detail::run_stage("tracking", [&] {
        const ReturnsPanel track_window =
            options.ete_on_event_window
                ? detail::slice_rows(full, result.events.offset, result.events.n * result.events.m)
                : full;
        result.tracked = track_window.X * result.report.lasso_beta;
        result.tracking_dates = track_window.dates;
        result.tracking_benchmark = track_window.r_b;
        result.row.ete = ete(track_window.X, result.report.lasso_beta, track_window.r_b);
        try {
            result.row.corr = pearson_corr(result.tracked, track_window.r_b);
        } catch (const numeric_error&) {
            result.notices.push_back("tracking correlation undefined (constant tracked series)");
        }
        return 0;
    });

    if (result.report.p_selected == 0)
        result.notices.push_back("no selection: lambda " + format_double(config.lambda) +
                                 " is at or above the critical value " +
                                 format_double(result.report.diagnostics.critical_lambda));

    result.row.case_id = config.case_id;
    result.row.lambda = config.lambda;
    result.row.n = result.events.n;
    result.row.m = result.events.m;
    result.row.p_retained = result.report.p_retained;
    result.row.p_selected = result.report.p_selected;
    return result;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    csv::write_row(out, {"case", "lambda", "n", "m", "corr", "ete", "p_p", "p", "status"});
    for (const auto& row : rows)
        csv::write_row(out, {row.case_id, format_double(row.lambda), std::to_string(row.n),
                             std::to_string(row.m), format_double(row.corr), format_double(row.ete),
                             std::to_string(row.p_retained), std::to_string(row.p_selected),
                             row.status});
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open output file '" + path.string() + "'");
    return out;
}

inline nlohmann::json case_config_json(const ExperimentCase& c) {
    return {{"case_id", c.case_id}, {"lambda", c.lambda},   {"n", c.n},
            {"m", c.m},             {"offset", c.offset},   {"alpha", c.alpha},
            {"tol", c.tol},         {"max_iter", c.max_iter}, {"seed", c.seed}};
}

} // namespace detail

// summary.csv, coefficients.csv, tracking.csv, ci.csv, diagnostics.json
inline void write_case_outputs(const CaseResult& result, const LoadedData& data,
                               const std::filesystem::path& out_dir, const RunOptions& options) {
    detail::run_stage("write", [&] {
        std::filesystem::create_directories(out_dir);

        auto summary = detail::open_output(out_dir / "summary.csv");
        write_summary_csv(summary, {result.row});

        auto coeffs = detail::open_output(out_dir / "coefficients.csv");
        write_coefficients_csv(coeffs, result.report);

        auto ci = detail::open_output(out_dir / "ci.csv");
        write_ci_csv(ci, result.report);

        auto tracking = detail::open_output(out_dir / "tracking.csv");
        csv::write_row(tracking, {"date", "benchmark_return", "tracked_return"});
        for (Eigen::Index t = 0; t < result.tracked.size(); ++t)
            csv::write_row(tracking, {result.tracking_dates[static_cast<std::size_t>(t)],
                                      format_double(result.tracking_benchmark[t]),
                                      format_double(result.tracked[t])});

        if (!data.drops.empty()) {
            auto drops = detail::open_output(out_dir / "dropped_tickers.csv");
            write_drop_report(drops, data.drops);
        }

        nlohmann::json diag = {
            {"case", detail::case_config_json(result.config)},
            {"input", data.input_path},
            {"benchmark", data.assembled.benchmark_description},
            {"dropped_tickers", data.drops.size()},
            {"notices", result.notices},
            {"summary",
             {{"corr", result.row.corr},
              {"ete", result.row.ete},
              {"p_p", result.row.p_retained},
              {"p", result.row.p_selected}}},
            {"report", report_to_json(result.report, options.include_eta_json)},
        };
        auto out = detail::open_output(out_dir / "diagnostics.json");
        out << diag.dump(2) << '\n';
        return 0;
    });
}

inline CaseResult run_case(const std::string& input_path, const ExperimentCase& config,
                           const RunOptions& options, const std::filesystem::path& out_dir) {
    const LoadedData data = load_input(input_path, options);
    const CaseResult result = execute_case(data, config, options);
    write_case_outputs(result, data, out_dir, options);
    return result;
}

// ---------------------------------------------------------------------------
// Config files: line-oriented key = value with one [case <id>] section per
// case; keys before the first section set defaults for every case.

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

struct ConfigLine {
    std::size_t number;
    std::string section;  // empty before any section header
    std::string key;
    std::string value;
};

inline std::vector<ConfigLine> parse_config_lines(std::istream& in) {
    std::vector<ConfigLine> lines;
    std::string raw;
    std::string section;
    std::size_t number = 0;
    while (std::getline(in, raw)) {
        ++number;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        const auto comment = raw.find_first_of("#;");
        std::string line = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw io_error("config line " + std::to_string(number) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw io_error("config line " + std::to_string(number) + ": empty section name");
            lines.push_back({number, section, "", ""});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw io_error("config line " + std::to_string(number) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw io_error("config line " + std::to_string(number) + ": empty key or value");
        lines.push_back({number, section, key, value});
    }
    return lines;
}

inline double to_double(const ConfigLine& l) {
    char* end = nullptr;
    const double v = std::strtod(l.value.c_str(), &end);
    if (end != l.value.c_str() + l.value.size())
        throw io_error("config line " + std::to_string(l.number) + ": bad number '" + l.value + "'");
    return v;
}

inline long long to_int(const ConfigLine& l) {
    const double v = to_double(l);
    if (v != std::floor(v))
        throw io_error("config line " + std::to_string(l.number) + ": expected integer, got '" +
                       l.value + "'");
    return static_cast<long long>(v);
}

inline bool to_bool(const ConfigLine& l) {
    if (l.value == "true" || l.value == "1") return true;
    if (l.value == "false" || l.value == "0") return false;
    throw io_error("config line " + std::to_string(l.number) + ": expected true/false");
}

inline void apply_case_key(ExperimentCase& c, const ConfigLine& l) {
    if (l.key == "case_id") c.case_id = l.value;
    else if (l.key == "lambda") c.lambda = to_double(l);
    else if (l.key == "n") c.n = static_cast<int>(to_int(l));
    else if (l.key == "m") c.m = static_cast<int>(to_int(l));
    else if (l.key == "offset") c.offset = static_cast<int>(to_int(l));
    else if (l.key == "alpha") c.alpha = to_double(l);
    else if (l.key == "tol") c.tol = to_double(l);
    else if (l.key == "max_iter") c.max_iter = static_cast<int>(to_int(l));
    else if (l.key == "seed") c.seed = static_cast<std::uint64_t>(to_int(l));
    else
        throw io_error("config line " + std::to_string(l.number) + ": unknown key '" + l.key + "'");
}

} // namespace detail

inline std::vector<ExperimentCase> parse_sweep_config(std::istream& in) {
    const auto lines = detail::parse_config_lines(in);
    ExperimentCase defaults;
    std::vector<ExperimentCase> cases;
    std::map<std::string, bool> seen_section;

    for (const auto& line : lines) {
        if (line.key.empty()) {  // section header
            if (line.section.rfind("case", 0) != 0)
                throw io_error("config line " + std::to_string(line.number) +
                               ": unknown section '" + line.section + "' (expected [case <id>])");
            std::string id = detail::trim(line.section.substr(4));
            if (id.empty()) id = std::to_string(cases.size() + 1);
            if (seen_section[id])
                throw io_error("duplicate case_id '" + id + "' in sweep config");
            seen_section[id] = true;
            ExperimentCase c = defaults;
            c.case_id = id;
            cases.push_back(std::move(c));
        } else if (cases.empty()) {
            detail::apply_case_key(defaults, line);
        } else {
            detail::apply_case_key(cases.back(), line);
        }
    }
    if (cases.empty()) throw io_error("sweep config defines no cases");
    std::map<std::string, bool> seen_id;
    for (const auto& c : cases) {
        c.validate();
        if (seen_id[c.case_id]) throw io_error("duplicate case_id '" + c.case_id + "' in sweep config");
        seen_id[c.case_id] = true;
    }
    return cases;
}

// Runs every case against one loaded dataset. Case failures are recorded in
// their summary row; the remaining cases still run. With threads > 1 the
// cases run concurrently (each case then uses a single inner thread) and each
// case writes only to its own subdirectory.
inline SweepReport run_sweep(const std::string& input_path, const std::vector<ExperimentCase>& cases,
                             const RunOptions& options, const std::filesystem::path& out_root) {
    const LoadedData data = load_input(input_path, options);
    std::filesystem::create_directories(out_root);

    const int n_cases = static_cast<int>(cases.size());
    std::vector<SweepRow> rows(cases.size());
    std::vector<std::string> errors(cases.size());

    RunOptions case_options = options;
    if (options.threads > 1) case_options.threads = 1;

    parallel_for(n_cases, options.threads, [&](int i) {
        const auto iu = static_cast<std::size_t>(i);
        const ExperimentCase& config = cases[iu];
        try {
            const CaseResult result = execute_case(data, config, case_options);
            write_case_outputs(result, data, out_root / ("case_" + config.case_id), case_options);
            rows[iu] = result.row;
        } catch (const std::exception& e) {
            rows[iu].case_id = config.case_id;
            rows[iu].lambda = config.lambda;
            rows[iu].n = config.n;
            rows[iu].m = config.m;
            rows[iu].status = std::string("error: ") + e.what();
            errors[iu] = config.case_id + ": " + e.what();
        }
    });

    SweepReport report;
    report.rows = rows;
    for (const auto& e : errors)
        if (!e.empty()) report.case_errors.push_back(e);

    detail::run_stage("write", [&] {
        auto summary = detail::open_output(out_root / "summary.csv");
        write_summary_csv(summary, report.rows);
        nlohmann::json diag = {{"input", data.input_path},
                               {"benchmark", data.assembled.benchmark_description},
                               {"cases", nlohmann::json::array()},
                               {"errors", report.case_errors}};
        for (const auto& c : cases) diag["cases"].push_back(detail::case_config_json(c));
        auto out = detail::open_output(out_root / "diagnostics.json");
        out << diag.dump(2) << '\n';
        return 0;
    });
    return report;
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationConfig {
    SyntheticScenario scenario;
    int replications = 2000;
    std::uint64_t seed = 1;
};

inline CalibrationConfig parse_calibration_config(std::istream& in) {
    CalibrationConfig cfg;
    for (const auto& line : detail::parse_config_lines(in)) {
        if (line.key.empty()) {
            if (line.section != "calibration")
                throw io_error("config line " + std::to_string(line.number) +
                               ": unknown section '" + line.section + "' (expected [calibration])");
            continue;
        }
        if (line.key == "t") cfg.scenario.T = static_cast<int>(detail::to_int(line));
        else if (line.key == "p") cfg.scenario.p = static_cast<int>(detail::to_int(line));
        else if (line.key == "sigma") cfg.scenario.sigma = detail::to_double(line);
        else if (line.key == "lambda") cfg.scenario.lambda = detail::to_double(line);
        else if (line.key == "alpha") cfg.scenario.alpha = detail::to_double(line);
        else if (line.key == "signal_count") cfg.scenario.signal_count = static_cast<int>(detail::to_int(line));
        else if (line.key == "signal_value") cfg.scenario.signal_value = detail::to_double(line);
        else if (line.key == "tol") cfg.scenario.tol = detail::to_double(line);
        else if (line.key == "max_iter") cfg.scenario.max_iter = static_cast<int>(detail::to_int(line));
        else if (line.key == "known_sigma") cfg.scenario.known_sigma = detail::to_bool(line);
        else if (line.key == "replications") cfg.replications = static_cast<int>(detail::to_int(line));
        else if (line.key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::to_int(line));
        else
            throw io_error("config line " + std::to_string(line.number) + ": unknown key '" +
                           line.key + "'");
    }
    return cfg;
}

/// calibration.json (KS distance, coverage) plus pvalues.csv for histograms.
inline CalibrationReport run_calibration(const CalibrationConfig& cfg, int threads,
                                         const std::filesystem::path& out_dir) {
    if (cfg.replications < 100)
        throw io_error("calibration config: require replications >= 100, got " +
                       std::to_string(cfg.replications));
    const CalibrationReport report = detail::run_stage("calibrate", [&] {
        return calibrate_monte_carlo(cfg.scenario, cfg.replications, cfg.seed, threads);
    });
    detail::run_stage("write", [&] {
        std::filesystem::create_directories(out_dir);
        nlohmann::json j = {
            {"scenario",
             {{"t", cfg.scenario.T},
              {"p", cfg.scenario.p},
              {"sigma", cfg.scenario.sigma},
              {"lambda", cfg.scenario.lambda},
              {"alpha", cfg.scenario.alpha},
              {"signal_count", cfg.scenario.signal_count},
              {"signal_value", cfg.scenario.signal_value},
              {"known_sigma", cfg.scenario.known_sigma}}},
            {"replications", report.replications},
            {"seed", report.seed},
            {"reps_with_selection", report.reps_with_selection},
            {"total_selected", report.total_selected},
            {"null_pvalues", report.null_pvalues.size()},
            {"ks_distance", report.ks_distance},
            {"ci_count", report.ci_count},
            {"ci_coverage", report.coverage()},
            {"naive_count", report.naive_count},
            {"naive_coverage", report.naive_coverage()},
            {"warnings", report.warnings},
        };
        auto out = detail::open_output(out_dir / "calibration.json");
        out << j.dump(2) << '\n';

        auto pvals = detail::open_output(out_dir / "pvalues.csv");
        csv::write_row(pvals, {"replication", "column", "p_value"});
        for (std::size_t i = 0; i < report.null_pvalues.size(); ++i)
            csv::write_row(pvals, {std::to_string(report.pvalue_origin[i].first),
                                   std::to_string(report.pvalue_origin[i].second),
                                   format_double(report.null_pvalues[i])});
        return 0;
    });
    return report;
}

} // namespace lassotrack
