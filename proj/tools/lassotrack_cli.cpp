// Command-line harness: single cases, Table-style sweeps, and Monte-Carlo
// calibration runs. Exit codes: 0 success, 1 numerical/inference failure,
// 2 I/O or config failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lassotrack/experiment.hpp"

namespace {

struct CommonFlags {
    std::string input;
    std::string benchmark = "auto";
    std::string out_dir = "out";
    int threads = 1;
    lassotrack::CsvSchema schema;
    bool restrict_to_events = false;
    std::string sigma2_mode = "pooled";
    std::string ete_window = "full";
    bool no_eta = false;
};

void add_schema_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--date-col", flags.schema.date_col, "CSV column holding ISO dates");
    cmd->add_option("--ticker-col", flags.schema.ticker_col, "CSV column holding ticker names");
    cmd->add_option("--close-col", flags.schema.close_col, "CSV column holding close prices");
}

void add_run_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--benchmark", flags.benchmark,
                    "benchmark source: auto | equal-weight | index:<TICKER> | <file.csv>");
    cmd->add_option("--out", flags.out_dir, "output directory");
    cmd->add_option("--threads", flags.threads, "worker threads");
    cmd->add_flag("--restrict-to-events", flags.restrict_to_events,
                  "run selection and inference on the event window only");
    cmd->add_option("--sigma2-mode", flags.sigma2_mode, "noise variance estimate: pooled | per-event")
        ->check(CLI::IsMember({"pooled", "per-event"}));
    cmd->add_option("--ete-window", flags.ete_window, "tracking metrics window: full | events")
        ->check(CLI::IsMember({"full", "events"}));
    cmd->add_flag("--no-eta", flags.no_eta, "omit contrast vectors from diagnostics.json");
    add_schema_flags(cmd, flags);
}

lassotrack::RunOptions make_options(const CommonFlags& flags) {
    lassotrack::RunOptions options;
    options.threads = flags.threads;
    options.schema = flags.schema;
    options.benchmark = lassotrack::parse_benchmark_spec(flags.benchmark);
    options.restrict_to_events = flags.restrict_to_events;
    options.sigma2_mode = flags.sigma2_mode == "per-event" ? lassotrack::Sigma2Mode::PerEvent
                                                           : lassotrack::Sigma2Mode::PooledRows;
    options.ete_on_event_window = flags.ete_window == "events";
    options.include_eta_json = !flags.no_eta;
    return options;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse index tracking with exact post-selection inference"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    lassotrack::ExperimentCase run_case_cfg;
    auto* run_cmd = app.add_subcommand("run", "run one case and write its report bundle");
    run_cmd->add_option("--input", run_flags.input, "long-format price CSV")->required();
    run_cmd->add_option("--lambda", run_case_cfg.lambda, "Lasso regularization weight")->required();
    run_cmd->add_option("--alpha", run_case_cfg.alpha, "significance level");
    run_cmd->add_option("--n-events", run_case_cfg.n, "number of event blocks");
    run_cmd->add_option("--m-per-event", run_case_cfg.m, "rows per event block (0 = span all rows)");
    run_cmd->add_option("--offset", run_case_cfg.offset, "first row of the event window");
    run_cmd->add_option("--tol", run_case_cfg.tol, "solver convergence tolerance");
    run_cmd->add_option("--max-iter", run_case_cfg.max_iter, "solver sweep cap");
    run_cmd->add_option("--seed", run_case_cfg.seed, "report seed (provenance)");
    run_cmd->add_option("--case-id", run_case_cfg.case_id, "label for the summary row");
    add_run_flags(run_cmd, run_flags);

    CommonFlags sweep_flags;
    std::string sweep_config_path;
    auto* sweep_cmd = app.add_subcommand("sweep", "run every case of a config file");
    sweep_cmd->add_option("--input", sweep_flags.input, "long-format price CSV")->required();
    sweep_cmd->add_option("--config", sweep_config_path, "sweep config file")->required();
    add_run_flags(sweep_cmd, sweep_flags);

    CommonFlags cal_flags;
    std::string cal_config_path;
    int cal_replications = -1;
    long long cal_seed = -1;
    auto* cal_cmd = app.add_subcommand("calibrate", "Monte-Carlo p-value/coverage calibration");
    cal_cmd->add_option("--config", cal_config_path, "calibration config file");
    cal_cmd->add_option("--replications", cal_replications, "override replication count");
    cal_cmd->add_option("--seed", cal_seed, "override master seed");
    cal_cmd->add_option("--out", cal_flags.out_dir, "output directory");
    cal_cmd->add_option("--threads", cal_flags.threads, "worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run_cmd->parsed()) {
            const auto options = make_options(run_flags);
            const auto result =
                lassotrack::run_case(run_flags.input, run_case_cfg, options, run_flags.out_dir);
            std::printf("case %s: p=%d p_p=%d corr=%s ete=%s -> %s\n", result.row.case_id.c_str(),
                        result.row.p_selected, result.row.p_retained,
                        lassotrack::format_double(result.row.corr).c_str(),
                        lassotrack::format_double(result.row.ete).c_str(), run_flags.out_dir.c_str());
            for (const auto& note : result.notices) std::printf("note: %s\n", note.c_str());
        } else if (sweep_cmd->parsed()) {
            const auto options = make_options(sweep_flags);
            std::ifstream cfg(sweep_config_path);
            if (!cfg) throw lassotrack::io_error("cannot open config file '" + sweep_config_path + "'");
            const auto cases = lassotrack::parse_sweep_config(cfg);
            const auto report =
                lassotrack::run_sweep(sweep_flags.input, cases, options, sweep_flags.out_dir);
            for (const auto& row : report.rows)
                std::printf("case %s: p=%d p_p=%d corr=%s ete=%s status=%s\n", row.case_id.c_str(),
                            row.p_selected, row.p_retained,
                            lassotrack::format_double(row.corr).c_str(),
                            lassotrack::format_double(row.ete).c_str(), row.status.c_str());
            if (!report.case_errors.empty()) {
                for (const auto& e : report.case_errors) std::fprintf(stderr, "case error: %s\n", e.c_str());
                return 1;
            }
        } else if (cal_cmd->parsed()) {
            lassotrack::CalibrationConfig cfg;
            if (!cal_config_path.empty()) {
                std::ifstream in(cal_config_path);
                if (!in) throw lassotrack::io_error("cannot open config file '" + cal_config_path + "'");
                cfg = lassotrack::parse_calibration_config(in);
            }
            if (cal_replications >= 0) cfg.replications = cal_replications;
            if (cal_seed >= 0) cfg.seed = static_cast<std::uint64_t>(cal_seed);
            const auto report = lassotrack::run_calibration(cfg, cal_flags.threads, cal_flags.out_dir);
            std::printf("calibration: %d reps, %zu null p-values, KS=%s, coverage=%s, naive=%s\n",
                        report.replications, report.null_pvalues.size(),
                        lassotrack::format_double(report.ks_distance).c_str(),
                        lassotrack::format_double(report.coverage()).c_str(),
                        lassotrack::format_double(report.naive_coverage()).c_str());
        }
    } catch (const lassotrack::io_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
