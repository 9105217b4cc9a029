#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdlib>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "lassotrack/csv.hpp"
#include "lassotrack/errors.hpp"

namespace lassotrack {

// Rectangular panel of positive close prices: every retained ticker has a
// price on every date, dates strictly increasing.
struct PricePanel {
    std::vector<std::string> dates;    // ISO-8601, ascending
    std::vector<std::string> tickers;  // ascending, unique
    Eigen::MatrixXd prices;            // dates.size() × tickers.size()

    Eigen::Index raw_rows() const { return prices.rows(); }
    Eigen::Index raw_cols() const { return prices.cols(); }
};

// Per-period simple returns X (T × p) with an aligned benchmark series r_b.
// r_b may be empty until a benchmark is attached.
struct ReturnsPanel {
    Eigen::MatrixXd X;
    Eigen::VectorXd r_b;
    std::vector<std::string> tickers;
    std::vector<std::string> dates;  // one per return row

    Eigen::Index T() const { return X.rows(); }
    Eigen::Index p() const { return X.cols(); }
};

// n contiguous, disjoint blocks of m rows each into the rows of a ReturnsPanel.
struct EventBlocks {
    int n = 0;
    int m = 0;
    int offset = 0;
    std::vector<std::pair<int, int>> ranges;  // half-open [first, second)
};

struct CsvSchema {
    std::string date_col = "date";
    std::string ticker_col = "ticker";
    std::string close_col = "close";
};

struct DroppedTicker {
    std::string ticker;
    std::string reason;
};

struct LoadResult {
    PricePanel panel;
    std::vector<DroppedTicker> drops;
};

namespace detail {

inline bool valid_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (s[i] < '0' || s[i] > '9') return false;
    const int month = (s[5] - '0') * 10 + (s[6] - '0');
    const int day = (s[8] - '0') * 10 + (s[9] - '0');
    return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

inline double parse_price(const std::string& s, std::size_t row_number) {
    if (s.empty()) throw io_error("malformed row " + std::to_string(row_number) + ": empty price");
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size())
        throw io_error("malformed row " + std::to_string(row_number) + ": unparseable price '" + s + "'");
    return v;
}

inline std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw io_error("CSV header is missing required column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

} // namespace detail

// Loads a long-format (date, ticker, close) CSV into a complete rectangle.
// Tickers missing any date of the panel window are dropped and reported;
// duplicates and non-positive prices are hard errors.
inline LoadResult load_prices(std::istream& in, const CsvSchema& schema = {}) {
    const csv::Table table = csv::read_table(in);
    const std::size_t di = detail::column_index(table.header, schema.date_col);
    const std::size_t ti = detail::column_index(table.header, schema.ticker_col);
    const std::size_t ci = detail::column_index(table.header, schema.close_col);

    std::map<std::string, std::map<std::string, double>> by_ticker;  // ticker → date → price
    std::vector<std::string> date_list;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t row_number = r + 2;  // 1-based, after the header
        const std::string& date = row[di];
        const std::string& ticker = row[ti];
        if (!detail::valid_iso_date(date))
            throw io_error("malformed row " + std::to_string(row_number) + ": bad date '" + date +
                           "' (expected yyyy-mm-dd)");
        if (ticker.empty())
            throw io_error("malformed row " + std::to_string(row_number) + ": empty ticker");
        const double price = detail::parse_price(row[ci], row_number);
        if (!(price > 0.0))
            throw io_error("non-positive price " + row[ci] + " at row " + std::to_string(row_number) +
                           " (" + ticker + ", " + date + ")");
        auto& series = by_ticker[ticker];
        if (!series.emplace(date, price).second)
            throw io_error("duplicate (date, ticker) pair at row " + std::to_string(row_number) + " (" +
                           ticker + ", " + date + ")");
        date_list.push_back(date);
    }

    std::sort(date_list.begin(), date_list.end());
    date_list.erase(std::unique(date_list.begin(), date_list.end()), date_list.end());
    if (date_list.empty()) throw io_error("empty panel: no data rows");

    LoadResult result;
    result.panel.dates = date_list;
    for (const auto& [ticker, series] : by_ticker) {
        if (series.size() == date_list.size()) {
            result.panel.tickers.push_back(ticker);
        } else {
            result.drops.push_back({ticker, "missing " + std::to_string(date_list.size() - series.size()) +
                                                " of " + std::to_string(date_list.size()) + " dates"});
        }
    }
    if (result.panel.tickers.empty()) throw io_error("empty panel after cleaning: every ticker dropped");

    result.panel.prices.resize(static_cast<Eigen::Index>(date_list.size()),
                               static_cast<Eigen::Index>(result.panel.tickers.size()));
    for (std::size_t j = 0; j < result.panel.tickers.size(); ++j) {
        const auto& series = by_ticker[result.panel.tickers[j]];
        Eigen::Index t = 0;
        for (const auto& date : date_list)
            result.panel.prices(t++, static_cast<Eigen::Index>(j)) = series.at(date);
    }
    return result;
}

/// Simple returns X[t][j] = prices[t+1][j]/prices[t][j] − 1; no benchmark yet.
inline ReturnsPanel compute_returns(const PricePanel& panel) {
    if (panel.raw_rows() < 2) throw io_error("compute_returns: need at least two price rows");
    ReturnsPanel out;
    out.tickers = panel.tickers;
    out.dates.assign(panel.dates.begin() + 1, panel.dates.end());
    out.X = panel.prices.bottomRows(panel.raw_rows() - 1).array() /
                panel.prices.topRows(panel.raw_rows() - 1).array() -
            1.0;
    return out;
}

enum class BenchmarkMode { AutoDetect, IndexColumn, EqualWeight, ExternalFile };

struct BenchmarkSpec {
    BenchmarkMode mode = BenchmarkMode::AutoDetect;
    std::string ticker;  // IndexColumn
    std::string path;    // ExternalFile
};

// CLI syntax: "auto", "equal-weight", "index:<TICKER>", or a path to a CSV
// with columns date + (return | close).
inline BenchmarkSpec parse_benchmark_spec(const std::string& text) {
    BenchmarkSpec spec;
    if (text.empty() || text == "auto") {
        spec.mode = BenchmarkMode::AutoDetect;
    } else if (text == "equal-weight") {
        spec.mode = BenchmarkMode::EqualWeight;
    } else if (text.rfind("index:", 0) == 0) {
        spec.mode = BenchmarkMode::IndexColumn;
        spec.ticker = text.substr(6);
        if (spec.ticker.empty()) throw io_error("benchmark spec 'index:' needs a ticker");
    } else {
        spec.mode = BenchmarkMode::ExternalFile;
        spec.path = text;
    }
    return spec;
}

/// Benchmark return series from the panel itself: a designated index column,
/// or the cross-sectional mean of all asset returns per date.
inline Eigen::VectorXd build_benchmark(const PricePanel& panel, const BenchmarkSpec& spec) {
    const ReturnsPanel returns = compute_returns(panel);
    switch (spec.mode) {
        case BenchmarkMode::IndexColumn: {
            const auto it = std::find(panel.tickers.begin(), panel.tickers.end(), spec.ticker);
            if (it == panel.tickers.end())
                throw io_error("benchmark ticker '" + spec.ticker + "' not present in the panel");
            return returns.X.col(it - panel.tickers.begin());
        }
        case BenchmarkMode::EqualWeight:
            return returns.X.rowwise().mean();
        default:
            throw std::invalid_argument("build_benchmark: unresolved benchmark mode");
    }
}

// Benchmark series from an external CSV: a `return` column is used as-is, a
// `close` column is converted to returns first. Every panel return date must
// be covered; extra file dates are ignored.
inline Eigen::VectorXd load_benchmark_file(std::istream& in,
                                           const std::vector<std::string>& return_dates) {
    const csv::Table table = csv::read_table(in);
    const std::size_t di = detail::column_index(table.header, "date");
    const bool has_return =
        std::find(table.header.begin(), table.header.end(), "return") != table.header.end();
    const std::size_t vi = has_return ? detail::column_index(table.header, "return")
                                      : detail::column_index(table.header, "close");

    std::map<std::string, double> values;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::size_t row_number = r + 2;
        const std::string& date = table.rows[r][di];
        if (!detail::valid_iso_date(date))
            throw io_error("benchmark file: bad date '" + date + "' at row " + std::to_string(row_number));
        char* end = nullptr;
        const std::string& text = table.rows[r][vi];
        const double v = std::strtod(text.c_str(), &end);
        if (text.empty() || end != text.c_str() + text.size())
            throw io_error("benchmark file: unparseable value '" + text + "' at row " +
                           std::to_string(row_number));
        if (!values.emplace(date, v).second)
            throw io_error("benchmark file: duplicate date " + date);
    }

    std::map<std::string, double> returns;
    if (has_return) {
        returns = std::move(values);
    } else {
        const double* prev = nullptr;
        for (const auto& [date, close] : values) {
            if (!(close > 0.0)) throw io_error("benchmark file: non-positive close on " + date);
            if (prev) returns[date] = close / *prev - 1.0;
            prev = &close;
        }
    }

    Eigen::VectorXd r_b(static_cast<Eigen::Index>(return_dates.size()));
    for (std::size_t t = 0; t < return_dates.size(); ++t) {
        const auto it = returns.find(return_dates[t]);
        if (it == returns.end())
            throw io_error("benchmark file does not cover panel date " + return_dates[t]);
        r_b[static_cast<Eigen::Index>(t)] = it->second;
    }
    return r_b;
}

struct AssembledPanel {
    ReturnsPanel panel;
    std::string benchmark_description;
    std::vector<std::string> warnings;
};

namespace detail {
inline const std::vector<std::string>& known_index_tickers() {
    static const std::vector<std::string> names = {"SPX", "^GSPC", "GSPC", "SP500"};
    return names;
}
} // namespace detail

// Full ingest: returns + benchmark. In index-column mode the benchmark ticker
// is removed from the predictor columns so the index never predicts itself.
// AutoDetect prefers a recognizable index column and otherwise falls back to
// equal weighting with a warning.
inline AssembledPanel make_returns_panel(const PricePanel& panel, BenchmarkSpec spec,
                                         std::istream* benchmark_stream = nullptr) {
    AssembledPanel out;
    if (spec.mode == BenchmarkMode::AutoDetect) {
        spec.mode = BenchmarkMode::EqualWeight;
        for (const auto& name : detail::known_index_tickers()) {
            if (std::find(panel.tickers.begin(), panel.tickers.end(), name) != panel.tickers.end()) {
                spec.mode = BenchmarkMode::IndexColumn;
                spec.ticker = name;
                break;
            }
        }
        if (spec.mode == BenchmarkMode::EqualWeight)
            out.warnings.push_back(
                "no index column found; benchmark falls back to the equal-weight cross-sectional mean");
    }

    const ReturnsPanel returns = compute_returns(panel);
    out.panel = returns;
    switch (spec.mode) {
        case BenchmarkMode::IndexColumn: {
            out.panel.r_b = build_benchmark(panel, spec);
            const auto it = std::find(returns.tickers.begin(), returns.tickers.end(), spec.ticker);
            const Eigen::Index drop = it - returns.tickers.begin();
            out.panel.X.resize(returns.X.rows(), returns.X.cols() - 1);
            out.panel.tickers.clear();
            Eigen::Index c = 0;
            for (Eigen::Index j = 0; j < returns.X.cols(); ++j) {
                if (j == drop) continue;
                out.panel.X.col(c++) = returns.X.col(j);
                out.panel.tickers.push_back(returns.tickers[static_cast<std::size_t>(j)]);
            }
            out.benchmark_description = "index column " + spec.ticker;
            break;
        }
        case BenchmarkMode::EqualWeight:
            out.panel.r_b = build_benchmark(panel, spec);
            out.benchmark_description = "equal-weight mean of " + std::to_string(panel.tickers.size()) +
                                        " constituents";
            break;
        case BenchmarkMode::ExternalFile: {
            if (benchmark_stream == nullptr)
                throw std::invalid_argument("make_returns_panel: external benchmark needs a stream");
            out.panel.r_b = load_benchmark_file(*benchmark_stream, returns.dates);
            out.benchmark_description = "external series " + spec.path;
            break;
        }
        default:
            throw std::invalid_argument("make_returns_panel: unresolved benchmark mode");
    }
    if (out.panel.p() < 1) throw io_error("panel has no predictor columns after benchmark handling");
    return out;
}

/// n disjoint consecutive blocks of m rows starting at `offset`.
inline EventBlocks make_events(Eigen::Index total_rows, int n, int m, int offset = 0) {
    if (n < 1 || m < 1 || offset < 0)
        throw std::invalid_argument("make_events: require n >= 1, m >= 1, offset >= 0");
    if (static_cast<long long>(offset) + static_cast<long long>(n) * m > total_rows)
        throw io_error("make_events: insufficient rows (need offset " + std::to_string(offset) + " + " +
                       std::to_string(n) + "*" + std::to_string(m) + " <= " + std::to_string(total_rows) +
                       ")");
    EventBlocks blocks;
    blocks.n = n;
    blocks.m = m;
    blocks.offset = offset;
    for (int i = 0; i < n; ++i)
        blocks.ranges.emplace_back(offset + i * m, offset + (i + 1) * m);
    return blocks;
}

inline EventBlocks make_events(const ReturnsPanel& panel, int n, int m, int offset = 0) {
    return make_events(panel.T(), n, m, offset);
}

inline void write_drop_report(std::ostream& out, const std::vector<DroppedTicker>& drops) {
    csv::write_row(out, {"ticker", "reason"});
    for (const auto& d : drops) csv::write_row(out, {d.ticker, d.reason});
}

} // namespace lassotrack
