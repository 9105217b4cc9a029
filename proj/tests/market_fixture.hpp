// Shared synthetic-market fixture for the experiment-level tests and the
// acceptance suite.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lassotrack/random.hpp"

namespace fixture {

inline std::vector<std::string> make_dates(int count) {
    std::vector<std::string> dates;
    int year = 2019, month = 1, day = 1;
    for (int i = 0; i < count; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%04u-%02u-%02u", static_cast<unsigned>(year) % 10000u,
                      static_cast<unsigned>(month) % 100u, static_cast<unsigned>(day) % 100u);
        dates.emplace_back(buf);
        if (++day > 28) {
            day = 1;
            if (++month > 12) {
                month = 1;
                ++year;
            }
        }
    }
    return dates;
}

// Small market: a few constituents plus an SPX index column driven by two of
// them, so a moderate lambda produces a non-trivial sparse selection.
inline std::filesystem::path write_market_csv(const std::filesystem::path& dir, int t_raw = 81,
                                              int assets = 6, std::uint64_t seed = 2024) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path path = dir / "prices.csv";
    lassotrack::Rng rng(seed);
    const auto dates = make_dates(t_raw);

    std::vector<std::vector<double>> returns(static_cast<std::size_t>(assets));
    for (auto& col : returns) {
        col.resize(static_cast<std::size_t>(t_raw - 1));
        for (auto& r : col) r = 0.01 * rng.normal();
    }
    std::vector<double> index_returns(static_cast<std::size_t>(t_raw - 1));
    for (std::size_t t = 0; t < index_returns.size(); ++t)
        index_returns[t] = 0.6 * returns[0][t] + 0.4 * returns[1][t] + 0.001 * rng.normal();

    std::ofstream out(path);
    out << "date,ticker,close\n";
    auto emit_series = [&](const std::string& ticker, const std::vector<double>& rets) {
        double price = 100.0;
        out << dates[0] << ',' << ticker << ',' << price << '\n';
        for (std::size_t t = 0; t < rets.size(); ++t) {
            price *= 1.0 + rets[t];
            out << dates[t + 1] << ',' << ticker << ',' << price << '\n';
        }
    };
    for (int j = 0; j < assets; ++j)
        emit_series("T" + std::to_string(j), returns[static_cast<std::size_t>(j)]);
    emit_series("SPX", index_returns);
    return path;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

} // namespace fixture
