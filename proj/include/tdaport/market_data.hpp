#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tdaport/date.hpp"

namespace tdaport::market {

/// Aligned daily values (prices or simple returns) for a stock universe.
///
/// `values(t, i)` is the value of `tickers[i]` on `dates[t]`. Dates are
/// strictly increasing and every cell is populated.
struct PriceMatrix {
    std::vector<std::string> tickers;
    std::vector<Date> dates;
    Eigen::MatrixXd values;  ///< T x N

    [[nodiscard]] std::size_t rows() const { return dates.size(); }
    [[nodiscard]] std::size_t cols() const { return tickers.size(); }

    /// Column index of `ticker`, or nullopt.
    [[nodiscard]] std::optional<std::size_t> column_of(const std::string& ticker) const;
    /// Column of `ticker` as a vector. Throws if absent.
    [[nodiscard]] std::vector<double> series(const std::string& ticker) const;
    [[nodiscard]] std::vector<double> series(std::size_t column) const;

    /// Submatrix with the listed tickers, in the given order.
    [[nodiscard]] PriceMatrix select(const std::vector<std::string>& keep) const;
    /// Rows [begin, end).
    [[nodiscard]] PriceMatrix slice_rows(std::size_t begin, std::size_t end) const;

    /// First row with date >= d (rows() if none).
    [[nodiscard]] std::size_t lower_bound(Date d) const;

    /// Throws Error(InvalidArgument) if a structural invariant is broken.
    void validate() const;
};

struct DateRange {
    Date first;
    Date last;
};

struct PeriodSplit {
    Date train_start;
    Date train_end;
    Date test_start;
    Date test_end;
};

struct DroppedTicker {
    std::string ticker;
    double missing_fraction = 0.0;
};

struct LoadOptions {
    double max_missing_fraction = 0.05;
    /// A date joins the trading calendar when at least this share of tickers
    /// report a value for it.
    double calendar_quorum = 0.5;
};

struct LoadResult {
    PriceMatrix prices;
    std::vector<DroppedTicker> dropped;
    std::size_t filled_cells = 0;
};

/// Reads a `date,ticker,close` CSV restricted to `range`, aligns tickers on
/// a common calendar, drops sparse tickers and forward/back-fills the rest.
LoadResult load_prices(const std::filesystem::path& path, DateRange range,
                       const LoadOptions& options = {});

/// Simple returns r[t] = (p[t] - p[t-1]) / p[t-1]; one fewer row.
PriceMatrix compute_returns(const PriceMatrix& prices);

struct TrainTest {
    PriceMatrix train;
    PriceMatrix test;
};

TrainTest split(const PriceMatrix& returns, const PeriodSplit& period);

using SectorMap = std::map<std::string, std::string>;

/// The eleven sector labels accepted in sector files.
const std::vector<std::string>& canonical_sectors();

/// Reads a `ticker,sector` CSV and returns labels for exactly `tickers`.
SectorMap load_sectors(const std::filesystem::path& path, const std::vector<std::string>& tickers);

/// Long-format `date,ticker,close` writer (17 significant digits).
void write_prices_csv(const std::filesystem::path& path, const PriceMatrix& prices);

/// Wide-format `date,<ticker>...` matrix writer/reader (17 significant digits).
void write_matrix_csv(const std::filesystem::path& path, const PriceMatrix& matrix);
PriceMatrix read_matrix_csv(const std::filesystem::path& path);

}  // namespace tdaport::market
