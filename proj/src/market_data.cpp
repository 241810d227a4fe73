#include "tdaport/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

#include "csv.hpp"
#include "tdaport/error.hpp"
#include "tdaport/log.hpp"

namespace tdaport::market {

using detail::split_fields;
using detail::trim;

std::optional<std::size_t> PriceMatrix::column_of(const std::string& ticker) const {
    const auto it = std::find(tickers.begin(), tickers.end(), ticker);
    if (it == tickers.end()) return std::nullopt;
    return static_cast<std::size_t>(it - tickers.begin());
}

std::vector<double> PriceMatrix::series(const std::string& ticker) const {
    const auto col = column_of(ticker);
    if (!col) throw Error(ErrorCode::InvalidArgument, "unknown ticker " + ticker);
    return series(*col);
}

std::vector<double> PriceMatrix::series(std::size_t column) const {
    std::vector<double> out(rows());
    for (std::size_t t = 0; t < rows(); ++t) out[t] = values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(column));
    return out;
}

PriceMatrix PriceMatrix::select(const std::vector<std::string>& keep) const {
    PriceMatrix out;
    out.tickers = keep;
    out.dates = dates;
    out.values.resize(values.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        const auto col = column_of(keep[j]);
        if (!col) throw Error(ErrorCode::InvalidArgument, "unknown ticker " + keep[j]);
        out.values.col(static_cast<Eigen::Index>(j)) = values.col(static_cast<Eigen::Index>(*col));
    }
    return out;
}

PriceMatrix PriceMatrix::slice_rows(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows()) throw Error(ErrorCode::InvalidArgument, "row slice out of range");
    PriceMatrix out;
    out.tickers = tickers;
    out.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(begin), dates.begin() + static_cast<std::ptrdiff_t>(end));
    out.values = values.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
    return out;
}

std::size_t PriceMatrix::lower_bound(Date d) const {
    return static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), d) - dates.begin());
}

void PriceMatrix::validate() const {
    if (static_cast<std::size_t>(values.rows()) != dates.size() ||
        static_cast<std::size_t>(values.cols()) != tickers.size())
        throw Error(ErrorCode::InvalidArgument, "matrix shape does not match dates x tickers");
    for (std::size_t t = 1; t < dates.size(); ++t)
        if (!(dates[t - 1] < dates[t])) throw Error(ErrorCode::InvalidArgument, "dates not strictly increasing");
    if (!values.allFinite()) throw Error(ErrorCode::InvalidArgument, "matrix has non-finite cells");
}

LoadResult load_prices(const std::filesystem::path& path, DateRange range, const LoadOptions& options) {
    auto in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw Error(ErrorCode::Parse, path.string() + ": empty file");
    ++line_no;
    {
        const auto header = split_fields(trim(line));
        if (header.size() != 3 || trim(header[0]) != "date" || trim(header[1]) != "ticker" ||
            trim(header[2]) != "close")
            throw Error(ErrorCode::Parse, path.string() + ":1: expected header 'date,ticker,close'");
    }

    // ticker -> (date -> close), only rows inside the range
    std::map<std::string, std::map<Date, double>> raw;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) continue;
        const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
        const auto fields = split_fields(text);
        if (fields.size() != 3) throw Error(ErrorCode::Parse, where + "expected 3 fields");
        Date date;
        double close = 0.0;
        try {
            date = Date::parse(trim(fields[0]));
            close = detail::parse_double(fields[2]);
        } catch (const Error& e) {
            throw Error(ErrorCode::Parse, where + e.what());
        }
        const std::string ticker(trim(fields[1]));
        if (ticker.empty()) throw Error(ErrorCode::Parse, where + "empty ticker");
        if (!(close > 0.0) || !std::isfinite(close)) throw Error(ErrorCode::Parse, where + "close must be positive");
        if (date < range.first || range.last < date) continue;
        if (!raw[ticker].emplace(date, close).second)
            throw Error(ErrorCode::Parse, where + "duplicate row for " + ticker + " on " + date.iso());
    }
    if (raw.empty()) throw Error(ErrorCode::InvalidArgument, path.string() + ": no rows inside the date range");

    std::map<Date, std::size_t> coverage;
    for (const auto& [ticker, rows] : raw)
        for (const auto& [date, close] : rows) ++coverage[date];
    const double quorum = options.calendar_quorum * static_cast<double>(raw.size());
    std::vector<Date> calendar;
    for (const auto& [date, count] : coverage)
        if (static_cast<double>(count) >= quorum) calendar.push_back(date);
    if (calendar.empty()) throw Error(ErrorCode::InvalidArgument, "empty trading calendar");

    LoadResult result;
    std::vector<std::vector<double>> columns;
    for (const auto& [ticker, rows] : raw) {
        std::vector<std::optional<double>> cells(calendar.size());
        std::size_t missing = 0;
        for (std::size_t t = 0; t < calendar.size(); ++t) {
            const auto it = rows.find(calendar[t]);
            if (it == rows.end()) ++missing;
            else cells[t] = it->second;
        }
        const double fraction = static_cast<double>(missing) / static_cast<double>(calendar.size());
        if (fraction > options.max_missing_fraction) {
            result.dropped.push_back({ticker, fraction});
            continue;
        }
        std::vector<double> column(calendar.size());
        std::optional<double> last;
        for (std::size_t t = 0; t < calendar.size(); ++t) {
            if (cells[t]) last = cells[t];
            else ++result.filled_cells;
            if (last) column[t] = *last;
        }
        // leading gap: back-fill from the first observation
        const auto first = std::find_if(cells.begin(), cells.end(), [](const auto& c) { return c.has_value(); });
        for (auto it = cells.begin(); it != first; ++it) column[static_cast<std::size_t>(it - cells.begin())] = **first;
        result.prices.tickers.push_back(ticker);
        columns.push_back(std::move(column));
    }
    for (const auto& d : result.dropped) {
        std::ostringstream os;
        os << "dropped " << d.ticker << ": " << d.missing_fraction * 100.0 << "% of trading dates missing";
        log::warn(os.str());
    }
    if (columns.empty()) throw Error(ErrorCode::InvalidArgument, "no ticker survived the missing-data filter");

    result.prices.dates = std::move(calendar);
    result.prices.values.resize(static_cast<Eigen::Index>(result.prices.dates.size()),
                                static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j)
        result.prices.values.col(static_cast<Eigen::Index>(j)) =
            Eigen::Map<const Eigen::VectorXd>(columns[j].data(), static_cast<Eigen::Index>(columns[j].size()));
    return result;
}

PriceMatrix compute_returns(const PriceMatrix& prices) {
    if (prices.rows() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two dates to compute returns");
    if ((prices.values.array() <= 0.0).any()) throw Error(ErrorCode::InvalidArgument, "nonpositive price");
    PriceMatrix out;
    out.tickers = prices.tickers;
    out.dates.assign(prices.dates.begin() + 1, prices.dates.end());
    const auto T = prices.values.rows();
    const auto prev = prices.values.topRows(T - 1).array();
    out.values = ((prices.values.bottomRows(T - 1).array() - prev) / prev).matrix();
    return out;
}

TrainTest split(const PriceMatrix& returns, const PeriodSplit& period) {
    if (!(period.train_end < period.test_start))
        throw Error(ErrorCode::InvalidArgument, "train period must end before the test period starts");
    if (period.train_end < period.train_start || period.test_end < period.test_start)
        throw Error(ErrorCode::InvalidArgument, "period bounds are reversed");
    const auto row_range = [&](Date first, Date last) {
        const auto begin = returns.lower_bound(first);
        const auto end = static_cast<std::size_t>(
            std::upper_bound(returns.dates.begin(), returns.dates.end(), last) - returns.dates.begin());
        return std::pair{begin, std::max(begin, end)};
    };
    const auto [train_begin, train_end] = row_range(period.train_start, period.train_end);
    const auto [test_begin, test_end] = row_range(period.test_start, period.test_end);
    if (train_begin == train_end) throw Error(ErrorCode::InvalidArgument, "empty train slice");
    if (test_begin == test_end) throw Error(ErrorCode::InvalidArgument, "empty test slice");

    TrainTest out{returns.slice_rows(train_begin, train_end), returns.slice_rows(test_begin, test_end)};
    if (!(out.train.dates.back() < out.test.dates.front()))
        throw Error(ErrorCode::InvalidArgument, "train/test leakage: train dates reach into the test period");
    return out;
}

const std::vector<std::string>& canonical_sectors() {
    static const std::vector<std::string> sectors = {
        "Healthcare",        "Industrials", "Consumer Cyclical", "Technology",
        "Consumer Defensive", "Utilities",  "Financial",         "Basic Materials",
        "Real Estate",        "Energy",     "Communication Services",
    };
    return sectors;
}

SectorMap load_sectors(const std::filesystem::path& path, const std::vector<std::string>& tickers) {
    auto in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw Error(ErrorCode::Parse, path.string() + ": empty file");
    {
        const auto header = split_fields(trim(line));
        if (header.size() != 2 || trim(header[0]) != "ticker" || trim(header[1]) != "sector")
            throw Error(ErrorCode::Parse, path.string() + ":1: expected header 'ticker,sector'");
    }
    const auto& labels = canonical_sectors();
    std::unordered_map<std::string, std::string> all;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) continue;
        const auto fields = split_fields(text);
        const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
        if (fields.size() != 2) throw Error(ErrorCode::Parse, where + "expected 2 fields");
        std::string ticker(trim(fields[0]));
        std::string sector(trim(fields[1]));
        if (std::find(labels.begin(), labels.end(), sector) == labels.end())
            throw Error(ErrorCode::InvalidArgument, where + "unknown sector label '" + sector + "'");
        all[std::move(ticker)] = std::move(sector);
    }
    SectorMap out;
    for (const auto& t : tickers) {
        const auto it = all.find(t);
        if (it == all.end()) throw Error(ErrorCode::InvalidArgument, "ticker " + t + " missing from " + path.string());
        out[t] = it->second;
    }
    return out;
}

void write_prices_csv(const std::filesystem::path& path, const PriceMatrix& prices) {
    auto out = detail::open_output(path);
    out << "date,ticker,close\n";
    for (std::size_t t = 0; t < prices.rows(); ++t) {
        const auto date = prices.dates[t].iso();
        for (std::size_t j = 0; j < prices.cols(); ++j)
            out << date << ',' << prices.tickers[j] << ','
                << detail::format_double(prices.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)))
                << '\n';
    }
}

void write_matrix_csv(const std::filesystem::path& path, const PriceMatrix& matrix) {
    auto out = detail::open_output(path);
    out << "date";
    for (const auto& t : matrix.tickers) out << ',' << t;
    out << '\n';
    for (std::size_t t = 0; t < matrix.rows(); ++t) {
        out << matrix.dates[t].iso();
        for (std::size_t j = 0; j < matrix.cols(); ++j)
            out << ',' << detail::format_double(matrix.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)));
        out << '\n';
    }
}

PriceMatrix read_matrix_csv(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::Parse, path.string() + ": empty file");
    PriceMatrix out;
    const auto header = split_fields(trim(line));
    if (header.empty() || trim(header[0]) != "date")
        throw Error(ErrorCode::Parse, path.string() + ":1: expected header 'date,<tickers>'");
    for (std::size_t j = 1; j < header.size(); ++j) out.tickers.emplace_back(trim(header[j]));
    std::vector<double> cells;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty()) continue;
        const auto fields = split_fields(text);
        if (fields.size() != header.size())
            throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": wrong field count");
        try {
            out.dates.push_back(Date::parse(trim(fields[0])));
            for (std::size_t j = 1; j < fields.size(); ++j) cells.push_back(detail::parse_double(fields[j]));
        } catch (const Error& e) {
            throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    const auto n = static_cast<Eigen::Index>(out.tickers.size());
    out.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        cells.data(), static_cast<Eigen::Index>(out.dates.size()), n);
    out.validate();
    return out;
}

}  // namespace tdaport::market
