#include "tdaport/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "csv.hpp"
#include "tdaport/error.hpp"
#include "tdaport/log.hpp"

namespace tdaport::portfolio {

double mean(std::span<const double> xs) {
    if (xs.empty()) throw Error(ErrorCode::InvalidArgument, "mean of an empty series");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double population_std(std::span<const double> xs) {
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size()));
}

double stock_sharpe(std::span<const double> returns) {
    if (returns.size() < 2) throw Error(ErrorCode::InvalidArgument, "Sharpe ratio needs at least two returns");
    const bool constant = std::all_of(returns.begin(), returns.end(), [&](double r) { return r == returns[0]; });
    const double sd = population_std(returns);
    if (constant || !(sd > 0.0)) throw Error(ErrorCode::DegenerateSeries, "zero-variance return series");
    return mean(returns) / sd;
}

SelectionResult select_stocks(const cluster::Partition& partition, const market::PriceMatrix& train_returns,
                              int per_cluster) {
    if (per_cluster < 1) throw Error(ErrorCode::InvalidArgument, "per_cluster must be >= 1");
    SelectionResult out;
    const auto members = partition.members();
    for (std::size_t c = 0; c < members.size(); ++c) {
        std::vector<std::pair<double, std::string>> ranked;
        for (const auto row : members[c]) {
            const auto& ticker = partition.tickers[row];
            if (!train_returns.column_of(ticker))
                throw Error(ErrorCode::InvalidArgument, "ticker " + ticker + " has no train returns");
            try {
                ranked.emplace_back(stock_sharpe(train_returns.series(ticker)), ticker);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::DegenerateSeries) throw;
                out.skipped.push_back(ticker);
            }
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        const auto take = std::min(ranked.size(), static_cast<std::size_t>(per_cluster));
        if (take < static_cast<std::size_t>(per_cluster))
            log::info("cluster " + std::to_string(c) + " contributes only " + std::to_string(take) + " stock(s)");
        for (std::size_t i = 0; i < take; ++i) {
            out.tickers.push_back(ranked[i].second);
            out.sharpe.push_back(ranked[i].first);
            out.cluster.push_back(static_cast<int>(c));
        }
    }
    for (const auto& s : out.skipped) log::warn("skipped " + s + ": zero-variance train returns");
    if (out.tickers.empty()) throw Error(ErrorCode::InvalidArgument, "no stock left to select");
    return out;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& window) {
    const auto t = window.rows();
    const auto n = window.cols();
    if (t < 2) throw Error(ErrorCode::InvalidArgument, "covariance window needs at least two days");
    if (t < n) log::warn("covariance window shorter than the number of assets");
    const Eigen::RowVectorXd mu = window.colwise().mean();
    const Eigen::MatrixXd centered = window.rowwise() - mu;
    Eigen::MatrixXd cov(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) {
            const double c = centered.col(i).dot(centered.col(j)) / static_cast<double>(t);
            cov(i, j) = c;
            cov(j, i) = c;
        }
    return cov;
}

double kkt_residual(const Eigen::MatrixXd& cov, const Eigen::VectorXd& w) {
    const Eigen::VectorXd g = cov * w;
    const double lambda = w.dot(g);
    double r = std::abs(w.sum() - 1.0);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        r = std::max(r, -w(i));
        if (w(i) > 0.0) r = std::max(r, std::abs(g(i) - lambda));
        else r = std::max(r, lambda - g(i));
    }
    return r;
}

namespace {

/// Solves the equality-constrained problem on `free`; false if the block is
/// not numerically positive definite.
bool solve_free(const Eigen::MatrixXd& cov, const std::vector<Eigen::Index>& free, Eigen::VectorXd& w_free) {
    const auto m = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd block(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = 0; b < m; ++b) block(a, b) = cov(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
    Eigen::LLT<Eigen::MatrixXd> llt(block);
    if (llt.info() != Eigen::Success) return false;
    const Eigen::VectorXd z = llt.solve(Eigen::VectorXd::Ones(m));
    const double s = z.sum();
    if (!(s > 0.0) || !z.allFinite()) return false;
    // reject near-singular blocks whose solve lost all accuracy
    const double diag_max = block.diagonal().maxCoeff();
    if (llt.matrixL().toDenseMatrix().diagonal().minCoeff() < 1e-7 * std::sqrt(diag_max)) return false;
    w_free = z / s;
    return true;
}

struct ActiveSetOutcome {
    Eigen::VectorXd w;
    int iterations = 0;
    bool ok = false;
};

ActiveSetOutcome active_set(const Eigen::MatrixXd& cov) {
    const auto n = cov.rows();
    ActiveSetOutcome out;
    Eigen::Index start = 0;
    cov.diagonal().minCoeff(&start);
    out.w = Eigen::VectorXd::Zero(n);
    out.w(start) = 1.0;
    std::vector<bool> in_free(static_cast<std::size_t>(n), false);
    in_free[static_cast<std::size_t>(start)] = true;
    const double scale = std::max(cov.diagonal().cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    const double tol = 1e-13 * scale;

    const int max_iter = 50 * static_cast<int>(n) + 100;
    for (int it = 0; it < max_iter; ++it) {
        out.iterations = it + 1;
        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < n; ++i)
            if (in_free[static_cast<std::size_t>(i)]) free.push_back(i);
        Eigen::VectorXd wf;
        if (!solve_free(cov, free, wf)) return out;

        bool feasible = true;
        for (Eigen::Index a = 0; a < wf.size(); ++a) feasible = feasible && wf(a) >= 0.0;
        if (feasible) {
            out.w.setZero();
            for (std::size_t a = 0; a < free.size(); ++a) out.w(free[a]) = wf(static_cast<Eigen::Index>(a));
            const Eigen::VectorXd g = cov * out.w;
            const double lambda = out.w.dot(g);
            Eigen::Index enter = -1;
            double most = -tol;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (in_free[static_cast<std::size_t>(i)]) continue;
                if (g(i) - lambda < most) {
                    most = g(i) - lambda;
                    enter = i;
                }
            }
            if (enter < 0) {
                out.ok = true;
                return out;
            }
            in_free[static_cast<std::size_t>(enter)] = true;
            continue;
        }

        // step towards the subproblem optimum until a weight hits zero
        double alpha = 1.0;
        Eigen::Index blocking = -1;
        for (std::size_t a = 0; a < free.size(); ++a) {
            const double cur = out.w(free[a]);
            const double dir = wf(static_cast<Eigen::Index>(a)) - cur;
            if (dir < 0.0) {
                const double step = cur / -dir;
                if (step < alpha) {
                    alpha = step;
                    blocking = free[a];
                }
            }
        }
        for (std::size_t a = 0; a < free.size(); ++a)
            out.w(free[a]) += alpha * (wf(static_cast<Eigen::Index>(a)) - out.w(free[a]));
        if (blocking >= 0) {
            out.w(blocking) = 0.0;
            in_free[static_cast<std::size_t>(blocking)] = false;
        }
        for (const auto i : free)
            if (out.w(i) <= 0.0) {
                out.w(i) = 0.0;
                in_free[static_cast<std::size_t>(i)] = false;
            }
    }
    return out;
}

double quad(const Eigen::MatrixXd& cov, const Eigen::VectorXd& w) { return w.dot(cov * w); }

}  // namespace

MinVarianceResult min_variance_weights(const Eigen::MatrixXd& cov_in) {
    if (cov_in.rows() != cov_in.cols() || cov_in.rows() == 0)
        throw Error(ErrorCode::InvalidArgument, "covariance must be a non-empty square matrix");
    if (!cov_in.allFinite()) throw Error(ErrorCode::InvalidArgument, "covariance has non-finite entries");
    const Eigen::MatrixXd cov = 0.5 * (cov_in + cov_in.transpose());
    const auto n = cov.rows();

    MinVarianceResult res;
    Eigen::MatrixXd solved = cov;
    ActiveSetOutcome outcome = active_set(solved);
    for (double ridge = 1e-10; !outcome.ok; ridge *= 10.0) {
        if (ridge > 1e-2 * std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff()))
            throw Error(ErrorCode::InvalidArgument, "minimum-variance problem could not be solved");
        solved = cov + ridge * Eigen::MatrixXd::Identity(n, n);
        res.ridge = ridge;
        outcome = active_set(solved);
    }
    res.weights = outcome.w;
    res.iterations = outcome.iterations;

    // Single-asset portfolios are feasible, so the optimum can never be
    // worse than the best of them; enforce it against rounding.
    Eigen::Index best_asset = 0;
    const double best_single = cov.diagonal().minCoeff(&best_asset);
    res.objective = quad(cov, res.weights);
    if (res.objective > best_single) {
        res.weights.setZero();
        res.weights(best_asset) = 1.0;
        res.objective = best_single;
    }
    res.kkt_residual = kkt_residual(solved, res.weights);
    return res;
}

BacktestResult backtest(const market::PriceMatrix& history, std::size_t first_test_row, const BacktestOptions& options) {
    if (options.window < 1 || options.lookback < 2)
        throw Error(ErrorCode::InvalidArgument, "window must be >= 1 and lookback >= 2");
    const std::size_t rows = history.rows();
    if (first_test_row >= rows || rows - first_test_row <= static_cast<std::size_t>(options.window))
        throw Error(ErrorCode::InvalidArgument, "test period must be longer than one rebalancing window");
    if (first_test_row < static_cast<std::size_t>(options.lookback))
        throw Error(ErrorCode::InvalidArgument, "insufficient lookback history before the test period");

    BacktestResult out;
    out.tickers = history.tickers;
    const auto window = static_cast<std::size_t>(options.window);
    const auto lookback = static_cast<std::size_t>(options.lookback);
    const auto n = static_cast<Eigen::Index>(history.cols());
    for (std::size_t start = first_test_row; start < rows; start += window) {
        Rebalance rb;
        rb.date = history.dates[start];
        rb.row = start;
        rb.window_begin = start - lookback;
        rb.window_end = start;
        // every estimation row must be dated strictly before the rebalance
        if (rb.window_end > rb.row || !(history.dates[rb.window_end - 1] < rb.date))
            throw std::logic_error("look-ahead: estimation window reaches the rebalance date");
        const Eigen::MatrixXd est =
            history.values.middleRows(static_cast<Eigen::Index>(rb.window_begin), static_cast<Eigen::Index>(lookback));
        const auto cov = covariance(est);
        const auto qp = min_variance_weights(cov);
        rb.weights = qp.weights;
        rb.estimated_variance = qp.objective;
        rb.min_asset_variance = cov.diagonal().minCoeff();
        rb.kkt_residual = qp.kkt_residual;
        const std::size_t stop = std::min(rows, start + window);
        for (std::size_t t = start; t < stop; ++t) {
            double y = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) y += rb.weights(i) * history.values(static_cast<Eigen::Index>(t), i);
            out.dates.push_back(history.dates[t]);
            out.returns.push_back(y);
        }
        out.rebalances.push_back(std::move(rb));
    }
    out.annual_risk = annual_risk(out.returns);
    out.sharpe = portfolio_sharpe(out.returns);
    return out;
}

double annual_risk(std::span<const double> y) {
    if (y.size() < 2) throw Error(ErrorCode::InvalidArgument, "risk needs at least two returns");
    return population_std(y) * std::sqrt(trading_days_per_year);
}

double portfolio_sharpe(std::span<const double> y) {
    const double sd = population_std(y);
    return sd > 0.0 ? mean(y) / sd : 0.0;
}

std::vector<double> equal_weight_returns(const market::PriceMatrix& returns) {
    std::vector<double> y(returns.rows());
    for (std::size_t t = 0; t < returns.rows(); ++t)
        y[t] = returns.values.row(static_cast<Eigen::Index>(t)).sum() / static_cast<double>(returns.cols());
    return y;
}

void write_backtest_csv(const std::filesystem::path& path, const BacktestResult& result) {
    auto out = detail::open_output(path);
    out << "date,portfolio_return\n";
    for (std::size_t t = 0; t < result.returns.size(); ++t)
        out << result.dates[t].iso() << ',' << detail::format_double(result.returns[t]) << '\n';
}

void write_growth_csv(const std::filesystem::path& path, const std::vector<Date>& dates,
                      std::span<const double> returns) {
    auto out = detail::open_output(path);
    out << "date,growth\n";
    double growth = 1.0;
    for (std::size_t t = 0; t < returns.size(); ++t) {
        growth *= 1.0 + returns[t];
        out << dates[t].iso() << ',' << detail::format_double(growth) << '\n';
    }
}

}  // namespace tdaport::portfolio
