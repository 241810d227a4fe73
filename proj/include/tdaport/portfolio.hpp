#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tdaport/cluster.hpp"
#include "tdaport/market_data.hpp"

namespace tdaport::portfolio {

inline constexpr double trading_days_per_year = 252.0;

double mean(std::span<const double> xs);
double population_std(std::span<const double> xs);

/// Daily Sharpe ratio mean / population std with a zero risk-free rate.
/// Throws Error(DegenerateSeries) for a zero-variance series.
double stock_sharpe(std::span<const double> returns);

struct SelectionResult {
    std::vector<std::string> tickers;  ///< grouped by cluster, best first
    std::vector<double> sharpe;
    std::vector<int> cluster;
    std::vector<std::string> skipped;  ///< degenerate series left out
};

/// Top `per_cluster` stocks of every cluster by train Sharpe (ties broken
/// alphabetically).
SelectionResult select_stocks(const cluster::Partition& partition, const market::PriceMatrix& train_returns,
                              int per_cluster = 2);

/// Population covariance of the columns of `window` (rows are days).
Eigen::MatrixXd covariance(const Eigen::MatrixXd& window);

struct MinVarianceResult {
    Eigen::VectorXd weights;
    double objective = 0.0;       ///< w' S w on the input covariance
    double kkt_residual = 0.0;    ///< on the covariance actually solved (input + ridge)
    double ridge = 0.0;           ///< diagonal shift used, 0 unless the covariance was singular
    int iterations = 0;
};

/// Long-only, fully invested minimum-variance weights (primal active set).
MinVarianceResult min_variance_weights(const Eigen::MatrixXd& cov);

/// Largest violation of the optimality conditions of min w'Sw s.t. sum w = 1, w >= 0.
double kkt_residual(const Eigen::MatrixXd& cov, const Eigen::VectorXd& weights);

struct BacktestOptions {
    int window = 21;     ///< trading days between rebalances
    int lookback = 126;  ///< trading days used to estimate the covariance
};

struct Rebalance {
    Date date;
    std::size_t row = 0;           ///< row in the history matrix where the weights take effect
    std::size_t window_begin = 0;  ///< estimation rows [window_begin, window_end)
    std::size_t window_end = 0;
    Eigen::VectorXd weights;
    double estimated_variance = 0.0;     ///< w' S w under the estimation covariance
    double min_asset_variance = 0.0;     ///< min_i S_ii
    double kkt_residual = 0.0;
};

struct BacktestResult {
    std::vector<std::string> tickers;
    std::vector<Date> dates;
    std::vector<double> returns;  ///< daily portfolio returns y over the test period
    std::vector<Rebalance> rebalances;
    double annual_risk = 0.0;
    double sharpe = 0.0;
};

/// Rolling minimum-variance backtest. `history` holds daily returns of the
/// selected tickers; rows before `first_test_row` are only used for
/// covariance estimation.
BacktestResult backtest(const market::PriceMatrix& history, std::size_t first_test_row,
                        const BacktestOptions& options = {});

/// Population std of y scaled by sqrt(252).
double annual_risk(std::span<const double> y);

/// Sharpe of a portfolio series; 0 for a constant series.
double portfolio_sharpe(std::span<const double> y);

/// Equally weighted portfolio of every column, rebalanced daily.
std::vector<double> equal_weight_returns(const market::PriceMatrix& returns);

/// CSV `date,portfolio_return`.
void write_backtest_csv(const std::filesystem::path& path, const BacktestResult& result);

/// CSV `date,growth` with cumulative growth of one unit invested.
void write_growth_csv(const std::filesystem::path& path, const std::vector<Date>& dates,
                      std::span<const double> returns);

}  // namespace tdaport::portfolio
