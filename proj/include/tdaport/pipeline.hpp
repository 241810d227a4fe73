#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tdaport/cluster.hpp"
#include "tdaport/market_data.hpp"
#include "tdaport/persistence.hpp"
#include "tdaport/portfolio.hpp"
#include "tdaport/vectorize.hpp"

namespace tdaport::pipeline {

enum class Algorithm { KMeans, Agglomerative };
Algorithm parse_algorithm(const std::string& name);  ///< "kmeans" | "agglomerative"
std::string algorithm_name(Algorithm algorithm);

/// Coordinate scaling applied to the embedding matrix before clustering.
/// Auto is per-column for bar statistics and pooled for landscapes/images.
enum class Scaling { Auto, PerColumn, Pooled, None };
Scaling parse_scaling(const std::string& name);  ///< "auto" | "column" | "pooled" | "none"
std::string scaling_name(Scaling scaling);

struct EmbeddingConfig {
    int tau_max = 30;
    int mi_bins = 16;
    double mi_noise_sigmas = 6.0;
    int dim_max = 10;
    double fnn_rtol = 15.0;
    double fnn_threshold = 0.01;
    int stride = 1;
    std::optional<double> max_radius;  ///< default: enclosing radius of each cloud
    std::size_t simplex_budget = ph::default_simplex_budget;
    bool h2_enabled = false;
    vec::VectorizeParams vectorize;
};

struct ClusteringConfig {
    Algorithm algorithm = Algorithm::KMeans;  ///< headline result
    int k = 11;
    std::uint64_t seed = 42;
    int restarts = 10;
    cluster::Linkage linkage = cluster::Linkage::Ward;
    Scaling scaling = Scaling::Auto;
};

struct PortfolioConfig {
    int per_cluster = 2;
    portfolio::BacktestOptions backtest;
};

struct RunConfig {
    std::filesystem::path prices;
    std::filesystem::path sectors;
    std::optional<std::filesystem::path> benchmark;  ///< price CSV holding ticker __INDEX__
    market::PeriodSplit period{Date{2012, 1, 3}, Date{2014, 12, 31}, Date{2015, 1, 2}, Date{2015, 12, 31}};
    market::LoadOptions load;
    std::string method = "pi1";  ///< stats, pl1, pl2, pi1, pi2 or sectors
    EmbeddingConfig embedding;
    ClusteringConfig clustering;
    PortfolioConfig portfolio;
    int workers = 1;
    std::filesystem::path out = "out";
};

inline constexpr const char* benchmark_ticker = "__INDEX__";

/// JSON text of `config` with every field present (paths as written).
std::string config_to_text(const RunConfig& config);

/// Parses a JSON config. Missing fields keep their defaults; unknown keys
/// are an error. Relative paths are resolved against `base_dir`.
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Throws Error(Config) for inconsistent or out-of-range settings and
/// missing input files. Called by every stage entry point.
void validate(const RunConfig& config);

bool is_sector_baseline(const RunConfig& config);

struct IngestResult {
    market::PriceMatrix returns;  ///< aligned returns over train_start..test_end
    market::TrainTest periods;
    std::size_t first_test_row = 0;
    market::SectorMap sectors;
    std::vector<market::DroppedTicker> dropped;
    std::size_t filled_cells = 0;
    std::optional<std::vector<double>> benchmark;  ///< benchmark returns on the test dates
};

struct StockEmbedding {
    std::string ticker;
    int tau = 1;
    int dim = 1;
    bool tau_fallback = false;
    bool dim_capped = false;
    std::size_t points = 0;
    ph::PersistenceDiagram diagram;
};

struct EmbedResult {
    vec::Method method = vec::Method::PI1;
    std::vector<StockEmbedding> stocks;  ///< same order as the return columns
    Eigen::MatrixXd vectors;             ///< one row per stock
};

struct ClusterResult {
    std::vector<cluster::Partition> partitions;  ///< k-means then agglomerative, or the sector partition
    std::size_t headline = 0;
    double kmeans_inertia = 0.0;
};

struct Summary {
    std::string method;
    std::string clustering;
    double risk = 0.0;
    double sharpe = 0.0;
    std::size_t n_stocks = 0;
    std::size_t rebalances = 0;
};

struct BacktestRun {
    Summary summary;
    portfolio::SelectionResult selection;
    portfolio::BacktestResult result;
};

struct BacktestStage {
    std::vector<BacktestRun> runs;  ///< one per partition
    Summary equal_weight;
    std::optional<Summary> benchmark;
};

IngestResult ingest(const RunConfig& config);
EmbedResult embed(const RunConfig& config, const IngestResult& data);
ClusterResult cluster_stocks(const RunConfig& config, const IngestResult& data, const EmbedResult* embedding);
BacktestStage backtest(const RunConfig& config, const IngestResult& data, const ClusterResult& clusters);

/// Artifact writers; each writes into config.out.
void write_ingest_artifacts(const RunConfig& config, const IngestResult& data);
void write_embed_artifacts(const RunConfig& config, const EmbedResult& embedding);
void write_cluster_artifacts(const RunConfig& config, const ClusterResult& clusters);
void write_backtest_artifacts(const RunConfig& config, const IngestResult& data, const BacktestStage& stage);

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct RunReport {
    Summary headline;
    BacktestStage backtest;
    std::vector<StageTiming> timings;
};

/// Which stages a run performs; `run` is all of them.
enum class Until { Ingest, Embed, Cluster, Backtest };

/// Runs the stages up to `until`, writes their artifacts, manifest.json
/// (deterministic) and timings.json (wall clock). Stage failures are
/// rethrown as StageError.
RunReport run_pipeline(const RunConfig& config, Until until = Until::Backtest);

std::string summary_to_text(const Summary& summary);  ///< JSON object
Summary parse_summary(std::string_view text);
Summary load_summary(const std::filesystem::path& path);

/// Table sorted by risk ascending (ties keep input order); best risk and
/// best Sharpe rows are marked.
struct Comparison {
    std::vector<Summary> rows;
    std::size_t best_risk = 0;
    std::size_t best_sharpe = 0;
};
Comparison compare(std::vector<Summary> summaries);
std::string comparison_text(const Comparison& comparison);
void write_comparison_csv(const std::filesystem::path& path, const Comparison& comparison);

}  // namespace tdaport::pipeline
