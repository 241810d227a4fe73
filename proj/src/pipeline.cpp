#include "tdaport/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "csv.hpp"
#include "tdaport/error.hpp"
#include "tdaport/log.hpp"
#include "tdaport/takens.hpp"

#ifndef TDAPORT_VERSION
#define TDAPORT_VERSION "0.0.0"
#endif

namespace tdaport::pipeline {

using nlohmann::ordered_json;

namespace {

constexpr int artifact_version = 1;

Error config_error(const std::string& message) { return Error(ErrorCode::Config, message); }

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

Algorithm parse_algorithm(const std::string& name) {
    const auto n = lower(name);
    if (n == "kmeans" || n == "k-means") return Algorithm::KMeans;
    if (n == "agglomerative") return Algorithm::Agglomerative;
    throw config_error("unknown clustering algorithm '" + name + "' (expected kmeans or agglomerative)");
}

std::string algorithm_name(Algorithm algorithm) {
    return algorithm == Algorithm::KMeans ? "kmeans" : "agglomerative";
}

Scaling parse_scaling(const std::string& name) {
    const auto n = lower(name);
    if (n == "auto") return Scaling::Auto;
    if (n == "column") return Scaling::PerColumn;
    if (n == "pooled") return Scaling::Pooled;
    if (n == "none") return Scaling::None;
    throw config_error("unknown scaling '" + name + "' (expected auto, column, pooled or none)");
}

std::string scaling_name(Scaling scaling) {
    switch (scaling) {
        case Scaling::Auto: return "auto";
        case Scaling::PerColumn: return "column";
        case Scaling::Pooled: return "pooled";
        case Scaling::None: return "none";
    }
    return "auto";
}

// ---------------------------------------------------------------- config

namespace {

ordered_json config_json(const RunConfig& c, bool with_out) {
    ordered_json j;
    j["data"] = {
        {"prices", c.prices.generic_string()},
        {"sectors", c.sectors.generic_string()},
        {"benchmark", c.benchmark ? ordered_json(c.benchmark->generic_string()) : ordered_json(nullptr)},
        {"max_missing_fraction", c.load.max_missing_fraction},
        {"calendar_quorum", c.load.calendar_quorum},
    };
    j["period"] = {
        {"train_start", c.period.train_start.iso()},
        {"train_end", c.period.train_end.iso()},
        {"test_start", c.period.test_start.iso()},
        {"test_end", c.period.test_end.iso()},
    };
    j["method"] = c.method;
    const auto& e = c.embedding;
    j["embedding"] = {
        {"tau_max", e.tau_max},
        {"mi_bins", e.mi_bins},
        {"mi_noise_sigmas", e.mi_noise_sigmas},
        {"dim_max", e.dim_max},
        {"fnn_rtol", e.fnn_rtol},
        {"fnn_threshold", e.fnn_threshold},
        {"stride", e.stride},
        {"max_radius", e.max_radius ? ordered_json(*e.max_radius) : ordered_json(nullptr)},
        {"simplex_budget", e.simplex_budget},
        {"h2_enabled", e.h2_enabled},
        {"landscape", {{"layers", e.vectorize.landscape_layers}, {"samples", e.vectorize.landscape_samples}}},
        {"image", {{"resolution", e.vectorize.image_resolution}, {"sigma_factor", e.vectorize.image_sigma_factor}}},
        {"global_grid", e.vectorize.global_grid},
    };
    const auto& k = c.clustering;
    j["clustering"] = {
        {"algorithm", algorithm_name(k.algorithm)},
        {"k", k.k},
        {"seed", k.seed},
        {"restarts", k.restarts},
        {"linkage", cluster::linkage_name(k.linkage)},
        {"scaling", scaling_name(k.scaling)},
    };
    j["portfolio"] = {
        {"per_cluster", c.portfolio.per_cluster},
        {"window", c.portfolio.backtest.window},
        {"lookback", c.portfolio.backtest.lookback},
    };
    j["workers"] = c.workers;
    if (with_out) j["out"] = c.out.generic_string();
    return j;
}

void check_keys(const ordered_json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw config_error("'" + where + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end())
            throw config_error("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
}

template <class T>
void read(const ordered_json& obj, const char* key, const std::string& where, T& target) {
    if (!obj.contains(key)) return;
    try {
        target = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw config_error("'" + where + "." + key + "' has the wrong type");
    }
}

std::filesystem::path resolve(const std::string& text, const std::filesystem::path& base) {
    if (text.empty()) return {};
    std::filesystem::path p(text);
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal();
}

Date read_date(const ordered_json& obj, const char* key, Date fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_string()) throw config_error(std::string("'period.") + key + "' must be an ISO date string");
    try {
        return Date::parse(obj.at(key).get<std::string>());
    } catch (const Error& e) {
        throw config_error(std::string("'period.") + key + "': " + e.what());
    }
}

}  // namespace

std::string config_to_text(const RunConfig& config) { return config_json(config, true).dump(2) + "\n"; }

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
    ordered_json j;
    try {
        j = ordered_json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("config: ") + e.what());
    }
    check_keys(j, "", {"data", "period", "method", "embedding", "clustering", "portfolio", "workers", "out"});
    RunConfig c;
    if (j.contains("data")) {
        const auto& d = j["data"];
        check_keys(d, "data", {"prices", "sectors", "benchmark", "max_missing_fraction", "calendar_quorum"});
        std::string prices, sectors;
        read(d, "prices", "data", prices);
        read(d, "sectors", "data", sectors);
        c.prices = resolve(prices, base_dir);
        c.sectors = resolve(sectors, base_dir);
        if (d.contains("benchmark") && !d["benchmark"].is_null()) {
            std::string bench;
            read(d, "benchmark", "data", bench);
            c.benchmark = resolve(bench, base_dir);
        }
        read(d, "max_missing_fraction", "data", c.load.max_missing_fraction);
        read(d, "calendar_quorum", "data", c.load.calendar_quorum);
    }
    if (j.contains("period")) {
        const auto& p = j["period"];
        check_keys(p, "period", {"train_start", "train_end", "test_start", "test_end"});
        c.period.train_start = read_date(p, "train_start", c.period.train_start);
        c.period.train_end = read_date(p, "train_end", c.period.train_end);
        c.period.test_start = read_date(p, "test_start", c.period.test_start);
        c.period.test_end = read_date(p, "test_end", c.period.test_end);
    }
    read(j, "method", "", c.method);
    c.method = lower(c.method);
    if (j.contains("embedding")) {
        const auto& e = j["embedding"];
        check_keys(e, "embedding",
                   {"tau_max", "mi_bins", "mi_noise_sigmas", "dim_max", "fnn_rtol", "fnn_threshold", "stride",
                    "max_radius", "simplex_budget", "h2_enabled", "landscape", "image", "global_grid"});
        auto& t = c.embedding;
        read(e, "tau_max", "embedding", t.tau_max);
        read(e, "mi_bins", "embedding", t.mi_bins);
        read(e, "mi_noise_sigmas", "embedding", t.mi_noise_sigmas);
        read(e, "dim_max", "embedding", t.dim_max);
        read(e, "fnn_rtol", "embedding", t.fnn_rtol);
        read(e, "fnn_threshold", "embedding", t.fnn_threshold);
        read(e, "stride", "embedding", t.stride);
        if (e.contains("max_radius") && !e["max_radius"].is_null()) {
            double r = 0.0;
            read(e, "max_radius", "embedding", r);
            t.max_radius = r;
        }
        read(e, "simplex_budget", "embedding", t.simplex_budget);
        read(e, "h2_enabled", "embedding", t.h2_enabled);
        if (e.contains("landscape")) {
            check_keys(e["landscape"], "embedding.landscape", {"layers", "samples"});
            read(e["landscape"], "layers", "embedding.landscape", t.vectorize.landscape_layers);
            read(e["landscape"], "samples", "embedding.landscape", t.vectorize.landscape_samples);
        }
        if (e.contains("image")) {
            check_keys(e["image"], "embedding.image", {"resolution", "sigma_factor"});
            read(e["image"], "resolution", "embedding.image", t.vectorize.image_resolution);
            read(e["image"], "sigma_factor", "embedding.image", t.vectorize.image_sigma_factor);
        }
        read(e, "global_grid", "embedding", t.vectorize.global_grid);
    }
    if (j.contains("clustering")) {
        const auto& k = j["clustering"];
        check_keys(k, "clustering", {"algorithm", "k", "seed", "restarts", "linkage", "scaling"});
        std::string algorithm = algorithm_name(c.clustering.algorithm);
        std::string linkage = cluster::linkage_name(c.clustering.linkage);
        std::string scaling = scaling_name(c.clustering.scaling);
        read(k, "algorithm", "clustering", algorithm);
        read(k, "k", "clustering", c.clustering.k);
        read(k, "seed", "clustering", c.clustering.seed);
        read(k, "restarts", "clustering", c.clustering.restarts);
        read(k, "linkage", "clustering", linkage);
        read(k, "scaling", "clustering", scaling);
        c.clustering.algorithm = parse_algorithm(algorithm);
        try {
            c.clustering.linkage = cluster::parse_linkage(linkage);
        } catch (const Error& e) {
            throw config_error(e.what());
        }
        c.clustering.scaling = parse_scaling(scaling);
    }
    if (j.contains("portfolio")) {
        const auto& p = j["portfolio"];
        check_keys(p, "portfolio", {"per_cluster", "window", "lookback"});
        read(p, "per_cluster", "portfolio", c.portfolio.per_cluster);
        read(p, "window", "portfolio", c.portfolio.backtest.window);
        read(p, "lookback", "portfolio", c.portfolio.backtest.lookback);
    }
    read(j, "workers", "", c.workers);
    if (j.contains("out")) {
        std::string out;
        read(j, "out", "", out);
        c.out = resolve(out, base_dir);
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text, path.parent_path());
}

bool is_sector_baseline(const RunConfig& config) { return lower(config.method) == "sectors"; }

void validate(const RunConfig& c) {
    auto require = [](bool ok, const std::string& message) {
        if (!ok) throw config_error(message);
    };
    const bool sectors = is_sector_baseline(c);
    if (!sectors) {
        vec::Method m{};
        try {
            m = vec::parse_method(c.method);
        } catch (const Error&) {
            throw config_error("unknown method '" + c.method + "' (expected stats, pl1, pl2, pi1, pi2 or sectors)");
        }
        require(!vec::method_needs_h2(m) || c.embedding.h2_enabled,
                "method " + vec::method_name(m) + " needs H2; set embedding.h2_enabled to true");
    }
    const auto& p = c.period;
    require(p.train_start <= p.train_end, "period.train_start must not be after period.train_end");
    require(p.train_end < p.test_start, "period.train_end must be before period.test_start");
    require(p.test_start <= p.test_end, "period.test_start must not be after period.test_end");
    require(c.load.max_missing_fraction >= 0.0 && c.load.max_missing_fraction <= 1.0,
            "data.max_missing_fraction must lie in [0, 1]");
    require(c.load.calendar_quorum > 0.0 && c.load.calendar_quorum <= 1.0, "data.calendar_quorum must lie in (0, 1]");
    const auto& e = c.embedding;
    require(e.tau_max >= 1 && e.tau_max <= 1000, "embedding.tau_max must lie in [1, 1000]");
    require(e.mi_bins >= 2 && e.mi_bins <= 1024, "embedding.mi_bins must lie in [2, 1024]");
    require(e.mi_noise_sigmas >= 0.0, "embedding.mi_noise_sigmas must be non-negative");
    require(e.dim_max >= 2 && e.dim_max <= 50, "embedding.dim_max must lie in [2, 50]");
    require(e.fnn_rtol > 0.0, "embedding.fnn_rtol must be positive");
    require(e.fnn_threshold >= 0.0 && e.fnn_threshold <= 1.0, "embedding.fnn_threshold must lie in [0, 1]");
    require(e.stride >= 1, "embedding.stride must be at least 1");
    require(!e.max_radius || *e.max_radius > 0.0, "embedding.max_radius must be positive");
    require(e.simplex_budget >= 1, "embedding.simplex_budget must be positive");
    require(e.vectorize.landscape_layers >= 1, "embedding.landscape.layers must be at least 1");
    require(e.vectorize.landscape_samples >= 2, "embedding.landscape.samples must be at least 2");
    require(e.vectorize.image_resolution >= 1 && e.vectorize.image_resolution <= 1000,
            "embedding.image.resolution must lie in [1, 1000]");
    require(e.vectorize.image_sigma_factor > 0.0, "embedding.image.sigma_factor must be positive");
    require(c.clustering.k >= 1, "clustering.k must be at least 1");
    require(c.clustering.restarts >= 1, "clustering.restarts must be at least 1");
    require(c.portfolio.per_cluster >= 1, "portfolio.per_cluster must be at least 1");
    require(c.portfolio.backtest.window >= 1, "portfolio.window must be at least 1");
    require(c.portfolio.backtest.lookback >= 2, "portfolio.lookback must be at least 2");
    require(c.workers >= 1 && c.workers <= 256, "workers must lie in [1, 256]");
    require(!c.prices.empty(), "data.prices is required");
    require(std::filesystem::is_regular_file(c.prices), "data.prices: no such file " + c.prices.string());
    if (sectors) require(!c.sectors.empty(), "method sectors needs data.sectors");
    if (!c.sectors.empty())
        require(std::filesystem::is_regular_file(c.sectors), "data.sectors: no such file " + c.sectors.string());
    if (c.benchmark)
        require(std::filesystem::is_regular_file(*c.benchmark), "data.benchmark: no such file " + c.benchmark->string());
}

// ---------------------------------------------------------------- stages

IngestResult ingest(const RunConfig& config) {
    validate(config);
    const market::DateRange range{config.period.train_start, config.period.test_end};
    auto loaded = market::load_prices(config.prices, range, config.load);
    IngestResult r;
    r.dropped = loaded.dropped;
    r.filled_cells = loaded.filled_cells;

    std::optional<std::vector<double>> index_prices;
    std::vector<Date> index_dates;
    if (auto col = loaded.prices.column_of(benchmark_ticker)) {
        index_prices = loaded.prices.series(*col);
        index_dates = loaded.prices.dates;
        std::vector<std::string> keep;
        for (const auto& t : loaded.prices.tickers)
            if (t != benchmark_ticker) keep.push_back(t);
        loaded.prices = loaded.prices.select(keep);
    }
    if (loaded.prices.cols() == 0) throw Error(ErrorCode::InvalidArgument, "no tickers left after ingest");

    r.returns = market::compute_returns(loaded.prices);
    r.periods = market::split(r.returns, config.period);
    r.first_test_row = r.returns.lower_bound(config.period.test_start);

    if (!config.sectors.empty()) r.sectors = market::load_sectors(config.sectors, r.returns.tickers);

    if (config.benchmark) {
        const auto bench = market::load_prices(*config.benchmark, range, config.load);
        const auto col = bench.prices.column_of(benchmark_ticker);
        if (!col)
            throw Error(ErrorCode::InvalidArgument,
                        config.benchmark->string() + ": no " + std::string(benchmark_ticker) + " series");
        index_prices = bench.prices.series(*col);
        index_dates = bench.prices.dates;
    }
    if (index_prices) {
        market::PriceMatrix idx;
        idx.tickers = {benchmark_ticker};
        idx.dates = index_dates;
        idx.values = Eigen::Map<const Eigen::VectorXd>(index_prices->data(), static_cast<Eigen::Index>(index_prices->size()));
        const auto idx_returns = market::compute_returns(idx);
        std::vector<double> y;
        for (const auto& d : r.periods.test.dates) {
            const auto row = idx_returns.lower_bound(d);
            if (row >= idx_returns.rows() || idx_returns.dates[row] != d)
                throw Error(ErrorCode::InvalidArgument, "benchmark series has no return on " + d.iso());
            y.push_back(idx_returns.values(static_cast<Eigen::Index>(row), 0));
        }
        r.benchmark = std::move(y);
    }
    return r;
}

namespace {

StockEmbedding embed_one(const RunConfig& config, const std::string& ticker, const std::vector<double>& series) {
    const auto& e = config.embedding;
    if (std::all_of(series.begin(), series.end(), [&](double v) { return v == series.front(); }))
        throw Error(ErrorCode::DegenerateSeries, "constant train return series");
    StockEmbedding s;
    s.ticker = ticker;
    const auto delay = takens::select_delay(series, e.tau_max, e.mi_bins, e.mi_noise_sigmas);
    const auto dimension = takens::select_dimension(series, delay.tau, e.dim_max, e.fnn_threshold, e.fnn_rtol);
    s.tau = delay.tau;
    s.tau_fallback = delay.fallback;
    s.dim = dimension.dim;
    s.dim_capped = dimension.capped;
    const takens::EmbeddingParams params{s.tau, s.dim, e.stride};
    const auto count = takens::embedded_count(series.size(), params);
    if (count < static_cast<std::size_t>(s.dim) + 2)
        throw Error(ErrorCode::InvalidArgument,
                    "embedding (tau=" + std::to_string(s.tau) + ", d=" + std::to_string(s.dim) + ", stride=" +
                        std::to_string(e.stride) + ") leaves " + std::to_string(count) + " points, need at least " +
                        std::to_string(s.dim + 2));
    const auto cloud = takens::embed(series, params, ticker);
    s.points = cloud.size();
    ph::PersistenceOptions options;
    options.max_homology_dim = e.h2_enabled ? 2 : 1;
    options.max_radius = e.max_radius;
    options.simplex_budget = e.simplex_budget;
    s.diagram = ph::compute_persistence(cloud, options);
    return s;
}

/// Runs job(i) for i in [0, n) on `workers` threads; results land by index.
/// The error of the lowest failing index is rethrown.
template <class Job>
void parallel_for(std::size_t n, int workers, Job job) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

EmbedResult embed(const RunConfig& config, const IngestResult& data) {
    validate(config);
    if (is_sector_baseline(config)) throw config_error("method sectors has no embedding stage");
    EmbedResult r;
    r.method = vec::parse_method(config.method);
    const auto& train = data.periods.train;
    const auto n = train.cols();
    r.stocks.resize(n);
    parallel_for(n, config.workers, [&](std::size_t j) {
        const auto& ticker = train.tickers[j];
        const log::Context context(ticker);
        try {
            r.stocks[j] = embed_one(config, ticker, train.series(j));
        } catch (const Error& e) {
            throw StageError("embed", ticker, e);
        }
    });

    const auto& vp = config.embedding.vectorize;
    vec::GlobalBounds bounds;
    const bool gridded = r.method != vec::Method::Stats;
    if (gridded) {
        std::vector<ph::PersistenceDiagram> diagrams;
        diagrams.reserve(n);
        for (const auto& s : r.stocks) diagrams.push_back(s.diagram);
        bounds = vec::gather_bounds(diagrams, vec::method_homology_dim(r.method));
    }
    const auto width = vec::embedding_length(r.method, vp);
    r.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
    for (std::size_t j = 0; j < n; ++j) {
        const auto v = vec::embed_stock(r.stocks[j].diagram, r.method, vp, gridded ? &bounds : nullptr,
                                        config.embedding.h2_enabled);
        for (std::size_t c = 0; c < width; ++c)
            r.vectors(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = v[c];
    }
    return r;
}

ClusterResult cluster_stocks(const RunConfig& config, const IngestResult& data, const EmbedResult* embedding) {
    validate(config);
    ClusterResult r;
    if (is_sector_baseline(config)) {
        r.partitions.push_back(cluster::sector_partition(data.sectors));
        return r;
    }
    if (embedding == nullptr) throw Error(ErrorCode::InvalidArgument, "clustering needs an embedding");
    const auto& tickers = data.periods.train.tickers;
    const auto& k = config.clustering;
    auto scaling = k.scaling;
    if (scaling == Scaling::Auto) scaling = embedding->method == vec::Method::Stats ? Scaling::PerColumn : Scaling::Pooled;
    Eigen::MatrixXd x;
    switch (scaling) {
        case Scaling::PerColumn: x = cluster::standardize(embedding->vectors); break;
        case Scaling::Pooled: x = cluster::pooled_standardize(embedding->vectors); break;
        default: x = embedding->vectors; break;
    }
    cluster::KMeansOptions options;
    options.k = k.k;
    options.seed = k.seed;
    options.restarts = k.restarts;
    auto km = cluster::kmeans(x, tickers, options);
    r.kmeans_inertia = km.inertia;
    r.partitions.push_back(std::move(km.partition));
    r.partitions.push_back(cluster::agglomerative(x, tickers, k.k, k.linkage));
    r.headline = k.algorithm == Algorithm::KMeans ? 0 : 1;
    return r;
}

namespace {

Summary summarize(const std::string& method, const std::string& clustering, std::span<const double> y,
                  std::size_t n_stocks, std::size_t rebalances) {
    Summary s;
    s.method = method;
    s.clustering = clustering;
    s.risk = portfolio::annual_risk(y);
    s.sharpe = portfolio::portfolio_sharpe(y);
    s.n_stocks = n_stocks;
    s.rebalances = rebalances;
    return s;
}

}  // namespace

BacktestStage backtest(const RunConfig& config, const IngestResult& data, const ClusterResult& clusters) {
    validate(config);
    BacktestStage stage;
    const std::string method = is_sector_baseline(config) ? "sectors" : vec::method_name(vec::parse_method(config.method));
    for (const auto& partition : clusters.partitions) {
        BacktestRun run;
        run.selection = portfolio::select_stocks(partition, data.periods.train, config.portfolio.per_cluster);
        if (run.selection.tickers.empty())
            throw Error(ErrorCode::DegenerateSeries, "no stock with a usable train series was selected");
        const auto history = data.returns.select(run.selection.tickers);
        run.result = portfolio::backtest(history, data.first_test_row, config.portfolio.backtest);
        run.summary.method = method;
        run.summary.clustering = partition.method;
        run.summary.risk = run.result.annual_risk;
        run.summary.sharpe = run.result.sharpe;
        run.summary.n_stocks = run.selection.tickers.size();
        run.summary.rebalances = run.result.rebalances.size();
        stage.runs.push_back(std::move(run));
    }
    const auto ew = portfolio::equal_weight_returns(data.periods.test);
    stage.equal_weight = summarize("equal_weight", "none", ew, data.periods.test.cols(), data.periods.test.rows());
    if (data.benchmark) stage.benchmark = summarize("benchmark", "none", *data.benchmark, 1, 0);
    return stage;
}

// ---------------------------------------------------------------- artifacts

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    auto out = detail::open_output(path);
    out << text;
}

std::string fnv1a_file(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

ordered_json summary_json(const Summary& s) {
    return {{"method", s.method},
            {"clustering", s.clustering},
            {"risk", s.risk},
            {"sharpe", s.sharpe},
            {"n_stocks", s.n_stocks},
            {"rebalances", s.rebalances}};
}

}  // namespace

void write_ingest_artifacts(const RunConfig& config, const IngestResult& data) {
    market::write_matrix_csv(config.out / "returns.csv", data.returns);
    auto out = detail::open_output(config.out / "dropped.csv");
    out << "ticker,missing_fraction\n";
    for (const auto& d : data.dropped) out << d.ticker << ',' << detail::format_double(d.missing_fraction) << '\n';
}

void write_embed_artifacts(const RunConfig& config, const EmbedResult& embedding) {
    const auto& vp = config.embedding.vectorize;
    {
        auto out = detail::open_output(config.out / "embeddings.csv");
        out << "# method=" << vec::method_name(embedding.method);
        switch (embedding.method) {
            case vec::Method::Stats: break;
            case vec::Method::PL1:
            case vec::Method::PL2:
                out << " layers=" << vp.landscape_layers << " samples=" << vp.landscape_samples;
                break;
            case vec::Method::PI1:
            case vec::Method::PI2:
                out << " resolution=" << vp.image_resolution
                    << " sigma_factor=" << detail::format_double(vp.image_sigma_factor);
                break;
        }
        out << " grid=" << (vp.global_grid ? "global" : "per_diagram") << " stride=" << config.embedding.stride
            << '\n';
        out << "ticker";
        for (Eigen::Index c = 0; c < embedding.vectors.cols(); ++c) out << ",f" << c;
        out << '\n';
        for (std::size_t i = 0; i < embedding.stocks.size(); ++i) {
            out << embedding.stocks[i].ticker;
            for (Eigen::Index c = 0; c < embedding.vectors.cols(); ++c)
                out << ',' << detail::format_double(embedding.vectors(static_cast<Eigen::Index>(i), c));
            out << '\n';
        }
    }
    {
        auto out = detail::open_output(config.out / "embedding_params.csv");
        out << "ticker,tau,dim,tau_fallback,dim_capped,points\n";
        for (const auto& s : embedding.stocks)
            out << s.ticker << ',' << s.tau << ',' << s.dim << ',' << int(s.tau_fallback) << ',' << int(s.dim_capped)
                << ',' << s.points << '\n';
    }
    for (const auto& s : embedding.stocks) ph::write_diagram_csv(config.out / "diagrams" / (s.ticker + ".csv"), s.diagram);
}

void write_cluster_artifacts(const RunConfig& config, const ClusterResult& clusters) {
    for (const auto& p : clusters.partitions) cluster::write_partition_csv(config.out / ("partition_" + p.method + ".csv"), p);
    if (!clusters.partitions.empty())
        cluster::write_partition_csv(config.out / "partition.csv", clusters.partitions[clusters.headline]);
}

void write_backtest_artifacts(const RunConfig& config, const IngestResult& data, const BacktestStage& stage) {
    for (const auto& run : stage.runs) {
        const auto& name = run.summary.clustering;
        portfolio::write_backtest_csv(config.out / ("backtest_" + name + ".csv"), run.result);
        portfolio::write_growth_csv(config.out / ("growth_" + name + ".csv"), run.result.dates, run.result.returns);
        write_text(config.out / ("summary_" + name + ".json"), summary_to_text(run.summary));
        {
            auto out = detail::open_output(config.out / ("selection_" + name + ".csv"));
            out << "cluster,ticker,train_sharpe\n";
            for (std::size_t i = 0; i < run.selection.tickers.size(); ++i)
                out << run.selection.cluster[i] << ',' << run.selection.tickers[i] << ','
                    << detail::format_double(run.selection.sharpe[i]) << '\n';
        }
        {
            auto out = detail::open_output(config.out / ("weights_" + name + ".csv"));
            out << "date,ticker,weight\n";
            for (const auto& rb : run.result.rebalances)
                for (Eigen::Index i = 0; i < rb.weights.size(); ++i)
                    out << rb.date.iso() << ',' << run.result.tickers[static_cast<std::size_t>(i)] << ','
                        << detail::format_double(rb.weights[i]) << '\n';
        }
    }
    const auto ew = portfolio::equal_weight_returns(data.periods.test);
    portfolio::write_growth_csv(config.out / "growth_equal_weight.csv", data.periods.test.dates, ew);
    write_text(config.out / "summary_equal_weight.json", summary_to_text(stage.equal_weight));
    if (stage.benchmark && data.benchmark) {
        portfolio::write_growth_csv(config.out / "growth_benchmark.csv", data.periods.test.dates, *data.benchmark);
        write_text(config.out / "summary_benchmark.json", summary_to_text(*stage.benchmark));
    }
}

// ---------------------------------------------------------------- run

namespace {

template <class F>
auto run_stage(const char* stage, std::vector<StageTiming>& timings, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            timings.push_back({stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
        } else {
            auto result = f();
            timings.push_back({stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
            return result;
        }
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, "", e);
    } catch (const std::filesystem::filesystem_error& e) {
        throw StageError(stage, "", Error(ErrorCode::Io, e.what()));
    }
}

ordered_json manifest_json(const RunConfig& config, const IngestResult* data, const EmbedResult* embedding,
                           const ClusterResult* clusters, const BacktestStage* stage,
                           const std::vector<std::string>& stages) {
    ordered_json m;
    m["artifact_version"] = artifact_version;
    m["tool_version"] = TDAPORT_VERSION;
    m["stages"] = stages;
    m["config"] = config_json(config, false);
    ordered_json inputs;
    inputs["prices"] = {{"path", config.prices.generic_string()}, {"fnv1a64", fnv1a_file(config.prices)}};
    if (!config.sectors.empty())
        inputs["sectors"] = {{"path", config.sectors.generic_string()}, {"fnv1a64", fnv1a_file(config.sectors)}};
    if (config.benchmark)
        inputs["benchmark"] = {{"path", config.benchmark->generic_string()}, {"fnv1a64", fnv1a_file(*config.benchmark)}};
    m["inputs"] = inputs;
    if (data) {
        ordered_json dropped = ordered_json::array();
        for (const auto& d : data->dropped) dropped.push_back({{"ticker", d.ticker}, {"missing_fraction", d.missing_fraction}});
        m["universe"] = {{"tickers", data->returns.tickers},
                         {"dropped", dropped},
                         {"filled_cells", data->filled_cells},
                         {"train_days", data->periods.train.rows()},
                         {"test_days", data->periods.test.rows()},
                         {"benchmark", data->benchmark.has_value()}};
    }
    if (embedding) {
        ordered_json stocks = ordered_json::array();
        for (const auto& s : embedding->stocks)
            stocks.push_back({{"ticker", s.ticker},
                              {"tau", s.tau},
                              {"dim", s.dim},
                              {"tau_fallback", s.tau_fallback},
                              {"dim_capped", s.dim_capped},
                              {"points", s.points},
                              {"bars", s.diagram.bars.size()}});
        m["embedding"] = {{"method", vec::method_name(embedding->method)}, {"stocks", stocks}};
    }
    if (clusters) {
        auto scaling = config.clustering.scaling;
        if (scaling == Scaling::Auto && embedding)
            scaling = embedding->method == vec::Method::Stats ? Scaling::PerColumn : Scaling::Pooled;
        ordered_json parts = ordered_json::array();
        for (const auto& p : clusters->partitions) parts.push_back({{"method", p.method}, {"k", p.k}});
        m["clustering"] = {{"partitions", parts},
                           {"headline", clusters->partitions.empty() ? "" : clusters->partitions[clusters->headline].method},
                           {"scaling", embedding ? scaling_name(scaling) : "none"},
                           {"kmeans_inertia", clusters->kmeans_inertia}};
    }
    if (stage) {
        ordered_json runs = ordered_json::array();
        for (const auto& r : stage->runs)
            runs.push_back({{"summary", summary_json(r.summary)},
                            {"tickers", r.selection.tickers},
                            {"skipped", r.selection.skipped}});
        m["portfolio"] = {{"runs", runs}, {"equal_weight", summary_json(stage->equal_weight)}};
        if (stage->benchmark) m["portfolio"]["benchmark"] = summary_json(*stage->benchmark);
    }
    return m;
}

}  // namespace

RunReport run_pipeline(const RunConfig& config, Until until) {
    RunReport report;
    auto& timings = report.timings;
    run_stage("config", timings, [&] { validate(config); });
    std::vector<std::string> stages{"ingest"};

    const auto data = run_stage("ingest", timings, [&] {
        auto d = ingest(config);
        write_ingest_artifacts(config, d);
        return d;
    });

    std::optional<EmbedResult> embedding;
    std::optional<ClusterResult> clusters;
    std::optional<BacktestStage> stage;
    const bool baseline = is_sector_baseline(config);
    if (until != Until::Ingest && !baseline) {
        stages.emplace_back("embed");
        embedding = run_stage("embed", timings, [&] {
            auto e = embed(config, data);
            write_embed_artifacts(config, e);
            return e;
        });
    }
    if (until == Until::Cluster || until == Until::Backtest) {
        stages.emplace_back("cluster");
        clusters = run_stage("cluster", timings, [&] {
            auto c = cluster_stocks(config, data, embedding ? &*embedding : nullptr);
            write_cluster_artifacts(config, c);
            return c;
        });
    }
    if (until == Until::Backtest) {
        stages.emplace_back("backtest");
        stage = run_stage("backtest", timings, [&] {
            auto b = backtest(config, data, *clusters);
            write_backtest_artifacts(config, data, b);
            return b;
        });
        report.headline = stage->runs[clusters->headline].summary;
        write_text(config.out / "summary.json", summary_to_text(report.headline));
        report.backtest = *stage;
    }

    run_stage("manifest", timings, [&] {
        write_text(config.out / "manifest.json",
                   manifest_json(config, &data, embedding ? &*embedding : nullptr, clusters ? &*clusters : nullptr,
                                 stage ? &*stage : nullptr, stages)
                           .dump(2) +
                       "\n");
    });
    ordered_json t = ordered_json::array();
    for (const auto& s : timings) t.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
    write_text(config.out / "timings.json", t.dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------- summaries

std::string summary_to_text(const Summary& summary) { return summary_json(summary).dump(2) + "\n"; }

Summary parse_summary(std::string_view text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("summary: ") + e.what());
    }
    Summary s;
    try {
        s.method = j.at("method").get<std::string>();
        s.clustering = j.at("clustering").get<std::string>();
        s.risk = j.at("risk").get<double>();
        s.sharpe = j.at("sharpe").get<double>();
        s.n_stocks = j.at("n_stocks").get<std::size_t>();
        s.rebalances = j.at("rebalances").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("summary: ") + e.what());
    }
    return s;
}

Summary load_summary(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_summary(text);
    } catch (const Error& e) {
        throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
    }
}

Comparison compare(std::vector<Summary> summaries) {
    if (summaries.empty()) throw Error(ErrorCode::InvalidArgument, "compare needs at least one summary");
    std::stable_sort(summaries.begin(), summaries.end(),
                     [](const Summary& a, const Summary& b) { return a.risk < b.risk; });
    Comparison c;
    c.rows = std::move(summaries);
    for (std::size_t i = 1; i < c.rows.size(); ++i)
        if (c.rows[i].sharpe > c.rows[c.best_sharpe].sharpe) c.best_sharpe = i;
    return c;
}

std::string comparison_text(const Comparison& c) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-14s %-14s %10s %10s %8s %10s  %s\n", "method", "clustering", "risk", "sharpe",
                  "stocks", "rebalances", "best");
    out << line;
    for (std::size_t i = 0; i < c.rows.size(); ++i) {
        const auto& r = c.rows[i];
        std::string mark;
        if (i == c.best_risk) mark += "risk";
        if (i == c.best_sharpe) mark += mark.empty() ? "sharpe" : ",sharpe";
        std::snprintf(line, sizeof line, "%-14s %-14s %10.6f %10.6f %8zu %10zu  %s\n", r.method.c_str(),
                      r.clustering.c_str(), r.risk, r.sharpe, r.n_stocks, r.rebalances, mark.c_str());
        out << line;
    }
    return out.str();
}

void write_comparison_csv(const std::filesystem::path& path, const Comparison& c) {
    auto out = detail::open_output(path);
    out << "method,clustering,risk,sharpe,n_stocks,rebalances,best_risk,best_sharpe\n";
    for (std::size_t i = 0; i < c.rows.size(); ++i) {
        const auto& r = c.rows[i];
        out << r.method << ',' << r.clustering << ',' << detail::format_double(r.risk) << ','
            << detail::format_double(r.sharpe) << ',' << r.n_stocks << ',' << r.rebalances << ','
            << int(i == c.best_risk) << ',' << int(i == c.best_sharpe) << '\n';
    }
}

}  // namespace tdaport::pipeline
