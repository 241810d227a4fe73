#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tdaport/error.hpp"
#include "tdaport/log.hpp"
#include "tdaport/pipeline.hpp"

namespace pl = tdaport::pipeline;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> method;
    std::optional<std::string> clustering;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;
};

void add_common(CLI::App* app, Overrides& o) {
    app->add_option("--config", o.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    app->add_option("--method", o.method, "stats, pl1, pl2, pi1, pi2 or sectors");
    app->add_option("--clustering", o.clustering, "headline clustering: kmeans or agglomerative");
    app->add_option("--seed", o.seed, "k-means seed");
    app->add_option("--workers", o.workers, "threads for the per-stock stages");
    app->add_option("--out", o.out, "output directory");
}

pl::RunConfig resolve(const Overrides& o) {
    auto config = pl::load_config(o.config);
    if (o.method) config.method = *o.method;
    if (o.clustering) config.clustering.algorithm = pl::parse_algorithm(*o.clustering);
    if (o.seed) config.clustering.seed = *o.seed;
    if (o.workers) config.workers = *o.workers;
    if (o.out) config.out = *o.out;
    return config;
}

void print_summary(const pl::Summary& s, const char* tag) {
    std::printf("%-9s method=%s clustering=%s risk=%.6f sharpe=%.6f n_stocks=%zu rebalances=%zu\n", tag,
                s.method.c_str(), s.clustering.c_str(), s.risk, s.sharpe, s.n_stocks, s.rebalances);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Topological clustering and minimum-variance portfolio backtests"};
    app.require_subcommand(1);
    app.set_version_flag("--version", TDAPORT_VERSION);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "log progress");
    app.add_flag("-q,--quiet", quiet, "suppress warnings");

    Overrides o;
    struct Staged {
        const char* name;
        const char* help;
        pl::Until until;
        CLI::App* app = nullptr;
    };
    std::vector<Staged> staged{
        {"ingest", "load prices, align and write returns", pl::Until::Ingest},
        {"embed", "ingest, then delay embedding, persistence and vectorization", pl::Until::Embed},
        {"cluster", "embed, then cluster the stocks", pl::Until::Cluster},
        {"backtest", "cluster, then select stocks and backtest", pl::Until::Backtest},
        {"run", "full pipeline", pl::Until::Backtest},
    };
    for (auto& s : staged) {
        s.app = app.add_subcommand(s.name, s.help);
        add_common(s.app, o);
    }

    auto* init = app.add_subcommand("init-config", "print the default configuration");
    std::string init_file;
    init->add_option("--file", init_file, "write to this file instead of stdout");

    auto* cmp = app.add_subcommand("compare", "table of summary records sorted by risk");
    std::vector<std::string> summaries;
    std::string csv;
    cmp->add_option("summaries", summaries, "summary JSON files")->required()->check(CLI::ExistingFile);
    cmp->add_option("--csv", csv, "also write the table as CSV");

    CLI11_PARSE(app, argc, argv);
    tdaport::log::set_level(quiet ? tdaport::log::Level::Silent
                                  : verbose ? tdaport::log::Level::Info : tdaport::log::Level::Warn);

    try {
        if (init->parsed()) {
            const auto text = pl::config_to_text(pl::RunConfig{});
            if (init_file.empty()) {
                std::cout << text;
            } else {
                std::ofstream out(init_file, std::ios::binary);
                if (!out) throw tdaport::Error(tdaport::ErrorCode::Io, "cannot write " + init_file);
                out << text;
            }
            return 0;
        }
        if (cmp->parsed()) {
            std::vector<pl::Summary> rows;
            for (const auto& path : summaries) rows.push_back(pl::load_summary(path));
            const auto table = pl::compare(std::move(rows));
            std::cout << pl::comparison_text(table);
            if (!csv.empty()) pl::write_comparison_csv(csv, table);
            return 0;
        }
        for (const auto& s : staged) {
            if (!s.app->parsed()) continue;
            pl::RunConfig config;
            try {
                config = resolve(o);
            } catch (const tdaport::Error& e) {
                throw tdaport::StageError("config", "", e);
            }
            const auto report = pl::run_pipeline(config, s.until);
            if (s.until == pl::Until::Backtest) {
                print_summary(report.headline, "headline");
                for (const auto& run : report.backtest.runs) print_summary(run.summary, "run");
                print_summary(report.backtest.equal_weight, "baseline");
                if (report.backtest.benchmark) print_summary(*report.backtest.benchmark, "baseline");
            }
            std::printf("artifacts written to %s\n", config.out.string().c_str());
            return 0;
        }
    } catch (const tdaport::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 1;
}
