#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tdaport/market_data.hpp"
#include "tdaport/synthetic.hpp"

namespace {

void write_universe(const std::filesystem::path& dir, const tdaport::synthetic::Universe& u) {
    std::filesystem::create_directories(dir);
    tdaport::market::write_prices_csv(dir / "prices.csv", u.prices);
    std::ofstream sectors(dir / "sectors.csv", std::ios::binary);
    sectors << "ticker,sector\n";
    for (const auto& [ticker, sector] : u.sectors) sectors << ticker << ',' << sector << '\n';
    std::ofstream groups(dir / "groups.csv", std::ios::binary);
    groups << "ticker,group\n";
    for (std::size_t i = 0; i < u.group.size(); ++i) groups << u.prices.tickers[i] << ',' << u.group[i] << '\n';
    if (!sectors || !groups) throw std::runtime_error("cannot write into " + dir.string());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic price universes"};
    app.require_subcommand(1);
    std::uint64_t seed = 1;
    std::string out;

    auto* sine = app.add_subcommand("sinusoid", "two or more groups of noisy periodic return series");
    tdaport::synthetic::SinusoidSpec sspec;
    sine->add_option("--per-group", sspec.per_group)->capture_default_str();
    sine->add_option("--periods", sspec.periods)->capture_default_str();
    sine->add_option("--length", sspec.length, "daily returns per series")->capture_default_str();
    sine->add_option("--noise", sspec.noise_ratio)->capture_default_str();

    auto* market = app.add_subcommand("market", "stocks driven by latent regime factors");
    tdaport::synthetic::RegimeMarketSpec mspec;
    market->add_option("--stocks", mspec.stocks)->capture_default_str();
    market->add_option("--regimes", mspec.regimes)->capture_default_str();
    market->add_option("--days", mspec.days, "price observations")->capture_default_str();

    for (auto* sub : {sine, market}) {
        sub->add_option("--seed", seed)->capture_default_str();
        sub->add_option("--out", out, "output directory")->required();
    }
    CLI11_PARSE(app, argc, argv);
    try {
        if (sine->parsed()) write_universe(out, tdaport::synthetic::sinusoid_universe(sspec, seed));
        else write_universe(out, tdaport::synthetic::regime_market(mspec, seed));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
