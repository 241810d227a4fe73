#include "tdaport/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "tdaport/error.hpp"
#include "tdaport/random.hpp"

namespace tdaport::synthetic {

std::vector<Date> business_days(Date start, std::size_t count) {
    std::vector<Date> out;
    out.reserve(count);
    auto day = start.sys_days();
    while (out.size() < count) {
        const Date d(day);
        if (d.is_weekday()) out.push_back(d);
        day += std::chrono::days{1};
    }
    return out;
}

namespace {

std::string ticker_name(const char* prefix, std::size_t group, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%zu_%02zu", prefix, group, index);
    return buf;
}

}  // namespace

Universe sinusoid_universe(const SinusoidSpec& spec, std::uint64_t seed) {
    if (spec.periods.empty() || spec.per_group == 0 || spec.length < 2)
        throw Error(ErrorCode::InvalidArgument, "empty synthetic sinusoid specification");
    double max_move = 0.0;
    for (double p : spec.periods) {
        if (!(p > 0.0)) throw Error(ErrorCode::InvalidArgument, "synthetic period must be positive");
        max_move = std::max(max_move, 2.0 * std::numbers::pi * spec.amplitude / p);
    }
    if (spec.base <= 0.0 || max_move * (1.0 + 8.0 * spec.noise_ratio) >= 1.0)
        throw Error(ErrorCode::InvalidArgument, "synthetic returns would not keep prices positive");
    Rng rng(seed);
    Universe u;
    u.prices.dates = business_days(spec.start, spec.length + 1);
    const auto n = spec.periods.size() * spec.per_group;
    u.prices.values.resize(static_cast<Eigen::Index>(spec.length + 1), static_cast<Eigen::Index>(n));
    const auto& labels = market::canonical_sectors();
    std::size_t col = 0;
    for (std::size_t g = 0; g < spec.periods.size(); ++g)
        for (std::size_t i = 0; i < spec.per_group; ++i, ++col) {
            const auto ticker = ticker_name("G", g, i);
            u.prices.tickers.push_back(ticker);
            u.group.push_back(static_cast<int>(g));
            u.sectors[ticker] = labels[col % labels.size()];
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double a = 2.0 * std::numbers::pi * spec.amplitude / spec.periods[g];
            double price = spec.base;
            u.prices.values(0, static_cast<Eigen::Index>(col)) = price;
            for (std::size_t t = 0; t < spec.length; ++t) {
                const double clean =
                    a * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / spec.periods[g] + phase);
                const double noise = spec.noise_ratio * a * rng.normal();
                price *= 1.0 + clean + noise;
                u.prices.values(static_cast<Eigen::Index>(t + 1), static_cast<Eigen::Index>(col)) = price;
            }
        }
    return u;
}

Universe regime_market(const RegimeMarketSpec& spec, std::uint64_t seed) {
    if (spec.stocks == 0 || spec.regimes == 0 || spec.days < 2)
        throw Error(ErrorCode::InvalidArgument, "empty synthetic market specification");
    Rng rng(seed);
    const auto T = spec.days - 1;  // returns per stock

    // latent factor per regime: cycle + AR(1) noise, daily return units
    static constexpr double periods[] = {20.0, 45.0, 90.0, 30.0, 65.0};
    std::vector<std::vector<double>> factor(spec.regimes, std::vector<double>(T));
    for (std::size_t r = 0; r < spec.regimes; ++r) {
        const double period = periods[r % std::size(periods)];
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double cycle = 0.006 + 0.002 * static_cast<double>(r % 2);
        double ar = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            ar = 0.3 * ar + 0.006 * rng.normal();
            factor[r][t] = cycle * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + phase) + ar;
        }
    }

    Universe u;
    u.prices.dates = business_days(spec.start, spec.days);
    u.prices.values.resize(static_cast<Eigen::Index>(spec.days), static_cast<Eigen::Index>(spec.stocks));
    const auto& labels = market::canonical_sectors();
    for (std::size_t i = 0; i < spec.stocks; ++i) {
        const std::size_t regime = i % spec.regimes;
        const auto ticker = ticker_name("R", regime, i / spec.regimes);
        u.prices.tickers.push_back(ticker);
        u.group.push_back(static_cast<int>(regime));
        u.sectors[ticker] = labels[static_cast<std::size_t>(rng.uniform() * static_cast<double>(labels.size())) %
                                   labels.size()];
        const double beta = rng.uniform(0.6, 1.4);
        const double drift = rng.uniform(-0.0002, 0.0008);
        const double idio = rng.uniform(0.004, 0.02);
        double price = rng.uniform(20.0, 200.0);
        u.prices.values(0, static_cast<Eigen::Index>(i)) = price;
        for (std::size_t t = 0; t < T; ++t) {
            const double r = drift + beta * factor[regime][t] + idio * rng.normal();
            price *= 1.0 + r;
            u.prices.values(static_cast<Eigen::Index>(t + 1), static_cast<Eigen::Index>(i)) = price;
        }
    }
    return u;
}

}  // namespace tdaport::synthetic
