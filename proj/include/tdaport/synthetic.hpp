#pragma once

#include <cstdint>
#include <vector>

#include "tdaport/date.hpp"
#include "tdaport/market_data.hpp"

namespace tdaport::synthetic {

/// `count` consecutive Monday-Friday dates starting at (or after) `start`.
std::vector<Date> business_days(Date start, std::size_t count);

struct Universe {
    market::PriceMatrix prices;
    std::vector<int> group;  ///< generating label per ticker
    market::SectorMap sectors;
};

struct SinusoidSpec {
    std::size_t per_group = 20;
    std::vector<double> periods{20.0, 50.0};
    std::size_t length = 500;       ///< number of daily returns
    double amplitude = 0.1;         ///< price cycle amplitude relative to the base price
    double noise_ratio = 0.2;       ///< return noise std as a fraction of the return amplitude
    double base = 100.0;            ///< initial price
    Date start{2012, 1, 2};
};

/// Daily returns a sin(2 pi t / P + phase) + noise compounded from `base`,
/// with a = 2 pi amplitude / P the daily move of a price cycle of the given
/// relative amplitude. One group per period, random phase per ticker. The
/// price matrix has length + 1 rows so compute_returns recovers the noisy
/// sinusoid.
/// Ticker names are G<group>_<index>.
Universe sinusoid_universe(const SinusoidSpec& spec, std::uint64_t seed);

struct RegimeMarketSpec {
    std::size_t stocks = 60;
    std::size_t regimes = 3;
    std::size_t days = 1044;        ///< price observations (four years of weekdays)
    Date start{2012, 1, 2};
};

/// Daily returns driven by one latent factor per regime. Each factor mixes a
/// cycle of regime-specific period with noise; stocks load on their
/// regime's factor with random beta, drift and idiosyncratic volatility.
/// Sector labels are drawn independently of the regimes.
Universe regime_market(const RegimeMarketSpec& spec, std::uint64_t seed);

}  // namespace tdaport::synthetic
