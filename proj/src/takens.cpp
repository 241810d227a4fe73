#include "tdaport/takens.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tdaport/error.hpp"
#include "tdaport/log.hpp"

namespace tdaport::takens {

namespace {

void check_params(const EmbeddingParams& p) {
    if (p.tau < 1 || p.dim < 1 || p.stride < 1)
        throw Error(ErrorCode::InvalidArgument, "embedding parameters must be positive");
}

std::pair<double, double> series_range(std::span<const double> series) {
    const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
    return {*lo, *hi};
}

}  // namespace

double histogram_mutual_information(std::span<const double> xs, std::span<const double> ys, int bins,
                                    double lo, double hi) {
    if (xs.size() != ys.size()) throw Error(ErrorCode::InvalidArgument, "paired samples differ in length");
    if (bins < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 bins");
    if (xs.empty()) throw Error(ErrorCode::InvalidArgument, "no samples");
    if (!(hi > lo)) return 0.0;

    const auto nb = static_cast<std::size_t>(bins);
    const double scale = static_cast<double>(bins) / (hi - lo);
    auto bin_of = [&](double v) {
        const double pos = std::floor((v - lo) * scale);
        if (pos <= 0.0) return std::size_t{0};
        return std::min(nb - 1, static_cast<std::size_t>(pos));
    };
    std::vector<std::size_t> joint(nb * nb, 0), row(nb, 0), col(nb, 0);
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto i = bin_of(xs[k]);
        const auto j = bin_of(ys[k]);
        ++joint[i * nb + j];
        ++row[i];
        ++col[j];
    }
    const double n = static_cast<double>(xs.size());
    auto term = [&](std::size_t i, std::size_t j) {
        const auto c = joint[i * nb + j];
        if (c == 0) return 0.0;
        const double cd = static_cast<double>(c);
        return cd * std::log(cd * n / (static_cast<double>(row[i]) * static_cast<double>(col[j])));
    };
    // Pair (i,j) with (j,i) so that transposing the histogram only swaps the
    // operands of a commutative addition.
    double sum = 0.0;
    for (std::size_t i = 0; i < nb; ++i) {
        sum += term(i, i);
        for (std::size_t j = i + 1; j < nb; ++j) sum += term(i, j) + term(j, i);
    }
    return std::max(0.0, sum / n);
}

double delayed_mutual_information(std::span<const double> series, int tau, int bins) {
    if (tau < 1) throw Error(ErrorCode::InvalidArgument, "tau must be >= 1");
    if (series.size() <= static_cast<std::size_t>(tau))
        throw Error(ErrorCode::InvalidArgument, "series shorter than the delay");
    const auto [lo, hi] = series_range(series);
    if (!(hi > lo)) {
        log::warn("mutual information of a constant series is defined as 0");
        return 0.0;
    }
    const auto n = series.size() - static_cast<std::size_t>(tau);
    return histogram_mutual_information(series.first(n), series.subspan(static_cast<std::size_t>(tau), n), bins, lo,
                                        hi);
}

double mutual_information_noise(int bins, std::size_t pairs) {
    return static_cast<double>(bins - 1) / (std::sqrt(2.0) * static_cast<double>(pairs));
}

DelayChoice select_delay(std::span<const double> series, int tau_max, int bins, double noise_sigmas) {
    if (tau_max < 1) throw Error(ErrorCode::InvalidArgument, "tau_max must be >= 1");
    if (static_cast<std::size_t>(tau_max) * 4 >= series.size())
        throw Error(ErrorCode::InvalidArgument,
                    "series too short: tau_max must be below a quarter of the series length");
    DelayChoice out;
    out.curve.reserve(static_cast<std::size_t>(tau_max));
    for (int tau = 1; tau <= tau_max; ++tau) out.curve.push_back(delayed_mutual_information(series, tau, bins));

    const double tol = noise_sigmas * mutual_information_noise(bins, series.size() - static_cast<std::size_t>(tau_max));
    const auto& mi = out.curve;
    double running_max = mi[0];
    for (std::size_t k = 1; k + 1 < mi.size(); ++k) {
        running_max = std::max(running_max, mi[k - 1]);
        if (!(mi[k] < mi[k - 1] && mi[k] < mi[k + 1] && mi[k] < running_max - tol)) continue;
        // the curve must climb more than tol before it next drops below mi[k]
        double peak = mi[k];
        for (std::size_t j = k + 1; j < mi.size() && mi[j] >= mi[k]; ++j) peak = std::max(peak, mi[j]);
        if (peak - mi[k] > tol) {
            out.tau = static_cast<int>(k) + 1;
            return out;
        }
    }
    const double lowest = *std::min_element(mi.begin(), mi.end());
    const auto first = std::find_if(mi.begin(), mi.end(), [&](double v) { return v <= lowest + tol; });
    out.tau = static_cast<int>(first - mi.begin()) + 1;
    out.fallback = true;
    log::warn("delayed mutual information has no significant local minimum; using tau = " + std::to_string(out.tau));
    return out;
}

double false_nearest_neighbors(std::span<const double> series, int tau, int dim, double r_tol) {
    if (tau < 1 || dim < 1) throw Error(ErrorCode::InvalidArgument, "tau and dim must be >= 1");
    const auto shift = static_cast<std::size_t>(dim) * static_cast<std::size_t>(tau);
    if (series.size() < shift + 10)
        throw Error(ErrorCode::InvalidArgument, "fewer than 10 embedded points for the neighbour test");
    const std::size_t m = series.size() - shift;  // points that also exist at dim + 1
    const auto utau = static_cast<std::size_t>(tau);

    const auto [lo, hi] = series_range(series);
    const double eps = 1e-10 * (hi - lo);
    const double eps2 = eps * eps;

    std::size_t valid = 0;
    std::size_t false_count = 0;
    for (std::size_t i = 0; i < m; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = m;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (std::size_t c = 0; c < static_cast<std::size_t>(dim) && d2 < best; ++c) {
                const double diff = series[i + c * utau] - series[j + c * utau];
                d2 += diff * diff;
            }
            if (!(d2 < best)) continue;
            // a duplicate of point i in dimension dim + 1 carries no information
            const double lift = series[i + shift] - series[j + shift];
            if (d2 + lift * lift <= eps2) continue;
            best = d2;
            best_j = j;
        }
        if (best_j == m) continue;
        ++valid;
        const double lifted = std::abs(series[i + shift] - series[best_j + shift]);
        if (lifted > r_tol * std::sqrt(best)) ++false_count;
    }
    if (valid == 0) return 0.0;
    return static_cast<double>(false_count) / static_cast<double>(valid);
}

DimensionChoice select_dimension(std::span<const double> series, int tau, int dim_max, double threshold,
                                 double r_tol) {
    if (dim_max < 2) throw Error(ErrorCode::InvalidArgument, "dim_max must be >= 2");
    DimensionChoice out;
    for (int d = 1; d <= dim_max; ++d) {
        const double f = false_nearest_neighbors(series, tau, d, r_tol);
        out.fnn.push_back(f);
        if (f < threshold) {
            out.dim = d;
            return out;
        }
    }
    out.dim = dim_max;
    out.capped = true;
    log::warn("false-nearest-neighbour fraction never fell below the threshold; using dim = " +
              std::to_string(dim_max));
    return out;
}

std::size_t embedded_count(std::size_t length, const EmbeddingParams& p) {
    check_params(p);
    const auto window = static_cast<std::size_t>(p.dim - 1) * static_cast<std::size_t>(p.tau);
    if (length < window + 1) return 0;
    return (length - window - 1) / static_cast<std::size_t>(p.stride) + 1;
}

PointCloud embed(std::span<const double> series, const EmbeddingParams& params, std::string ticker) {
    const auto m = embedded_count(series.size(), params);
    if (m == 0) throw Error(ErrorCode::InvalidArgument, "series too short for a single embedded point");
    PointCloud cloud;
    cloud.params = params;
    cloud.source_ticker = std::move(ticker);
    cloud.points.resize(static_cast<Eigen::Index>(m), params.dim);
    const auto s = static_cast<std::size_t>(params.stride);
    const auto tau = static_cast<std::size_t>(params.tau);
    for (std::size_t k = 0; k < m; ++k)
        for (int c = 0; c < params.dim; ++c)
            cloud.points(static_cast<Eigen::Index>(k), c) = series[s * k + static_cast<std::size_t>(c) * tau];
    return cloud;
}

}  // namespace tdaport::takens
