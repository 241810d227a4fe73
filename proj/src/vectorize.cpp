#include "tdaport/vectorize.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "tdaport/error.hpp"

namespace tdaport::vec {

namespace {

/// Finite bars of one dimension with positive persistence, in canonical order.
std::vector<ph::Bar> usable_bars(const ph::PersistenceDiagram& diagram, int dim) {
    std::vector<ph::Bar> out;
    for (const auto& b : diagram.bars)
        if (b.dim == dim && b.finite() && b.death > b.birth) out.push_back(b);
    std::sort(out.begin(), out.end(), [](const ph::Bar& a, const ph::Bar& b) {
        if (a.birth != b.birth) return a.birth < b.birth;
        return a.death < b.death;
    });
    return out;
}

}  // namespace

Method parse_method(const std::string& name) {
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "stats") return Method::Stats;
    if (lower == "pl1") return Method::PL1;
    if (lower == "pl2") return Method::PL2;
    if (lower == "pi1") return Method::PI1;
    if (lower == "pi2") return Method::PI2;
    throw Error(ErrorCode::Config, "unknown embedding method '" + name + "'");
}

std::string method_name(Method method) {
    switch (method) {
        case Method::Stats: return "stats";
        case Method::PL1: return "pl1";
        case Method::PL2: return "pl2";
        case Method::PI1: return "pi1";
        case Method::PI2: return "pi2";
    }
    return "?";
}

int method_homology_dim(Method method) {
    switch (method) {
        case Method::PL1:
        case Method::PI1: return 1;
        case Method::PL2:
        case Method::PI2: return 2;
        case Method::Stats: return 0;
    }
    return 0;
}

bool method_needs_h2(Method method) { return method == Method::PL2 || method == Method::PI2; }

std::vector<double> bar_statistics(const ph::PersistenceDiagram& diagram) {
    std::vector<double> out;
    out.reserve(bar_statistics_length);
    for (int dim = 0; dim <= 2; ++dim) {
        const auto bars = usable_bars(diagram, dim);
        const std::size_t width = dim == 0 ? 4 : 8;
        if (bars.empty()) {
            out.insert(out.end(), width, 0.0);
            continue;
        }
        double sum = 0.0, longest = -1.0, last_birth = bars.front().birth;
        const ph::Bar* longest_bar = &bars.front();
        for (const auto& b : bars) {
            sum += b.length();
            last_birth = std::max(last_birth, b.birth);
            if (b.length() > longest) {
                longest = b.length();
                longest_bar = &b;
            }
        }
        const double count = static_cast<double>(bars.size());
        const double mean = sum / count;
        double var = 0.0;
        for (const auto& b : bars) var += (b.length() - mean) * (b.length() - mean);
        out.insert(out.end(), {mean, sum, std::sqrt(var / count), longest});
        if (dim > 0) out.insert(out.end(), {last_birth, longest_bar->birth, longest_bar->death, count});
    }
    return out;
}

LandscapeEmbedding landscape(const ph::PersistenceDiagram& diagram, int dim, int layers, int samples,
                             std::optional<Interval> grid) {
    if (layers < 1 || samples < 2) throw Error(ErrorCode::InvalidArgument, "landscape needs layers >= 1, samples >= 2");
    const auto bars = usable_bars(diagram, dim);
    LandscapeEmbedding out;
    out.layers = layers;
    out.samples = samples;
    if (grid) {
        out.t_min = grid->lo;
        out.t_max = grid->hi;
    } else if (!bars.empty()) {
        out.t_min = bars.front().birth;
        out.t_max = bars.front().death;
        for (const auto& b : bars) {
            out.t_min = std::min(out.t_min, b.birth);
            out.t_max = std::max(out.t_max, b.death);
        }
    }
    out.values.assign(static_cast<std::size_t>(layers * samples), 0.0);
    std::vector<double> tents;
    tents.reserve(bars.size());
    const double step = (out.t_max - out.t_min) / static_cast<double>(samples - 1);
    for (int s = 0; s < samples; ++s) {
        const double t = s + 1 == samples ? out.t_max : out.t_min + step * s;
        tents.clear();
        for (const auto& b : bars) {
            const double h = std::min(t - b.birth, b.death - t);
            if (h > 0.0) tents.push_back(h);
        }
        const auto k = std::min<std::size_t>(tents.size(), static_cast<std::size_t>(layers));
        std::partial_sort(tents.begin(), tents.begin() + static_cast<std::ptrdiff_t>(k), tents.end(), std::greater<>());
        for (std::size_t layer = 0; layer < k; ++layer)
            out.values[layer * static_cast<std::size_t>(samples) + static_cast<std::size_t>(s)] = tents[layer];
    }
    return out;
}

namespace {

// Mass of N(mu, sigma^2) on [lo, hi]; tails use erfc to keep relative precision.
double gaussian_mass(double lo, double hi, double mu, double sigma) {
    const double s = sigma * std::numbers::sqrt2;
    const double a = (lo - mu) / s, b = (hi - mu) / s;
    if (a >= 0.0) return 0.5 * (std::erfc(a) - std::erfc(b));
    if (b <= 0.0) return 0.5 * (std::erfc(-b) - std::erfc(-a));
    return 0.5 * (std::erf(b) - std::erf(a));
}

}  // namespace

ImageEmbedding persistence_image(const ph::PersistenceDiagram& diagram, int dim, int resolution, double sigma,
                                 std::optional<ImageBounds> bounds) {
    if (resolution < 1) throw Error(ErrorCode::InvalidArgument, "image resolution must be >= 1");
    if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "image sigma must be positive");
    const auto bars = usable_bars(diagram, dim);
    ImageEmbedding out;
    out.sigma = sigma;
    out.resolution = resolution;
    const auto r = static_cast<std::size_t>(resolution);
    out.pixels.assign(r * r, 0.0);

    double p_max = 0.0, b_max = 0.0;
    for (const auto& b : bars) {
        p_max = std::max(p_max, b.length());
        b_max = std::max(b_max, b.birth);
    }
    const ImageBounds extent = bounds ? *bounds : ImageBounds{b_max, p_max};
    const double pad = 3.0 * sigma;
    out.birth_range = {-pad, extent.birth_max + pad};
    out.persistence_range = {-pad, extent.persistence_max + pad};
    if (bars.empty()) return out;

    const double dx = (out.birth_range.hi - out.birth_range.lo) / static_cast<double>(resolution);
    const double dy = (out.persistence_range.hi - out.persistence_range.lo) / static_cast<double>(resolution);
    std::vector<double> gx(r), gy(r);
    // identical bars are evaluated once and scaled by their multiplicity
    for (std::size_t k = 0; k < bars.size();) {
        const auto& b = bars[k];
        std::size_t copies = 1;
        while (k + copies < bars.size() && bars[k + copies] == b) ++copies;
        k += copies;
        const double weight = b.length() / p_max;
        for (std::size_t c = 0; c < r; ++c) {
            const double x0 = out.birth_range.lo + static_cast<double>(c) * dx;
            gx[c] = gaussian_mass(x0, x0 + dx, b.birth, sigma);
        }
        for (std::size_t row = 0; row < r; ++row) {
            const double y0 = out.persistence_range.lo + static_cast<double>(row) * dy;
            gy[row] = gaussian_mass(y0, y0 + dy, b.length(), sigma);
        }
        const double scale = weight * static_cast<double>(copies);
        for (std::size_t row = 0; row < r; ++row)
            for (std::size_t c = 0; c < r; ++c) out.pixels[row * r + c] += scale * (gy[row] * gx[c]);
    }
    return out;
}

GlobalBounds gather_bounds(const std::vector<ph::PersistenceDiagram>& diagrams, int dim) {
    GlobalBounds g;
    for (const auto& d : diagrams)
        for (const auto& b : usable_bars(d, dim)) {
            if (!g.any_bars) {
                g.landscape_range = {b.birth, b.death};
                g.any_bars = true;
            }
            g.landscape_range.lo = std::min(g.landscape_range.lo, b.birth);
            g.landscape_range.hi = std::max(g.landscape_range.hi, b.death);
            g.image.birth_max = std::max(g.image.birth_max, b.birth);
            g.image.persistence_max = std::max(g.image.persistence_max, b.length());
        }
    return g;
}

std::size_t embedding_length(Method method, const VectorizeParams& params) {
    switch (method) {
        case Method::Stats: return bar_statistics_length;
        case Method::PL1:
        case Method::PL2: return static_cast<std::size_t>(params.landscape_layers * params.landscape_samples);
        case Method::PI1:
        case Method::PI2: return static_cast<std::size_t>(params.image_resolution * params.image_resolution);
    }
    return 0;
}

std::vector<double> embed_stock(const ph::PersistenceDiagram& diagram, Method method, const VectorizeParams& params,
                                const GlobalBounds* bounds, bool h2_enabled) {
    if (method_needs_h2(method) && !h2_enabled)
        throw Error(ErrorCode::Config, "method " + method_name(method) + " needs H2, which is disabled");
    const int dim = method_homology_dim(method);
    const bool global = params.global_grid && bounds != nullptr;
    switch (method) {
        case Method::Stats: return bar_statistics(diagram);
        case Method::PL1:
        case Method::PL2: {
            std::optional<Interval> grid;
            if (global) grid = bounds->landscape_range;
            return landscape(diagram, dim, params.landscape_layers, params.landscape_samples, grid).values;
        }
        case Method::PI1:
        case Method::PI2: {
            double p_max = 0.0;
            std::optional<ImageBounds> extent;
            if (global) {
                extent = bounds->image;
                p_max = bounds->image.persistence_max;
            } else {
                for (const auto& b : usable_bars(diagram, dim)) p_max = std::max(p_max, b.length());
            }
            if (!(p_max > 0.0))
                return std::vector<double>(static_cast<std::size_t>(params.image_resolution * params.image_resolution), 0.0);
            return persistence_image(diagram, dim, params.image_resolution, params.image_sigma_factor * p_max, extent)
                .pixels;
        }
    }
    return {};
}

}  // namespace tdaport::vec
