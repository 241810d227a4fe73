#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tdaport/persistence.hpp"

namespace tdaport::vec {

enum class Method { Stats, PL1, PL2, PI1, PI2 };

Method parse_method(const std::string& name);  ///< "stats", "pl1", ... (case-insensitive)
std::string method_name(Method method);         ///< lower-case name
/// Homology dimension read by a landscape/image method; 0 for Stats.
int method_homology_dim(Method method);
bool method_needs_h2(Method method);

inline constexpr std::size_t bar_statistics_length = 20;

/// Per dimension: mean, sum, std (population), max of finite bar lengths;
/// dims 1 and 2 add last birth, birth and death of the longest bar, and the
/// bar count. Zero-length bars are ignored. Dim blocks are 4 + 8 + 8 wide;
/// empty blocks are zero.
std::vector<double> bar_statistics(const ph::PersistenceDiagram& diagram);

struct LandscapeEmbedding {
    std::vector<double> values;  ///< layer-major: values[k * samples + s]
    double t_min = 0.0;
    double t_max = 1.0;
    int layers = 0;
    int samples = 0;

    [[nodiscard]] double at(int layer, int sample) const {
        return values[static_cast<std::size_t>(layer * samples + sample)];
    }
};

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

/// First `layers` persistence landscape functions of the dim-`dim` bars,
/// sampled at `samples` evenly spaced points of `grid`. Without a grid the
/// range [min birth, max death] of the diagram is used ([0, 1] if empty).
LandscapeEmbedding landscape(const ph::PersistenceDiagram& diagram, int dim, int layers, int samples,
                             std::optional<Interval> grid = std::nullopt);

struct ImageEmbedding {
    std::vector<double> pixels;  ///< row-major, rows along persistence
    Interval birth_range;
    Interval persistence_range;
    double sigma = 0.0;
    int resolution = 0;
};

/// Extent of the (birth, persistence) plane covered by an image, before padding.
struct ImageBounds {
    double birth_max = 0.0;
    double persistence_max = 0.0;
};

/// Persistence image: Gaussians of width sigma centred at (birth,
/// persistence), weighted by persistence / max persistence of the diagram,
/// integrated over each pixel of [0, b_max] x [0, p_max]
/// padded by 3 sigma on every side.
ImageEmbedding persistence_image(const ph::PersistenceDiagram& diagram, int dim, int resolution, double sigma,
                                 std::optional<ImageBounds> bounds = std::nullopt);

struct VectorizeParams {
    int landscape_layers = 5;
    int landscape_samples = 100;
    int image_resolution = 20;
    double image_sigma_factor = 0.05;  ///< sigma = factor * max persistence (pooled in global mode)
    bool global_grid = true;
};

/// Grid bounds pooled over a set of diagrams, for a fixed homology dimension.
struct GlobalBounds {
    Interval landscape_range{0.0, 1.0};
    ImageBounds image;
    bool any_bars = false;
};

GlobalBounds gather_bounds(const std::vector<ph::PersistenceDiagram>& diagrams, int dim);

std::size_t embedding_length(Method method, const VectorizeParams& params);

/// Embedding vector for one stock. `bounds` is used in global-grid mode and
/// must come from gather_bounds for the method's homology dimension.
std::vector<double> embed_stock(const ph::PersistenceDiagram& diagram, Method method, const VectorizeParams& params,
                                const GlobalBounds* bounds, bool h2_enabled);

}  // namespace tdaport::vec
