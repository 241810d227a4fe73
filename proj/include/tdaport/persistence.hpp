#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace tdaport::takens {
struct PointCloud;
}

namespace tdaport::ph {

/// Dense symmetric Euclidean distance matrix.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {}

    [[nodiscard]] std::size_t size() const { return n_; }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    void set(std::size_t i, std::size_t j, double v) {
        d_[i * n_ + j] = v;
        d_[j * n_ + i] = v;
    }

private:
    std::size_t n_ = 0;
    std::vector<double> d_;
};

/// Upper triangle computed once and mirrored, so symmetry is exact.
DistanceMatrix pairwise_distances(const Eigen::MatrixXd& points);
DistanceMatrix pairwise_distances(const takens::PointCloud& cloud);

/// min_i max_j d(i, j). Above this scale the Rips complex is a cone.
double enclosing_radius(const DistanceMatrix& dist);

struct Simplex {
    std::array<std::uint32_t, 4> vertices{};  ///< first dim() + 1 entries used, increasing
    std::uint8_t size = 0;
    double value = 0.0;  ///< diameter: longest edge among the vertices

    [[nodiscard]] int dim() const { return static_cast<int>(size) - 1; }
    [[nodiscard]] std::span<const std::uint32_t> verts() const { return {vertices.data(), size}; }
};

/// Simplices sorted by (value, dimension, vertices); faces precede cofaces.
struct Filtration {
    std::vector<Simplex> simplices;
    std::size_t points = 0;
    int max_dim = 0;          ///< largest simplex dimension present
    double max_radius = 0.0;
    bool cone = false;        ///< some vertex lies within max_radius of every other

    [[nodiscard]] std::size_t count(int dim) const;
};

inline constexpr std::size_t default_simplex_budget = 5'000'000;

/// Vietoris-Rips filtration with every simplex of dimension <= max_dim and
/// diameter <= max_radius. Throws Error(BudgetExceeded) past the budget.
Filtration build_filtration(const DistanceMatrix& dist, int max_dim, double max_radius,
                            std::size_t simplex_budget = default_simplex_budget);

struct Bar {
    double birth = 0.0;
    double death = std::numeric_limits<double>::infinity();
    int dim = 0;

    [[nodiscard]] bool finite() const { return death != std::numeric_limits<double>::infinity(); }
    [[nodiscard]] double length() const { return death - birth; }
    friend bool operator==(const Bar&, const Bar&) = default;
};

struct PersistenceDiagram {
    std::vector<Bar> bars;  ///< sorted by (dim, birth, death)

    [[nodiscard]] std::vector<Bar> of_dim(int dim) const;
    [[nodiscard]] std::vector<Bar> finite_of_dim(int dim) const;
    void sort();
};

/// Z/2 boundary-matrix reduction with clearing. Reports bars in dimensions
/// below the filtration's top simplex dimension; zero-length bars dropped.
PersistenceDiagram reduce(const Filtration& filtration);

/// H0 bars from Kruskal's minimum spanning tree: (0, w) per positive edge
/// weight plus one (0, inf).
PersistenceDiagram h0_mst(const DistanceMatrix& dist);

struct PersistenceOptions {
    int max_homology_dim = 1;                ///< 1: H0 and H1; 2: adds H2
    std::optional<double> max_radius;        ///< default: enclosing radius
    std::size_t simplex_budget = default_simplex_budget;
};

PersistenceDiagram compute_persistence(const takens::PointCloud& cloud, const PersistenceOptions& options = {});

/// CSV `dim,birth,death` with `inf` for an infinite death.
void write_diagram_csv(const std::filesystem::path& path, const PersistenceDiagram& diagram);
PersistenceDiagram read_diagram_csv(const std::filesystem::path& path);

}  // namespace tdaport::ph
