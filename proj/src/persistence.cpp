#include "tdaport/persistence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "csv.hpp"
#include "tdaport/error.hpp"
#include "tdaport/takens.hpp"

namespace tdaport::ph {

namespace {

constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

bool filtration_less(const Simplex& a, const Simplex& b) {
    if (a.value != b.value) return a.value < b.value;
    if (a.size != b.size) return a.size < b.size;
    return std::lexicographical_compare(a.vertices.begin(), a.vertices.begin() + a.size, b.vertices.begin(),
                                        b.vertices.begin() + b.size);
}

void budget_error(std::size_t budget) {
    throw Error(ErrorCode::BudgetExceeded,
                "Rips filtration exceeds the simplex budget of " + std::to_string(budget) +
                    "; use a larger embedding stride or a smaller max_radius");
}

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (a > b) std::swap(a, b);
        parent_[b] = a;
        return true;
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

DistanceMatrix pairwise_distances(const Eigen::MatrixXd& points) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty point cloud");
    if (!points.allFinite()) throw Error(ErrorCode::InvalidArgument, "point cloud has non-finite coordinates");
    DistanceMatrix dist(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (Eigen::Index c = 0; c < points.cols(); ++c) {
                const double diff = points(static_cast<Eigen::Index>(i), c) - points(static_cast<Eigen::Index>(j), c);
                s += diff * diff;
            }
            dist.set(i, j, std::sqrt(s));
        }
    return dist;
}

DistanceMatrix pairwise_distances(const takens::PointCloud& cloud) { return pairwise_distances(cloud.points); }

double enclosing_radius(const DistanceMatrix& dist) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < dist.size(); ++i) {
        double far = 0.0;
        for (std::size_t j = 0; j < dist.size(); ++j) far = std::max(far, dist(i, j));
        best = std::min(best, far);
    }
    return best;
}

std::size_t Filtration::count(int dim) const {
    return static_cast<std::size_t>(
        std::count_if(simplices.begin(), simplices.end(), [dim](const Simplex& s) { return s.dim() == dim; }));
}

Filtration build_filtration(const DistanceMatrix& dist, int max_dim, double max_radius, std::size_t simplex_budget) {
    if (max_dim < 1 || max_dim > 3) throw Error(ErrorCode::InvalidArgument, "max_dim must be 1, 2 or 3");
    if (!(max_radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "max_radius must be positive");
    const std::size_t n = dist.size();
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty distance matrix");

    Filtration f;
    f.points = n;
    f.max_dim = max_dim;
    f.max_radius = max_radius;
    for (std::size_t i = 0; i < n && !f.cone; ++i) {
        bool covers = true;
        for (std::size_t j = 0; j < n && covers; ++j) covers = dist(i, j) <= max_radius;
        f.cone = covers;
    }

    auto push = [&](Simplex s) {
        if (f.simplices.size() >= simplex_budget) budget_error(simplex_budget);
        f.simplices.push_back(s);
    };
    for (std::size_t i = 0; i < n; ++i) {
        Simplex s;
        s.vertices[0] = static_cast<std::uint32_t>(i);
        s.size = 1;
        push(s);
    }

    // higher neighbours within the radius, plus a dense adjacency test
    std::vector<std::vector<std::uint32_t>> up(n);
    std::vector<std::uint8_t> adj(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (dist(i, j) <= max_radius) {
                up[i].push_back(static_cast<std::uint32_t>(j));
                adj[i * n + j] = adj[j * n + i] = 1;
            }

    for (std::size_t i = 0; i < n; ++i)
        for (const auto j : up[i]) {
            Simplex e;
            e.vertices = {static_cast<std::uint32_t>(i), j, 0, 0};
            e.size = 2;
            e.value = dist(i, j);
            push(e);
            if (max_dim < 2) continue;
            for (const auto k : up[i]) {
                if (k <= j || !adj[j * n + k]) continue;
                Simplex t;
                t.vertices = {static_cast<std::uint32_t>(i), j, k, 0};
                t.size = 3;
                t.value = std::max({dist(i, j), dist(i, k), dist(j, k)});
                push(t);
                if (max_dim < 3) continue;
                for (const auto l : up[i]) {
                    if (l <= k || !adj[j * n + l] || !adj[k * n + l]) continue;
                    Simplex q;
                    q.vertices = {static_cast<std::uint32_t>(i), j, k, l};
                    q.size = 4;
                    q.value = std::max({t.value, dist(i, l), dist(j, l), dist(k, l)});
                    push(q);
                }
            }
        }
    std::sort(f.simplices.begin(), f.simplices.end(), filtration_less);
    return f;
}

std::vector<Bar> PersistenceDiagram::of_dim(int dim) const {
    std::vector<Bar> out;
    std::copy_if(bars.begin(), bars.end(), std::back_inserter(out), [dim](const Bar& b) { return b.dim == dim; });
    return out;
}

std::vector<Bar> PersistenceDiagram::finite_of_dim(int dim) const {
    std::vector<Bar> out;
    std::copy_if(bars.begin(), bars.end(), std::back_inserter(out),
                 [dim](const Bar& b) { return b.dim == dim && b.finite(); });
    return out;
}

void PersistenceDiagram::sort() {
    std::sort(bars.begin(), bars.end(), [](const Bar& a, const Bar& b) {
        if (a.dim != b.dim) return a.dim < b.dim;
        if (a.birth != b.birth) return a.birth < b.birth;
        return a.death < b.death;
    });
}

PersistenceDiagram reduce(const Filtration& filtration) {
    const auto& cells = filtration.simplices;
    const std::size_t total = cells.size();
    const std::size_t n = filtration.points;
    const int top = filtration.max_dim;

    // Face lookup: vertices occupy indices [0, n) in lexicographic order.
    std::vector<std::uint32_t> edge_index(n * n, kNone);
    std::unordered_map<std::uint64_t, std::uint32_t> triangle_index;
    auto tri_key = [n](std::uint64_t a, std::uint64_t b, std::uint64_t c) { return (a * n + b) * n + c; };
    std::array<std::size_t, 4> per_dim{};
    for (std::size_t idx = 0; idx < total; ++idx) {
        const auto& s = cells[idx];
        ++per_dim[static_cast<std::size_t>(s.dim())];
        if (s.size == 2) {
            edge_index[s.vertices[0] * n + s.vertices[1]] = static_cast<std::uint32_t>(idx);
        } else if (s.size == 3 && top == 3) {
            triangle_index.emplace(tri_key(s.vertices[0], s.vertices[1], s.vertices[2]), static_cast<std::uint32_t>(idx));
        }
    }
    auto boundary = [&](const Simplex& s, std::vector<std::uint32_t>& col) {
        col.clear();
        const auto& v = s.vertices;
        switch (s.size) {
            case 2: col = {v[0], v[1]}; break;
            case 3:
                col = {edge_index[v[1] * n + v[2]], edge_index[v[0] * n + v[2]], edge_index[v[0] * n + v[1]]};
                break;
            case 4:
                col = {triangle_index.at(tri_key(v[1], v[2], v[3])), triangle_index.at(tri_key(v[0], v[2], v[3])),
                       triangle_index.at(tri_key(v[0], v[1], v[3])), triangle_index.at(tri_key(v[0], v[1], v[2]))};
                break;
            default: break;
        }
        std::sort(col.begin(), col.end());
    };

    // When the complex is a cone every class below the top dimension dies, so
    // the rank of the top boundary map is known from the simplex counts and
    // the top-dimension sweep can stop once that many pairs are found.
    std::size_t top_rank_target = std::numeric_limits<std::size_t>::max();
    if (filtration.cone && top >= 1) {
        std::size_t rank = n - 1;  // rank of the edge boundary map
        for (int p = 1; p < top; ++p) rank = per_dim[static_cast<std::size_t>(p)] - rank;
        top_rank_target = rank;
    }

    std::vector<std::uint32_t> owner(total, kNone);    // pivot row -> slot in `reduced`
    std::vector<std::uint8_t> cleared(total, 0);
    std::vector<std::uint8_t> zero(total, 0);          // column reduced to zero
    std::vector<std::vector<std::uint32_t>> reduced;   // reduced pivot columns
    std::vector<std::uint32_t> reduced_column;         // slot -> column index
    std::vector<std::uint32_t> col, scratch;

    for (int p = top; p >= 1; --p) {
        std::size_t pairs = 0;
        for (std::size_t j = 0; j < total; ++j) {
            if (cells[j].dim() != p) continue;
            if (p == top && pairs >= top_rank_target) break;
            if (cleared[j]) {
                zero[j] = 1;
                continue;
            }
            boundary(cells[j], col);
            while (!col.empty() && owner[col.back()] != kNone) {
                const auto& other = reduced[owner[col.back()]];
                scratch.clear();
                std::set_symmetric_difference(col.begin(), col.end(), other.begin(), other.end(),
                                              std::back_inserter(scratch));
                col.swap(scratch);
            }
            if (col.empty()) {
                zero[j] = 1;
                continue;
            }
            const auto low = col.back();
            owner[low] = static_cast<std::uint32_t>(reduced.size());
            cleared[low] = 1;
            reduced.push_back(col);
            reduced_column.push_back(static_cast<std::uint32_t>(j));
            ++pairs;
        }
    }

    PersistenceDiagram out;
    for (std::size_t i = 0; i < total; ++i) {
        const int d = cells[i].dim();
        if (d >= top) continue;
        if (owner[i] != kNone) {
            const double birth = cells[i].value;
            const double death = cells[reduced_column[owner[i]]].value;
            if (death > birth) out.bars.push_back({birth, death, d});
        } else if (d == 0 || zero[i]) {
            out.bars.push_back({cells[i].value, std::numeric_limits<double>::infinity(), d});
        }
    }
    out.sort();
    return out;
}

PersistenceDiagram h0_mst(const DistanceMatrix& dist) {
    const std::size_t n = dist.size();
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty distance matrix");
    struct Edge {
        double w;
        std::uint32_t i, j;
    };
    std::vector<Edge> edges;
    edges.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            edges.push_back({dist(i, j), static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        if (a.w != b.w) return a.w < b.w;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    UnionFind uf(n);
    PersistenceDiagram out;
    std::size_t merged = 0;
    for (const auto& e : edges) {
        if (!uf.unite(e.i, e.j)) continue;
        if (e.w > 0.0) out.bars.push_back({0.0, e.w, 0});
        if (++merged == n - 1) break;
    }
    out.bars.push_back({0.0, std::numeric_limits<double>::infinity(), 0});
    out.sort();
    return out;
}

PersistenceDiagram compute_persistence(const takens::PointCloud& cloud, const PersistenceOptions& options) {
    if (options.max_homology_dim < 0 || options.max_homology_dim > 2)
        throw Error(ErrorCode::InvalidArgument, "homology dimension must be 0, 1 or 2");
    const auto dist = pairwise_distances(cloud);
    double radius = options.max_radius ? *options.max_radius : enclosing_radius(dist);
    if (!(radius > 0.0)) {
        // all points coincide: a single component and nothing else
        PersistenceDiagram out;
        out.bars.push_back({0.0, std::numeric_limits<double>::infinity(), 0});
        return out;
    }
    const auto filtration = build_filtration(dist, options.max_homology_dim + 1, radius, options.simplex_budget);
    return reduce(filtration);
}

void write_diagram_csv(const std::filesystem::path& path, const PersistenceDiagram& diagram) {
    auto out = detail::open_output(path);
    out << "dim,birth,death\n";
    for (const auto& b : diagram.bars)
        out << b.dim << ',' << detail::format_double(b.birth) << ',' << detail::format_double(b.death) << '\n';
}

PersistenceDiagram read_diagram_csv(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "dim,birth,death")
        throw Error(ErrorCode::Parse, path.string() + ":1: expected header 'dim,birth,death'");
    PersistenceDiagram out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = detail::trim(line);
        if (text.empty()) continue;
        const auto fields = detail::split_fields(text);
        if (fields.size() != 3)
            throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
        Bar b;
        b.dim = static_cast<int>(detail::parse_double(fields[0]));
        b.birth = detail::parse_double(fields[1]);
        b.death = detail::parse_double(fields[2]);
        if (b.dim < 0 || b.dim > 2 || b.death < b.birth)
            throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": invalid bar");
        out.bars.push_back(b);
    }
    out.sort();
    return out;
}

}  // namespace tdaport::ph
