#include "tdaport/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "csv.hpp"
#include "tdaport/error.hpp"
#include "tdaport/random.hpp"

namespace tdaport::cluster {

namespace {

double squared_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

std::size_t distinct_rows(const Eigen::MatrixXd& data) {
    std::set<std::vector<double>> seen;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(data.cols()));
        for (Eigen::Index c = 0; c < data.cols(); ++c) row[static_cast<std::size_t>(c)] = data(i, c);
        seen.insert(std::move(row));
    }
    return seen.size();
}

struct LloydRun {
    std::vector<int> labels;
    double inertia = 0.0;
    std::vector<double> trace;
    int iterations = 0;
};

LloydRun lloyd(const Eigen::MatrixXd& data, int k, Rng& rng, const KMeansOptions& options) {
    const auto n = data.rows();
    Eigen::MatrixXd centers(k, data.cols());

    // k-means++ seeding
    std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    auto first = static_cast<Eigen::Index>(std::floor(rng.uniform() * static_cast<double>(n)));
    centers.row(0) = data.row(std::min(first, n - 1));
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& di = d2[static_cast<std::size_t>(i)];
            di = std::min(di, squared_distance(data, i, centers, c - 1));
            total += di;
        }
        const double target = rng.uniform() * total;
        double acc = 0.0;
        Eigen::Index pick = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double di = d2[static_cast<std::size_t>(i)];
            if (di <= 0.0) continue;
            pick = i;
            acc += di;
            if (acc > target) break;
        }
        centers.row(c) = data.row(pick);
    }

    LloydRun run;
    run.labels.assign(static_cast<std::size_t>(n), 0);
    // centroid rounding can lift an exact zero inertia by a few ulps of |x|^2
    const double slack = 1e-12 * data.squaredNorm() + 1e-300;
    for (int it = 0; it < options.max_iterations; ++it) {
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int label = 0;
            for (int c = 0; c < k; ++c) {
                const double d = squared_distance(data, i, centers, c);
                if (d < best) {
                    best = d;
                    label = c;
                }
            }
            run.labels[static_cast<std::size_t>(i)] = label;
            inertia += best;
        }
        if (!run.trace.empty() && inertia > run.trace.back() * (1.0 + 1e-12) + slack)
            throw std::logic_error("k-means inertia increased between Lloyd iterations");
        run.trace.push_back(inertia);
        run.inertia = inertia;
        run.iterations = it + 1;

        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, data.cols());
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto c = run.labels[static_cast<std::size_t>(i)];
            next.row(c) += data.row(i);
            ++counts[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            // empty cluster: move it onto the point worst served by its centre
            double worst = -1.0;
            Eigen::Index far = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double d = squared_distance(data, i, centers, run.labels[static_cast<std::size_t>(i)]);
                if (d > worst) {
                    worst = d;
                    far = i;
                }
            }
            next.row(c) = data.row(far);
        }
        const double shift = (next - centers).rowwise().norm().maxCoeff();
        centers = next;
        if (shift < options.tolerance) break;
    }
    // final assignment against the converged centres
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int label = 0;
        for (int c = 0; c < k; ++c) {
            const double d = squared_distance(data, i, centers, c);
            if (d < best) {
                best = d;
                label = c;
            }
        }
        run.labels[static_cast<std::size_t>(i)] = label;
        inertia += best;
    }
    if (inertia > run.trace.back() * (1.0 + 1e-12) + slack)
        throw std::logic_error("k-means inertia increased between Lloyd iterations");
    run.trace.push_back(inertia);
    run.inertia = inertia;
    return run;
}

}  // namespace

int Partition::label_of(const std::string& ticker) const {
    const auto it = std::find(tickers.begin(), tickers.end(), ticker);
    if (it == tickers.end()) throw Error(ErrorCode::InvalidArgument, "ticker " + ticker + " not in partition");
    return labels[static_cast<std::size_t>(it - tickers.begin())];
}

std::vector<std::vector<std::size_t>> Partition::members() const {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(i);
    return out;
}

void canonicalize(Partition& p) {
    std::map<int, int> remap;
    for (auto& l : p.labels) {
        const auto [it, inserted] = remap.emplace(l, static_cast<int>(remap.size()));
        l = it->second;
    }
    p.k = std::max(p.k, static_cast<int>(remap.size()));
}

KMeansResult kmeans(const Eigen::MatrixXd& data, const std::vector<std::string>& tickers, const KMeansOptions& options) {
    const int k = options.k;
    if (static_cast<std::size_t>(data.rows()) != tickers.size())
        throw Error(ErrorCode::InvalidArgument, "embedding rows do not match tickers");
    if (k < 1 || data.rows() < k) throw Error(ErrorCode::InvalidArgument, "need at least k rows for k-means");
    if (!data.allFinite()) throw Error(ErrorCode::InvalidArgument, "embeddings contain non-finite values");
    if (distinct_rows(data) < static_cast<std::size_t>(k))
        throw Error(ErrorCode::InvalidArgument, "k exceeds the number of distinct embedding rows");

    KMeansResult best;
    bool have = false;
    for (int r = 0; r < std::max(1, options.restarts); ++r) {
        Rng rng(splitmix64(options.seed) ^ splitmix64(static_cast<std::uint64_t>(r) + 1));
        auto run = lloyd(data, k, rng, options);
        if (have && !(run.inertia < best.inertia)) continue;
        have = true;
        best.inertia = run.inertia;
        best.inertia_trace = std::move(run.trace);
        best.iterations = run.iterations;
        best.partition.labels = std::move(run.labels);
    }
    best.partition.tickers = tickers;
    best.partition.k = k;
    best.partition.method = "kmeans";
    canonicalize(best.partition);
    const auto members = best.partition.members();
    if (std::any_of(members.begin(), members.end(), [](const auto& m) { return m.empty(); }))
        throw Error(ErrorCode::InvalidArgument, "k-means produced an empty cluster");
    return best;
}

Linkage parse_linkage(const std::string& name) {
    if (name == "ward") return Linkage::Ward;
    if (name == "average") return Linkage::Average;
    if (name == "complete") return Linkage::Complete;
    throw Error(ErrorCode::Config, "unknown linkage '" + name + "'");
}

std::string linkage_name(Linkage linkage) {
    switch (linkage) {
        case Linkage::Ward: return "ward";
        case Linkage::Average: return "average";
        case Linkage::Complete: return "complete";
    }
    return "?";
}

Partition agglomerative(const Eigen::MatrixXd& data, const std::vector<std::string>& tickers, int k, Linkage linkage) {
    const auto n = static_cast<std::size_t>(data.rows());
    if (n != tickers.size()) throw Error(ErrorCode::InvalidArgument, "embedding rows do not match tickers");
    if (k < 1 || n < static_cast<std::size_t>(k))
        throw Error(ErrorCode::InvalidArgument, "need at least k rows for agglomerative clustering");

    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            dist[i * n + j] = dist[j * n + i] =
                (data.row(static_cast<Eigen::Index>(i)) - data.row(static_cast<Eigen::Index>(j))).norm();

    std::vector<std::size_t> size(n, 1), owner(n);
    std::vector<bool> active(n, true);
    for (std::size_t i = 0; i < n; ++i) owner[i] = i;
    for (std::size_t clusters = n; clusters > static_cast<std::size_t>(k); --clusters) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j)
                if (active[j] && dist[i * n + j] < best) {
                    best = dist[i * n + j];
                    bi = i;
                    bj = j;
                }
        }
        const double ni = static_cast<double>(size[bi]), nj = static_cast<double>(size[bj]);
        for (std::size_t m = 0; m < n; ++m) {
            if (!active[m] || m == bi || m == bj) continue;
            const double dim = dist[bi * n + m], djm = dist[bj * n + m];
            double merged = 0.0;
            switch (linkage) {
                case Linkage::Ward: {
                    const double nm = static_cast<double>(size[m]);
                    const double t = ni + nj + nm;
                    merged = std::sqrt(std::max(
                        0.0, ((ni + nm) * dim * dim + (nj + nm) * djm * djm - nm * best * best) / t));
                    break;
                }
                case Linkage::Average: merged = (ni * dim + nj * djm) / (ni + nj); break;
                case Linkage::Complete: merged = std::max(dim, djm); break;
            }
            dist[bi * n + m] = dist[m * n + bi] = merged;
        }
        active[bj] = false;
        size[bi] += size[bj];
        for (auto& o : owner)
            if (o == bj) o = bi;
    }
    Partition p;
    p.tickers = tickers;
    p.k = k;
    p.method = "agglomerative";
    for (std::size_t i = 0; i < n; ++i) p.labels.push_back(static_cast<int>(owner[i]));
    p.k = 0;
    canonicalize(p);
    return p;
}

Partition sector_partition(const market::SectorMap& sectors) {
    std::map<std::string, int> ids;
    for (const auto& [ticker, label] : sectors) ids.emplace(label, 0);
    int next = 0;
    for (auto& [label, id] : ids) id = next++;
    Partition p;
    p.k = next;
    p.method = "sectors";
    for (const auto& [ticker, label] : sectors) {
        p.tickers.push_back(ticker);
        p.labels.push_back(ids.at(label));
    }
    return p;
}

double adjusted_rand_index(const Partition& a, const Partition& b) {
    if (a.tickers.size() != b.tickers.size())
        throw Error(ErrorCode::InvalidArgument, "partitions cover different ticker sets");
    std::map<std::string, int> b_label;
    for (std::size_t i = 0; i < b.tickers.size(); ++i) b_label[b.tickers[i]] = b.labels[i];
    std::map<std::pair<int, int>, double> table;
    std::map<int, double> rows, cols;
    for (std::size_t i = 0; i < a.tickers.size(); ++i) {
        const auto it = b_label.find(a.tickers[i]);
        if (it == b_label.end()) throw Error(ErrorCode::InvalidArgument, "partitions cover different ticker sets");
        table[{a.labels[i], it->second}] += 1.0;
        rows[a.labels[i]] += 1.0;
        cols[it->second] += 1.0;
    }
    auto pairs = [](double m) { return m * (m - 1.0) / 2.0; };
    double index = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, count] : table) index += pairs(count);
    for (const auto& [key, count] : rows) sum_a += pairs(count);
    for (const auto& [key, count] : cols) sum_b += pairs(count);
    const double total = pairs(static_cast<double>(a.tickers.size()));
    if (total == 0.0) return 1.0;
    const double expected = sum_a * sum_b / total;
    const double maximum = 0.5 * (sum_a + sum_b);
    if (maximum == expected) return 1.0;
    return (index - expected) / (maximum - expected);
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& data) {
    Eigen::MatrixXd out = data;
    const double n = static_cast<double>(data.rows());
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
        const double mean = data.col(c).sum() / n;
        const double var = (data.col(c).array() - mean).square().sum() / n;
        const double sd = std::sqrt(var);
        if (data.col(c).minCoeff() < data.col(c).maxCoeff() && sd > 0.0) out.col(c) = (data.col(c).array() - mean) / sd;
        else out.col(c).setZero();
    }
    return out;
}

Eigen::MatrixXd pooled_standardize(const Eigen::MatrixXd& data) {
    Eigen::MatrixXd out = data;
    if (data.size() == 0) return out;
    const double n = static_cast<double>(data.rows());
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
        if (data.col(c).minCoeff() == data.col(c).maxCoeff()) out.col(c).setZero();
        else out.col(c).array() -= data.col(c).sum() / n;
    }
    const double rms = std::sqrt(out.squaredNorm() / static_cast<double>(out.size()));
    if (rms > 0.0) out /= rms;
    return out;
}

void write_partition_csv(const std::filesystem::path& path, const Partition& partition) {
    auto out = detail::open_output(path);
    out << "ticker,cluster,method\n";
    for (std::size_t i = 0; i < partition.tickers.size(); ++i)
        out << partition.tickers[i] << ',' << partition.labels[i] << ',' << partition.method << '\n';
}

Partition read_partition_csv(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "ticker,cluster,method")
        throw Error(ErrorCode::Parse, path.string() + ":1: expected header 'ticker,cluster,method'");
    Partition p;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = detail::trim(line);
        if (text.empty()) continue;
        const auto fields = detail::split_fields(text);
        if (fields.size() != 3)
            throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
        p.tickers.emplace_back(detail::trim(fields[0]));
        const double label = detail::parse_double(fields[1]);
        if (label < 0 || label != std::floor(label))
            throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": bad cluster id");
        p.labels.push_back(static_cast<int>(label));
        p.method = std::string(detail::trim(fields[2]));
        p.k = std::max(p.k, p.labels.back() + 1);
    }
    return p;
}

}  // namespace tdaport::cluster
