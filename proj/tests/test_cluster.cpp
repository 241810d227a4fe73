#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "tdaport/cluster.hpp"
#include "tdaport/error.hpp"
#include "tdaport/market_data.hpp"
#include "tdaport/random.hpp"
#include "test_util.hpp"

using namespace tdaport;
using cluster::Partition;

namespace {

std::vector<std::string> names(std::size_t n) {
    std::vector<std::string> t;
    for (std::size_t i = 0; i < n; ++i) t.push_back("S" + std::to_string(100 + i));
    return t;
}

Partition labelled(const std::vector<std::string>& tickers, std::vector<int> labels) {
    Partition p;
    p.tickers = tickers;
    p.labels = std::move(labels);
    p.k = p.labels.empty() ? 0 : *std::max_element(p.labels.begin(), p.labels.end()) + 1;
    return p;
}

struct Blobs {
    Eigen::MatrixXd data;
    std::vector<int> labels;
};

Blobs blobs(Rng& rng, int n, int k, int dim, double spread, double gap) {
    Blobs b;
    b.data.resize(n, dim);
    for (int i = 0; i < n; ++i) {
        const int c = i % k;
        b.labels.push_back(c);
        for (int d = 0; d < dim; ++d) b.data(i, d) = (d == c % dim ? gap * (1 + c / dim) : 0.0) + spread * rng.normal();
    }
    return b;
}

// set-partition equality keyed by ticker
std::set<std::set<std::string>> blocks(const Partition& p) {
    std::map<int, std::set<std::string>> m;
    for (std::size_t i = 0; i < p.tickers.size(); ++i) m[p.labels[i]].insert(p.tickers[i]);
    std::set<std::set<std::string>> out;
    for (auto& [id, s] : m) out.insert(s);
    return out;
}

// ARI from explicit pair enumeration
double oracle_ari(const std::vector<int>& a, const std::vector<int>& b) {
    double both = 0, only_a = 0, only_b = 0, total = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const bool sa = a[i] == a[j], sb = b[i] == b[j];
            both += sa && sb;
            only_a += sa && !sb;
            only_b += !sa && sb;
            total += 1;
        }
    const double pa = both + only_a, pb = both + only_b;
    const double expected = pa * pb / total, maximum = 0.5 * (pa + pb);
    return (both - expected) / (maximum - expected);
}

// exact relabelling check by trying every label permutation
bool same_up_to_relabel(const std::vector<int>& a, const std::vector<int>& b, int k) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    do {
        bool ok = true;
        for (std::size_t i = 0; i < a.size() && ok; ++i) ok = perm[std::size_t(a[i])] == b[i];
        if (ok) return true;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return false;
}

// Naive agglomerative clustering: linkage recomputed from member sets.
std::vector<int> oracle_agglomerative(const Eigen::MatrixXd& x, int k, cluster::Linkage linkage) {
    std::vector<std::vector<int>> groups;
    for (int i = 0; i < x.rows(); ++i) groups.push_back({i});
    auto dist = [&](int i, int j) { return (x.row(i) - x.row(j)).norm(); };
    auto link = [&](const std::vector<int>& a, const std::vector<int>& b) {
        if (linkage == cluster::Linkage::Ward) {
            Eigen::RowVectorXd ca = Eigen::RowVectorXd::Zero(x.cols()), cb = ca;
            for (int i : a) ca += x.row(i);
            for (int j : b) cb += x.row(j);
            ca /= double(a.size());
            cb /= double(b.size());
            return double(a.size() * b.size()) / double(a.size() + b.size()) * (ca - cb).squaredNorm();
        }
        double agg = 0.0;
        for (int i : a)
            for (int j : b) agg = linkage == cluster::Linkage::Complete ? std::max(agg, dist(i, j)) : agg + dist(i, j);
        return linkage == cluster::Linkage::Complete ? agg : agg / double(a.size() * b.size());
    };
    while (int(groups.size()) > k) {
        double best = INFINITY;
        std::size_t bi = 0, bj = 1;
        for (std::size_t i = 0; i < groups.size(); ++i)
            for (std::size_t j = i + 1; j < groups.size(); ++j) {
                const double v = link(groups[i], groups[j]);
                if (v < best) {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        groups[bi].insert(groups[bi].end(), groups[bj].begin(), groups[bj].end());
        groups.erase(groups.begin() + long(bj));
    }
    std::vector<int> labels(std::size_t(x.rows()));
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (int i : groups[g]) labels[std::size_t(i)] = int(g);
    return labels;
}

cluster::KMeansOptions opts(int k, std::uint64_t seed = 42, int restarts = 10) {
    cluster::KMeansOptions o;
    o.k = k;
    o.seed = seed;
    o.restarts = restarts;
    return o;
}

}  // namespace

TEST_CASE("k-means groups two separated pairs") {
    Eigen::MatrixXd x(4, 2);
    x << 0, 0, 0.1, 0, 10, 10, 10, 10.1;
    const auto r = cluster::kmeans(x, names(4), opts(2));
    CHECK(r.partition.k == 2);
    CHECK(r.partition.labels[0] == r.partition.labels[1]);
    CHECK(r.partition.labels[2] == r.partition.labels[3]);
    CHECK(r.partition.labels[0] != r.partition.labels[2]);
    CHECK(r.inertia == doctest::Approx(0.01));
}

TEST_CASE("k-means with k = n gives singletons and zero inertia") {
    Rng rng(1);
    Eigen::MatrixXd x(7, 3);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
    const auto r = cluster::kmeans(x, names(7), opts(7));
    CHECK(std::set<int>(r.partition.labels.begin(), r.partition.labels.end()).size() == 7);
    CHECK(r.inertia == 0.0);
}

TEST_CASE("k-means recovers three Gaussian blobs") {
    Rng rng(2);
    const auto b = blobs(rng, 200, 3, 2, 0.1, 5.0);
    const auto r = cluster::kmeans(b.data, names(200), opts(3));
    CHECK(same_up_to_relabel(b.labels, r.partition.labels, 3));
    CHECK(cluster::adjusted_rand_index(r.partition, labelled(names(200), b.labels)) == 1.0);
}

TEST_CASE("k-means inertia never increases along the Lloyd trace") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto b = blobs(rng, 60, 4, 3, 1.0, 1.5);
        const auto r = cluster::kmeans(b.data, names(60), opts(4, std::uint64_t(trial)));
        REQUIRE(!r.inertia_trace.empty());
        for (std::size_t s = 1; s < r.inertia_trace.size(); ++s) CHECK(r.inertia_trace[s] <= r.inertia_trace[s - 1]);
        CHECK(r.inertia == doctest::Approx(r.inertia_trace.back()));
        CHECK(r.iterations <= 300);
        // k non-empty clusters
        CHECK(std::set<int>(r.partition.labels.begin(), r.partition.labels.end()).size() == 4);
    }
}

TEST_CASE("k-means is deterministic for a seed") {
    Rng rng(4);
    const auto b = blobs(rng, 50, 3, 3, 1.0, 1.0);
    const auto r1 = cluster::kmeans(b.data, names(50), opts(3, 9));
    const auto r2 = cluster::kmeans(b.data, names(50), opts(3, 9));
    CHECK(r1.partition.labels == r2.partition.labels);
    CHECK(r1.inertia == r2.inertia);
}

TEST_CASE("k-means errors") {
    Eigen::MatrixXd x(4, 1);
    x << 1, 1, 2, 2;
    CHECK_THROWS_AS(cluster::kmeans(x, names(4), opts(3)), Error);
    CHECK_THROWS_AS(cluster::kmeans(x, names(4), opts(5)), Error);
    CHECK_THROWS_AS(cluster::kmeans(x, names(3), opts(2)), Error);
    x(0, 0) = NAN;
    CHECK_THROWS_AS(cluster::kmeans(x, names(4), opts(2)), Error);
}

TEST_CASE("agglomerative examples") {
    Eigen::MatrixXd x(3, 1);
    x << 0, 1, 10;
    for (auto linkage : {cluster::Linkage::Average, cluster::Linkage::Ward, cluster::Linkage::Complete}) {
        const auto p = cluster::agglomerative(x, names(3), 2, linkage);
        CHECK(p.labels[0] == p.labels[1]);
        CHECK(p.labels[0] != p.labels[2]);
        const auto root = cluster::agglomerative(x, names(3), 1, linkage);
        CHECK(root.labels == std::vector<int>{0, 0, 0});
        CHECK(root.k == 1);
    }
    CHECK_THROWS_AS(cluster::agglomerative(x, names(3), 4), Error);
}

TEST_CASE("agglomerative equals the naive recomputation") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd x(14, 3);
        for (int i = 0; i < 14; ++i)
            for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
        for (auto linkage : {cluster::Linkage::Ward, cluster::Linkage::Average, cluster::Linkage::Complete})
            for (int k = 1; k <= 14; k += 3) {
                CAPTURE(trial);
                CAPTURE(k);
                CAPTURE(cluster::linkage_name(linkage));
                const auto got = cluster::agglomerative(x, names(14), k, linkage);
                CHECK(blocks(got) == blocks(labelled(names(14), oracle_agglomerative(x, k, linkage))));
            }
    }
}

TEST_CASE("agglomerative keeps duplicate rows together") {
    Rng rng(6);
    Eigen::MatrixXd x(10, 2);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 2; ++j) x(i, j) = rng.normal();
    x.row(7) = x.row(2);
    for (auto linkage : {cluster::Linkage::Ward, cluster::Linkage::Average, cluster::Linkage::Complete})
        for (int k = 1; k < 10; ++k) CHECK(cluster::agglomerative(x, names(10), k, linkage).labels[2] ==
                                           cluster::agglomerative(x, names(10), k, linkage).labels[7]);
    // three zero-distance merges are pending, so cuts above n - 3 split them
    x.row(9) = x.row(2);
    x.row(5) = x.row(0);
    for (auto linkage : {cluster::Linkage::Ward, cluster::Linkage::Average, cluster::Linkage::Complete})
        for (int k = 1; k <= 7; ++k) {
            const auto p = cluster::agglomerative(x, names(10), k, linkage);
            CHECK(p.labels[2] == p.labels[7]);
            CHECK(p.labels[2] == p.labels[9]);
            CHECK(p.labels[0] == p.labels[5]);
        }
}

TEST_CASE("partitions ignore row order") {
    Rng rng(7);
    const auto b = blobs(rng, 45, 3, 3, 0.5, 4.0);
    const auto t = names(45);
    std::vector<int> perm(45);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 44; i > 0; --i) std::swap(perm[std::size_t(i)], perm[rng.next() % std::uint64_t(i + 1)]);
    Eigen::MatrixXd y(45, 3);
    std::vector<std::string> ty;
    for (int i = 0; i < 45; ++i) {
        y.row(i) = b.data.row(perm[std::size_t(i)]);
        ty.push_back(t[std::size_t(perm[std::size_t(i)])]);
    }
    CHECK(blocks(cluster::kmeans(b.data, t, opts(3)).partition) == blocks(cluster::kmeans(y, ty, opts(3)).partition));
    for (auto linkage : {cluster::Linkage::Ward, cluster::Linkage::Average, cluster::Linkage::Complete})
        for (int k : {2, 3, 7})
            CHECK(blocks(cluster::agglomerative(b.data, t, k, linkage)) == blocks(cluster::agglomerative(y, ty, k, linkage)));
}

TEST_CASE("translation and scaling leave partitions unchanged") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const auto b = blobs(rng, 40, 3, 4, 1.0, 2.0);
        const auto t = names(40);
        Eigen::RowVectorXd shift(4);
        shift << 3.5, -20.0, 0.25, 7.0;
        const Eigen::MatrixXd moved = b.data.rowwise() + shift;
        const auto base = cluster::kmeans(b.data, t, opts(3, std::uint64_t(trial), 1)).partition;
        CHECK(cluster::kmeans(moved, t, opts(3, std::uint64_t(trial), 1)).partition.labels == base.labels);
        for (double c : {2.0, 0.37, 11.0})
            CHECK(cluster::kmeans(c * b.data, t, opts(3, std::uint64_t(trial), 1)).partition.labels == base.labels);
        for (auto linkage : {cluster::Linkage::Ward, cluster::Linkage::Average, cluster::Linkage::Complete}) {
            const auto a = cluster::agglomerative(b.data, t, 3, linkage);
            CHECK(cluster::agglomerative(moved, t, 3, linkage).labels == a.labels);
            CHECK(cluster::agglomerative(2.0 * b.data, t, 3, linkage).labels == a.labels);
        }
    }
}

TEST_CASE("ARI examples and pair-counting oracle") {
    const auto t = names(6);
    const auto one = labelled(t, {0, 0, 0, 0, 0, 0});
    const auto singles = labelled(t, {0, 1, 2, 3, 4, 5});
    CHECK(cluster::adjusted_rand_index(one, singles) == 0.0);
    CHECK(cluster::adjusted_rand_index(singles, singles) == 1.0);
    const auto p = labelled(t, {0, 0, 1, 1, 2, 2});
    CHECK(cluster::adjusted_rand_index(p, p) == 1.0);

    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const auto t20 = names(20);
        std::vector<int> a(20), b(20);
        const int ka = 1 + int(rng.next() % 6), kb = 2 + int(rng.next() % 6);
        for (auto& v : a) v = int(rng.next() % std::uint64_t(ka));
        for (auto& v : b) v = int(rng.next() % std::uint64_t(kb));
        if (std::set<int>(a.begin(), a.end()).size() < 2) continue;
        const auto pa = labelled(t20, a), pb = labelled(t20, b);
        const double ari = cluster::adjusted_rand_index(pa, pb);
        CHECK(std::abs(ari - oracle_ari(a, b)) <= 1e-12);
        CHECK(ari == cluster::adjusted_rand_index(pb, pa));
        CHECK(ari <= 1.0);
        CHECK(ari >= -1.0);
    }
}

TEST_CASE("ARI independent of ticker order, rejects different sets") {
    const auto a = labelled({"A", "B", "C", "D"}, {0, 0, 1, 1});
    const auto b = labelled({"D", "C", "B", "A"}, {5, 5, 3, 3});
    CHECK(cluster::adjusted_rand_index(a, b) == 1.0);
    CHECK_THROWS_AS(cluster::adjusted_rand_index(a, labelled({"A", "B", "C", "E"}, {0, 0, 1, 1})), Error);
    CHECK_THROWS_AS(cluster::adjusted_rand_index(a, labelled({"A", "B", "C"}, {0, 0, 1})), Error);
}

TEST_CASE("sector partition has one cluster per label") {
    market::SectorMap all;
    const auto& labels = market::canonical_sectors();
    for (std::size_t i = 0; i < 33; ++i) all["T" + std::to_string(i)] = labels[i % labels.size()];
    CHECK(cluster::sector_partition(all).k == 11);
    market::SectorMap three{{"A", "Energy"}, {"B", "Utilities"}, {"C", "Energy"}, {"D", "Technology"}};
    const auto p = cluster::sector_partition(three);
    CHECK(p.k == 3);
    CHECK(p.label_of("A") == p.label_of("C"));
    CHECK(p.method == "sectors");
    CHECK(cluster::sector_partition({{"X", "Energy"}, {"Y", "Energy"}}).k == 1);
}

TEST_CASE("standardization") {
    Eigen::MatrixXd x(4, 3);
    x << 1, 5, 0, 2, 5, 10, 3, 5, 20, 4, 5, 30;
    const auto z = cluster::standardize(x);
    for (int c : {0, 2}) {
        CHECK(z.col(c).mean() == doctest::Approx(0.0).epsilon(1e-14));
        CHECK((z.col(c).array().square().mean()) == doctest::Approx(1.0));
    }
    CHECK(z.col(1).isZero());
    const auto p = cluster::pooled_standardize(x);
    CHECK(p.col(1).isZero());
    CHECK(std::sqrt(p.squaredNorm() / double(p.size())) == doctest::Approx(1.0));
    // pooled keeps the ratio between column spreads
    const double r_in = (x.col(2).array() - x.col(2).mean()).matrix().norm() / (x.col(0).array() - x.col(0).mean()).matrix().norm();
    CHECK(p.col(2).norm() / p.col(0).norm() == doctest::Approx(r_in));
}

TEST_CASE("partition CSV round trip and canonical labels") {
    testutil::TempDir dir;
    auto p = labelled({"X", "Y", "Z", "W"}, {2, 0, 2, 1});
    p.method = "kmeans";
    cluster::canonicalize(p);
    CHECK(p.labels == std::vector<int>{0, 1, 0, 2});
    cluster::write_partition_csv(dir / "p.csv", p);
    CHECK(testutil::read_file(dir / "p.csv").rfind("ticker,cluster,method\nX,0,kmeans\n", 0) == 0);
    const auto q = cluster::read_partition_csv(dir / "p.csv");
    CHECK(q.tickers == p.tickers);
    CHECK(q.labels == p.labels);
    CHECK(q.k == 3);
    CHECK(q.method == "kmeans");
    const auto m = q.members();
    CHECK(m[0] == std::vector<std::size_t>{0, 2});
}
