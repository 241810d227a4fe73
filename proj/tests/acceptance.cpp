// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "oracles/persistence_oracle.hpp"
#include "tdaport/cluster.hpp"
#include "tdaport/error.hpp"
#include "tdaport/log.hpp"
#include "tdaport/persistence.hpp"
#include "tdaport/pipeline.hpp"
#include "tdaport/portfolio.hpp"
#include "tdaport/random.hpp"
#include "tdaport/synthetic.hpp"
#include "tdaport/vectorize.hpp"
#include "test_util.hpp"

using namespace tdaport;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();
const std::filesystem::path source_dir = TDAPORT_SOURCE_DIR;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail = what;
        pass = pass && ok;
    }
};

// ------------------------------------------------------------ helpers

Eigen::MatrixXd normal_cloud(Rng& rng, int n, int d) {
    Eigen::MatrixXd p(n, d);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) p(i, c) = rng.normal();
    return p;
}

std::vector<std::vector<double>> nested(const ph::DistanceMatrix& d) {
    std::vector<std::vector<double>> out(d.size(), std::vector<double>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d.size(); ++j) out[i][j] = d(i, j);
    return out;
}

std::vector<oracle::Bar> as_oracle(const ph::PersistenceDiagram& dg) {
    std::vector<oracle::Bar> out;
    for (const auto& b : dg.bars) out.push_back({b.birth, b.death, b.dim});
    std::sort(out.begin(), out.end());
    return out;
}

ph::PersistenceDiagram random_diagram(Rng& rng, int max_bars) {
    ph::PersistenceDiagram d;
    const int n = int(rng.next() % std::uint64_t(max_bars + 1));
    for (int k = 0; k < n; ++k) {
        const double b = rng.uniform(0, 3);
        d.bars.push_back({b, b + rng.uniform(0, 2), 1});
    }
    d.bars.push_back({0, inf, 0});
    return d;
}

double quad(const Eigen::MatrixXd& s, const Eigen::VectorXd& w) { return w.dot(s * w); }

Eigen::MatrixXd random_cov(Rng& rng, int n, int factors, double idio) {
    Eigen::MatrixXd a(n, factors);
    for (int i = 0; i < n; ++i)
        for (int f = 0; f < factors; ++f) a(i, f) = 0.01 * rng.normal();
    Eigen::MatrixXd s = a * a.transpose();
    for (int i = 0; i < n; ++i) s(i, i) += idio * rng.uniform(0.5, 2.0) * 1e-4;
    return s;
}

// minimum of w'Sw over the simplex grid with spacing 1/steps
double grid_minimum(const Eigen::MatrixXd& s, int steps) {
    const int n = int(s.rows());
    double best = inf;
    Eigen::VectorXd w(n);
    std::vector<int> c(std::size_t(n), 0);
    auto rec = [&](auto&& self, int i, int left) -> void {
        if (i == n - 1) {
            c[std::size_t(i)] = left;
            for (int k = 0; k < n; ++k) w(k) = double(c[std::size_t(k)]) / steps;
            best = std::min(best, quad(s, w));
            return;
        }
        for (int a = 0; a <= left; ++a) {
            c[std::size_t(i)] = a;
            self(self, i + 1, left - a);
        }
    };
    rec(rec, 0, steps);
    return best;
}

market::PriceMatrix random_returns(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    market::PriceMatrix m;
    m.values.resize(rows, cols);
    const Eigen::VectorXd common = Eigen::VectorXd::NullaryExpr(rows, [&] { return 0.01 * rng.normal(); });
    for (Eigen::Index j = 0; j < cols; ++j) {
        const double beta = rng.uniform(0, 1.5), vol = rng.uniform(0.005, 0.02);
        for (Eigen::Index i = 0; i < rows; ++i) m.values(i, j) = beta * common(i) + vol * rng.normal();
        m.tickers.push_back("S" + std::to_string(100 + j));
    }
    m.dates = synthetic::business_days(Date(2011, 1, 3), static_cast<std::size_t>(rows));
    return m;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::map<std::string, std::string> tree(const std::filesystem::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            files[std::filesystem::relative(entry.path(), root).generic_string()] = testutil::read_file(entry.path());
    return files;
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, a, b, c);
    return buf;
}

// Every backtest the run performs, with the return history it was given.
struct RecordedBacktest {
    std::string label;
    market::PriceMatrix history;
    portfolio::BacktestResult result;
};
std::vector<RecordedBacktest> recorded;

void record_pipeline(const std::string& label, const pipeline::RunConfig& config, const pipeline::RunReport& report) {
    const auto data = pipeline::ingest(config);
    for (const auto& run : report.backtest.runs)
        recorded.push_back({label + "/" + run.summary.clustering, data.returns.select(run.selection.tickers), run.result});
}

// ------------------------------------------------------------ criteria

Outcome persistence_oracle() {
    Outcome o;
    Rng rng(101);
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t bars = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + int(rng.next() % 12);
        const int d = 1 + int(rng.next() % 3);
        const int top = 1 + int(rng.next() % 3);
        Eigen::MatrixXd pts = normal_cloud(rng, n, d);
        if (trial % 5 == 0) pts = pts.array().round().matrix();  // ties in the filtration
        const auto dist = ph::pairwise_distances(pts);
        const auto expect = oracle::diagram(oracle::rips(nested(dist), top, inf), top);
        const auto got = as_oracle(ph::reduce(ph::build_filtration(dist, top, inf)));
        o.require(got == expect, "cloud " + std::to_string(trial) + " differs at full radius");
        const double r = ph::enclosing_radius(dist);
        if (r > 0)
            o.require(as_oracle(ph::reduce(ph::build_filtration(dist, top, r))) == expect,
                      "cloud " + std::to_string(trial) + " differs at the enclosing radius");
        bars += expect.size();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(secs < 60.0, "took longer than 60 s");
    if (o.pass) o.detail = "100 clouds, " + std::to_string(bars) + " bars identical, " + fmt("%.1f s", secs);
    return o;
}

Outcome analytic_fixtures() {
    Outcome o;
    Eigen::MatrixXd sq(4, 2);
    sq << 0, 0, 1, 0, 1, 1, 0, 1;
    const auto h1 = ph::reduce(ph::build_filtration(ph::pairwise_distances(sq), 2, inf)).finite_of_dim(1);
    o.require(h1.size() == 1, "square: expected one finite H1 bar");
    if (h1.size() == 1)
        o.require(std::abs(h1[0].birth - 1.0) <= 1e-9 && std::abs(h1[0].death - std::sqrt(2.0)) <= 1e-9,
                  "square: H1 bar is not (1, sqrt 2)");

    Eigen::MatrixXd circle(20, 2);
    for (int i = 0; i < 20; ++i) {
        circle(i, 0) = std::cos(2 * std::numbers::pi * i / 20);
        circle(i, 1) = std::sin(2 * std::numbers::pi * i / 20);
    }
    const auto got = ph::reduce(ph::build_filtration(ph::pairwise_distances(circle), 2, inf)).finite_of_dim(1);
    const auto all = oracle::persistence(circle, 2);
    std::vector<oracle::Bar> expect;
    std::copy_if(all.begin(), all.end(), std::back_inserter(expect), [](const auto& b) { return b.dim == 1; });
    o.require(!got.empty() && got.size() == expect.size(), "circle: H1 bar count differs from the oracle");
    double gap = 0.0;
    if (!got.empty() && got.size() == expect.size()) {
        const auto top = *std::max_element(got.begin(), got.end(), [](auto& a, auto& b) { return a.length() < b.length(); });
        const auto otop = *std::max_element(expect.begin(), expect.end(),
                                            [](auto& a, auto& b) { return a.death - a.birth < b.death - b.birth; });
        gap = std::max(std::abs(top.birth - otop.birth), std::abs(top.death - otop.death));
        o.require(gap <= 1e-9, "circle: dominant bar differs from the oracle");
        for (const auto& b : got)
            if (!(b == top)) o.require(b.length() < 0.5 * top.length(), "circle: a second loop is not dominated");
    }

    Rng rng(102);
    for (int trial = 0; trial < 50; ++trial) {
        const auto pts = normal_cloud(rng, 5 + trial % 40, 1 + trial % 3);
        const auto dist = ph::pairwise_distances(pts);
        std::vector<double> h0;
        for (const auto& b : ph::h0_mst(dist).bars)
            if (b.finite()) h0.push_back(b.death);
        o.require(h0 == oracle::mst_weights(nested(dist)), "MST: cloud " + std::to_string(trial));
        o.require(ph::h0_mst(dist).bars == ph::reduce(ph::build_filtration(dist, 1, inf)).of_dim(0),
                  "MST: reduction H0 differs on cloud " + std::to_string(trial));
    }
    if (o.pass) o.detail = fmt("square (1, sqrt 2); circle max deviation %.1e; 50 MST clouds exact", gap);
    return o;
}

Outcome vectorizer_properties() {
    Outcome o;
    Rng rng(103);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto d = random_diagram(rng, 15);
        const auto l = vec::landscape(d, 1, 5, 50);
        for (int s = 0; s < 50; ++s) {
            o.require(l.at(4, s) >= 0.0, "landscape negative");
            for (int k = 0; k + 1 < 5; ++k) o.require(l.at(k, s) >= l.at(k + 1, s), "landscape layers out of order");
        }
    }
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const double p = rng.uniform(0.01, 3), b = rng.uniform(0, 3);
        ph::PersistenceDiagram d;
        d.bars = {{b, b + p, 1}};
        // the default bandwidth (0.05 p) on even trials, anything from 0.001 p to 2 p otherwise
        const double sigma = trial % 2 == 0 ? 0.05 * p : p * std::pow(10.0, rng.uniform(-3, 0.3));
        const auto img = vec::persistence_image(d, 1, 40, sigma);
        const double sum = std::accumulate(img.pixels.begin(), img.pixels.end(), 0.0);
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    o.require(worst <= 0.02, fmt("single-bar pixel sum off by %.4f", worst));
    for (int trial = 0; trial < 300; ++trial) {
        auto d = random_diagram(rng, 8);
        auto with = d;
        for (int z = 0; z < 3; ++z) {
            const double at = rng.uniform(0, 5);
            with.bars.push_back({at, at, 1});
        }
        with.bars.push_back({0.0, 0.0, 1});
        o.require(vec::landscape(d, 1, 5, 40).values == vec::landscape(with, 1, 5, 40).values,
                  "zero bar changed a landscape");
        o.require(vec::persistence_image(d, 1, 20, 0.1).pixels == vec::persistence_image(with, 1, 20, 0.1).pixels,
                  "zero bar changed an image");
        o.require(vec::bar_statistics(d) == vec::bar_statistics(with), "zero bar changed the statistics");
    }
    if (o.pass) o.detail = fmt("1000 diagrams ordered and nonnegative; worst pixel-sum error %.2e; zero bars inert", worst);
    return o;
}

Outcome qp_correctness() {
    Outcome o;
    Eigen::MatrixXd s2(2, 2);
    s2 << 0.04, 0, 0, 0.01;
    const auto two = portfolio::min_variance_weights(s2);
    o.require(std::abs(two.weights(0) - 0.2) <= 1e-6 && std::abs(two.weights(1) - 0.8) <= 1e-6,
              "two-asset case is not (0.2, 0.8)");
    double kkt = two.kkt_residual, gap = 0.0;
    Rng rng(104);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = random_cov(rng, 5, 1 + trial % 4, trial % 5 == 0 ? 0.0 : 1.0);
        const auto r = portfolio::min_variance_weights(s);
        const double g = grid_minimum(s, 50);
        gap = std::max(gap, std::abs(quad(s, r.weights) - g));
        o.require(quad(s, r.weights) <= g + 1e-15, "QP objective above the grid oracle");
        kkt = std::max(kkt, r.kkt_residual);
    }
    o.require(gap <= 1e-6, fmt("objective differs from the grid oracle by %.2e", gap));
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 1 + int(rng.next() % 30);
        auto s = random_cov(rng, n, 1 + int(rng.next() % 5), trial % 3 == 0 ? 0.0 : 1.0);
        if (trial % 5 == 0) {
            Eigen::MatrixXd x(8, n);
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < n; ++j) x(i, j) = 0.01 * rng.normal();
            s = portfolio::covariance(x);  // rank deficient
        }
        kkt = std::max(kkt, portfolio::min_variance_weights(s).kkt_residual);
    }
    std::size_t problems = 551;
    for (const auto& r : recorded)
        for (const auto& rb : r.result.rebalances) {
            kkt = std::max(kkt, rb.kkt_residual);
            ++problems;
        }
    o.require(kkt < 1e-8, fmt("KKT residual %.2e", kkt));
    if (o.pass)
        o.detail = fmt("(%.7f, %.7f); grid gap %.1e", two.weights(0), two.weights(1), gap) +
                   fmt("; max KKT %.1e over %.0f problems", kkt, double(problems));
    return o;
}

Outcome no_look_ahead() {
    Outcome o;
    std::size_t checked = 0;
    for (const auto& r : recorded)
        for (const auto& rb : r.result.rebalances) {
            const auto& dates = r.history.dates;
            o.require(rb.window_end <= rb.row && rb.window_end >= 1 && dates[rb.window_end - 1] < rb.date &&
                          dates[rb.row] == rb.date,
                      r.label + ": estimation window reaches " + rb.date.iso());
            ++checked;
        }
    // weights may not react to anything on or after their own date
    Rng rng(105);
    const auto h = random_returns(rng, 420, 6);
    const auto base = portfolio::backtest(h, 160);
    for (std::size_t k = 0; k < base.rebalances.size(); ++k) {
        auto changed = h;
        const auto row = Eigen::Index(base.rebalances[k].row);
        for (Eigen::Index i = row; i < changed.values.rows(); ++i)
            for (Eigen::Index j = 0; j < 6; ++j) changed.values(i, j) = 0.05 * rng.normal();
        const auto bt = portfolio::backtest(changed, 160);
        for (std::size_t j = 0; j <= k; ++j)
            o.require(bt.rebalances[j].weights == base.rebalances[j].weights, "future returns changed past weights");
        ++checked;
    }
    const auto one = random_returns(rng, 400, 1);
    const auto bt = portfolio::backtest(one, 126);
    bool exact = bt.returns.size() == 274;
    for (std::size_t t = 0; exact && t < bt.returns.size(); ++t) exact = bt.returns[t] == one.values(Eigen::Index(126 + t), 0);
    o.require(exact, "single-asset backtest differs from the asset series");
    if (o.pass) o.detail = std::to_string(checked) + " rebalances checked; single asset exact over 274 days";
    return o;
}

Outcome sinusoid_clustering(const testutil::TempDir& tmp) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    auto base = pipeline::load_config(source_dir / "data/synthetic40/config.json");
    base.method = "pi1";
    base.clustering.algorithm = pipeline::Algorithm::KMeans;
    base.clustering.k = 2;
    std::vector<double> ari;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto dir = tmp / ("sinusoid" + std::to_string(seed));
        const auto u = synthetic::sinusoid_universe({}, seed);
        std::filesystem::create_directories(dir);
        market::write_prices_csv(dir / "prices.csv", u.prices);
        auto c = base;
        c.prices = dir / "prices.csv";
        c.sectors.clear();
        c.out = dir / "out";
        const auto report = pipeline::run_pipeline(c);
        record_pipeline("sinusoid" + std::to_string(seed), c, report);
        const auto got = cluster::read_partition_csv(c.out / "partition.csv");
        cluster::Partition truth;
        truth.tickers = u.prices.tickers;
        truth.labels = u.group;
        truth.k = 2;
        ari.push_back(cluster::adjusted_rand_index(got, truth));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double med = median(ari);
    o.require(med >= 0.9, fmt("median ARI %.3f", med));
    o.require(secs < 180.0, fmt("took %.0f s", secs));
    std::string list;
    for (double a : ari) list += fmt(" %.2f", a);
    o.detail = fmt("median ARI %.3f over 10 seeds, %.1f s;", med, secs) + list;
    return o;
}

Outcome diversification() {
    Outcome o;
    Rng rng(107);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 2 + int(rng.next() % 25);
        auto h = random_returns(rng, 400, n);
        recorded.push_back({"random" + std::to_string(trial), h, portfolio::backtest(h, 200)});
    }
    std::size_t count = 0;
    double worst_drift = 0.0;
    for (const auto& r : recorded)
        for (const auto& rb : r.result.rebalances) {
            o.require(rb.estimated_variance <= rb.min_asset_variance, r.label + ": variance above the best asset on " + rb.date.iso());
            // the reported numbers are those of the estimation window
            const Eigen::MatrixXd window = r.history.values.middleRows(Eigen::Index(rb.window_begin),
                                                                       Eigen::Index(rb.window_end - rb.window_begin));
            const Eigen::MatrixXd s = portfolio::covariance(window);
            const double scale = s.diagonal().maxCoeff();
            worst_drift = std::max({worst_drift, std::abs(quad(s, rb.weights) - rb.estimated_variance) / scale,
                                    std::abs(s.diagonal().minCoeff() - rb.min_asset_variance) / scale});
            ++count;
        }
    o.require(worst_drift <= 1e-12, fmt("reported variances disagree with the window by %.1e", worst_drift));
    if (o.pass) o.detail = std::to_string(count) + " rebalances across " + std::to_string(recorded.size()) + " backtests";
    return o;
}

Outcome market_direction(const testutil::TempDir& tmp) {
    Outcome o;
    auto base = pipeline::load_config(source_dir / "data/synthetic_market/config.json");
    base.method = "pi1";
    std::vector<double> risk;
    double equal_weight = 0.0;
    // the embedding does not depend on the clustering seed, so it is computed once
    const auto data = pipeline::ingest(base);
    const auto embedding = pipeline::embed(base, data);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto c = base;
        c.clustering.seed = seed;
        c.out = tmp / ("market" + std::to_string(seed));
        const auto clusters = pipeline::cluster_stocks(c, data, &embedding);
        const auto stage = pipeline::backtest(c, data, clusters);
        const auto& run = stage.runs[clusters.headline];
        recorded.push_back({"market" + std::to_string(seed), data.returns.select(run.selection.tickers), run.result});
        risk.push_back(run.summary.risk);
        equal_weight = stage.equal_weight.risk;
    }
    const double med = median(risk);
    o.require(med <= equal_weight, fmt("median PI1 risk %.4f above equal weight %.4f", med, equal_weight));
    std::string list;
    for (double r : risk) list += fmt(" %.4f", r);
    o.detail = fmt("median PI1 risk %.4f vs equal weight %.4f;", med, equal_weight) + list;
    return o;
}

Outcome determinism(const testutil::TempDir& tmp) {
    Outcome o;
    auto c = pipeline::load_config(source_dir / "data/synthetic40/config.json");
    std::vector<std::map<std::string, std::string>> outputs;
    for (const char* name : {"first", "second"}) {
        c.out = tmp / (std::string("determinism_") + name);
        const auto report = pipeline::run_pipeline(c);
        record_pipeline(std::string("determinism_") + name, c, report);
        auto files = tree(c.out);
        o.require(files.erase("timings.json") == 1, "timings.json missing");
        outputs.push_back(std::move(files));
    }
    o.require(outputs[0].size() > 10, "too few artifacts");
    for (const auto& [name, text] : outputs[0]) {
        const auto it = outputs[1].find(name);
        o.require(it != outputs[1].end() && it->second == text, name + " differs between runs");
    }
    o.require(outputs[0].size() == outputs[1].size(), "different artifact sets");
    if (o.pass) o.detail = std::to_string(outputs[0].size()) + " files byte-identical (timings.json excluded)";
    return o;
}

}  // namespace

int main() {
    log::set_level(log::Level::Silent);
    testutil::TempDir tmp;
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    // the pipeline criteria run first so that the look-ahead, KKT and
    // diversification checks see every backtest of this run
    std::vector<Criterion> order = {
        {6, "synthetic regime clustering", [&] { return sinusoid_clustering(tmp); }},
        {8, "directional end-to-end on the synthetic market", [&] { return market_direction(tmp); }},
        {9, "determinism", [&] { return determinism(tmp); }},
        {1, "persistence oracle equivalence", persistence_oracle},
        {2, "analytic persistence fixtures", analytic_fixtures},
        {3, "vectorizer properties", vectorizer_properties},
        {7, "in-sample diversification", diversification},
        {4, "QP correctness", qp_correctness},
        {5, "no look-ahead", no_look_ahead},
    };
    std::map<int, std::pair<std::string, Outcome>> results;
    for (const auto& c : order) {
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        results[c.id] = {c.name, o};
    }
    int failed = 0;
    for (const auto& [id, r] : results) {
        std::printf("%s  %d  %s: %s\n", r.second.pass ? "PASS" : "FAIL", id, r.first.c_str(), r.second.detail.c_str());
        failed += r.second.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", int(results.size()) - failed, results.size());
    return failed == 0 ? 0 : 1;
}
