#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tdaport/market_data.hpp"

namespace tdaport::cluster {

/// Assignment of tickers to clusters 0..k-1. Labels are canonical: clusters
/// are numbered in order of their first member.
struct Partition {
    std::vector<std::string> tickers;
    std::vector<int> labels;
    int k = 0;
    std::string method;

    [[nodiscard]] int label_of(const std::string& ticker) const;
    /// members()[c] = row indices of cluster c, ascending.
    [[nodiscard]] std::vector<std::vector<std::size_t>> members() const;
};

/// Renumbers labels by first appearance and recounts k.
void canonicalize(Partition& partition);

struct KMeansOptions {
    int k = 11;
    std::uint64_t seed = 42;
    int restarts = 10;
    int max_iterations = 300;
    double tolerance = 1e-8;  ///< stop when no centroid moves farther than this
};

struct KMeansResult {
    Partition partition;
    double inertia = 0.0;
    std::vector<double> inertia_trace;  ///< after each assignment step of the winning run
    int iterations = 0;
};

/// k-means++ seeding, Lloyd iterations, best of `restarts` by inertia.
/// Rows of `data` are stocks. Deterministic for a given seed.
KMeansResult kmeans(const Eigen::MatrixXd& data, const std::vector<std::string>& tickers, const KMeansOptions& options);

enum class Linkage { Ward, Average, Complete };

Linkage parse_linkage(const std::string& name);
std::string linkage_name(Linkage linkage);

/// Bottom-up merging on Euclidean distance, cut at k clusters. Ties go to
/// the pair with the smallest indices.
Partition agglomerative(const Eigen::MatrixXd& data, const std::vector<std::string>& tickers, int k,
                        Linkage linkage = Linkage::Ward);

/// One cluster per distinct sector label (labels numbered alphabetically).
Partition sector_partition(const market::SectorMap& sectors);

/// Chance-corrected pair-counting agreement. Both partitions must cover the
/// same tickers (order may differ).
double adjusted_rand_index(const Partition& a, const Partition& b);

/// Zero mean, unit population variance per column; constant columns become 0.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& data);

/// Zero mean per column, then one common scale so the root mean square of
/// all entries is 1. Relative geometry between coordinates is kept.
Eigen::MatrixXd pooled_standardize(const Eigen::MatrixXd& data);

/// CSV `ticker,cluster,method`.
void write_partition_csv(const std::filesystem::path& path, const Partition& partition);
Partition read_partition_csv(const std::filesystem::path& path);

}  // namespace tdaport::cluster
