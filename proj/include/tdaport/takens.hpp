#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

namespace tdaport::takens {

struct EmbeddingParams {
    int tau = 1;
    int dim = 1;
    int stride = 1;
};

/// Delay-embedding point cloud: one row per point.
struct PointCloud {
    Eigen::MatrixXd points;  ///< M x dim
    std::string source_ticker;
    EmbeddingParams params;

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
    [[nodiscard]] int dim() const { return static_cast<int>(points.cols()); }
};

/// Mutual information (nats) of paired samples from an equal-width
/// `bins` x `bins` histogram over [lo, hi] on both axes. Swapping `xs` and
/// `ys` gives a bit-identical result.
double histogram_mutual_information(std::span<const double> xs, std::span<const double> ys, int bins,
                                    double lo, double hi);

/// MI between x_t and x_{t+tau}, histogram over the range of the whole
/// series. A constant series yields 0 (with a warning).
double delayed_mutual_information(std::span<const double> series, int tau, int bins = 16);

/// Standard deviation of the histogram MI estimate for independent pairs,
/// from 2N * MI ~ chi^2 with (bins-1)^2 degrees of freedom.
double mutual_information_noise(int bins, std::size_t pairs);

struct DelayChoice {
    int tau = 1;
    bool fallback = false;        ///< no significant local minimum; argmin used
    std::vector<double> curve;    ///< curve[k] = MI at tau = k + 1
};

/// First delay whose MI is a strict local minimum that stands out from the
/// estimator noise: it lies more than tol = `noise_sigmas` standard
/// deviations below the running maximum, and the curve climbs more than tol
/// above it before dropping below it again. Otherwise the smallest delay
/// within tol of the global minimum, flagged as a fallback.
DelayChoice select_delay(std::span<const double> series, int tau_max, int bins = 16, double noise_sigmas = 6.0);

/// Kennel false-nearest-neighbour fraction (ratio test only). A candidate
/// neighbour that coincides with the point even after lifting to dim + 1
/// (within 1e-10 of the series range) is not a valid pair and is skipped.
double false_nearest_neighbors(std::span<const double> series, int tau, int dim, double r_tol = 15.0);

struct DimensionChoice {
    int dim = 1;
    bool capped = false;          ///< threshold never met; dim_max returned
    std::vector<double> fnn;      ///< fnn[k] = fraction at dim = k + 1
};

DimensionChoice select_dimension(std::span<const double> series, int tau, int dim_max = 10,
                                 double threshold = 0.01, double r_tol = 15.0);

/// Number of points `embed` produces for a series of `length`.
std::size_t embedded_count(std::size_t length, const EmbeddingParams& params);

/// Points [x_{s k}, x_{s k + tau}, ..., x_{s k + (d-1) tau}] for every valid k.
PointCloud embed(std::span<const double> series, const EmbeddingParams& params, std::string ticker = {});

}  // namespace tdaport::takens
