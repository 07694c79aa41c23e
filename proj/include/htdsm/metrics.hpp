#pragma once

#include "htdsm/common.hpp"
#include "htdsm/sampler.hpp"
#include "htdsm/scorenet.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace htdsm {

enum class FeatureSource { real, generated };

/// Feature vectors for metric computation. Only the identity feature map is
/// built in; `feature_map` names whatever produced the vectors.
struct FeatureSet {
    PointSet points;
    FeatureSource source = FeatureSource::real;
    std::string feature_map = "identity";

    std::size_t size() const { return points.size(); }
    std::size_t dim() const { return points.dim(); }
    void validate() const;
};

struct Prdc {
    double precision = 0.0;
    double recall = 0.0;
    double density = 0.0;
    double coverage = 0.0;
};

struct MetricReport {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> density;
    std::optional<double> coverage;
    std::optional<double> kid;
    std::optional<double> fid;
    std::string feature_map = "identity";
    std::size_t k = 5;
};

/// Distance from each point to its k-th nearest neighbour in the same set,
/// excluding the point itself.
std::vector<double> knn_radii(const PointSet& points, std::size_t k);

/// Precision / recall / density / coverage with k-NN balls (strict inclusion).
Prdc prdc(const FeatureSet& real, const FeatureSet& fake, std::size_t k);

/// Polynomial kernel (x·y / n + 1)³ with n the feature dimension.
double kid_kernel(std::span<const double> x, std::span<const double> y);

/// Unbiased squared MMD with the cubic polynomial kernel. Within-set diagonals
/// are excluded, and so are real-fake pairs of identical points, which makes
/// kid(A, A) vanish on distinct-point sets under any ordering.
double kid(const FeatureSet& real, const FeatureSet& fake);

/// ||mu_r - mu_g||² + tr(S_r + S_g - 2 (S_r S_g)^(1/2)).
double fid(const FeatureSet& real, const FeatureSet& fake);

MetricReport compute_metrics(const FeatureSet& real, const FeatureSet& fake, std::size_t k);

struct BootstrapCi {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

/// Percentile bootstrap interval for the mean.
BootstrapCi bootstrap_ci(std::span<const double> values, std::size_t resamples, double level,
                         Rng& rng);

struct ModeImbalance {
    double percentage = 0.0;          ///< 100 * share of the reference mode
    std::size_t reference_mode = 0;
    std::vector<std::size_t> counts;  ///< non-diverged particles per mode
    std::size_t assigned = 0;
    std::size_t diverged = 0;
};

/// Nearest-mean assignment of non-diverged endpoints. The reference mode is the
/// majority-weight component; when all weights tie it is the most populated mode.
ModeImbalance mode_imbalance(const PointSet& endpoints,
                             const std::vector<ParticleStatus>& status,
                             const MixtureSpec& mixture);
ModeImbalance mode_imbalance(const std::vector<ParticlePath>& paths, const MixtureSpec& mixture);

}  // namespace htdsm
