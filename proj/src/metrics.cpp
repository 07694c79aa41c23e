#include "htdsm/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace htdsm {

void FeatureSet::validate() const {
    if (points.empty()) {
        throw MetricError("FeatureSet: empty");
    }
    for (double v : points.data()) {
        if (!std::isfinite(v)) {
            throw MetricError("FeatureSet: non-finite entry");
        }
    }
}

namespace {

void require_same_dim(const FeatureSet& a, const FeatureSet& b) {
    a.validate();
    b.validate();
    if (a.dim() != b.dim()) {
        throw MetricError("metrics: feature dimension mismatch");
    }
}

// Row-major |A| x |B| squared distances.
std::vector<double> cross_squared_distances(const PointSet& a, const PointSet& b) {
    std::vector<double> out(a.size() * b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            out[i * b.size() + j] = squared_distance(a.row(i), b.row(j));
        }
    }
    return out;
}

Eigen::MatrixXd as_matrix(const PointSet& points) {
    Eigen::MatrixXd m(points.size(), points.dim());
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = 0; j < points.dim(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points.row(i)[j];
        }
    }
    return m;
}

double cube(double v) { return v * v * v; }

}  // namespace

std::vector<double> knn_radii(const PointSet& points, std::size_t k) {
    const std::size_t m = points.size();
    if (k < 1 || m < k + 1) {
        throw MetricError("knn_radii: need more than k points");
    }
    std::vector<double> radii(m);
    std::vector<double> row(m - 1);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t c = 0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j != i) {
                row[c++] = squared_distance(points.row(i), points.row(j));
            }
        }
        std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
        radii[i] = std::sqrt(row[k - 1]);
    }
    return radii;
}

Prdc prdc(const FeatureSet& real, const FeatureSet& fake, std::size_t k) {
    require_same_dim(real, fake);
    const auto real_radii = knn_radii(real.points, k);
    const auto fake_radii = knn_radii(fake.points, k);
    if (std::all_of(real_radii.begin(), real_radii.end(), [](double r) { return r == 0.0; }) ||
        std::all_of(fake_radii.begin(), fake_radii.end(), [](double r) { return r == 0.0; })) {
        throw MetricError("prdc: degenerate point set (all k-NN radii are zero)");
    }
    const std::size_t nr = real.size();
    const std::size_t nf = fake.size();
    const auto dist_sq = cross_squared_distances(real.points, fake.points);

    std::size_t precise = 0;
    std::size_t density_hits = 0;
    std::vector<bool> real_covered(nr, false);
    std::vector<bool> real_recalled(nr, false);
    for (std::size_t j = 0; j < nf; ++j) {
        bool inside_any = false;
        for (std::size_t i = 0; i < nr; ++i) {
            const double d = std::sqrt(dist_sq[i * nf + j]);
            if (d < real_radii[i]) {
                inside_any = true;
                ++density_hits;
                real_covered[i] = true;
            }
            if (d < fake_radii[j]) {
                real_recalled[i] = true;
            }
        }
        precise += inside_any ? 1 : 0;
    }
    const auto count_true = [](const std::vector<bool>& v) {
        return static_cast<double>(std::count(v.begin(), v.end(), true));
    };
    Prdc out;
    out.precision = static_cast<double>(precise) / static_cast<double>(nf);
    out.recall = count_true(real_recalled) / static_cast<double>(nr);
    out.density = static_cast<double>(density_hits) / (static_cast<double>(k) * static_cast<double>(nf));
    out.coverage = count_true(real_covered) / static_cast<double>(nr);
    return out;
}

double kid_kernel(std::span<const double> x, std::span<const double> y) {
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dot += x[i] * y[i];
    }
    return cube(dot / static_cast<double>(x.size()) + 1.0);
}

double kid(const FeatureSet& real, const FeatureSet& fake) {
    require_same_dim(real, fake);
    const std::size_t m = real.size();
    const std::size_t n = fake.size();
    if (m < 2 || n < 2) {
        throw MetricError("kid: need at least two points per set");
    }
    const auto& x = real.points;
    const auto& y = fake.points;

    double xx = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            xx += 2.0 * kid_kernel(x.row(i), x.row(j));
        }
    }
    double yy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            yy += 2.0 * kid_kernel(y.row(i), y.row(j));
        }
    }
    // Cross term over real-fake pairs, skipping pairs of coinciding points: a point
    // present in both sets must not pair with itself, just as within-set
    // diagonals are dropped. Invariant under permutations of either set.
    double xy = 0.0;
    std::size_t cross_pairs = 0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const auto a = x.row(i);
            const auto b = y.row(j);
            if (std::equal(a.begin(), a.end(), b.begin())) {
                continue;
            }
            xy += kid_kernel(a, b);
            ++cross_pairs;
        }
    }
    if (cross_pairs == 0) {
        throw MetricError("kid: every real-fake pair coincides");
    }
    const auto md = static_cast<double>(m);
    const auto nd = static_cast<double>(n);
    return xx / (md * (md - 1.0)) + yy / (nd * (nd - 1.0)) -
           2.0 * xy / static_cast<double>(cross_pairs);
}

double fid(const FeatureSet& real, const FeatureSet& fake) {
    require_same_dim(real, fake);
    if (real.size() < 2 || fake.size() < 2) {
        throw MetricError("fid: need at least two points per set");
    }
    const Eigen::MatrixXd a = as_matrix(real.points);
    const Eigen::MatrixXd b = as_matrix(fake.points);
    const Eigen::RowVectorXd mu_a = a.colwise().mean();
    const Eigen::RowVectorXd mu_b = b.colwise().mean();
    const Eigen::MatrixXd ca = a.rowwise() - mu_a;
    const Eigen::MatrixXd cb = b.rowwise() - mu_b;
    Eigen::MatrixXd cov_a = (ca.transpose() * ca) / static_cast<double>(a.rows() - 1);
    Eigen::MatrixXd cov_b = (cb.transpose() * cb) / static_cast<double>(b.rows() - 1);
    cov_a = 0.5 * (cov_a + cov_a.transpose());
    cov_b = 0.5 * (cov_b + cov_b.transpose());

    // tr((S_a S_b)^(1/2)) = tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)); the inner product is
    // symmetric PSD, so a symmetric eigensolver applies. Negative round-off
    // eigenvalues are clamped to zero.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_a(cov_a);
    const Eigen::VectorXd root_vals = eig_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd sqrt_a =
        eig_a.eigenvectors() * root_vals.asDiagonal() * eig_a.eigenvectors().transpose();
    Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_inner(inner, Eigen::EigenvaluesOnly);
    const double trace_sqrt = eig_inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double value =
        (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
    if (!std::isfinite(value)) {
        throw MetricError("fid: non-finite result");
    }
    return std::max(value, 0.0);
}

MetricReport compute_metrics(const FeatureSet& real, const FeatureSet& fake, std::size_t k) {
    MetricReport report;
    report.k = k;
    report.feature_map = real.feature_map;
    const auto p = prdc(real, fake, k);
    report.precision = p.precision;
    report.recall = p.recall;
    report.density = p.density;
    report.coverage = p.coverage;
    report.kid = kid(real, fake);
    report.fid = fid(real, fake);
    return report;
}

BootstrapCi bootstrap_ci(std::span<const double> values, std::size_t resamples, double level,
                         Rng& rng) {
    if (values.empty() || resamples < 1 || !(level > 0.0 && level < 1.0)) {
        throw DomainError("bootstrap_ci: need values, resamples >= 1 and level in (0, 1)");
    }
    const std::size_t n = values.size();
    BootstrapCi ci;
    ci.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);

    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> means(resamples);
    for (auto& m : means) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += values[pick(rng)];
        }
        m = acc / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    const auto percentile = [&](double q) {
        const double h = q * static_cast<double>(resamples - 1);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, resamples - 1);
        return means[lo] + (h - static_cast<double>(lo)) * (means[hi] - means[lo]);
    };
    ci.lo = percentile((1.0 - level) / 2.0);
    ci.hi = percentile((1.0 + level) / 2.0);
    // A constant sample must give a degenerate interval at exactly that value.
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; })) {
        ci = {values[0], values[0], values[0]};
    }
    return ci;
}

ModeImbalance mode_imbalance(const PointSet& endpoints,
                             const std::vector<ParticleStatus>& status,
                             const MixtureSpec& mixture) {
    mixture.validate();
    if (endpoints.size() != status.size()) {
        throw MetricError("mode_imbalance: endpoint/status size mismatch");
    }
    if (!endpoints.empty() && endpoints.dim() != mixture.dim()) {
        throw MetricError("mode_imbalance: dimension mismatch");
    }
    ModeImbalance out;
    out.counts.assign(mixture.components(), 0);
    for (std::size_t i = 0; i < endpoints.size(); ++i) {
        if (status[i] == ParticleStatus::diverged) {
            ++out.diverged;
            continue;
        }
        std::size_t best = 0;
        double best_d = squared_distance(endpoints.row(i), mixture.means[0]);
        for (std::size_t k = 1; k < mixture.components(); ++k) {
            const double d = squared_distance(endpoints.row(i), mixture.means[k]);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        ++out.counts[best];
        ++out.assigned;
    }
    if (out.assigned == 0) {
        throw MetricError("mode_imbalance: no non-diverged particles");
    }
    const double top_weight = *std::max_element(mixture.weights.begin(), mixture.weights.end());
    const bool tied = std::all_of(mixture.weights.begin(), mixture.weights.end(),
                                  [&](double w) { return std::abs(w - top_weight) <= 1e-12; });
    out.reference_mode =
        tied ? static_cast<std::size_t>(std::distance(
                   out.counts.begin(), std::max_element(out.counts.begin(), out.counts.end())))
             : mixture.majority_component();
    out.percentage = 100.0 * static_cast<double>(out.counts[out.reference_mode]) /
                     static_cast<double>(out.assigned);
    return out;
}

ModeImbalance mode_imbalance(const std::vector<ParticlePath>& paths, const MixtureSpec& mixture) {
    std::vector<ParticleStatus> status;
    status.reserve(paths.size());
    for (const auto& p : paths) {
        status.push_back(p.status);
    }
    return mode_imbalance(endpoints(paths), status, mixture);
}

}  // namespace htdsm
