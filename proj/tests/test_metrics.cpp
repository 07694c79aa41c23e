#include "htdsm/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace htdsm;

namespace {

PointSet gaussian_points(std::size_t n, std::size_t dim, double mean, double sd, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(mean, sd);
    PointSet p(dim, n);
    for (std::size_t i = 0; i < n; ++i)
        for (auto& v : p.row(i)) v = g(rng);
    return p;
}

FeatureSet real_of(PointSet p) { return {std::move(p), FeatureSource::real}; }
FeatureSet fake_of(PointSet p) { return {std::move(p), FeatureSource::generated}; }

double dist(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

// Radii by fully sorting every distance row.
std::vector<double> brute_radii(const PointSet& p, std::size_t k) {
    std::vector<double> r(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < p.size(); ++j)
            if (j != i) d.push_back(dist(p.row(i), p.row(j)));
        std::sort(d.begin(), d.end());
        r[i] = d[k - 1];
    }
    return r;
}

Prdc brute_prdc(const PointSet& x, const PointSet& y, std::size_t k) {
    const auto rx = brute_radii(x, k), ry = brute_radii(y, k);
    Prdc out;
    for (std::size_t j = 0; j < y.size(); ++j) {
        std::size_t inside = 0;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (dist(y.row(j), x.row(i)) < rx[i]) ++inside;
        out.precision += inside > 0;
        out.density += double(inside);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        bool any_fake_ball = false, any_in_own_ball = false;
        for (std::size_t j = 0; j < y.size(); ++j) {
            any_fake_ball |= dist(x.row(i), y.row(j)) < ry[j];
            any_in_own_ball |= dist(x.row(i), y.row(j)) < rx[i];
        }
        out.recall += any_fake_ball;
        out.coverage += any_in_own_ball;
    }
    out.precision /= double(y.size());
    out.density /= double(k * y.size());
    out.recall /= double(x.size());
    out.coverage /= double(x.size());
    return out;
}

double brute_kid(const PointSet& x, const PointSet& y) {
    const double m = double(x.size()), n = double(y.size());
    double xx = 0, yy = 0, xy = 0, pairs = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j)
            if (i != j) xx += std::pow(std::inner_product(x.row(i).begin(), x.row(i).end(), x.row(j).begin(), 0.0) / x.dim() + 1, 3);
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j)
            if (i != j) yy += std::pow(std::inner_product(y.row(i).begin(), y.row(i).end(), y.row(j).begin(), 0.0) / y.dim() + 1, 3);
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (std::equal(x.row(i).begin(), x.row(i).end(), y.row(j).begin())) continue;
            xy += std::pow(std::inner_product(x.row(i).begin(), x.row(i).end(), y.row(j).begin(), 0.0) / x.dim() + 1, 3);
            pairs += 1;
        }
    return xx / (m * (m - 1)) + yy / (n * (n - 1)) - 2 * xy / pairs;
}

struct Moments2 {
    double mx, my, sxx, syy, sxy;
};

Moments2 moments2(const PointSet& p) {
    Moments2 m{0, 0, 0, 0, 0};
    const double n = double(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        m.mx += p.row(i)[0] / n;
        m.my += p.row(i)[1] / n;
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double a = p.row(i)[0] - m.mx, b = p.row(i)[1] - m.my;
        m.sxx += a * a / (n - 1);
        m.syy += b * b / (n - 1);
        m.sxy += a * b / (n - 1);
    }
    return m;
}

// For 2x2 matrices the eigenvalues of S_a S_b are non-negative and
// tr((S_a S_b)^(1/2)) = sqrt(tr(S_a S_b) + 2 sqrt(det S_a det S_b)).
double closed_form_fid_2d(const PointSet& a, const PointSet& b) {
    const auto p = moments2(a), q = moments2(b);
    const double tr_prod = p.sxx * q.sxx + 2 * p.sxy * q.sxy + p.syy * q.syy;
    const double det_a = p.sxx * p.syy - p.sxy * p.sxy, det_b = q.sxx * q.syy - q.sxy * q.sxy;
    const double tr_sqrt = std::sqrt(tr_prod + 2 * std::sqrt(det_a * det_b));
    return (p.mx - q.mx) * (p.mx - q.mx) + (p.my - q.my) * (p.my - q.my) + p.sxx + p.syy + q.sxx +
           q.syy - 2 * tr_sqrt;
}

}  // namespace

TEST_CASE("knn radii match a full sort") {
    const auto p = gaussian_points(60, 3, 0.0, 1.0, 1);
    for (std::size_t k : {1, 3, 5}) {
        const auto r = knn_radii(p, k);
        const auto b = brute_radii(p, k);
        for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
    CHECK_THROWS_AS(knn_radii(p, 60), MetricError);
}

TEST_CASE("PRDC matches the brute-force definition") {
    for (std::uint64_t seed : {2, 3}) {
        const auto x = gaussian_points(80, 2, 0.0, 1.0, seed);
        const auto y = gaussian_points(70, 2, 0.5, 1.3, seed + 10);
        const auto got = prdc(real_of(x), fake_of(y), 5);
        const auto want = brute_prdc(x, y, 5);
        CHECK(got.precision == doctest::Approx(want.precision));
        CHECK(got.recall == doctest::Approx(want.recall));
        CHECK(got.density == doctest::Approx(want.density));
        CHECK(got.coverage == doctest::Approx(want.coverage));
    }
}

TEST_CASE("PRDC uses strict ball membership") {
    // Points on a line at spacing 1: k = 1 radii are all exactly 1.
    PointSet x(1, std::vector<double>{0.0, 1.0, 2.0});
    PointSet y(1, std::vector<double>{3.0, 3.0 + 1e-9, 10.0});
    const auto r = prdc(real_of(x), fake_of(y), 1);
    // y = 3 sits exactly on the boundary of the ball around 2, so it is outside.
    CHECK(r.precision == 0.0);
    CHECK(r.coverage == 0.0);
}

TEST_CASE("PRDC of a set against itself") {
    const auto x = gaussian_points(50, 2, 0.0, 1.0, 4);
    const auto r = prdc(real_of(x), fake_of(x), 3);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.coverage == 1.0);
    PointSet flat(2, std::vector<double>(20, 1.0));
    CHECK_THROWS_AS(prdc(real_of(flat), fake_of(x), 3), MetricError);
}

TEST_CASE("KID matches the brute-force estimator") {
    const auto x = gaussian_points(40, 3, 0.0, 1.0, 5);
    const auto y = gaussian_points(40, 3, 0.3, 1.0, 6);
    const auto z = gaussian_points(25, 3, 0.3, 1.0, 7);
    CHECK(kid(real_of(x), fake_of(y)) == doctest::Approx(brute_kid(x, y)).epsilon(1e-12));
    CHECK(kid(real_of(x), fake_of(z)) == doctest::Approx(brute_kid(x, z)).epsilon(1e-12));
    CHECK(kid_kernel(std::vector<double>{1.0, 2.0}, std::vector<double>{3.0, -1.0}) ==
          doctest::Approx(std::pow(0.5 + 1.0, 3)));
}

TEST_CASE("KID is symmetric and near zero for identical distributions") {
    const auto x = gaussian_points(200, 2, 0.0, 1.0, 8);
    const auto y = gaussian_points(200, 2, 0.0, 1.0, 9);
    const double a = kid(real_of(x), fake_of(y));
    CHECK(a == doctest::Approx(kid(real_of(y), fake_of(x))));
    CHECK(std::abs(a) < 0.05);
    const auto shifted = gaussian_points(200, 2, 2.0, 1.0, 10);
    CHECK(kid(real_of(x), fake_of(shifted)) > 1.0);
}

TEST_CASE("KID vanishes on identical distinct-point sets in any order") {
    auto x = gaussian_points(30, 2, 0.0, 1.0, 15);
    CHECK(std::abs(kid(real_of(x), fake_of(x))) < 1e-12);
    PointSet shuffled(2, 0);
    for (std::size_t i = x.size(); i-- > 0;) shuffled.push_back(x.row(i));
    CHECK(std::abs(kid(real_of(x), fake_of(shuffled))) < 1e-12);
}

TEST_CASE("KID is invariant under permutation within each set") {
    const auto x = gaussian_points(25, 2, 0.0, 1.0, 16);
    const auto y = gaussian_points(25, 2, 0.5, 1.0, 17);
    PointSet y_rev(2, 0);
    for (std::size_t i = y.size(); i-- > 0;) y_rev.push_back(y.row(i));
    CHECK(kid(real_of(x), fake_of(y)) == doctest::Approx(kid(real_of(x), fake_of(y_rev))).epsilon(1e-12));
}

TEST_CASE("KID grows with cluster separation") {
    double prev = -1.0;
    for (double d : {0.5, 1.0, 2.0, 4.0}) {
        const auto x = gaussian_points(20, 2, 0.0, 0.01, 18);
        const auto y = gaussian_points(20, 2, d, 0.01, 19);
        const double v = kid(real_of(x), fake_of(y));
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("FID is zero on identical sets and invariant under a common shift") {
    auto x = gaussian_points(100, 3, 0.0, 1.0, 20);
    auto y = gaussian_points(100, 3, 0.4, 1.5, 21);
    const double base = fid(real_of(x), fake_of(y));
    for (auto* p : {&x, &y})
        for (std::size_t i = 0; i < p->size(); ++i) {
            p->row(i)[0] += 3.0;
            p->row(i)[2] -= 1.0;
        }
    CHECK(fid(real_of(x), fake_of(y)) == doctest::Approx(base).epsilon(1e-9));
    CHECK(fid(real_of(x), fake_of(x)) < 1e-9);
}

TEST_CASE("PRDC agrees with brute force on 50 small random instances") {
    Rng rng(77);
    std::uniform_int_distribution<std::size_t> size(10, 30);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = 1 + trial % 5;
        const auto x = gaussian_points(size(rng), 2, 0.0, 1.0, 100 + trial);
        const auto y = gaussian_points(size(rng), 2, 0.3, 1.2, 200 + trial);
        const auto got = prdc(real_of(x), fake_of(y), k);
        const auto want = brute_prdc(x, y, k);
        CHECK(got.precision == want.precision);
        CHECK(got.recall == want.recall);
        CHECK(got.density == doctest::Approx(want.density).epsilon(1e-14));
        CHECK(got.coverage == want.coverage);
    }
}

TEST_CASE("FID closed forms") {
    // One dimension: (mu_a - mu_b)² + (s_a - s_b)².
    PointSet a(1, std::vector<double>{0.0, 1.0, 2.0, 3.0});
    PointSet b(1, std::vector<double>{5.0, 7.0, 9.0, 11.0});
    const double sa = std::sqrt(5.0 / 3.0), sb = std::sqrt(20.0 / 3.0);
    CHECK(fid(real_of(a), fake_of(b)) == doctest::Approx(6.5 * 6.5 + (sa - sb) * (sa - sb)));
    // Two dimensions with correlated, non-commuting covariances.
    auto x = gaussian_points(300, 2, 0.0, 1.0, 11);
    auto y = gaussian_points(300, 2, 0.0, 1.0, 12);
    for (std::size_t i = 0; i < y.size(); ++i) {
        auto r = y.row(i);
        r[1] = 0.8 * r[0] + 0.3 * r[1] + 1.0;
        r[0] *= 2.0;
    }
    CHECK(fid(real_of(x), fake_of(y)) == doctest::Approx(closed_form_fid_2d(x, y)).epsilon(1e-10));
    CHECK(fid(real_of(x), fake_of(x)) == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
}

TEST_CASE("metric input validation") {
    FeatureSet empty;
    CHECK_THROWS_AS(empty.validate(), MetricError);
    PointSet bad(1, std::vector<double>{0.0, std::nan("")});
    CHECK_THROWS_AS(real_of(bad).validate(), MetricError);
    const auto x2 = gaussian_points(10, 2, 0.0, 1.0, 1);
    const auto x3 = gaussian_points(10, 3, 0.0, 1.0, 1);
    CHECK_THROWS_AS(kid(real_of(x2), fake_of(x3)), MetricError);
    CHECK_THROWS_AS(fid(real_of(x2), fake_of(x3)), MetricError);
}

TEST_CASE("compute_metrics fills every field") {
    const auto x = gaussian_points(60, 2, 0.0, 1.0, 13);
    const auto y = gaussian_points(60, 2, 0.0, 1.0, 14);
    const auto r = compute_metrics(real_of(x), fake_of(y), 4);
    CHECK(r.k == 4);
    CHECK(r.feature_map == "identity");
    CHECK(r.precision.has_value());
    CHECK(r.coverage.has_value());
    CHECK(r.kid.has_value());
    CHECK(r.fid.has_value());
}

TEST_CASE("bootstrap interval") {
    Rng rng(1);
    const std::vector<double> constant(10, 87.5);
    const auto c = bootstrap_ci(constant, 1000, 0.95, rng);
    CHECK(c.mean == 87.5);
    CHECK(c.lo == 87.5);
    CHECK(c.hi == 87.5);
    std::vector<double> v;
    std::normal_distribution<double> g(10.0, 2.0);
    for (int i = 0; i < 400; ++i) v.push_back(g(rng));
    const auto ci = bootstrap_ci(v, 4000, 0.95, rng);
    const double se = 2.0 / std::sqrt(400.0);
    CHECK(ci.lo < ci.mean);
    CHECK(ci.hi > ci.mean);
    CHECK((ci.hi - ci.lo) == doctest::Approx(2 * 1.96 * se).epsilon(0.15));
    CHECK_THROWS_AS(bootstrap_ci({}, 10, 0.95, rng), DomainError);
    CHECK_THROWS_AS(bootstrap_ci(v, 10, 1.0, rng), DomainError);
}

TEST_CASE("mode imbalance") {
    const auto m = MixtureSpec::two_mode(10.0);
    PointSet pts(2, std::vector<double>{2.0, 2.0, 3.0, 2.5, -2.0, -3.0, 90.0, 90.0, 0.1, 0.2});
    std::vector<ParticleStatus> st(5, ParticleStatus::converged);
    st[3] = ParticleStatus::diverged;
    const auto r = mode_imbalance(pts, st, m);
    CHECK(r.assigned == 4);
    CHECK(r.diverged == 1);
    CHECK(r.counts == std::vector<std::size_t>{3, 1});
    CHECK(r.reference_mode == 0);
    CHECK(r.percentage == doctest::Approx(75.0));
    CHECK(r.percentage >= 50.0);

    // Equal weights: reference is the most populated mode.
    const auto eq = MixtureSpec::two_mode(1.0);
    PointSet q(2, std::vector<double>{-2.0, -2.0, -3.0, -3.0, 2.0, 2.0});
    const auto r2 = mode_imbalance(q, std::vector<ParticleStatus>(3, ParticleStatus::converged), eq);
    CHECK(r2.reference_mode == 1);
    CHECK(r2.percentage == doctest::Approx(200.0 / 3.0));

    CHECK_THROWS_AS(mode_imbalance(q, std::vector<ParticleStatus>(3, ParticleStatus::diverged), eq),
                    MetricError);
    CHECK_THROWS_AS(mode_imbalance(q, std::vector<ParticleStatus>(2), eq), MetricError);
}
