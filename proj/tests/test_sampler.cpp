#include "htdsm/sampler.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace htdsm;

namespace {

ScoreFn quadratic_score(double precision = 1.0) {
    return [precision](std::span<const double> x, double, std::span<double> out) {
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = -precision * x[j];
    };
}

ScoreFn constant_score(double value) {
    return [value](std::span<const double>, double, std::span<double> out) {
        for (auto& v : out) v = value;
    };
}

}  // namespace

TEST_CASE("sampler config validation") {
    SamplerConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.total_steps() == 2000);
    cfg.steps_per_level = {1, 2, 3};
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg.steps_per_level = {10, 20};
    CHECK(cfg.steps_at(1) == 20);
    CHECK(cfg.total_steps() == 30);
    cfg.epsilon = -1.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = SamplerConfig{};
    cfg.divergence_radius = 1.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = SamplerConfig{};
    cfg.diffusion_beta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
}

TEST_CASE("zero-temperature Langevin on a quadratic contracts geometrically") {
    SamplerConfig cfg;
    cfg.schedule = NoiseSchedule::from_levels({1.0});
    cfg.steps_per_level = {50};
    cfg.epsilon = 0.1;
    cfg.zero_temperature = true;
    const auto paths = ld_run(quadratic_score(), cfg, 5);
    for (const auto& p : paths) {
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(p.final_position[j] == doctest::Approx(p.initial[j] * std::pow(0.9, 50)));
        }
        CHECK(p.score_evaluations == 50);
        CHECK(p.status == ParticleStatus::converged);
    }
}

TEST_CASE("annealed step size scales with sigma squared") {
    SamplerConfig cfg;
    cfg.schedule = NoiseSchedule::from_levels({2.0, 1.0, 0.5});
    cfg.steps_per_level = {3, 4, 5};
    cfg.epsilon = 0.2;
    cfg.zero_temperature = true;
    cfg.dim = 1;
    const auto paths = ald_run(constant_score(1.0), cfg, 2);
    const double shift = 0.2 * (3 * 1.0 + 4 * 0.25 + 5 * 0.0625);
    for (const auto& p : paths) {
        CHECK(p.final_position[0] - p.initial[0] == doctest::Approx(shift));
        CHECK(p.score_norms.size() == 12);
    }
}

TEST_CASE("Langevin on a standard normal reaches the discretized stationary variance") {
    SamplerConfig cfg;
    cfg.schedule = NoiseSchedule::from_levels({1.0});
    cfg.steps_per_level = {800};
    cfg.epsilon = 0.01;
    cfg.dim = 1;
    cfg.init_half_width = 1.0;
    cfg.seed = 3;
    for (double beta : {2.0, 1.0}) {
        cfg.diffusion_beta = beta;
        const auto pts = endpoints(ld_run(quadratic_score(), cfg, 4000));
        double s = 0.0, s2 = 0.0;
        for (double v : pts.data()) {
            s += v;
            s2 += v * v;
        }
        const double n = double(pts.size());
        const double var = s2 / n - (s / n) * (s / n);
        CHECK(std::abs(var - 1.0 / (1.0 - 0.005)) < 0.08);
    }
}

TEST_CASE("sampling is independent of the worker count") {
    SamplerConfig cfg;
    cfg.steps_per_level = {40};
    cfg.seed = 12;
    const auto a = ald_run(quadratic_score(), cfg, 17);
    cfg.workers = 4;
    const auto b = ald_run(quadratic_score(), cfg, 17);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].final_position == b[i].final_position);
        CHECK(a[i].score_norms == b[i].score_norms);
    }
}

TEST_CASE("paths record one row per update") {
    SamplerConfig cfg;
    cfg.steps_per_level = {5, 7};
    cfg.record_paths = true;
    const auto paths = ald_run(quadratic_score(), cfg, 3);
    for (const auto& p : paths) {
        CHECK(p.positions.size() == 12 * 2);
        CHECK(p.position_levels.size() == 12);
        CHECK(p.position_levels.front() == 0);
        CHECK(p.position_levels.back() == 1);
        CHECK(p.positions[22] == p.final_position[0]);
    }
}

TEST_CASE("divergence on escape and on non-finite scores") {
    SamplerConfig cfg;
    cfg.schedule = NoiseSchedule::from_levels({1.0});
    cfg.steps_per_level = {100};
    cfg.epsilon = 1.0;
    cfg.zero_temperature = true;
    auto paths = ld_run(constant_score(50.0), cfg, 4);
    CHECK(count_diverged(paths) == 4);
    for (const auto& p : paths) CHECK(p.score_evaluations < 100);
    paths = ld_run(constant_score(std::numeric_limits<double>::quiet_NaN()), cfg, 2);
    CHECK(count_diverged(paths) == 2);
    CHECK(std::string(to_string(ParticleStatus::diverged)) == "diverged");
}

TEST_CASE("detect_divergence") {
    const std::vector<double> ok{1.0, 2.0, 50.0, 50.0};
    CHECK(detect_divergence(ok, 2, 100.0) == ParticleStatus::converged);
    const std::vector<double> far{1.0, 2.0, 80.0, 80.0};
    CHECK(detect_divergence(far, 2, 100.0) == ParticleStatus::diverged);
    const std::vector<double> inf{std::numeric_limits<double>::infinity(), 0.0};
    CHECK(detect_divergence(inf, 2, 100.0) == ParticleStatus::diverged);
    CHECK_THROWS_AS(detect_divergence(ok, 3, 100.0), DomainError);
}

TEST_CASE("forward chain marginal variance") {
    const std::vector<double> sigmas{0.1, 0.5, 1.0, 3.0};
    for (double beta : {2.0, 1.0}) {
        Rng rng(21);
        const std::size_t trials = 40000;
        std::vector<double> acc(sigmas.size() + 1, 0.0);
        const std::vector<double> x0{0.0};
        for (std::size_t t = 0; t < trials; ++t) {
            const auto chain = forward_chain(x0, sigmas, rng, beta);
            REQUIRE(chain.size() == sigmas.size() + 1);
            for (std::size_t i = 0; i < chain.size(); ++i) acc[i] += chain[i][0] * chain[i][0];
        }
        CHECK(acc[0] == 0.0);
        for (std::size_t i = 0; i < sigmas.size(); ++i) {
            CHECK(std::abs(acc[i + 1] / trials / (sigmas[i] * sigmas[i]) - 1.0) < 0.03);
        }
    }
    Rng rng(1);
    CHECK_THROWS_AS(forward_chain(std::vector<double>{0.0}, std::vector<double>{1.0, 0.5}, rng),
                    ScheduleError);
}

TEST_CASE("endpoints stacks final positions") {
    SamplerConfig cfg;
    cfg.steps_per_level = {2};
    const auto paths = ald_run(quadratic_score(), cfg, 6);
    const auto pts = endpoints(paths);
    CHECK(pts.size() == 6);
    CHECK(pts.dim() == 2);
    CHECK(pts.row(4)[1] == paths[4].final_position[1]);
    CHECK(endpoints({}).empty());
}

TEST_CASE("annealed run makes exactly K * T score evaluations per particle") {
    SamplerConfig cfg;
    cfg.schedule = NoiseSchedule::from_levels({3.0, 1.0, 0.3, 0.1});
    cfg.steps_per_level = {25};
    std::size_t calls = 0;
    const ScoreFn counting = [&calls](std::span<const double> x, double, std::span<double> out) {
        ++calls;
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = -x[j];
    };
    const auto paths = ald_run(counting, cfg, 7);
    for (const auto& p : paths) CHECK(p.score_evaluations == 100);
    CHECK(calls == 700);
}

TEST_CASE("injected diffusion noise has unit variance for every shape") {
    // One Langevin step with zero score from the origin: x = sqrt(2 eps) z.
    for (double beta : {0.5, 1.0, 1.5, 2.0, 2.5}) {
        SamplerConfig cfg;
        cfg.schedule = NoiseSchedule::from_levels({1.0});
        cfg.steps_per_level = {1};
        cfg.epsilon = 0.5;
        cfg.dim = 1;
        cfg.init_half_width = 1e-300;
        cfg.diffusion_beta = beta;
        cfg.workers = 4;
        const auto pts = endpoints(ld_run(constant_score(0.0), cfg, 1000000));
        double s2 = 0.0;
        for (double v : pts.data()) s2 += v * v;
        CHECK(std::abs(s2 / double(pts.size()) - 1.0) < 0.01);
    }
}

TEST_CASE("identical seeds give bitwise identical paths") {
    SamplerConfig cfg;
    cfg.steps_per_level = {30};
    cfg.record_paths = true;
    cfg.seed = 99;
    const auto a = ald_run(quadratic_score(), cfg, 5);
    const auto b = ald_run(quadratic_score(), cfg, 5);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].positions == b[i].positions);
}
