#include "htdsm/selftest.hpp"

#include "htdsm/distributions.hpp"
#include "htdsm/io.hpp"
#include "htdsm/metrics.hpp"
#include "htdsm/sampler.hpp"
#include "htdsm/schedule.hpp"
#include "htdsm/scorenet.hpp"
#include "htdsm/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace htdsm {

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void value(const char* name, double v) {
        if (!detail.empty()) {
            detail += ' ';
        }
        detail += name;
        detail += '=';
        detail += format_double(v);
    }
    void require(bool cond) { ok = ok && cond; }
};

Check specfun_round_trip(std::uint64_t) {
    Check c;
    double worst = 0.0;
    for (double s : {0.25, 0.5, 1.0, 2.0, 5.0}) {
        for (int i = 1; i <= 99; ++i) {
            const double q = i / 100.0;
            const double x = specfun::inv_reg_lower_inc_gamma(s, q);
            worst = std::max(worst, std::abs(specfun::reg_lower_inc_gamma(s, x) - q));
        }
    }
    c.value("max_err", worst);
    c.require(worst <= 1e-8);
    return c;
}

Check specfun_closed_form(std::uint64_t) {
    Check c;
    double worst = 0.0;
    for (double x = 0.0; x <= 50.0; x += 0.5) {
        worst = std::max(worst, std::abs(specfun::reg_lower_inc_gamma(1.0, x) - (1.0 - std::exp(-x))));
    }
    c.value("max_err", worst);
    c.require(worst <= 1e-10);
    return c;
}

Check gn_variance_matching(std::uint64_t seed) {
    Check c;
    Rng rng = make_rng(seed, 11);
    for (double beta : {1.0, 1.5, 2.0}) {
        const auto xs = gn_sample(GeneralizedNormal::unit_variance(beta), rng, 200000);
        double sq = 0.0;
        for (double x : xs) {
            sq += x * x;
        }
        const double var = sq / static_cast<double>(xs.size());
        c.value("var", var);
        c.require(std::abs(var - 1.0) <= 0.02);
    }
    return c;
}

Check gn_score_finite_difference(std::uint64_t) {
    Check c;
    const auto dist = GeneralizedNormal::make(0.0, 1.0, 1.5);
    const double h = 1e-5;
    const double x = 0.25;
    const double fd = (gn_log_pdf(dist, x + h) - gn_log_pdf(dist, x - h)) / (2.0 * h);
    const double s = *gn_score(x, 0.0, 1.0, 1.5);
    c.value("gap", std::abs(fd - s));
    c.require(std::abs(fd - s) <= 1e-6);
    return c;
}

Check norm_constants(std::uint64_t) {
    Check c;
    c.value("c1", norm_c1(1.0));
    c.value("c2", norm_c2(1.0));
    c.value("skew", norm_model_skew(1.0));
    c.require(std::abs(norm_c1(1.0) - 2.0) <= 1e-12 && std::abs(norm_c2(1.0) - 20.0) <= 1e-12);
    c.require(std::abs(norm_model_skew(1.0) - 74.0 / std::pow(5.0, 1.5)) <= 1e-10);
    return c;
}

Check schedule_identity(std::uint64_t) {
    Check c;
    const double delta = 0.9;
    double worst = 0.0;
    for (double beta : {1.0, 2.0}) {
        const auto sched = quantile_matched_schedule(beta, 2, delta, 0.01, 1.0);
        const std::size_t first = sched.top_clamped ? 1 : 0;
        for (std::size_t i = first; i + 1 < sched.size(); ++i) {
            const double upper = norm_model_quantile(2, sched.sigmas[i + 1], beta, (1 + delta) / 2);
            const double lower = norm_model_quantile(2, sched.sigmas[i], beta, (1 - delta) / 2);
            worst = std::max(worst, std::abs(upper - lower) / upper);
        }
    }
    c.value("max_rel_err", worst);
    c.require(worst <= 1e-8);
    return c;
}

Check network_gradient(std::uint64_t seed) {
    Check c;
    Rng rng = make_rng(seed, 12);
    ScoreNetwork net({3, 4, 2}, rng);
    PointSet clean(2, std::vector<double>{0.3, -0.2, 1.1, 0.7, -0.5, 0.4});
    NoiseConfig noise;
    Rng batch_rng = make_rng(seed, 13);
    const auto batch = make_dsm_batch(clean, 0.5, noise, batch_rng);
    const auto lg = dsm_loss(net, batch, 0.5, noise);
    double worst = 0.0;
    for (std::size_t p = 0; p < net.parameters().size(); ++p) {
        ScoreNetwork plus = net;
        ScoreNetwork minus = net;
        const double h = 1e-6;
        plus.parameters()[p] += h;
        minus.parameters()[p] -= h;
        const double fd =
            (dsm_loss(plus, batch, 0.5, noise).loss - dsm_loss(minus, batch, 0.5, noise).loss) / (2 * h);
        worst = std::max(worst, std::abs(fd - lg.gradient[p]) / std::max(1.0, std::abs(fd)));
    }
    c.value("max_rel_err", worst);
    c.require(worst <= 1e-5);
    return c;
}

Check zero_temperature_decay(std::uint64_t seed) {
    Check c;
    SamplerConfig cfg;
    cfg.schedule = NoiseSchedule::from_levels({1.0});
    cfg.steps_per_level = {50};
    cfg.zero_temperature = true;
    cfg.seed = seed;
    const ScoreFn quadratic = [](std::span<const double> x, double, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            out[i] = -x[i];
        }
    };
    const auto paths = ld_run(quadratic, cfg, 4);
    double worst = 0.0;
    for (const auto& p : paths) {
        for (std::size_t j = 0; j < 2; ++j) {
            const double expect = p.initial[j] * std::pow(1.0 - cfg.epsilon, 50);
            worst = std::max(worst, std::abs(p.final_position[j] - expect));
        }
    }
    c.value("max_err", worst);
    c.require(worst <= 1e-12);
    return c;
}

Check forward_chain_variance(std::uint64_t seed) {
    Check c;
    Rng rng = make_rng(seed, 14);
    const std::vector<double> sigmas{0.25, 0.5, 1.0};
    const std::vector<double> x0{0.0};
    double sq = 0.0;
    const std::size_t chains = 40000;
    for (std::size_t i = 0; i < chains; ++i) {
        const auto states = forward_chain(x0, sigmas, rng);
        sq += states.back()[0] * states.back()[0];
    }
    const double var = sq / static_cast<double>(chains);
    c.value("var", var);
    c.require(std::abs(var - 1.0) <= 0.03);
    return c;
}

Check metric_identities(std::uint64_t seed) {
    Check c;
    Rng rng = make_rng(seed, 15);
    std::normal_distribution<double> normal;
    PointSet pts(2, 200);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        pts.row(i)[0] = normal(rng);
        pts.row(i)[1] = normal(rng);
    }
    const FeatureSet a{pts, FeatureSource::real};
    const FeatureSet b{pts, FeatureSource::generated};
    const auto p = prdc(a, b, 5);
    const double k = kid(a, b);
    const double f = fid(a, b);
    c.value("precision", p.precision);
    c.value("recall", p.recall);
    c.value("coverage", p.coverage);
    c.value("kid", k);
    c.value("fid", f);
    c.require(p.precision == 1.0 && p.recall == 1.0 && p.coverage == 1.0);
    c.require(std::abs(k) <= 1e-9 && f <= 1e-8);
    return c;
}

Check bootstrap_constant(std::uint64_t seed) {
    Check c;
    Rng rng = make_rng(seed, 16);
    const std::vector<double> values(7, 3.5);
    const auto ci = bootstrap_ci(values, 1000, 0.95, rng);
    c.value("lo", ci.lo);
    c.value("hi", ci.hi);
    c.require(ci.mean == 3.5 && ci.lo == 3.5 && ci.hi == 3.5);
    return c;
}

Check sampler_determinism(std::uint64_t seed) {
    Check c;
    Rng rng = make_rng(seed, 17);
    const auto net = ScoreNetwork({3, 8, 2}, rng);
    SamplerConfig cfg;
    cfg.steps_per_level = {50};
    cfg.diffusion_beta = 1.0;
    cfg.seed = seed;
    const auto a = ald_run(network_score_fn(net), cfg, 16);
    cfg.workers = 3;
    const auto b = ald_run(network_score_fn(net), cfg, 16);
    bool same = true;
    double checksum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        same = same && a[i].final_position == b[i].final_position && a[i].status == b[i].status;
        checksum += a[i].final_position[0] + a[i].final_position[1];
        same = same && a[i].score_evaluations == cfg.total_steps();
    }
    c.value("checksum", checksum);
    c.require(same);
    return c;
}

}  // namespace

std::vector<SelfTestResult> run_selftest(std::uint64_t seed) {
    const std::vector<std::pair<const char*, std::function<Check(std::uint64_t)>>> suite{
        {"specfun.round_trip", specfun_round_trip},
        {"specfun.closed_form", specfun_closed_form},
        {"distributions.unit_variance", gn_variance_matching},
        {"distributions.score_fd", gn_score_finite_difference},
        {"distributions.norm_constants", norm_constants},
        {"schedule.quantile_identity", schedule_identity},
        {"scorenet.gradient", network_gradient},
        {"sampler.zero_temperature", zero_temperature_decay},
        {"sampler.forward_chain", forward_chain_variance},
        {"sampler.determinism", sampler_determinism},
        {"metrics.identities", metric_identities},
        {"metrics.bootstrap_constant", bootstrap_constant},
    };
    std::vector<SelfTestResult> results;
    for (const auto& [name, fn] : suite) {
        SelfTestResult r;
        r.name = name;
        try {
            const auto check = fn(seed);
            r.passed = check.ok;
            r.detail = check.detail;
        } catch (const std::exception& e) {
            r.passed = false;
            r.detail = std::string("exception: ") + e.what();
        }
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace htdsm
