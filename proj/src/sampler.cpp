#include "htdsm/sampler.hpp"

#include "htdsm/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace htdsm {

std::size_t SamplerConfig::steps_at(std::size_t level) const {
    return steps_per_level.size() == 1 ? steps_per_level.front() : steps_per_level.at(level);
}

std::size_t SamplerConfig::total_steps() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l < schedule.size(); ++l) {
        total += steps_at(l);
    }
    return total;
}

void SamplerConfig::validate() const {
    schedule.validate();
    if (steps_per_level.empty() ||
        (steps_per_level.size() != 1 && steps_per_level.size() != schedule.size())) {
        throw DomainError("SamplerConfig: steps_per_level must have 1 or K entries");
    }
    if (std::any_of(steps_per_level.begin(), steps_per_level.end(),
                    [](std::size_t t) { return t < 1; })) {
        throw DomainError("SamplerConfig: steps per level must be >= 1");
    }
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw DomainError("SamplerConfig: epsilon must be finite and non-negative");
    }
    if (!(diffusion_beta > 0.0)) {
        throw DomainError("SamplerConfig: diffusion_beta must be positive");
    }
    if (!(init_half_width > 0.0) || !(divergence_radius > init_half_width)) {
        throw DomainError("SamplerConfig: require divergence_radius > init_half_width > 0");
    }
    if (dim == 0) {
        throw DomainError("SamplerConfig: dim must be positive");
    }
}

const char* to_string(ParticleStatus status) {
    return status == ParticleStatus::converged ? "converged" : "diverged";
}

namespace {

bool row_escaped(std::span<const double> x, double radius_sq) {
    double sq = 0.0;
    for (double v : x) {
        if (!std::isfinite(v)) {
            return true;
        }
        sq += v * v;
    }
    return sq > radius_sq;
}

ParticlePath run_particle(const ScoreFn& score, const SamplerConfig& cfg, std::size_t index) {
    Rng rng = make_rng(cfg.seed, index);
    const std::size_t dim = cfg.dim;
    const auto noise = GeneralizedNormal::unit_variance(cfg.diffusion_beta);
    const double radius_sq = cfg.divergence_radius * cfg.divergence_radius;
    const double top = cfg.schedule.max_sigma();

    ParticlePath path;
    std::uniform_real_distribution<double> init(-cfg.init_half_width, cfg.init_half_width);
    std::vector<double> x(dim);
    for (auto& v : x) {
        v = init(rng);
    }
    path.initial = x;
    path.score_norms.reserve(cfg.total_steps());
    if (cfg.record_paths) {
        path.positions.reserve(cfg.total_steps() * dim);
        path.position_levels.reserve(cfg.total_steps());
    }

    std::vector<double> s(dim);
    for (std::size_t level = 0; level < cfg.schedule.size(); ++level) {
        const double sigma = cfg.schedule.sigmas[level];
        const double log_sigma = std::log(sigma);
        const double eps = cfg.epsilon * (sigma * sigma) / (top * top);
        const double diffusion = std::sqrt(2.0 * eps);
        for (std::size_t t = 0; t < cfg.steps_at(level); ++t) {
            score(x, log_sigma, s);
            ++path.score_evaluations;
            double norm_sq = 0.0;
            for (double v : s) {
                norm_sq += v * v;
            }
            path.score_norms.push_back(std::sqrt(norm_sq));
            for (std::size_t j = 0; j < dim; ++j) {
                x[j] += eps * s[j];
                if (!cfg.zero_temperature) {
                    x[j] += diffusion * gn_sample_one(noise, rng);
                }
            }
            if (cfg.record_paths) {
                path.positions.insert(path.positions.end(), x.begin(), x.end());
                path.position_levels.push_back(static_cast<std::uint32_t>(level));
            }
            if (row_escaped(x, radius_sq)) {
                path.status = ParticleStatus::diverged;
                path.final_position = x;
                return path;
            }
        }
    }
    path.final_position = x;
    return path;
}

std::vector<ParticlePath> run_particles(const ScoreFn& score, const SamplerConfig& cfg,
                                        std::size_t count) {
    cfg.validate();
    std::vector<ParticlePath> paths(count);
    const std::size_t workers = std::clamp<std::size_t>(cfg.workers, 1, std::max<std::size_t>(count, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            paths[i] = run_particle(score, cfg, i);
        }
        return paths;
    }
    // Each particle owns an rng substream keyed by its index, so results do not
    // depend on the worker count.
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers) {
                paths[i] = run_particle(score, cfg, i);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    return paths;
}

}  // namespace

std::vector<ParticlePath> ld_run(const ScoreFn& score, const SamplerConfig& cfg,
                                 std::size_t count) {
    SamplerConfig single = cfg;
    single.schedule = NoiseSchedule::from_levels({cfg.schedule.max_sigma()});
    single.steps_per_level = {cfg.steps_at(0)};
    return run_particles(score, single, count);
}

std::vector<ParticlePath> ald_run(const ScoreFn& score, const SamplerConfig& cfg,
                                  std::size_t count) {
    return run_particles(score, cfg, count);
}

std::vector<std::vector<double>> forward_chain(std::span<const double> x0,
                                               std::span<const double> sigmas_ascending, Rng& rng,
                                               double z_beta) {
    double previous = 0.0;
    for (double s : sigmas_ascending) {
        if (!(s > previous) || !std::isfinite(s)) {
            throw ScheduleError("forward_chain: sigmas must be strictly ascending from 0");
        }
        previous = s;
    }
    const auto noise = GeneralizedNormal::unit_variance(z_beta);
    std::vector<std::vector<double>> states;
    states.reserve(sigmas_ascending.size() + 1);
    states.emplace_back(x0.begin(), x0.end());
    previous = 0.0;
    for (double s : sigmas_ascending) {
        const double step = std::sqrt(s * s - previous * previous);
        auto next = states.back();
        for (auto& v : next) {
            v += step * gn_sample_one(noise, rng);
        }
        states.push_back(std::move(next));
        previous = s;
    }
    return states;
}

ParticleStatus detect_divergence(std::span<const double> positions, std::size_t dim,
                                 double radius) {
    if (dim == 0 || positions.size() % dim != 0) {
        throw DomainError("detect_divergence: positions are not a whole number of rows");
    }
    const double radius_sq = radius * radius;
    for (std::size_t i = 0; i < positions.size(); i += dim) {
        if (row_escaped(positions.subspan(i, dim), radius_sq)) {
            return ParticleStatus::diverged;
        }
    }
    return ParticleStatus::converged;
}

PointSet endpoints(const std::vector<ParticlePath>& paths) {
    if (paths.empty()) {
        return {};
    }
    PointSet out(paths.front().final_position.size(), 0);
    for (const auto& p : paths) {
        out.push_back(p.final_position);
    }
    return out;
}

std::size_t count_diverged(const std::vector<ParticlePath>& paths) {
    return static_cast<std::size_t>(std::count_if(paths.begin(), paths.end(), [](const auto& p) {
        return p.status == ParticleStatus::diverged;
    }));
}

}  // namespace htdsm
