#pragma once

#include "htdsm/common.hpp"
#include "htdsm/schedule.hpp"
#include "htdsm/scorenet.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace htdsm {

struct SamplerConfig {
    NoiseSchedule schedule = NoiseSchedule::from_levels({1.0, 0.25});
    /// Langevin steps per level; one entry applies to every level.
    std::vector<std::size_t> steps_per_level{1000};
    /// Base step size; level i uses epsilon * sigma_i² / sigma_1².
    double epsilon = 0.1;
    /// Shape of the injected diffusion noise (2 Gaussian, 1 Laplace), always
    /// scaled to unit variance per coordinate.
    double diffusion_beta = 2.0;
    /// Drop the diffusion term entirely (gradient ascent on the score).
    bool zero_temperature = false;
    double init_half_width = 6.0;
    double divergence_radius = 100.0;
    bool record_paths = false;
    std::size_t dim = 2;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    std::size_t steps_at(std::size_t level) const;
    std::size_t total_steps() const;
    void validate() const;
};

enum class ParticleStatus { converged, diverged };

const char* to_string(ParticleStatus status);

struct ParticlePath {
    std::vector<double> initial;
    /// Row per step when record_paths is set: positions after each update.
    std::vector<double> positions;
    /// Level index of each recorded row.
    std::vector<std::uint32_t> position_levels;
    /// ||score|| at every evaluation.
    std::vector<double> score_norms;
    std::vector<double> final_position;
    ParticleStatus status = ParticleStatus::converged;
    std::size_t score_evaluations = 0;
};

/// Single-level Langevin dynamics at the schedule's largest level with step
/// size epsilon: x <- x + epsilon s(x) + sqrt(2 epsilon) z.
std::vector<ParticlePath> ld_run(const ScoreFn& score, const SamplerConfig& cfg,
                                 std::size_t count);

/// Annealed Langevin dynamics over the descending schedule; level i starts from
/// the final positions of level i - 1.
std::vector<ParticlePath> ald_run(const ScoreFn& score, const SamplerConfig& cfg,
                                  std::size_t count);

/// Simulates x_i = x_{i-1} + sqrt(sigma_i² - sigma_{i-1}²) z_{i-1}, sigma_0 = 0,
/// with z drawn coordinate-wise from unit-variance GN(z_beta). `sigmas_ascending`
/// must be strictly increasing. Returns x_0, x_1, ..., x_N.
std::vector<std::vector<double>> forward_chain(std::span<const double> x0,
                                               std::span<const double> sigmas_ascending, Rng& rng,
                                               double z_beta = 2.0);

/// Diverged iff any row (of dimension dim) has norm above radius or a non-finite entry.
ParticleStatus detect_divergence(std::span<const double> positions, std::size_t dim,
                                 double radius);

/// Final positions stacked into a point set, with per-particle status.
PointSet endpoints(const std::vector<ParticlePath>& paths);
std::size_t count_diverged(const std::vector<ParticlePath>& paths);

}  // namespace htdsm
