#pragma once

#include "htdsm/common.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace htdsm {

enum class ScheduleKind { quantile_matched, geometric, explicit_levels };

/// Descending noise scales sigma_1 > ... > sigma_K > 0 and the parameters that
/// produced them.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::explicit_levels;
    std::vector<double> sigmas;  // descending
    double beta = 2.0;
    std::size_t n = 1;
    std::optional<double> delta;  // quantile_matched only
    /// True when the largest level was clamped to sigma_max rather than produced
    /// by the quantile recursion; the pair (sigmas[0], sigmas[1]) then overlaps by
    /// more than the requested mass instead of matching it.
    bool top_clamped = false;
    /// Quantiles came from the Monte-Carlo sum oracle rather than the GG model.
    bool empirical = false;

    std::size_t size() const noexcept { return sigmas.size(); }
    double max_sigma() const { return sigmas.front(); }
    double min_sigma() const { return sigmas.back(); }

    /// Throws ScheduleError unless strictly descending and positive.
    void validate() const;

    static NoiseSchedule from_levels(std::vector<double> sigmas_descending);
};

struct EmpiricalQuantileOptions {
    std::size_t mc_count = 100000;
    std::uint64_t seed = 0;
};

/// Quantile-matched schedule: starting from sigma_min, each next level is chosen
/// so that its (1 - delta)/2 norm quantile equals the (1 + delta)/2 quantile of
/// the current level. Stops before exceeding sigma_max and appends sigma_max as a
/// clamped final level when the recursion does not land on it. Returned in
/// descending order.
///
/// With `empirical` set, norm quantiles come from Monte-Carlo draws of the true
/// sum of squares instead of the GG(n sigma², 1/2, beta/2) model.
NoiseSchedule quantile_matched_schedule(double beta, std::size_t n, double delta,
                                        double sigma_min, double sigma_max,
                                        std::optional<EmpiricalQuantileOptions> empirical = {});

/// Log-linear levels from sigma_max down to sigma_min.
NoiseSchedule geometric_schedule(double sigma_max, double sigma_min, std::size_t count);

/// Upper quantile n sigma² (P⁻¹(1/beta, q))^(2/beta) of the GG norm model.
double norm_model_quantile(std::size_t n, double sigma, double beta, double q);

}  // namespace htdsm
