#include "htdsm/schedule.hpp"

#include "htdsm/distributions.hpp"
#include "htdsm/specfun.hpp"

#include <algorithm>
#include <cmath>

namespace htdsm {
namespace {

constexpr std::size_t kMaxLevels = 100000;
constexpr double kEndpointTol = 1e-12;

}  // namespace

void NoiseSchedule::validate() const {
    if (sigmas.empty()) {
        throw ScheduleError("schedule: no levels");
    }
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
        if (!(sigmas[i] > 0.0) || !std::isfinite(sigmas[i])) {
            throw ScheduleError("schedule: levels must be positive and finite");
        }
        if (i > 0 && !(sigmas[i] < sigmas[i - 1])) {
            throw ScheduleError("schedule: levels must be strictly descending");
        }
    }
}

NoiseSchedule NoiseSchedule::from_levels(std::vector<double> sigmas_descending) {
    NoiseSchedule schedule;
    schedule.kind = ScheduleKind::explicit_levels;
    schedule.sigmas = std::move(sigmas_descending);
    schedule.validate();
    return schedule;
}

double norm_model_quantile(std::size_t n, double sigma, double beta, double q) {
    return gg_quantile(NormModel{n, sigma, beta}.distribution(), q);
}

NoiseSchedule quantile_matched_schedule(double beta, std::size_t n, double delta,
                                        double sigma_min, double sigma_max,
                                        std::optional<EmpiricalQuantileOptions> empirical) {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw DomainError("quantile_matched_schedule: delta must lie in (0, 1)");
    }
    if (!(sigma_min > 0.0 && sigma_min < sigma_max) || !std::isfinite(sigma_max)) {
        throw DomainError("quantile_matched_schedule: require 0 < sigma_min < sigma_max");
    }
    if (n == 0 || !(beta > 0.0)) {
        throw DomainError("quantile_matched_schedule: require n >= 1 and beta > 0");
    }

    const double q_upper = (1.0 + delta) / 2.0;
    const double q_lower = (1.0 - delta) / 2.0;
    const double dim = static_cast<double>(n);

    // Norm quantile at unit scale; every level's quantile is sigma² times this.
    double unit_upper = 0.0;
    double unit_lower = 0.0;
    if (empirical) {
        Rng rng = make_rng(empirical->seed, 0x5C4EDu);
        auto sums = sample_norm_sums(n, 1.0, beta, empirical->mc_count, rng);
        if (sums.size() < 10000) {
            throw DomainError("quantile_matched_schedule: empirical mode needs mc_count >= 10^4");
        }
        unit_upper = sample_quantile(sums, q_upper);
        unit_lower = sample_quantile(sums, q_lower);
    } else {
        const double s = 1.0 / beta;
        unit_upper = dim * std::pow(specfun::inv_reg_lower_inc_gamma(s, q_upper), 2.0 / beta);
        unit_lower = dim * std::pow(specfun::inv_reg_lower_inc_gamma(s, q_lower), 2.0 / beta);
    }
    if (!(unit_lower > 0.0)) {
        throw ScheduleError("quantile_matched_schedule: lower quantile is zero");
    }

    std::vector<double> ascending{sigma_min};
    while (true) {
        const double sigma = ascending.back();
        const double upper_quantile = sigma * sigma * unit_upper;
        const double next = std::sqrt(upper_quantile / unit_lower);
        if (!(next > sigma * (1.0 + kEndpointTol)) || !std::isfinite(next)) {
            throw ScheduleError("quantile_matched_schedule: next level does not increase");
        }
        if (next > sigma_max * (1.0 + kEndpointTol)) {
            break;
        }
        ascending.push_back(std::min(next, sigma_max));
        if (ascending.size() > kMaxLevels) {
            throw ScheduleError("quantile_matched_schedule: too many levels");
        }
    }

    NoiseSchedule schedule;
    schedule.kind = ScheduleKind::quantile_matched;
    schedule.beta = beta;
    schedule.n = n;
    schedule.delta = delta;
    schedule.empirical = empirical.has_value();
    if (ascending.back() < sigma_max * (1.0 - kEndpointTol)) {
        ascending.push_back(sigma_max);
        schedule.top_clamped = true;
    }
    schedule.sigmas.assign(ascending.rbegin(), ascending.rend());
    schedule.validate();
    return schedule;
}

NoiseSchedule geometric_schedule(double sigma_max, double sigma_min, std::size_t count) {
    if (count < 2) {
        throw DomainError("geometric_schedule: count must be at least 2");
    }
    if (!(sigma_min > 0.0 && sigma_max > sigma_min) || !std::isfinite(sigma_max)) {
        throw DomainError("geometric_schedule: require sigma_max > sigma_min > 0");
    }
    NoiseSchedule schedule;
    schedule.kind = ScheduleKind::geometric;
    const double log_max = std::log(sigma_max);
    const double log_min = std::log(sigma_min);
    schedule.sigmas.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(count - 1);
        schedule.sigmas[i] = std::exp(log_max + t * (log_min - log_max));
    }
    schedule.sigmas.front() = sigma_max;
    schedule.sigmas.back() = sigma_min;
    schedule.validate();
    return schedule;
}

}  // namespace htdsm
