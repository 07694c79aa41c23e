#include "htdsm/distributions.hpp"

#include "htdsm/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace htdsm {

using specfun::log_gamma;

// ----------------------------- generalized normal -----------------------------

GeneralizedNormal GeneralizedNormal::make(double mu, double alpha, double beta) {
    GeneralizedNormal dist{mu, alpha, beta};
    dist.validate();
    return dist;
}

GeneralizedNormal GeneralizedNormal::unit_variance(double beta) {
    return make(0.0, gn_unit_variance_alpha(beta), beta);
}

void GeneralizedNormal::validate() const {
    if (!std::isfinite(mu) || !(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) ||
        !std::isfinite(beta)) {
        throw DomainError("GeneralizedNormal: require finite mu, alpha > 0, beta > 0");
    }
}

double gn_log_pdf(const GeneralizedNormal& dist, double x) {
    dist.validate();
    const double z = std::abs(x - dist.mu) / dist.alpha;
    return std::log(dist.beta) - std::log(2.0 * dist.alpha) - log_gamma(1.0 / dist.beta) -
           std::pow(z, dist.beta);
}

double gn_cdf(const GeneralizedNormal& dist, double x) {
    dist.validate();
    const double z = std::pow(std::abs(x - dist.mu) / dist.alpha, dist.beta);
    const double s = 1.0 / dist.beta;
    if (x >= dist.mu) {
        return 0.5 + 0.5 * specfun::reg_lower_inc_gamma(s, z);
    }
    return 0.5 * specfun::reg_upper_inc_gamma(s, z);
}

std::optional<double> gn_score(double x_tilde, double x, double alpha, double beta) {
    if (!(alpha > 0.0) || !(beta > 0.0)) {
        throw DomainError("gn_score: require alpha > 0, beta > 0");
    }
    const double delta = x_tilde - x;
    if (delta == 0.0) {
        if (beta < 1.0) {
            return std::nullopt;
        }
        // beta == 1 has a jump at zero; take the midpoint of the one-sided limits.
        return 0.0;
    }
    const double sign = delta > 0.0 ? 1.0 : -1.0;
    return -(beta / std::pow(alpha, beta)) * sign * std::pow(std::abs(delta), beta - 1.0);
}

double gn_score_clamped(double x_tilde, double x, double alpha, double beta, double min_gap) {
    if (beta >= 1.0) {
        return *gn_score(x_tilde, x, alpha, beta);
    }
    const double delta = x_tilde - x;
    const double sign = delta < 0.0 ? -1.0 : 1.0;
    const double gap = std::max(std::abs(delta), min_gap);
    return -(beta / std::pow(alpha, beta)) * sign * std::pow(gap, beta - 1.0);
}

double gn_sample_one(const GeneralizedNormal& dist, Rng& rng, GnSampler method) {
    switch (method) {
        case GnSampler::gamma_power: {
            std::gamma_distribution<double> gamma(1.0 / dist.beta, 1.0);
            const double g = gamma(rng);
            const double sign = (rng() & 1u) != 0u ? 1.0 : -1.0;
            return dist.mu + sign * dist.alpha * std::pow(g, 1.0 / dist.beta);
        }
        case GnSampler::uniform_scale_mixture: {
            // rate 2^(-beta/2) is scale 2^(beta/2) in the std parametrization.
            std::gamma_distribution<double> gamma(1.0 + 1.0 / dist.beta,
                                                  std::pow(2.0, dist.beta / 2.0));
            const double half_width =
                dist.alpha * std::pow(gamma(rng), 1.0 / dist.beta) / std::numbers::sqrt2;
            std::uniform_real_distribution<double> uniform(dist.mu - half_width,
                                                           dist.mu + half_width);
            return uniform(rng);
        }
    }
    return dist.mu;
}

std::vector<double> gn_sample(const GeneralizedNormal& dist, Rng& rng, std::size_t count,
                              GnSampler method) {
    dist.validate();
    std::vector<double> out(count);
    for (auto& v : out) {
        v = gn_sample_one(dist, rng, method);
    }
    return out;
}

double gn_variance(double alpha, double beta) {
    if (!(alpha > 0.0) || !(beta > 0.0)) {
        throw DomainError("gn_variance: require alpha > 0, beta > 0");
    }
    return alpha * alpha * std::exp(log_gamma(3.0 / beta) - log_gamma(1.0 / beta));
}

double gn_unit_variance_alpha(double beta) {
    if (!(beta > 0.0)) {
        throw DomainError("gn_unit_variance_alpha: require beta > 0");
    }
    return std::exp(0.5 * (log_gamma(1.0 / beta) - log_gamma(3.0 / beta)));
}

// ----------------------------- generalized gamma -----------------------------

GeneralizedGamma GeneralizedGamma::make(double a, double d, double p) {
    GeneralizedGamma dist{a, d, p};
    dist.validate();
    return dist;
}

void GeneralizedGamma::validate() const {
    if (!(a > 0.0) || !(p > 0.0) || !(d / p > 0.0) || !std::isfinite(a) || !std::isfinite(d) ||
        !std::isfinite(p)) {
        throw DomainError("GeneralizedGamma: require a > 0, p > 0, d/p > 0");
    }
}

double gg_pdf(const GeneralizedGamma& dist, double x) {
    dist.validate();
    if (x <= 0.0 || std::isinf(x)) {
        return 0.0;
    }
    const double log_pdf = std::log(dist.p) - dist.d * std::log(dist.a) -
                           log_gamma(dist.d / dist.p) + (dist.d - 1.0) * std::log(x) -
                           std::pow(x / dist.a, dist.p);
    return std::exp(log_pdf);
}

double gg_cdf(const GeneralizedGamma& dist, double x) {
    dist.validate();
    if (x <= 0.0) {
        return 0.0;
    }
    return specfun::reg_lower_inc_gamma(dist.d / dist.p, std::pow(x / dist.a, dist.p));
}

double gg_sf(const GeneralizedGamma& dist, double x) {
    dist.validate();
    if (x <= 0.0) {
        return 1.0;
    }
    return specfun::reg_upper_inc_gamma(dist.d / dist.p, std::pow(x / dist.a, dist.p));
}

double gg_quantile(const GeneralizedGamma& dist, double q) {
    dist.validate();
    const double g = specfun::inv_reg_lower_inc_gamma(dist.d / dist.p, q);
    return dist.a * std::pow(g, 1.0 / dist.p);
}

double gg_raw_moment(const GeneralizedGamma& dist, double r) {
    dist.validate();
    if (r == 0.0) {
        return 1.0;
    }
    if (!((dist.d + r) / dist.p > 0.0)) {
        throw DomainError("gg_raw_moment: require (d + r)/p > 0");
    }
    return std::pow(dist.a, r) *
           std::exp(log_gamma((dist.d + r) / dist.p) - log_gamma(dist.d / dist.p));
}

double gg_sample_one(const GeneralizedGamma& dist, Rng& rng) {
    // (X/a)^p ~ Gamma(d/p, 1).
    std::gamma_distribution<double> gamma(dist.d / dist.p, 1.0);
    return dist.a * std::pow(gamma(rng), 1.0 / dist.p);
}

// ----------------------------- norm model -----------------------------

GeneralizedGamma NormModel::distribution() const {
    if (n == 0 || !(sigma > 0.0) || !(beta > 0.0)) {
        throw DomainError("NormModel: require n >= 1, sigma > 0, beta > 0");
    }
    return GeneralizedGamma::make(static_cast<double>(n) * sigma * sigma, 0.5, beta / 2.0);
}

double norm_c1(double beta) {
    return std::exp(log_gamma(3.0 / beta) - log_gamma(1.0 / beta));
}

double norm_c2(double beta) {
    const double c1 = norm_c1(beta);
    return std::exp(log_gamma(5.0 / beta) - log_gamma(1.0 / beta)) - c1 * c1;
}

double norm_model_skew(double beta) {
    if (!(beta > 0.0)) {
        throw DomainError("norm_model_skew: require beta > 0");
    }
    const double c1 = norm_c1(beta);
    const double c2 = norm_c2(beta);
    const double third = std::exp(log_gamma(7.0 / beta) - log_gamma(1.0 / beta));
    return (third - 3.0 * c1 * c2 - c1 * c1 * c1) / std::pow(c2, 1.5);
}

std::vector<double> sample_norm_sums(std::size_t n, double sigma, double beta,
                                     std::size_t count, Rng& rng) {
    const auto dist = GeneralizedNormal::make(0.0, sigma, beta);
    std::vector<double> sums(count);
    for (auto& s : sums) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = gn_sample_one(dist, rng);
            acc += x * x;
        }
        s = acc;
    }
    return sums;
}

double empirical_norm_quantile(std::size_t n, double sigma, double beta, double q,
                               std::size_t mc_count, Rng& rng) {
    if (mc_count < 10000) {
        throw DomainError("empirical_norm_quantile: mc_count must be at least 10^4");
    }
    if (n == 0 || !(q >= 0.0 && q <= 1.0)) {
        throw DomainError("empirical_norm_quantile: require n >= 1 and q in [0, 1]");
    }
    auto sums = sample_norm_sums(n, sigma, beta, mc_count, rng);
    return sample_quantile(sums, q);
}

double sample_quantile(std::vector<double>& values, double q) {
    if (values.empty()) {
        throw DomainError("sample_quantile: empty sample");
    }
    if (!(q >= 0.0 && q <= 1.0)) {
        throw DomainError("sample_quantile: q must lie in [0, 1]");
    }
    const double h = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo),
                     values.end());
    const double lower = values[lo];
    if (lo + 1 >= values.size()) {
        return lower;
    }
    const double upper = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1,
                                           values.end());
    return lower + (h - static_cast<double>(lo)) * (upper - lower);
}

}  // namespace htdsm
