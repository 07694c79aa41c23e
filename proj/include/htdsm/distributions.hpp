#pragma once

#include "htdsm/common.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace htdsm {

/// Generalized normal (exponential power) distribution GN(mu, alpha, beta) with
/// density beta / (2 alpha Γ(1/beta)) * exp(-(|x - mu| / alpha)^beta).
/// (alpha, beta) = (√2, 2) is the standard normal, (1, 1) the standard Laplace.
struct GeneralizedNormal {
    double mu = 0.0;
    double alpha = 1.0;
    double beta = 2.0;

    /// Validating factory; throws DomainError unless alpha > 0 and beta > 0.
    static GeneralizedNormal make(double mu, double alpha, double beta);
    /// Zero-mean member of the family with unit variance for the given shape.
    static GeneralizedNormal unit_variance(double beta);

    void validate() const;
};

/// Generalized gamma distribution GG(a, d, p) with density
/// (p / a^d) / Γ(d/p) * x^(d-1) * exp(-(x/a)^p) on x > 0.
struct GeneralizedGamma {
    double a = 1.0;
    double d = 1.0;
    double p = 1.0;

    static GeneralizedGamma make(double a, double d, double p);
    void validate() const;
};

/// Model for the squared norm Y = ||X||² of an n-dimensional GN(0, sigma, beta)
/// noise vector: Y ~ GG(n sigma², 1/2, beta/2). This is the scaled single-term
/// model (it treats the sum of n squares as n times one square); the true sum is
/// available through empirical_norm_quantile.
struct NormModel {
    std::size_t n = 1;
    double sigma = 1.0;
    double beta = 2.0;

    GeneralizedGamma distribution() const;
};

enum class GnSampler {
    gamma_power,            ///< mu + sign * alpha * G^(1/beta), G ~ Gamma(1/beta, 1)
    uniform_scale_mixture,  ///< Gamma(1 + 1/beta, rate 2^(-beta/2)) half-width, then uniform
};

// ----------------------------- generalized normal -----------------------------

double gn_log_pdf(const GeneralizedNormal& dist, double x);
double gn_cdf(const GeneralizedNormal& dist, double x);

/// Conditional score d/dx̃ log q(x̃ | x) of GN noise centred at x:
/// -(beta / alpha^beta) sign(x̃ - x) |x̃ - x|^(beta - 1).
/// Returns nullopt for the singular case beta < 1, x̃ == x.
std::optional<double> gn_score(double x_tilde, double x, double alpha, double beta);

/// gn_score with |x̃ - x| clamped below by `min_gap` when beta < 1, the policy
/// used by training. A zero gap takes the positive sign.
double gn_score_clamped(double x_tilde, double x, double alpha, double beta,
                        double min_gap = 1e-8);

double gn_sample_one(const GeneralizedNormal& dist, Rng& rng,
                     GnSampler method = GnSampler::gamma_power);
std::vector<double> gn_sample(const GeneralizedNormal& dist, Rng& rng, std::size_t count,
                              GnSampler method = GnSampler::gamma_power);

/// alpha² Γ(3/beta) / Γ(1/beta).
double gn_variance(double alpha, double beta);

/// Scale alpha giving unit variance at shape beta: sqrt(Γ(1/beta) / Γ(3/beta)).
double gn_unit_variance_alpha(double beta);

// ----------------------------- generalized gamma -----------------------------

double gg_pdf(const GeneralizedGamma& dist, double x);
double gg_cdf(const GeneralizedGamma& dist, double x);
/// Upper tail 1 - cdf, evaluated without cancellation.
double gg_sf(const GeneralizedGamma& dist, double x);
double gg_quantile(const GeneralizedGamma& dist, double q);
/// a^r Γ((d + r)/p) / Γ(d/p).
double gg_raw_moment(const GeneralizedGamma& dist, double r);
double gg_sample_one(const GeneralizedGamma& dist, Rng& rng);

// ----------------------------- norm model -----------------------------

/// Γ(3/beta) / Γ(1/beta).
double norm_c1(double beta);
/// Γ(5/beta) / Γ(1/beta) - C1².
double norm_c2(double beta);
/// Closed-form skew C2^(-3/2) (Γ(7/beta)/Γ(1/beta) - 3 C1 C2 - C1³) of the norm model.
double norm_model_skew(double beta);

/// Monte-Carlo q-quantile of sum_i X_i², X_i ~ GN(0, sigma, beta) i.i.d., n terms.
/// Requires mc_count >= 10^4.
double empirical_norm_quantile(std::size_t n, double sigma, double beta, double q,
                               std::size_t mc_count, Rng& rng);

/// Draws of the true sum sum_i X_i² (used by the quantile oracle and tests).
std::vector<double> sample_norm_sums(std::size_t n, double sigma, double beta,
                                     std::size_t count, Rng& rng);

/// Linear-interpolated (type 7) quantile of a sample; reorders `values`.
double sample_quantile(std::vector<double>& values, double q);

}  // namespace htdsm
