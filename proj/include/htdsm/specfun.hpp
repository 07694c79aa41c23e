#pragma once

// Gamma-family special functions used by the distribution and schedule code.
// All functions are pure and reentrant.

namespace htdsm::specfun {

/// ln Γ(x) for x > 0. Throws DomainError otherwise.
double log_gamma(double x);

/// Regularized lower incomplete gamma P(s, x) = γ(s, x) / Γ(s).
double reg_lower_inc_gamma(double s, double x);

/// Regularized upper incomplete gamma Q(s, x) = 1 - P(s, x), computed directly
/// so that it keeps relative accuracy in the right tail.
double reg_upper_inc_gamma(double s, double x);

/// Inverse of P(s, ·): returns x >= 0 with P(s, x) = q for q in [0, 1).
/// Throws DomainError for q outside [0, 1), NumericalError if the root
/// refinement does not converge.
double inv_reg_lower_inc_gamma(double s, double q);

}  // namespace htdsm::specfun
