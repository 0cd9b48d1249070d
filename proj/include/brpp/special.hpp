#pragma once

#include <utility>

#include <Eigen/Dense>

#include "brpp/rng.hpp"

namespace brpp::special {

inline constexpr double kEulerGamma = 0.57721566490153286061;

// Modified Bessel function of the second kind K_nu(x), nu >= 0, x > 0.
// Temme's series for x < 2, Steed's continued fraction otherwise, then
// forward recurrence in the order.
double bessel_k(double nu, double x);

// x^nu K_nu(x), finite at x = 0 (limit 2^(nu-1) Gamma(nu)).
double scaled_bessel_k(double nu, double x);

// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0 (x may be +inf).
double gamma_p(double a, double x);

// Unnormalized lower incomplete gamma: integral_0^x t^(a-1) e^-t dt.
double lower_incomplete_gamma(double a, double x);

// Exponential integral E1(x) = integral_x^inf e^-t / t dt, x > 0.
double expint_e1(double x);

double normal_pdf(double x);
double normal_cdf(double x);
double normal_quantile(double p);

// Exact draw of a standard normal conditioned on X < a. Inversion while
// Phi(a) is not small, Robert's exponential rejection deeper in the tail.
double truncated_normal_upper(double a, Rng& rng);

// log Phi(x), accurate far into the lower tail.
double log_normal_cdf(double x);

// Exact draw of a standard bivariate normal with correlation r, |r| < 1,
// conditioned on X < a and Y < b. X comes from its marginal, which is
// log-concave with curvature at least 1, by rejection from a three-piece
// envelope; Y then from its truncated conditional.
std::pair<double, double> truncated_bivariate_normal(double a, double b, double r, Rng& rng);

// P(X <= h, Y <= k) for standard bivariate normal with correlation r.
double bivariate_normal_cdf(double h, double k, double r);

// P(X <= upper) for X ~ N(0, cov). Exact for dimensions 0..2; a fixed
// randomized-lattice rule (deterministic shifts) above that.
double mvn_cdf(const Eigen::VectorXd& upper, const Eigen::MatrixXd& cov);

// Survival function of the Kolmogorov distribution, P(K > lambda).
double kolmogorov_sf(double lambda);

}  // namespace brpp::special
