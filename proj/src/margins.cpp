#include "brpp/margins.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "brpp/error.hpp"
#include "brpp/optim.hpp"
#include "brpp/special.hpp"

namespace brpp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_shape_scale(const GevParams& p) {
  require(std::isfinite(p.shape) && std::isfinite(p.location) && std::isfinite(p.scale),
          "GEV parameters must be finite");
  require(p.scale > 0.0, "GEV scale must be positive");
}

// Reduced Gumbel variate log(1 + shape z) / shape; +-inf outside the support.
double reduced(double z, double shape) {
  if (std::fabs(shape) < kShapeZeroThreshold) return z - 0.5 * shape * z * z;
  const double arg = shape * z;
  if (arg <= -1.0) return shape > 0.0 ? -kInf : kInf;
  return std::log1p(arg) / shape;
}

double unreduced(double y, double shape) {
  if (std::fabs(shape) < kShapeZeroThreshold) return y + 0.5 * shape * y * y;
  return std::expm1(shape * y) / shape;
}

}  // namespace

void validate_gev(const GevParams& p) {
  check_shape_scale(p);
  require(p.shape < 0.5, "GEV shape must be below 0.5");
}

double StationGevFit::estimate(GevComponent c) const {
  switch (c) {
    case GevComponent::shape: return params.shape;
    case GevComponent::location: return params.location;
    case GevComponent::scale: return params.scale;
  }
  return 0.0;
}

double gev_cdf(double x, const GevParams& p) {
  check_shape_scale(p);
  require(std::isfinite(x), "gev_cdf: non-finite argument");
  const double y = reduced((x - p.location) / p.scale, p.shape);
  if (y == -kInf) return 0.0;
  if (y == kInf) return 1.0;
  return std::exp(-std::exp(-y));
}

double gev_quantile(double prob, const GevParams& p) {
  check_shape_scale(p);
  require(prob > 0.0 && prob < 1.0, "gev_quantile: probability must lie in (0, 1)");
  const double y = -std::log(-std::log(prob));
  return p.location + p.scale * unreduced(y, p.shape);
}

double gev_log_density(double x, const GevParams& p) {
  const double y = reduced((x - p.location) / p.scale, p.shape);
  if (!std::isfinite(y)) return -kInf;
  return -std::log(p.scale) - (1.0 + p.shape) * y - std::exp(-y);
}

double gev_log_likelihood(std::span<const double> samples, const GevParams& p) {
  check_shape_scale(p);
  double ll = 0.0;
  for (double x : samples) {
    const double v = gev_log_density(x, p);
    if (v == -kInf) return -kInf;
    ll += v;
  }
  return ll;
}

GevParams gev_pwm_estimate(std::span<const double> samples) {
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double j = static_cast<double>(i);
    b0 += x[i];
    b1 += j / (n - 1.0) * x[i];
    b2 += j * (j - 1.0) / ((n - 1.0) * (n - 2.0)) * x[i];
  }
  b0 /= n;
  b1 /= n;
  b2 /= n;
  const double c = (2.0 * b1 - b0) / (3.0 * b2 - b0) - std::numbers::ln2 / std::log(3.0);
  double k = 7.8590 * c + 2.9554 * c * c;  // Hosking's k = -shape
  k = std::clamp(k, -0.45, 0.9);
  GevParams out;
  out.shape = -k;
  if (std::fabs(k) < 1e-6) {
    out.scale = (2.0 * b1 - b0) / std::numbers::ln2;
    out.location = b0 - special::kEulerGamma * out.scale;
  } else {
    const double g = std::tgamma(1.0 + k);
    out.scale = (2.0 * b1 - b0) * k / (g * (1.0 - std::pow(2.0, -k)));
    out.location = b0 + out.scale * (g - 1.0) / k;
  }
  if (!(out.scale > 0.0) || !std::isfinite(out.scale)) {
    // fall back to Gumbel moments
    double var = 0.0;
    for (double v : x) var += (v - b0) * (v - b0);
    var /= (n - 1.0);
    out.shape = 0.0;
    out.scale = std::sqrt(6.0 * var) / std::numbers::pi;
    out.location = b0 - special::kEulerGamma * out.scale;
  }
  return out;
}

StationGevFit fit_gev_mle(std::span<const double> samples, std::optional<double> fixed_shape,
                          const GevFitOptions& options) {
  require(samples.size() >= 20, "fit_gev_mle: at least 20 samples required");
  for (double v : samples) require(std::isfinite(v), "fit_gev_mle: non-finite sample");
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  if (*lo == *hi) fail(ErrorCategory::invalid_argument, "fit_gev_mle: degenerate sample (all values equal)");
  if (fixed_shape) require(*fixed_shape < 0.5 && *fixed_shape > -1.0, "fit_gev_mle: fixed shape outside (-1, 0.5)");

  GevParams start = gev_pwm_estimate(samples);
  if (fixed_shape) start.shape = *fixed_shape;
  // Make sure the start lies inside the support.
  for (int tries = 0; tries < 60 && !std::isfinite(gev_log_likelihood(samples, start)); ++tries)
    start.scale *= 1.5;

  auto unpack = [&](std::span<const double> v) {
    GevParams p;
    p.location = v[0];
    p.scale = std::exp(v[1]);
    p.shape = fixed_shape ? *fixed_shape : v[2];
    return p;
  };
  Objective nll = [&](std::span<const double> v) {
    const GevParams p = unpack(v);
    if (!(p.shape < 0.5 && p.shape > -1.0)) return kInf;
    return -gev_log_likelihood(samples, p);
  };

  std::vector<double> x0 = {start.location, std::log(start.scale)};
  std::vector<double> steps = {0.25 * start.scale, 0.2};
  if (!fixed_shape) {
    x0.push_back(start.shape);
    steps.push_back(0.1);
  }
  NelderMeadOptions nm;
  nm.max_evals = options.max_evals;
  nm.steps = steps;
  nm.ftol_abs = 1e-11;
  nm.ftol_rel = 1e-13;
  nm.xtol = 1e-9;
  NelderMeadResult res = nelder_mead(nll, x0, nm);
  // Restart from the optimum to guard against a collapsed simplex.
  if (res.converged) {
    nm.steps = {0.05 * std::exp(res.x[1]), 0.05, 0.02};
    if (fixed_shape) nm.steps.resize(2);
    nm.max_evals = std::max(1, options.max_evals - res.evals);
    NelderMeadResult again = nelder_mead(nll, res.x, nm);
    again.evals += res.evals;
    if (again.value <= res.value) res = again;
  }
  if (!res.converged || !std::isfinite(res.value)) {
    std::ostringstream msg;
    msg << "fit_gev_mle: simplex search did not converge within " << options.max_evals << " evaluations";
    fail(ErrorCategory::fit_nonconvergence, msg.str());
  }

  StationGevFit fit;
  fit.params = unpack(res.x);
  fit.log_likelihood = -res.value;
  fit.sample_count = static_cast<int>(samples.size());

  // Observed information in (shape, location, scale) by central differences.
  const int dim = fixed_shape ? 2 : 3;
  const int offset = fixed_shape ? 1 : 0;
  std::array<double, 3> theta = {fit.params.shape, fit.params.location, fit.params.scale};
  std::array<double, 3> h = {1e-4, 1e-4 * fit.params.scale, 1e-4 * fit.params.scale};
  auto f = [&](std::array<double, 3> t) {
    GevParams p{t[0], t[1], t[2]};
    if (!(p.scale > 0.0)) return kInf;
    return -gev_log_likelihood(samples, p);
  };
  Eigen::MatrixXd hess(dim, dim);
  const double f0 = f(theta);
  for (int a = 0; a < dim; ++a) {
    for (int b = a; b < dim; ++b) {
      const int i = a + offset;
      const int j = b + offset;
      double v;
      if (i == j) {
        auto tp = theta, tm = theta;
        tp[i] += h[i];
        tm[i] -= h[i];
        v = (f(tp) - 2.0 * f0 + f(tm)) / (h[i] * h[i]);
      } else {
        auto pp = theta, pm = theta, mp = theta, mm = theta;
        pp[i] += h[i]; pp[j] += h[j];
        pm[i] += h[i]; pm[j] -= h[j];
        mp[i] -= h[i]; mp[j] += h[j];
        mm[i] -= h[i]; mm[j] -= h[j];
        v = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h[i] * h[j]);
      }
      hess(a, b) = hess(b, a) = v;
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
  if (!hess.allFinite() || ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 0.0)
    fail(ErrorCategory::fit_nonconvergence, "fit_gev_mle: observed information not positive definite");
  const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(dim, dim));
  for (int a = 0; a < dim; ++a) fit.std_errors[a + offset] = std::sqrt(std::max(cov(a, a), 0.0));
  return fit;
}

KsResult ks_test(std::span<const double> values, const std::function<double(double)>& cdf) {
  require(!values.empty(), "ks_test: empty sample");
  std::vector<double> x(values.begin(), values.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return {d, special::kolmogorov_sf(std::sqrt(n) * d)};
}

KsResult ks_test_gumbel(std::span<const double> values) {
  require(values.size() >= 5, "ks_test_gumbel: at least 5 values required");
  return ks_test(values, [](double x) { return std::exp(-std::exp(-x)); });
}

KsResult ks_test_normal(std::span<const double> values) {
  return ks_test(values, [](double x) { return special::normal_cdf(x); });
}

ConstancyTest spatial_constancy_test(std::span<const StationGevFit> fits, GevComponent which) {
  require(fits.size() >= 2, "spatial_constancy_test: at least 2 fits required");
  double mean = 0.0;
  for (const auto& f : fits) mean += f.estimate(which);
  mean /= static_cast<double>(fits.size());
  ConstancyTest out;
  out.residuals.reserve(fits.size());
  for (const auto& f : fits) {
    const double se = f.std_error(which);
    if (!(se > 0.0)) fail(ErrorCategory::invalid_argument, "spatial_constancy_test: zero standard error at station " + f.station);
    out.residuals.push_back((f.estimate(which) - mean) / se);
  }
  out.ks = ks_test_normal(out.residuals);
  return out;
}

double to_gumbel(double v, double m, double s, const GevParams& p) {
  require(s > 0.0, "to_gumbel: normalization scale must be positive");
  check_shape_scale(p);
  const double z = (v - m - s * p.location) / (s * p.scale);
  const double y = reduced(z, p.shape);
  if (!std::isfinite(y)) fail(ErrorCategory::support, "to_gumbel: value outside the GEV support");
  return y;
}

double from_gumbel(double x, double m, double s, const GevParams& p) {
  require(s > 0.0, "from_gumbel: normalization scale must be positive");
  check_shape_scale(p);
  require(std::isfinite(x), "from_gumbel: non-finite argument");
  const double v = s * p.scale * unreduced(x, p.shape) + m + s * p.location;
  if (!std::isfinite(v)) fail(ErrorCategory::numeric, "from_gumbel: overflow");
  return v;
}

double crps_gev(const GevParams& p, double x) {
  check_shape_scale(p);
  require(std::isfinite(x), "crps_gev: non-finite observation");
  if (p.shape >= 1.0) fail(ErrorCategory::invalid_argument, "crps_gev: shape must be below 1");
  const double xi = p.shape;
  const double mu = p.location;
  const double sigma = p.scale;
  const double z = (x - mu) / sigma;
  double crps;
  if (std::fabs(xi) < kShapeZeroThreshold) {
    // mu - x + sigma (gamma - log 2) + 2 sigma E1(exp(-z))
    const double t = std::exp(-z);
    const double e1 = t == 0.0 ? -special::kEulerGamma + z : special::expint_e1(t);
    crps = mu - x + sigma * (special::kEulerGamma - std::numbers::ln2) + 2.0 * sigma * e1;
  } else {
    const double f = gev_cdf(x, p);
    const double t = f == 0.0 ? kInf : -std::log(f);
    const double a = 1.0 - xi;
    crps = (x - mu + sigma / xi) * (2.0 * f - 1.0) -
           sigma / xi * (std::pow(2.0, xi) * std::tgamma(a) - 2.0 * special::lower_incomplete_gamma(a, t));
  }
  return std::max(crps, 0.0);
}

}  // namespace brpp
