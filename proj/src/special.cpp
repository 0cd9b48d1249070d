#include "brpp/special.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "brpp/error.hpp"

namespace brpp::special {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr double kPi = std::numbers::pi;

// Taylor coefficients of 1/Gamma(z) around 0 (Abramowitz & Stegun 6.1.34).
constexpr std::array<double, 26> kRecipGamma = {
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
};

// gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu), gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2,
// evaluated from even/odd parts of the 1/Gamma series so that mu -> 0 is stable.
void temme_gammas(double mu, double& gam1, double& gam2, double& gampl, double& gammi) {
  // 1/Gamma(1+x) = sum_k c_{k+1} x^k
  const double mu2 = mu * mu;
  double even = 0.0;
  double odd = 0.0;
  double p = 1.0;
  for (std::size_t j = 0; j + 1 < kRecipGamma.size(); j += 2) {
    even += kRecipGamma[j] * p;
    odd += kRecipGamma[j + 1] * p;
    p *= mu2;
  }
  gam1 = -odd;
  gam2 = even;
  gampl = even + mu * odd;
  gammi = even - mu * odd;
}

// K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2.
void bessel_k_pair(double mu, double x, double& kmu, double& kmu1) {
  const double mu2 = mu * mu;
  if (x < 2.0) {
    const double x2 = 0.5 * x;
    const double pimu = kPi * mu;
    const double fact = std::fabs(pimu) < kEps ? 1.0 : pimu / std::sin(pimu);
    double d = -std::log(x2);
    double e = mu * d;
    const double fact2 = std::fabs(e) < kEps ? 1.0 : std::sinh(e) / e;
    double gam1, gam2, gampl, gammi;
    temme_gammas(mu, gam1, gam2, gampl, gammi);
    double ff = fact * (gam1 * std::cosh(e) + gam2 * fact2 * d);
    double sum = ff;
    e = std::exp(e);
    double p = 0.5 * e / gampl;
    double q = 0.5 / (e * gammi);
    double c = 1.0;
    d = x2 * x2;
    double sum1 = p;
    for (int i = 1; i < 10000; ++i) {
      const double fi = i;
      ff = (fi * ff + p + q) / (fi * fi - mu2);
      c *= d / fi;
      p /= fi - mu;
      q /= fi + mu;
      const double del = c * ff;
      sum += del;
      sum1 += c * (p - fi * ff);
      if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    kmu = sum;
    kmu1 = sum1 * 2.0 / x;
    return;
  }
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  const double a1 = 0.25 - mu2;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 2; i < 100000; ++i) {
    a -= 2.0 * (i - 1);
    c = -a * c / i;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::fabs(dels / s) < kEps) break;
  }
  h = a1 * h;
  kmu = std::sqrt(kPi / (2.0 * x)) * std::exp(-x) / s;
  kmu1 = kmu * (mu + x + 0.5 - h) / x;
}

double gamma_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int n = 0; n < 100000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized Q(a, x) by modified Lentz continued fraction.
double gamma_cf(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// Adaptive Simpson on [a, b].
template <class F>
double simpson_step(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                    double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::fabs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <class F>
double adaptive_simpson(const F& f, double a, double b, double tol) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, b, fa, fm, fb, whole, tol, 48);
}

}  // namespace

double bessel_k(double nu, double x) {
  require(nu >= 0.0 && std::isfinite(nu), "bessel_k: order must be finite and nonnegative");
  require(x > 0.0, "bessel_k: argument must be positive");
  if (!std::isfinite(x)) return 0.0;
  const int nl = static_cast<int>(nu + 0.5);
  const double mu = nu - nl;
  double kmu, kmu1;
  bessel_k_pair(mu, x, kmu, kmu1);
  for (int i = 1; i <= nl; ++i) {
    const double next = (mu + i) * (2.0 / x) * kmu1 + kmu;
    kmu = kmu1;
    kmu1 = next;
  }
  return kmu;
}

double scaled_bessel_k(double nu, double x) {
  require(nu > 0.0, "scaled_bessel_k: order must be positive");
  if (x <= 0.0) return std::exp((nu - 1.0) * std::numbers::ln2 + std::lgamma(nu));
  if (x > 700.0) return 0.0;
  return std::pow(x, nu) * bessel_k(nu, x);
}

double gamma_p(double a, double x) {
  require(a > 0.0, "gamma_p: shape must be positive");
  require(x >= 0.0, "gamma_p: argument must be nonnegative");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_cf(a, x);
}

double lower_incomplete_gamma(double a, double x) {
  require(a > 0.0, "lower_incomplete_gamma: shape must be positive");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return std::tgamma(a);
  if (x < a + 1.0) return gamma_series(a, x) * std::tgamma(a);
  return std::tgamma(a) - gamma_cf(a, x) * std::tgamma(a);
}

double expint_e1(double x) {
  require(x > 0.0, "expint_e1: argument must be positive");
  if (std::isinf(x)) return 0.0;
  if (x <= 1.0) {
    double sum = 0.0;
    double term = 1.0;
    for (int k = 1; k < 1000; ++k) {
      term *= -x / k;
      const double del = term / k;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    return -kEulerGamma - std::log(x) - sum;
  }
  // Lentz continued fraction
  double b = x + 1.0;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (an * d + b);
    c = b + an / c;
    const double del = c * d;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h * std::exp(-x);
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  require(p >= 0.0 && p <= 1.0, "normal_quantile: p outside [0, 1]");
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  // Acklam's rational approximation followed by one Halley step.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double truncated_normal_upper(double a, Rng& rng) {
  require(!std::isnan(a) && a > -std::numeric_limits<double>::infinity(),
          "truncated_normal_upper: empty support");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (a >= -5.0) {
    const double p = normal_cdf(a);
    double u;
    do u = unif(rng);
    while (u == 0.0);
    return std::min(normal_quantile(u * p), std::nextafter(a, -std::numeric_limits<double>::infinity()));
  }
  const double alpha = -a;
  const double lambda = 0.5 * (alpha + std::sqrt(alpha * alpha + 4.0));
  std::exponential_distribution<double> expo(lambda);
  for (;;) {
    const double t = alpha + expo(rng);
    if (unif(rng) <= std::exp(-0.5 * (t - lambda) * (t - lambda))) return -t;
  }
}

namespace {

// Mills ratio (1 - Phi(x)) / phi(x) for x >= 5 by its continued fraction.
double mills_ratio(double x) {
  double f = x;
  for (int n = 80; n >= 1; --n) f = x + n / f;
  return 1.0 / f;
}

// phi(x) / Phi(x).
double lower_hazard(double x) {
  return x >= -5.0 ? normal_pdf(x) / normal_cdf(x) : 1.0 / mills_ratio(-x);
}

}  // namespace

double log_normal_cdf(double x) {
  if (x > 0.0) return std::log1p(-normal_cdf(-x));
  if (x >= -5.0) return std::log(normal_cdf(x));
  return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(mills_ratio(-x));
}

std::pair<double, double> truncated_bivariate_normal(double a, double b, double r, Rng& rng) {
  require(!std::isnan(a) && !std::isnan(b) && std::abs(r) < 1.0, "truncated_bivariate_normal: invalid arguments");
  require(a > -std::numeric_limits<double>::infinity() && b > -std::numeric_limits<double>::infinity(),
          "truncated_bivariate_normal: empty support");
  const double s = std::sqrt((1.0 - r) * (1.0 + r));
  // log marginal density of X up to a constant, and its derivative.
  const auto psi = [&](double x) { return -0.5 * x * x + log_normal_cdf((b - r * x) / s); };
  const auto dpsi = [&](double x) { return -x - (r / s) * lower_hazard((b - r * x) / s); };
  const auto bisect = [](auto&& f, double lo, double hi) {  // f(lo) > 0 >= f(hi)
    for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + std::abs(lo)); ++it) {
      const double mid = 0.5 * (lo + hi);
      (f(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };

  // psi'' <= -1: the mode lies between x0 and x0 + psi'(x0) for any x0, and
  // psi falls by 1 within sqrt(2) of the mode.
  const double x0 = std::isinf(a) ? 0.0 : a, g0 = dpsi(x0);
  double m = a;
  if (std::isinf(a) || g0 < 0.0) m = bisect(dpsi, std::min(x0, x0 + g0), std::min(std::max(x0, x0 + g0), a));
  const double pm = psi(m);
  const auto drop = [&](double x) { return psi(x) - (pm - 1.0); };
  const double xl = bisect([&](double x) { return -drop(x); }, m - 1.5, m);
  const double top = std::min(a, m + 1.5);
  const double xr = drop(top) > 0.0 ? a : bisect(drop, m, top);
  const double gl = dpsi(xl), pl = psi(xl) - pm;
  const double gr = xr < a ? dpsi(xr) : 0.0, pr = psi(xr) - pm;
  const double w_mid = xr - xl;
  const double w_left = std::exp(pl) / gl;
  const double span = std::isinf(a) ? std::numeric_limits<double>::infinity() : a - xr;
  const double w_right = xr < a ? std::exp(pr) * -std::expm1(gr * span) / -gr : 0.0;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double total = w_mid + w_left + w_right;
  for (;;) {
    const double pick = unif(rng) * total;
    double x, env;
    if (pick < w_mid) {
      x = xl + unif(rng) * w_mid;
      env = 0.0;
    } else if (pick < w_mid + w_left) {
      x = xl + std::log1p(-unif(rng)) / gl;
      env = pl + gl * (x - xl);
    } else {
      x = xr + std::log1p(-unif(rng) * -std::expm1(gr * span)) / gr;
      env = pr + gr * (x - xr);
    }
    if (!(x < a)) continue;
    double u;
    do u = unif(rng);
    while (u == 0.0);
    if (std::log(u) <= psi(x) - pm - env) {
      const double y = r * x + s * truncated_normal_upper((b - r * x) / s, rng);
      return {x, std::min(y, std::nextafter(b, -std::numeric_limits<double>::infinity()))};
    }
  }
}

double bivariate_normal_cdf(double h, double k, double r) {
  require(std::fabs(r) <= 1.0 + 1e-12, "bivariate_normal_cdf: |r| > 1");
  if (std::isnan(h) || std::isnan(k)) fail(ErrorCategory::numeric, "bivariate_normal_cdf: NaN limit");
  if (h == -INFINITY || k == -INFINITY) return 0.0;
  if (h == INFINITY) return normal_cdf(k);
  if (k == INFINITY) return normal_cdf(h);
  if (r == 0.0) return normal_cdf(h) * normal_cdf(k);
  if (r >= 1.0 - 1e-13) return normal_cdf(std::min(h, k));
  if (r <= -1.0 + 1e-13) return std::max(0.0, normal_cdf(h) + normal_cdf(k) - 1.0);
  // Integrate over the smaller marginal mass for relative accuracy.
  if (h > k) std::swap(h, k);
  const double ph = normal_cdf(h);
  if (ph == 0.0) return 0.0;
  const double sr = std::sqrt((1.0 - r) * (1.0 + r));
  auto integrand = [&](double w) {
    if (w <= 0.0) return r > 0.0 ? 1.0 : 0.0;
    return normal_cdf((k - r * normal_quantile(w)) / sr);
  };
  const double value = adaptive_simpson(integrand, 0.0, ph, std::max(1e-15, 1e-11 * ph));
  return std::clamp(value, 0.0, ph);
}

double mvn_cdf(const Eigen::VectorXd& upper, const Eigen::MatrixXd& cov) {
  const auto d = upper.size();
  require(cov.rows() == d && cov.cols() == d, "mvn_cdf: dimension mismatch");
  if (d == 0) return 1.0;
  for (Eigen::Index i = 0; i < d; ++i)
    if (upper[i] == -INFINITY) return 0.0;
  if (d == 1) {
    const double s = std::sqrt(std::max(cov(0, 0), 0.0));
    if (s == 0.0) return upper[0] >= 0.0 ? 1.0 : 0.0;
    return normal_cdf(upper[0] / s);
  }
  if (d == 2) {
    const double s1 = std::sqrt(std::max(cov(0, 0), 0.0));
    const double s2 = std::sqrt(std::max(cov(1, 1), 0.0));
    if (s1 == 0.0) return (upper[0] >= 0.0 ? 1.0 : 0.0) * (s2 == 0.0 ? (upper[1] >= 0.0) : normal_cdf(upper[1] / s2));
    if (s2 == 0.0) return (upper[1] >= 0.0 ? 1.0 : 0.0) * normal_cdf(upper[0] / s1);
    const double r = std::clamp(cov(0, 1) / (s1 * s2), -1.0, 1.0);
    return bivariate_normal_cdf(upper[0] / s1, upper[1] / s2, r);
  }
  // Genz separation of variables over a shifted Richtmyer lattice.
  Eigen::MatrixXd jittered = cov;
  jittered.diagonal().array() += 1e-12 * cov.diagonal().maxCoeff();
  Eigen::LLT<Eigen::MatrixXd> llt(jittered);
  if (llt.info() != Eigen::Success) fail(ErrorCategory::numeric, "mvn_cdf: covariance not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  static constexpr double kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53,
                                       59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113};
  require(d <= 31, "mvn_cdf: dimension above 31 not supported");
  constexpr int kShifts = 8;
  constexpr int kPoints = 2048;
  std::vector<double> y(d);
  double total = 0.0;
  std::uint64_t state = 0x853C49E6748FEA9BULL;
  for (int shift = 0; shift < kShifts; ++shift) {
    std::vector<double> delta(d);
    for (auto& v : delta) {
      state = state * 6364136223846793005ULL + 1442695040888963407ULL;
      v = static_cast<double>(state >> 11) * 0x1.0p-53;
    }
    double acc = 0.0;
    for (int n = 1; n <= kPoints; ++n) {
      double f = 1.0;
      for (Eigen::Index i = 0; i < d; ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < i; ++j) s += L(i, j) * y[j];
        const double e = upper[i] == INFINITY ? 1.0 : normal_cdf((upper[i] - s) / L(i, i));
        f *= e;
        if (f == 0.0) break;
        if (i + 1 < d) {
          double w = std::fmod(n * std::sqrt(kPrimes[i]) + delta[i], 1.0);
          w = std::fabs(2.0 * w - 1.0);  // baker's transform
          y[i] = normal_quantile(std::clamp(w * e, 1e-300, 1.0 - 1e-16));
        }
      }
      acc += f;
    }
    total += acc / kPoints;
  }
  return total / kShifts;
}

double kolmogorov_sf(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  constexpr int kTerms = 100;
  double p;
  if (lambda < 1.18) {
    const double f = -kPi * kPi / (8.0 * lambda * lambda);
    double cdf = 0.0;
    for (int k = 1; k <= kTerms; ++k) {
      const double m = 2.0 * k - 1.0;
      cdf += std::exp(f * m * m);
    }
    p = 1.0 - std::sqrt(2.0 * kPi) / lambda * cdf;
  } else {
    p = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= kTerms; ++k) {
      p += sign * std::exp(-2.0 * k * k * lambda * lambda);
      sign = -sign;
    }
    p *= 2.0;
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace brpp::special
