#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "brpp/error.hpp"
#include "brpp/margins.hpp"
#include "brpp/rng.hpp"
#include "doctest.h"

using namespace brpp;

namespace {

// Inverse-transform GEV draw written out independently of gev_quantile.
double draw_gev(std::mt19937_64& rng, const GevParams& p) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v;
  do v = u(rng);
  while (v <= 0.0);
  const double e = -std::log(v);
  if (p.shape == 0.0) return p.location - p.scale * std::log(e);
  return p.location + p.scale * (std::pow(e, -p.shape) - 1.0) / p.shape;
}

// Integral of (F(y) - 1{y >= x})^2 over the support.
double crps_by_quadrature(const GevParams& p, double x) {
  using boost::math::quadrature::gauss_kronrod;
  const double inf = std::numeric_limits<double>::infinity();
  auto cdf = [&](double y) { return gev_cdf(y, p); };
  double lower = -inf, upper = inf;
  if (p.shape > 0) lower = p.location - p.scale / p.shape;
  if (p.shape < 0) upper = p.location - p.scale / p.shape;
  double total = 0.0;
  const double a = std::max(lower, -inf);
  if (x > a) {
    const double hi = std::min(x, upper);
    total += gauss_kronrod<double, 61>::integrate([&](double y) { double f = cdf(y); return f * f; }, a, hi, 15, 1e-13);
    if (x > upper) total += x - upper;  // F = 1 between upper endpoint and x
  }
  if (x < upper) {
    const double lo = std::max(x, lower);
    total += gauss_kronrod<double, 61>::integrate([&](double y) { double f = 1.0 - cdf(y); return f * f; }, lo, upper, 15, 1e-13);
    if (x < lower) total += lower - x;
  }
  return total;
}

}  // namespace

TEST_CASE("gev_cdf examples") {
  CHECK(gev_cdf(0.0, {0.0, 0.0, 1.0}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(gev_cdf(-2.0, {0.5, 0.0, 1.0}) == 0.0);
  CHECK(gev_cdf(5.0, {-0.5, 0.0, 1.0}) == 1.0);

  using big = boost::multiprecision::cpp_bin_float_50;
  const big xi("0.043");
  const big ref = exp(-pow(big(1) + xi * big(1), -big(1) / xi));
  CHECK(std::fabs(gev_cdf(1.0, {0.043, 0.0, 1.0}) - ref.convert_to<double>()) <= 1e-12);
  CHECK_THROWS_AS(gev_cdf(std::nan(""), {0.0, 0.0, 1.0}), Error);
}

TEST_CASE("gev_cdf is nondecreasing") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> shape(-0.6, 0.49), loc(-3, 3), scale(0.1, 4);
  for (int rep = 0; rep < 20; ++rep) {
    const GevParams p{shape(rng), loc(rng), scale(rng)};
    double prev = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double x = p.location - 10 * p.scale + i * 0.03 * p.scale;
      const double f = gev_cdf(x, p);
      CHECK(f >= prev);
      prev = f;
    }
  }
}

TEST_CASE("gev_quantile") {
  CHECK(gev_quantile(std::exp(-1.0), {0.0, 0.0, 1.0}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(gev_quantile(0.5, {0.0, 3.0, 2.0}) == doctest::Approx(3.0 - 2.0 * std::log(std::log(2.0))).epsilon(1e-14));
  CHECK(gev_quantile(0.5, {0.0, 3.0, 2.0}) == doctest::Approx(3.7330).epsilon(1e-4));
  CHECK_THROWS_AS(gev_quantile(0.0, {0.0, 0.0, 1.0}), Error);
  CHECK_THROWS_AS(gev_quantile(1.0, {0.0, 0.0, 1.0}), Error);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6), shape(-0.8, 0.49), loc(-5, 5), scale(0.05, 5);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const GevParams p{shape(rng), loc(rng), scale(rng)};
    const double prob = u(rng);
    worst = std::max(worst, std::fabs(gev_cdf(gev_quantile(prob, p), p) - prob));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("fit_gev_mle recovers simulated parameters") {
  const GevParams truth{0.2, 1.0, 2.0};
  std::mt19937_64 rng(20240601);
  std::vector<double> x(5000);
  for (auto& v : x) v = draw_gev(rng, truth);
  const auto fit = fit_gev_mle(x);
  CHECK(std::fabs(fit.params.shape - truth.shape) <= 4 * fit.std_errors[0]);
  CHECK(std::fabs(fit.params.location - truth.location) <= 4 * fit.std_errors[1]);
  CHECK(std::fabs(fit.params.scale - truth.scale) <= 4 * fit.std_errors[2]);
  CHECK(fit.log_likelihood >= gev_log_likelihood(x, truth));
  CHECK(fit.sample_count == 5000);
  for (double se : fit.std_errors) CHECK(se > 0.0);
}

TEST_CASE("fit_gev_mle on Gumbel data and with fixed shape") {
  std::mt19937_64 rng(77);
  std::vector<double> x(10000);
  for (auto& v : x) v = draw_gev(rng, {0.0, 0.0, 1.0});
  const auto fit = fit_gev_mle(x);
  CHECK(std::fabs(fit.params.shape) <= 0.05);

  const auto fixed = fit_gev_mle(x, 0.1);
  CHECK(fixed.params.shape == 0.1);
  CHECK(fixed.std_errors[0] == 0.0);
  CHECK(fixed.std_errors[1] > 0.0);
  CHECK(fixed.log_likelihood <= fit.log_likelihood + 1e-6);
}

TEST_CASE("fit_gev_mle rejects degenerate input") {
  std::vector<double> constant(50, 5.0);
  CHECK_THROWS_AS(fit_gev_mle(constant), Error);
  std::vector<double> few(10, 1.0);
  few[0] = 2.0;
  CHECK_THROWS_AS(fit_gev_mle(few), Error);
}

TEST_CASE("spatial_constancy_test") {
  auto mk = [](double shape, double se) {
    StationGevFit f;
    f.params = {shape, 0.0, 1.0};
    f.std_errors = {se, 1.0, 1.0};
    return f;
  };
  std::vector<StationGevFit> equal(30, mk(0.1, 0.05));
  auto t = spatial_constancy_test(equal, GevComponent::shape);
  for (double r : t.residuals) CHECK(r == doctest::Approx(0.0).epsilon(1e-13));
  CHECK(t.ks.statistic == doctest::Approx(0.5));
  CHECK(t.ks.p_value < 1e-4);

  std::vector<StationGevFit> two = {mk(0.1, 0.1), mk(0.3, 0.1)};
  t = spatial_constancy_test(two, GevComponent::shape);
  CHECK(t.residuals[0] == doctest::Approx(-1.0));
  CHECK(t.residuals[1] == doctest::Approx(1.0));

  two[1].std_errors[0] = 0.0;
  CHECK_THROWS_AS(spatial_constancy_test(two, GevComponent::shape), Error);
}

TEST_CASE("spatial_constancy_test under the null hypothesis") {
  // residuals are built as standard normal draws: estimates = draws, se = 1,
  // plus a common offset so the subtraction of the mean stays small
  int accepted = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::mt19937_64 rng = make_stream(99, rep);
    std::normal_distribution<double> z;
    std::vector<StationGevFit> fits(200);
    for (auto& f : fits) {
      f.params = {z(rng), 0.0, 1.0};
      f.std_errors = {1.0, 1.0, 1.0};
    }
    if (spatial_constancy_test(fits, GevComponent::shape).ks.p_value >= 0.01) ++accepted;
  }
  CHECK(accepted >= 95);
}

TEST_CASE("ks_test_gumbel") {
  const int n = 100;
  std::vector<double> q(n);
  for (int i = 1; i <= n; ++i) q[i - 1] = -std::log(-std::log(i / (n + 1.0)));
  // brute force: sup over the empirical cdf
  double brute = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = std::exp(-std::exp(-q[i]));
    int le = 0, lt = 0;
    for (int j = 0; j < n; ++j) {
      le += q[j] <= q[i];
      lt += q[j] < q[i];
    }
    brute = std::max({brute, std::fabs(le / double(n) - f), std::fabs(f - lt / double(n))});
  }
  CHECK(brute == doctest::Approx(1.0 / (n + 1)).epsilon(1e-12));
  CHECK(ks_test_gumbel(q).statistic == doctest::Approx(brute).epsilon(1e-12));

  std::vector<double> zeros(5, 0.0);
  CHECK(ks_test_gumbel(zeros).statistic == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
  CHECK_THROWS_AS(ks_test_gumbel(std::vector<double>(4, 0.0)), Error);
}

TEST_CASE("ks_test_gumbel p-values are uniform under the null") {
  std::vector<double> pvals;
  for (int rep = 0; rep < 200; ++rep) {
    std::mt19937_64 rng = make_stream(4242, rep);
    std::vector<double> x(1000);
    for (auto& v : x) v = draw_gev(rng, {0.0, 0.0, 1.0});
    pvals.push_back(ks_test_gumbel(x).p_value);
  }
  const auto r = ks_test(pvals, [](double u) { return std::clamp(u, 0.0, 1.0); });
  CHECK(r.p_value >= 0.01);
}

TEST_CASE("Gumbel transforms") {
  const GevParams p{0.1, 2.0, 3.0};
  CHECK(to_gumbel(1.0 + 4.0 * 2.0, 1.0, 4.0, p) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(to_gumbel(5.0, 0.0, 1.0, {0.0, 2.0, 3.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(from_gumbel(0.0, 1.5, 2.0, p) == doctest::Approx(1.5 + 2.0 * 2.0).epsilon(1e-15));
  CHECK(from_gumbel(1.0, 0.0, 1.0, {0.0, 0.0, 2.0}) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(to_gumbel(-100.0, 0.0, 1.0, {0.3, 0.0, 1.0}), Error);
  CHECK_THROWS_AS(from_gumbel(1e4, 0.0, 1.0, {0.4, 0.0, 1.0}), Error);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> shape(-0.4, 0.45), loc(-2, 2), scale(0.2, 3), m(-5, 5), s(0.1, 3),
      x(-3, 6);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const GevParams q{shape(rng), loc(rng), scale(rng)};
    const double mm = m(rng), ss = s(rng), xx = x(rng);
    const double v = from_gumbel(xx, mm, ss, q);
    worst = std::max(worst, std::fabs(to_gumbel(v, mm, ss, q) - xx));
  }
  CHECK(worst <= 1e-12);

  // the limit branch agrees with the exact logarithm at the switching threshold
  for (double z : {-2.0, 0.5, 3.0, 8.0}) {
    for (double xi : {0.999e-8, -0.999e-8}) {
      const long double exact = std::log1p(static_cast<long double>(xi) * z) / static_cast<long double>(xi);
      CHECK(std::fabs(to_gumbel(z, 0, 1, {xi, 0.0, 1.0}) - static_cast<double>(exact)) <= 1e-10);
    }
  }
}

TEST_CASE("transformed GEV draws are standard Gumbel") {
  const GevParams p{0.15, 0.8, 1.3};
  const double m = 4.0, s = 2.5;
  const GevParams scaled{p.shape, m + s * p.location, s * p.scale};
  std::mt19937_64 rng(8);
  std::vector<double> x(10000);
  for (auto& v : x) v = to_gumbel(draw_gev(rng, scaled), m, s, p);
  CHECK(ks_test_gumbel(x).p_value >= 0.01);
}

TEST_CASE("crps_gev matches quadrature") {
  for (double xi : {-0.3, -0.1, 0.0, 0.043, 0.2, 0.4}) {
    const GevParams p{xi, 0.7, 1.6};
    for (int i = 0; i <= 36; ++i) {
      const double x = p.location - 3 * p.scale + i * 0.25 * p.scale;
      const double closed = crps_gev(p, x);
      CHECK(closed >= 0.0);
      CHECK(std::fabs(closed - crps_by_quadrature(p, x)) <= 1e-6);
    }
  }
  CHECK(std::fabs(crps_gev({0.2, 0.0, 1.0}, 1.5) - crps_by_quadrature({0.2, 0.0, 1.0}, 1.5)) <= 1e-6);
  // outside the support on both sides
  CHECK(std::fabs(crps_gev({0.3, 0.0, 1.0}, -5.0) - crps_by_quadrature({0.3, 0.0, 1.0}, -5.0)) <= 1e-6);
  CHECK(std::fabs(crps_gev({-0.3, 0.0, 1.0}, 6.0) - crps_by_quadrature({-0.3, 0.0, 1.0}, 6.0)) <= 1e-6);
}

TEST_CASE("crps_gev limits and errors") {
  CHECK(crps_gev({0.1, 2.0, 1e-8}, 5.0) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK_THROWS_AS(crps_gev({1.0, 0.0, 1.0}, 0.0), Error);
  CHECK_THROWS_AS(crps_gev({0.0, 0.0, -1.0}, 0.0), Error);
}
