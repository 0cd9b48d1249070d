#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "brpp/depfit.hpp"
#include "brpp/error.hpp"
#include "brpp/maxstable.hpp"
#include "doctest.h"

using namespace brpp;

namespace {

double phi(double x) { return boost::math::cdf(boost::math::normal(), x); }

std::vector<Point> random_sites(int n, std::uint64_t seed, double w = 200.0, double h = 120.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h);
  std::vector<Point> s;
  for (int i = 0; i < n; ++i) s.push_back({ux(rng), uy(rng)});
  return s;
}

std::vector<int> monthly_blocks(int periods, int length = 30) {
  std::vector<int> b(periods);
  for (int p = 0; p < periods; ++p) b[p] = p / length;
  return b;
}

Eigen::MatrixXd panel_from(const std::vector<BrSample>& reps) {
  const int n = static_cast<int>(reps[0].values.rows()), k = static_cast<int>(reps[0].values.cols());
  Eigen::MatrixXd panel(reps.size(), n * k);
  for (std::size_t r = 0; r < reps.size(); ++r)
    for (int c = 0; c < k; ++c)
      for (int i = 0; i < n; ++i) panel(r, c * n + i) = reps[r].values(i, c);
  return panel;
}

// Exact coefficients of a model with unit variances.
std::vector<ThetaEstimate> exact_estimates(const std::vector<Point>& s, const DependenceModel& m) {
  std::vector<ThetaEstimate> e;
  const int comps = component_count(m);
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    for (int j = 0; j < static_cast<int>(s.size()); ++j)
      for (int k1 = 0; k1 < comps; ++k1)
        for (int k2 = 0; k2 < comps; ++k2) {
          if (comps == 1 && j <= i) continue;
          if (i == j && k1 == k2) continue;
          e.push_back({i, j, k1, k2, extremal_coeff(m, s[i], s[j], k1, k2), 1.0});
        }
  return e;
}

// Brute-force objective written as a plain loop.
double objective_oracle(const std::vector<ThetaEstimate>& est, const std::vector<Point>& s, const DependenceModel& m) {
  const bool biv = std::holds_alternative<BivVariogramParams>(m);
  double total = 0.0;
  for (const auto& e : est) {
    if (e.variance <= 0) continue;
    const double g = model_variogram(m, s[e.site_i] - s[e.site_j], e.comp_i, e.comp_j);
    const double model = 2 * phi(std::sqrt(g / 2));
    const double denom = biv ? e.variance : std::sqrt(e.variance);
    total += std::pow((e.theta - model) / denom, 2);
  }
  return total;
}

BivVariogramParams truth_biv() {
  BivVariogramParams p;
  p.sill = 0.9;
  p.common_scale = 0.012;
  p.aniso = {1.2, 0.3};
  p.long_range = 0.3;
  p.constant = 0.4;
  p.amp1 = 0.7;
  p.smooth1 = 1.0;
  p.amp2 = 0.6;
  p.smooth2 = 1.4;
  p.matern_scale = 0.02;
  p.rho = 0.8;
  return p;
}

}  // namespace

TEST_CASE("fmadogram") {
  const std::vector<double> a{0.3, -1.0, 2.0, 5.5, 0.1};
  CHECK(fmadogram(a, a) == 0.0);
  const std::vector<double> up{1, 2, 3, 4}, down{4, 3, 2, 1};
  CHECK(fmadogram(up, down) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(fmadogram(up, a), Error);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(10000), y(10000);
  for (int i = 0; i < 10000; ++i) x[i] = u(rng), y[i] = u(rng);
  CHECK(std::fabs(fmadogram(x, y) - 1.0 / 6.0) <= 0.01);

  // rank-based: strictly increasing transforms leave it unchanged exactly
  std::vector<double> tx(x.size()), ty(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) tx[i] = std::exp(3 * x[i]) - 7, ty[i] = std::log(y[i] + 1e-3);
  CHECK(fmadogram(tx, ty) == fmadogram(x, y));

  // ties share average ranks
  const std::vector<double> tied{2.0, 1.0, 2.0, 3.0};
  CHECK(average_ranks(tied) == std::vector<double>{2.5, 1.0, 2.5, 4.0});
}

TEST_CASE("theta_from_madogram") {
  CHECK(theta_from_madogram(0.0) == 1.0);
  CHECK(theta_from_madogram(1.0 / 6.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(theta_from_madogram(1.0 / 3.0) == 2.0);
  CHECK(theta_from_madogram(0.7) == 2.0);
  CHECK(theta_from_madogram(0.1) == doctest::Approx(1.2 / 0.8).epsilon(1e-15));
  double prev = 1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double t = theta_from_madogram(i * 0.6 / 1000);
    CHECK(t >= prev);
    CHECK(t >= 1.0);
    CHECK(t <= 2.0);
    prev = t;
  }
}

TEST_CASE("jackknife variance") {
  const std::vector<double> two{1.4, 1.6};
  CHECK(grouped_jackknife(two) == doctest::Approx(0.01).epsilon(1e-12));

  // identical blocks
  std::vector<double> a, b;
  std::vector<int> blk;
  const std::vector<double> base_a{0.1, 0.5, 0.3, 0.9, 0.2}, base_b{0.4, 0.2, 0.8, 0.7, 0.1};
  for (int rep = 0; rep < 4; ++rep)
    for (int p = 0; p < 5; ++p) a.push_back(base_a[p]), b.push_back(base_b[p]), blk.push_back(rep);
  CHECK(std::fabs(jackknife_variance(a, b, blk)) <= 1e-15);

  // invariant under block relabeling
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  std::vector<double> x(120), y(120);
  std::vector<int> labels(120), relabeled(120);
  for (int p = 0; p < 120; ++p) {
    x[p] = nd(rng);
    y[p] = 0.6 * x[p] + 0.8 * nd(rng);
    labels[p] = p / 30;
    relabeled[p] = 10 - 3 * (p / 30);
  }
  const double v = jackknife_variance(x, y, labels);
  CHECK(v > 0.0);
  CHECK(jackknife_variance(x, y, relabeled) == doctest::Approx(v).epsilon(1e-14));

  const std::vector<double> s2{1.0, 2.0};
  const std::vector<int> one_block{0, 0};
  CHECK_THROWS_AS(jackknife_variance(s2, s2, one_block), Error);
  const std::vector<double> s3{1.0, 2.0, 3.0};
  const std::vector<int> tiny{0, 0, 1};
  CHECK_THROWS_AS(jackknife_variance(s3, s3, tiny), Error);
}

TEST_CASE("estimate_extremal_coeffs layout") {
  const auto sites = random_sites(6, 3);
  const auto reps = simulate_br(sites, truth_biv(), 120, 5);
  const Eigen::MatrixXd panel = panel_from(reps);
  const auto blocks = monthly_blocks(120);
  const auto uni = estimate_extremal_coeffs(panel.leftCols(6), sites, blocks, PairScheme::unordered);
  CHECK(uni.size() == 15);
  const auto all = estimate_extremal_coeffs(panel, sites, blocks, PairScheme::ordered_all_components);
  CHECK(all.size() == 6 * 6 * 4 - 12);
  // agrees with the standalone estimators
  for (const auto& e : all) {
    const Eigen::VectorXd a = panel.col(e.comp_i * 6 + e.site_i), b = panel.col(e.comp_j * 6 + e.site_j);
    const std::span<const double> sa(a.data(), a.size()), sb(b.data(), b.size());
    CHECK(e.theta == doctest::Approx(theta_from_madogram(fmadogram(sa, sb))).epsilon(1e-14));
    CHECK(e.variance == doctest::Approx(jackknife_variance(sa, sb, blocks)).epsilon(1e-12));
  }
}

TEST_CASE("missing values are excluded pairwise") {
  const auto sites = random_sites(4, 8);
  const auto reps = simulate_br(sites, truth_biv(), 90, 6);
  Eigen::MatrixXd panel = panel_from(reps);
  const auto blocks = monthly_blocks(90);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int p : {3, 17, 40, 41, 88}) panel(p, 1) = nan;
  for (int p : {17, 60}) panel(p, 6) = nan;
  const auto all = estimate_extremal_coeffs(panel, sites, blocks, PairScheme::ordered_all_components);
  CHECK(all.size() == 4 * 4 * 4 - 8);
  for (const auto& e : all) {
    std::vector<double> a, b;
    std::vector<int> lab;
    for (int p = 0; p < 90; ++p) {
      const double x = panel(p, e.comp_i * 4 + e.site_i), y = panel(p, e.comp_j * 4 + e.site_j);
      if (std::isnan(x) || std::isnan(y)) continue;
      a.push_back(x);
      b.push_back(y);
      lab.push_back(blocks[p]);
    }
    CHECK(e.theta == doctest::Approx(theta_from_madogram(fmadogram(a, b))).epsilon(1e-14));
    CHECK(e.variance == doctest::Approx(jackknife_variance(a, b, lab)).epsilon(1e-12));
  }
  // a series observed in a single period yields no estimates
  Eigen::MatrixXd sparse = panel.leftCols(4);
  sparse.col(2).setConstant(nan);
  sparse(5, 2) = 1.0;
  const auto uni = estimate_extremal_coeffs(sparse, sites, blocks, PairScheme::unordered);
  CHECK(uni.size() == 3);
}

TEST_CASE("wls_objective") {
  const auto sites = random_sites(8, 9);
  const UnivVariogramParams u{0.05, {1.5, 0.2}, 1.0};
  CHECK(wls_objective(exact_estimates(sites, u), sites, u) <= 1e-20);
  CHECK(wls_objective(exact_estimates(sites, truth_biv()), sites, truth_biv()) <= 1e-20);

  // single pair: theta_hat 1.5, model 1.7, variance 0.01
  const double target = 1.7;
  const double z = boost::math::quantile(boost::math::normal(), target / 2);
  const double r = 2 * z * z;  // gamma = r for lambda = 1, alpha = 1
  const std::vector<Point> two{{0, 0}, {r, 0}};
  const std::vector<ThetaEstimate> one{{0, 1, 0, 0, 1.5, 0.01}};
  CHECK(wls_objective(one, two, UnivVariogramParams{1.0, {}, 1.0}) == doctest::Approx(4.0).epsilon(1e-10));

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    auto est = exact_estimates(sites, truth_biv());
    for (auto& e : est) {
      e.theta = 1.0 + unif(rng);
      e.variance = rep == 0 && unif(rng) < 0.2 ? 0.0 : 0.001 + 0.05 * unif(rng);
    }
    BivVariogramParams p = truth_biv();
    p.rho = 0.3 * unif(rng);
    p.sill = 0.5 + unif(rng);
    CHECK(wls_objective(est, sites, p) == doctest::Approx(objective_oracle(est, sites, p)).epsilon(1e-12));
    auto uest = exact_estimates(sites, u);
    for (auto& e : uest) e.theta = 1.0 + unif(rng), e.variance = 0.001 + 0.05 * unif(rng);
    CHECK(wls_objective(uest, sites, u) == doctest::Approx(objective_oracle(uest, sites, u)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(wls_objective(std::vector<ThetaEstimate>{}, sites, u), Error);
}

TEST_CASE("fit_dependence recovers exact univariate coefficients") {
  const auto sites = random_sites(20, 21);
  const UnivVariogramParams truth{0.05, {1.5, 0.2}, 1.0};
  const auto est = exact_estimates(sites, truth);
  const auto starts = default_starts(ModelKind::univariate, sites, 20, 3);
  const FitResult fit = fit_dependence(est, sites, ModelKind::univariate, starts);
  CHECK(fit.objective <= 1e-8);
  CHECK(wls_objective(est, sites, fit.params) <= 1e-8);
  const auto& p = std::get<UnivVariogramParams>(fit.params);
  CHECK(p.scale == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(p.aniso.ratio == doctest::Approx(1.5).epsilon(1e-3));
  CHECK(p.aniso.angle == doctest::Approx(0.2).epsilon(1e-3));
  CHECK(p.exponent == doctest::Approx(1.0).epsilon(1e-3));

  // ordering of the estimate list does not matter
  auto shuffled = est;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(8));
  const FitResult again = fit_dependence(shuffled, sites, ModelKind::univariate, starts);
  CHECK(again.objective == fit.objective);
  CHECK(std::get<UnivVariogramParams>(again.params).scale == p.scale);
}

TEST_CASE("fit_dependence excludes zero-variance pairs") {
  const auto sites = random_sites(6, 2);
  const UnivVariogramParams truth{0.03, {}, 1.2};
  auto est = exact_estimates(sites, truth);
  est[0].variance = 0.0;
  est[3].variance = 0.0;
  const FitResult fit = fit_dependence(est, sites, ModelKind::univariate, default_starts(ModelKind::univariate, sites, 2, 1));
  CHECK(fit.excluded_pairs == 2);
  for (auto& e : est) e.variance = 0.0;
  CHECK_THROWS_AS(fit_dependence(est, sites, ModelKind::univariate, default_starts(ModelKind::univariate, sites, 1, 1)),
                  Error);
}

TEST_CASE("madogram estimates are nearly unbiased on simulated data") {
  const std::vector<Point> sites{{0, 0}, {8, 0}, {25, 0}, {60, 0}, {140, 0}};
  const UnivVariogramParams truth{0.03, {}, 1.0};
  const int reps = 40;
  std::vector<double> mean(10, 0.0), exact(10);
  for (int r = 0; r < reps; ++r) {
    const auto sample = simulate_br(sites, truth, 360, 1000 + r);
    const auto est = estimate_extremal_coeffs(panel_from(sample), sites, monthly_blocks(360), PairScheme::unordered);
    for (std::size_t q = 0; q < est.size(); ++q) {
      mean[q] += est[q].theta / reps;
      exact[q] = extremal_coeff(truth, sites[est[q].site_i], sites[est[q].site_j]);
    }
  }
  int checked = 0;
  for (int q = 0; q < 10; ++q) {
    if (exact[q] < 1.2 || exact[q] > 1.9) continue;
    ++checked;
    CHECK(std::fabs(mean[q] - exact[q]) < 0.05);
  }
  CHECK(checked >= 4);
}

TEST_CASE("fit_dependence recovers a simulated univariate model") {
  const auto sites = random_sites(30, 33);
  const UnivVariogramParams truth{0.02, {1.3, 0.4}, 1.1};
  const auto sample = simulate_br(sites, truth, 360, 44);
  const auto est = estimate_extremal_coeffs(panel_from(sample), sites, monthly_blocks(360), PairScheme::unordered);
  const FitResult fit =
      fit_dependence(est, sites, ModelKind::univariate, default_starts(ModelKind::univariate, sites, 20, 5));
  double worst = 0.0;
  for (const auto& e : est)
    worst = std::max(worst, std::fabs(extremal_coeff(fit.params, sites[e.site_i], sites[e.site_j]) -
                                      extremal_coeff(truth, sites[e.site_i], sites[e.site_j])));
  MESSAGE("univariate max |theta_fit - theta_true| = " << worst);
  CHECK(worst <= 0.05);
}

TEST_CASE("fit_dependence recovers a simulated bivariate model") {
  const auto sites = random_sites(30, 34);
  const BivVariogramParams truth = truth_biv();
  const auto sample = simulate_br(sites, truth, 360, 45);
  const auto est =
      estimate_extremal_coeffs(panel_from(sample), sites, monthly_blocks(360), PairScheme::ordered_all_components);
  const auto t0 = std::chrono::steady_clock::now();
  const FitResult fit =
      fit_dependence(est, sites, ModelKind::bivariate, default_starts(ModelKind::bivariate, sites, 4, 6));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double worst = 0.0;
  for (const auto& e : est)
    worst = std::max(worst, std::fabs(extremal_coeff(fit.params, sites[e.site_i], sites[e.site_j], e.comp_i, e.comp_j) -
                                      extremal_coeff(truth, sites[e.site_i], sites[e.site_j], e.comp_i, e.comp_j)));
  MESSAGE("bivariate max |theta_fit - theta_true| = " << worst << " (fit " << secs << " s, " << fit.evaluations
                                                      << " evaluations)");
  CHECK(worst <= 0.07);
}
