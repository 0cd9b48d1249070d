#include <cmath>
#include <random>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "brpp/error.hpp"
#include "brpp/margins.hpp"
#include "brpp/maxstable.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace brpp;

namespace {

BivVariogramParams test_biv() {
  BivVariogramParams p;
  p.sill = 1.0;
  p.common_scale = 0.03;
  p.aniso = {1.3, 0.2};
  p.long_range = 0.4;
  p.constant = 0.5;
  p.amp1 = 0.8;
  p.smooth1 = 1.2;
  p.amp2 = 1.0;
  p.smooth2 = 0.7;
  p.matern_scale = 0.04;
  p.rho = 0.7;
  return p;
}

const std::vector<Point> kFiveSites{{0, 0}, {12, 5}, {-20, 30}, {45, -10}, {5, 60}};

double phi(double x) { return boost::math::cdf(boost::math::normal(), x); }

}  // namespace

TEST_CASE("cov_from_variogram") {
  SUBCASE("single anchor location") {
    const std::vector<Point> one{{3, 4}};
    const GaussianSpec s = cov_from_variogram(one, UnivVariogramParams{0.1, {}, 1.0});
    REQUIRE(s.size() == 1);
    CHECK(s.covariance(0, 0) == 0.0);
  }
  SUBCASE("univariate variance is twice the variogram to the anchor") {
    const std::vector<Point> locs{{0, 0}, {1, 0}};
    const GaussianSpec s = cov_from_variogram(locs, UnivVariogramParams{1.0, {}, 2.0});
    CHECK(s.variance(1) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(s.variance(0) == 0.0);
  }
  SUBCASE("increments reproduce the pseudo cross-variogram") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-80.0, 80.0);
    std::vector<Point> locs;
    for (int i = 0; i < 12; ++i) locs.push_back({u(rng), u(rng)});
    const BivVariogramParams p = test_biv();
    for (int anchor : {0, 7}) {
      const GaussianSpec s = cov_from_variogram(locs, p, anchor);
      CHECK(s.variance(s.index(anchor, 0)) == doctest::Approx(p.amp1 * p.amp1).epsilon(1e-12));
      for (int i = 0; i < 12; ++i) {
        for (int j = 0; j < 12; ++j) {
          const Eigen::Matrix2d g = biv_variogram(locs[i] - locs[j], p);
          for (int k = 0; k < 2; ++k) {
            for (int l = 0; l < 2; ++l) {
              const int a = s.index(i, k), b = s.index(j, l);
              const double half_var = 0.5 * (s.covariance(a, a) + s.covariance(b, b) - 2 * s.covariance(a, b));
              CHECK(half_var == doctest::Approx(g(k, l)).epsilon(1e-10));
            }
          }
        }
      }
    }
  }
  CHECK_THROWS_AS(cov_from_variogram(std::vector<Point>{}, UnivVariogramParams{}), Error);
  CHECK_THROWS_AS(cov_from_variogram(kFiveSites, UnivVariogramParams{1.0, {}, 3.0}), Error);
}

TEST_CASE("sample_gaussian") {
  GaussianSpec zero;
  zero.locations = {{0, 0}, {1, 1}};
  zero.covariance = Eigen::MatrixXd::Zero(2, 2);
  CHECK(sample_gaussian(zero, 9).isZero(0.0));

  GaussianSpec one;
  one.locations = {{0, 0}};
  one.covariance = Eigen::MatrixXd::Constant(1, 1, 4.0);
  const int n = 100000;
  double ss = 0.0;
  for (int r = 0; r < n; ++r) ss += std::pow(sample_gaussian(one, stream_seed(1, r))(0), 2);
  CHECK(ss / n >= 3.9);
  CHECK(ss / n <= 4.1);

  GaussianSpec three;
  three.locations = {{0, 0}, {1, 0}, {2, 0}};
  three.covariance.resize(3, 3);
  three.covariance << 2.0, 0.8, -0.3, 0.8, 1.0, 0.4, -0.3, 0.4, 1.5;
  Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
  for (int r = 0; r < n; ++r) {
    const Eigen::VectorXd w = sample_gaussian(three, stream_seed(2, r));
    acc += w * w.transpose();
  }
  acc /= n;
  const Eigen::MatrixXd& c = three.covariance;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double se = std::sqrt((c(i, i) * c(j, j) + c(i, j) * c(i, j)) / n);
      CHECK(std::fabs(acc(i, j) - c(i, j)) <= 3 * se);
    }
  CHECK(sample_gaussian(three, 77) == sample_gaussian(three, 77));

  GaussianSpec bad = one;
  bad.covariance.resize(2, 2);
  bad.covariance << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(sample_gaussian(bad, 1), Error);
}

TEST_CASE("extremal_coeff") {
  const UnivVariogramParams lin{1.0, {}, 1.0};
  CHECK(extremal_coeff(lin, {1, 1}, {1, 1}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(extremal_coeff(lin, {0, 0}, {2, 0}) == doctest::Approx(2 * phi(1.0)).epsilon(1e-14));
  CHECK(extremal_coeff(lin, {0, 0}, {2, 0}) == doctest::Approx(1.68269).epsilon(1e-5));
  CHECK(extremal_coeff(lin, {0, 0}, {1e4, 0}) == doctest::Approx(2.0).epsilon(1e-6));
  const BivVariogramParams p = test_biv();
  const double g12 = biv_variogram({10, -3}, p)(0, 1);
  CHECK(extremal_coeff(p, {10, 0}, {0, 3}, 0, 1) == doctest::Approx(2 * phi(std::sqrt(g12 / 2))).epsilon(1e-14));
}

TEST_CASE("simulate_br single-location margin") {
  const std::vector<Point> one{{0, 0}};
  const auto reps = simulate_br(one, UnivVariogramParams{0.1, {}, 1.0}, 10000, 42);
  std::vector<double> v;
  for (const auto& r : reps) v.push_back(r.values(0, 0));
  CHECK(ks_test_gumbel(v).p_value > 0.01);
}

TEST_CASE("simulate_br bivariate orthant probability") {
  const std::vector<Point> two{{0, 0}, {2, 0}};
  const int n = 100000;
  const auto reps = simulate_br(two, UnivVariogramParams{1.0, {}, 1.0}, n, 7);
  int hits = 0;
  for (const auto& r : reps) hits += r.values(0, 0) <= 0.0 && r.values(1, 0) <= 0.0;
  const double expected = std::exp(-2 * phi(1.0));
  CHECK(expected == doctest::Approx(0.186).epsilon(2e-3));
  const double se = std::sqrt(expected * (1 - expected) / n);
  CHECK(std::fabs(static_cast<double>(hits) / n - expected) <= 3 * se);
}

TEST_CASE("simulate_br complete dependence") {
  const auto reps = simulate_br(kFiveSites, UnivVariogramParams{1e-18, {}, 1.0}, 200, 5);
  for (const auto& r : reps)
    for (int i = 1; i < 5; ++i) CHECK(std::fabs(r.values(i, 0) - r.values(0, 0)) <= 1e-6);
  // duplicated locations produce a degenerate covariance
  const std::vector<Point> dup{{0, 0}, {10, 0}, {10, 0}};
  for (const auto& r : simulate_br(dup, UnivVariogramParams{0.05, {}, 1.5}, 50, 8))
    CHECK(std::fabs(r.values(1, 0) - r.values(2, 0)) <= 1e-6);
}

TEST_CASE("simulate_br margins at every location and component") {
  const int n = 10000;
  for (const DependenceModel& model : {DependenceModel{UnivVariogramParams{0.05, {0.7, 0.3}, 1.4}},
                                       DependenceModel{test_biv()}}) {
    const auto reps = simulate_br(kFiveSites, model, n, 11);
    for (int k = 0; k < component_count(model); ++k)
      for (int i = 0; i < 5; ++i) {
        std::vector<double> v;
        for (const auto& r : reps) v.push_back(r.values(i, k));
        CHECK(ks_test_gumbel(v).p_value > 0.01);
      }
  }
}

TEST_CASE("simulate_br bivariate distribution function") {
  const int n = 20000;
  const BivVariogramParams p = test_biv();
  const auto reps = simulate_br(kFiveSites, p, n, 21);
  struct Pair { int i, k, j, l; };
  for (Pair q : {Pair{0, 0, 1, 0}, Pair{0, 0, 0, 1}, Pair{1, 0, 3, 1}, Pair{2, 1, 4, 1}}) {
    const double theta = extremal_coeff(p, kFiveSites[q.i], kFiveSites[q.j], q.k, q.l);
    for (double x : {-1.0, 0.0, 1.0}) {
      int hits = 0;
      for (const auto& r : reps) hits += r.values(q.i, q.k) <= x && r.values(q.j, q.l) <= x;
      const double expected = std::exp(-theta * std::exp(-x));
      const double se = std::sqrt(expected * (1 - expected) / n);
      CHECK(std::fabs(static_cast<double>(hits) / n - expected) <= 3 * se);
    }
  }
}

TEST_CASE("simulate_br max-stability") {
  const int n = 10000, k = 5;
  const UnivVariogramParams p{0.04, {}, 1.2};
  const auto single = simulate_br(kFiveSites, p, n, 31);
  const auto pool = simulate_br(kFiveSites, p, n * k, 32);
  std::vector<double> m0, m_pair, s0, s_pair;
  for (int r = 0; r < n; ++r) {
    Eigen::VectorXd mx = pool[r * k].values.col(0);
    for (int t = 1; t < k; ++t) mx = mx.cwiseMax(pool[r * k + t].values.col(0));
    mx.array() -= std::log(static_cast<double>(k));
    m0.push_back(mx(0));
    m_pair.push_back(std::max(mx(1), mx(2)));
    s0.push_back(single[r].values(0, 0));
    s_pair.push_back(std::max(single[r].values(1, 0), single[r].values(2, 0)));
  }
  CHECK(testing::two_sample_ks_pvalue(m0, s0) > 0.01);
  CHECK(testing::two_sample_ks_pvalue(m_pair, s_pair) > 0.01);
}

TEST_CASE("simulate_br determinism and anchor invariance") {
  const BivVariogramParams p = test_biv();
  const auto a = simulate_br(kFiveSites, p, 20, 99);
  const auto b = simulate_br(kFiveSites, p, 20, 99);
  for (int r = 0; r < 20; ++r) CHECK(a[r].values == b[r].values);
  CHECK(simulate_br(kFiveSites, p, 1, 100)[0].values != a[0].values);
  // replicate r does not depend on the total count
  CHECK(simulate_br(kFiveSites, p, 3, 99)[2].values == a[2].values);

  const int n = 20000;
  const auto r0 = simulate_br(kFiveSites, p, n, 1234, 0);
  const auto r3 = simulate_br(kFiveSites, p, n, 5678, 3);
  for (auto [i, j] : {std::pair{0, 2}, std::pair{1, 4}, std::pair{3, 4}}) {
    int h0 = 0, h3 = 0;
    for (int r = 0; r < n; ++r) {
      h0 += r0[r].values(i, 0) <= 0.5 && r0[r].values(j, 1) <= 0.5;
      h3 += r3[r].values(i, 0) <= 0.5 && r3[r].values(j, 1) <= 0.5;
    }
    const double pbar = 0.5 * (h0 + h3) / n;
    const double se = std::sqrt(2 * pbar * (1 - pbar) / n);
    CHECK(std::fabs(static_cast<double>(h0 - h3) / n) <= 3 * se);
  }
}
