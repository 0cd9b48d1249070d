#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "brpp/rng.hpp"
#include "brpp/variogram.hpp"

namespace brpp {

// Zero-mean Gaussian field W on (location, component) pairs. Entry index is
// component * locations.size() + location.
struct GaussianSpec {
  std::vector<Point> locations;
  int components = 1;
  Eigen::MatrixXd covariance;  // symmetric PSD after clipping
  Eigen::VectorXd variance;    // diagonal of covariance

  int size() const { return static_cast<int>(covariance.rows()); }
  int index(int location, int component) const {
    return component * static_cast<int>(locations.size()) + location;
  }
};

// Univariate: Cov(W(si), W(sj)) = g(si - s0) + g(sj - s0) - g(si - sj), s0 the anchor.
// Bivariate: W = (1, 1)' V1 + V2 with V1 anchored the same way for the common
// part and V2 the stationary Matern block field, plus c^2 on every entry of
// the second-component block.
GaussianSpec cov_from_variogram(std::span<const Point> locations, const DependenceModel& model, int anchor = 0);

// Draws W via the clipped eigen-factorization of the covariance.
Eigen::VectorXd sample_gaussian(const GaussianSpec& spec, std::uint64_t seed);

// Simulates max-stable processes with log-Gaussian spectral functions on a
// finite index set by the extremal-functions construction. Works on the
// Gumbel scale: entries are log Z.
class ExtremalSampler {
 public:
  explicit ExtremalSampler(const Eigen::MatrixXd& covariance);

  int size() const { return static_cast<int>(gamma_.rows()); }
  // gamma(a, b) = Var(W(a) - W(b)) / 2
  const Eigen::MatrixXd& variogram() const { return gamma_; }

  Eigen::VectorXd draw_gaussian(Rng& rng) const;

  // log Y for a spectral function normalized to 1 at index `at`.
  Eigen::VectorXd draw_extremal(Rng& rng, int at) const;

  // Max over all Poisson points whose log value stays strictly below
  // log_bounds at the constraint indices, evaluated at `targets`. With no
  // constraints this is an exact sample of the process with standard
  // Gumbel margins.
  Eigen::VectorXd simulate(Rng& rng, std::span<const int> targets, std::span<const int> constraints = {},
                           std::span<const double> log_bounds = {}) const;

  static constexpr long kMaxProposals = 10'000'000;

 private:
  Eigen::MatrixXd factor_;  // covariance = factor * factor'
  Eigen::MatrixXd gamma_;
};

struct BrSample {
  std::vector<Point> locations;
  int components = 1;
  Eigen::MatrixXd values;  // locations x components, standard Gumbel scale
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
};

// Replicate r uses the stream make_stream(seed, r).
std::vector<BrSample> simulate_br(std::span<const Point> locations, const DependenceModel& model, int n_rep,
                                  std::uint64_t seed, int anchor = 0);

// 2 Phi(sqrt(gamma_{k1 k2}(s1 - s2) / 2))
double extremal_coeff(const DependenceModel& model, Point s1, Point s2, int k1 = 0, int k2 = 0);

}  // namespace brpp
