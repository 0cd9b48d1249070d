#include "brpp/maxstable.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "brpp/error.hpp"
#include "brpp/special.hpp"

namespace brpp {

namespace {

constexpr double kClipRelTol = 1e-8;

double matern_block(const BivVariogramParams& p, double r, int k, int l) {
  const double amp_k = k == 0 ? p.amp1 : p.amp2;
  const double amp_l = l == 0 ? p.amp1 : p.amp2;
  double v = 0.0;
  if (amp_k > 0.0 && amp_l > 0.0) {
    if (k == l)
      v = amp_k * amp_k * matern_correlation(r, k == 0 ? p.smooth1 : p.smooth2, p.matern_scale);
    else if (p.rho != 0.0)
      v = p.rho * amp_k * amp_l * matern_correlation(r, p.cross_smooth(), p.matern_scale);
  }
  if (k == 1 && l == 1) v += p.constant * p.constant;
  return v;
}

}  // namespace

GaussianSpec cov_from_variogram(std::span<const Point> locations, const DependenceModel& model, int anchor) {
  require(!locations.empty(), "cov_from_variogram: empty location list");
  require(anchor >= 0 && anchor < static_cast<int>(locations.size()), "cov_from_variogram: anchor out of range");
  require_valid(model);
  const int n = static_cast<int>(locations.size());
  const Point s0 = locations[anchor];

  GaussianSpec spec;
  spec.locations.assign(locations.begin(), locations.end());
  spec.components = component_count(model);
  const int m = n * spec.components;
  spec.covariance.setZero(m, m);

  if (const auto* u = std::get_if<UnivVariogramParams>(&model)) {
    Eigen::VectorXd to_anchor(n);
    for (int i = 0; i < n; ++i) to_anchor(i) = univ_variogram(locations[i] - s0, *u);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j)
        spec.covariance(i, j) = spec.covariance(j, i) =
            to_anchor(i) + to_anchor(j) - univ_variogram(locations[i] - locations[j], *u);
  } else {
    const auto& p = std::get<BivVariogramParams>(model);
    Eigen::VectorXd to_anchor(n);
    for (int i = 0; i < n; ++i) to_anchor(i) = gamma0(locations[i] - s0, p);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= i; ++j) {
        const Point h = locations[i] - locations[j];
        const double common = to_anchor(i) + to_anchor(j) - gamma0(h, p);
        const double r = aniso_norm(h, p.aniso);
        for (int k = 0; k < 2; ++k) {
          for (int l = 0; l < 2; ++l) {
            const double v = common + matern_block(p, r, k, l);
            const int a = spec.index(i, k), b = spec.index(j, l);
            spec.covariance(a, b) = spec.covariance(b, a) = v;
          }
        }
      }
    }
  }
  spec.variance = spec.covariance.diagonal();
  return spec;
}

ExtremalSampler::ExtremalSampler(const Eigen::MatrixXd& covariance) {
  const int m = static_cast<int>(covariance.rows());
  require(m > 0 && covariance.cols() == m, "ExtremalSampler: covariance must be square and nonempty");
  const double trace = covariance.trace();
  if (!(trace > 0.0)) {
    if (trace < 0.0 || !covariance.isZero(0.0)) fail(ErrorCategory::numeric, "covariance matrix is not positive semidefinite");
    factor_.setZero(m, 0);
    gamma_.setZero(m, m);
    return;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance);
  if (es.info() != Eigen::Success) fail(ErrorCategory::numeric, "eigen-decomposition of covariance failed");
  const double tol = kClipRelTol * trace;
  const Eigen::VectorXd& ev = es.eigenvalues();
  if (ev(0) < -tol) fail(ErrorCategory::numeric, "covariance matrix is indefinite beyond tolerance");
  int keep = 0;
  for (int i = 0; i < m; ++i) keep += ev(i) > tol;
  factor_.resize(m, keep);
  for (int i = m - keep, c = 0; i < m; ++i, ++c) factor_.col(c) = es.eigenvectors().col(i) * std::sqrt(ev(i));
  const Eigen::MatrixXd clipped = factor_ * factor_.transpose();
  const Eigen::VectorXd d = clipped.diagonal();
  gamma_ = 0.5 * (d.replicate(1, m) + d.transpose().replicate(m, 1)) - clipped;
  gamma_ = gamma_.cwiseMax(0.0);
  gamma_.diagonal().setZero();
}

Eigen::VectorXd ExtremalSampler::draw_gaussian(Rng& rng) const {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(factor_.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return factor_ * z;
}

Eigen::VectorXd ExtremalSampler::draw_extremal(Rng& rng, int at) const {
  Eigen::VectorXd w = draw_gaussian(rng);
  w.array() -= w(at);
  w -= gamma_.col(at);
  return w;
}

Eigen::VectorXd ExtremalSampler::simulate(Rng& rng, std::span<const int> targets, std::span<const int> constraints,
                                          std::span<const double> log_bounds) const {
  require(constraints.size() == log_bounds.size(), "ExtremalSampler::simulate: constraint size mismatch");
  const double neg_inf = -std::numeric_limits<double>::infinity();
  const int m = static_cast<int>(targets.size());
  Eigen::VectorXd z = Eigen::VectorXd::Constant(m, neg_inf);
  std::exponential_distribution<double> expo(1.0);
  long proposals = 0;
  for (int n = 0; n < m; ++n) {
    double arrival = expo(rng);
    double log_zeta = -std::log(arrival);
    while (log_zeta > z(n)) {
      if (++proposals > kMaxProposals)
        fail(ErrorCategory::sampler_nonconvergence, "extremal-function sampler exceeded its proposal budget");
      const Eigen::VectorXd y = draw_extremal(rng, targets[n]);
      bool accept = true;
      for (int i = 0; i < n && accept; ++i) accept = log_zeta + y(targets[i]) < z(i);
      for (std::size_t j = 0; j < constraints.size() && accept; ++j)
        accept = log_zeta + y(constraints[j]) < log_bounds[j];
      if (accept)
        for (int i = 0; i < m; ++i) z(i) = std::max(z(i), log_zeta + y(targets[i]));
      arrival += expo(rng);
      log_zeta = -std::log(arrival);
    }
  }
  return z;
}

std::vector<BrSample> simulate_br(std::span<const Point> locations, const DependenceModel& model, int n_rep,
                                  std::uint64_t seed, int anchor) {
  require(n_rep >= 1, "simulate_br: n_rep must be at least 1");
  const GaussianSpec spec = cov_from_variogram(locations, model, anchor);
  const ExtremalSampler sampler(spec.covariance);
  std::vector<int> targets(spec.size());
  std::iota(targets.begin(), targets.end(), 0);
  const int n = static_cast<int>(locations.size());

  std::vector<BrSample> out;
  out.reserve(n_rep);
  for (int r = 0; r < n_rep; ++r) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(r));
    const Eigen::VectorXd z = sampler.simulate(rng, targets);
    BrSample s;
    s.locations = spec.locations;
    s.components = spec.components;
    s.values = Eigen::Map<const Eigen::MatrixXd>(z.data(), n, spec.components);
    s.seed = seed;
    s.replicate = static_cast<std::uint64_t>(r);
    out.push_back(std::move(s));
  }
  return out;
}

Eigen::VectorXd sample_gaussian(const GaussianSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  return ExtremalSampler(spec.covariance).draw_gaussian(rng);
}

double extremal_coeff(const DependenceModel& model, Point s1, Point s2, int k1, int k2) {
  const double g = model_variogram(model, s1 - s2, k1, k2);
  return 2.0 * special::normal_cdf(std::sqrt(std::max(g, 0.0) / 2.0));
}

}  // namespace brpp
