#include "brpp/condsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

#include "brpp/error.hpp"
#include "brpp/maxstable.hpp"
#include "brpp/rng.hpp"
#include "brpp/special.hpp"

namespace brpp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kCoincident = 1e-10;  // variogram distance treated as the same point
constexpr std::uint64_t kGibbsStream = 0xFFFF'FFFF'FFFF'FFFFULL;

// Factor L with L L' equal to the PSD-clipped matrix. Negative eigenvalues
// are rounding noise when small against `scale`, the trace of the matrix the
// input was derived from.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& m, double scale = 0.0) {
  if (m.rows() == 0) return Eigen::MatrixXd(0, 0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) fail(ErrorCategory::numeric, "eigen-decomposition of a conditional covariance failed");
  const double tol = 1e-8 * std::max({m.trace(), scale, 1e-300});
  if (es.eigenvalues()(0) < -tol) fail(ErrorCategory::numeric, "conditional covariance is indefinite beyond tolerance");
  Eigen::MatrixXd f = es.eigenvectors();
  for (Eigen::Index i = 0; i < f.cols(); ++i) f.col(i) *= std::sqrt(std::max(es.eigenvalues()(i), 0.0));
  return f;
}

double log_sum_exp(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

int sample_index(std::span<const double> log_w, Rng& rng) {
  const double total = log_sum_exp(log_w);
  if (total == kNegInf || !std::isfinite(total))
    fail(ErrorCategory::numeric, "conditional sampler: all partition weights vanish");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    acc += std::exp(log_w[i] - total);
    if (u < acc) return static_cast<int>(i);
  }
  for (std::size_t i = log_w.size(); i-- > 0;)
    if (log_w[i] > kNegInf) return static_cast<int>(i);
  return 0;
}

// All set partitions of {0..k-1} as lists of block bitmasks.
std::vector<std::vector<unsigned>> enumerate_partitions(int k) {
  std::vector<std::vector<unsigned>> out;
  if (k == 0) {
    out.push_back({});
    return out;
  }
  std::vector<int> label(k, 0);
  while (true) {
    const int blocks = *std::max_element(label.begin(), label.end()) + 1;
    std::vector<unsigned> masks(blocks, 0u);
    for (int i = 0; i < k; ++i) masks[label[i]] |= 1u << i;
    out.push_back(std::move(masks));
    // next restricted growth string
    int i = k - 1;
    for (; i > 0; --i) {
      const int prefix_max = *std::max_element(label.begin(), label.begin() + i);
      if (label[i] <= prefix_max) break;
    }
    if (i == 0) break;
    ++label[i];
    std::fill(label.begin() + i + 1, label.end(), 0);
  }
  return out;
}

}  // namespace

struct ConditionalSampler::Impl {
  // Conditional law of the log spectral function at `rest` given its values on
  // the block `a`.
  struct Block {
    std::vector<int> a, rest;  // rest = conditioning points outside a, then free targets
    int n_cond_rest = 0;
    Eigen::MatrixXd q;         // Sigma_aa^-1
    Eigen::VectorXd q1;        // Q 1
    double a_sum = 0.0;        // 1' Q 1
    double log_det = 0.0;
    Eigen::MatrixXd r;         // Sigma_ra Q
    Eigen::VectorXd d;         // 1_r - R 1_a
    Eigen::MatrixXd factor;    // of the conditional covariance on rest
    Eigen::MatrixXd cov_cond;  // leading n_cond_rest block of that covariance
    Eigen::MatrixXd cov;       // conditional covariance on rest
    // Per leading coordinate l: regression of rest on y_l, and a factor of the
    // residual covariance. Built on first use.
    struct Lead {
      Eigen::VectorXd gain;
      Eigen::MatrixXd factor;
    };
    mutable std::vector<std::optional<Lead>> leads;
    // Two constrained coordinates: regression of rest on both and a factor of
    // the residual covariance; unset when they are almost collinear.
    std::optional<Eigen::MatrixXd> pair_gain, pair_factor;
  };

  int k = 0;
  std::vector<int> target_source;  // >= 0: conditioning index; < 0: -(free index) - 1
  int n_free = 0;
  Eigen::MatrixXd sigma;
  Eigen::VectorXd half_var;
  std::optional<ExtremalSampler> sub;
  std::vector<int> free_idx, cond_idx;
  ConditionalOptions options;
  std::vector<std::vector<unsigned>> partitions;
  mutable std::vector<std::unique_ptr<Block>> blocks;

  const Block& block(unsigned mask) const {
    auto& slot = blocks[mask];
    if (slot) return *slot;
    auto b = std::make_unique<Block>();
    for (int i = 0; i < k; ++i) (mask >> i & 1u ? b->a : b->rest).push_back(i);
    b->n_cond_rest = static_cast<int>(b->rest.size());
    for (int f : free_idx) b->rest.push_back(f);
    const int na = static_cast<int>(b->a.size()), nr = static_cast<int>(b->rest.size());
    Eigen::MatrixXd saa(na, na), sra(nr, na), srr(nr, nr);
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < na; ++j) saa(i, j) = sigma(b->a[i], b->a[j]);
    for (int i = 0; i < nr; ++i) {
      for (int j = 0; j < na; ++j) sra(i, j) = sigma(b->rest[i], b->a[j]);
      for (int j = 0; j < nr; ++j) srr(i, j) = sigma(b->rest[i], b->rest[j]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(saa);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any())
      fail(ErrorCategory::numeric, "conditional sampler: conditioning covariance is singular");
    b->q = ldlt.solve(Eigen::MatrixXd::Identity(na, na));
    b->q1 = b->q * Eigen::VectorXd::Ones(na);
    b->a_sum = b->q1.sum();
    b->log_det = ldlt.vectorD().array().log().sum();
    b->r = sra * b->q;
    b->d = Eigen::VectorXd::Ones(nr) - b->r * Eigen::VectorXd::Ones(na);
    Eigen::MatrixXd cov = srr - b->r * sra.transpose() + b->d * b->d.transpose() / b->a_sum;
    cov = 0.5 * (cov + cov.transpose());
    b->factor = psd_factor(cov);
    b->cov_cond = cov.topLeftCorner(b->n_cond_rest, b->n_cond_rest);
    b->cov = cov;
    b->leads.resize(b->n_cond_rest);
    if (b->n_cond_rest == 2 && cov(0, 0) > 1e-12 && cov(1, 1) > 1e-12 &&
        std::abs(cov(0, 1)) < (1.0 - 1e-6) * std::sqrt(cov(0, 0) * cov(1, 1))) {
      const Eigen::Matrix2d cc = cov.topLeftCorner(2, 2);
      const Eigen::MatrixXd gain = cov.leftCols(2) * cc.inverse();
      Eigen::MatrixXd resid = cov - gain * cov.topRows(2);
      resid = 0.5 * (resid + resid.transpose());
      b->pair_gain = gain;
      b->pair_factor = psd_factor(resid, cov.trace());
    }
    slot = std::move(b);
    return *slot;
  }

  // Mean of the log spectral function on rest, and log intensity of the
  // block values.
  std::pair<Eigen::VectorXd, double> conditional(const Block& b, std::span<const double> z) const {
    const int na = static_cast<int>(b.a.size());
    Eigen::VectorXd m(na);
    for (int i = 0; i < na; ++i) m(i) = z[b.a[i]] + half_var(b.a[i]);
    const double bq = b.q1.dot(m);
    const double mqm = m.dot(b.q * m);
    const double log_lambda = -0.5 * (na - 1) * kLog2Pi - 0.5 * b.log_det - 0.5 * std::log(b.a_sum) +
                              (bq - 1.0) * (bq - 1.0) / (2.0 * b.a_sum) - 0.5 * mqm;
    Eigen::VectorXd mean = ((bq - 1.0) / b.a_sum) * b.d + b.r * m;
    for (std::size_t i = 0; i < b.rest.size(); ++i) mean(i) -= half_var(b.rest[i]);
    return {mean, log_lambda};
  }

  double log_weight(unsigned mask, std::span<const double> z, std::vector<double>& cache) const {
    if (!std::isnan(cache[mask])) return cache[mask];
    const Block& b = block(mask);
    const auto [mean, log_lambda] = conditional(b, z);
    double lw = log_lambda;
    if (b.n_cond_rest > 0) {
      Eigen::VectorXd upper(b.n_cond_rest);
      for (int i = 0; i < b.n_cond_rest; ++i) upper(i) = z[b.rest[i]] - mean(i);
      const double p = special::mvn_cdf(upper, b.cov_cond);
      lw += p > 0.0 ? std::log(p) : kNegInf;
    }
    cache[mask] = lw;
    return lw;
  }

  void gibbs_sweep(std::vector<unsigned>& part, std::span<const double> z, std::vector<double>& cache, Rng& rng) const {
    for (int i = 0; i < k; ++i) {
      const unsigned bit = 1u << i;
      for (auto it = part.begin(); it != part.end(); ++it) {
        if (*it & bit) {
          *it &= ~bit;
          if (*it == 0u) part.erase(it);
          break;
        }
      }
      std::vector<double> lw;
      for (unsigned m : part) lw.push_back(log_weight(m | bit, z, cache) - log_weight(m, z, cache));
      lw.push_back(log_weight(bit, z, cache));
      const int choice = sample_index(lw, rng);
      if (choice == static_cast<int>(part.size()))
        part.push_back(bit);
      else
        part[choice] |= bit;
    }
  }

  const Block::Lead& lead(const Block& b, int l) const {
    auto& slot = b.leads[l];
    if (!slot) {
      const Eigen::VectorXd gain = b.cov.col(l) / b.cov(l, l);
      Eigen::MatrixXd resid = b.cov - gain * b.cov.row(l);
      resid = 0.5 * (resid + resid.transpose());
      slot = Block::Lead{gain, psd_factor(resid, b.cov.trace())};
    }
    return *slot;
  }

  // Exact draw from the conditional law restricted to y_i < z on the
  // conditioning coordinates. Two constraints: direct truncated bivariate
  // draw, then the rest given both. Otherwise rejection with a proposal that
  // already honours the tightest single constraint: that coordinate comes
  // from its truncated marginal, the others from the Gaussian law given it.
  Eigen::VectorXd draw_function(unsigned mask, std::span<const double> z, Rng& rng) const {
    const Block& b = block(mask);
    const Eigen::VectorXd mean = conditional(b, z).first;
    std::normal_distribution<double> normal;
    if (b.pair_gain) {
      const double s0 = std::sqrt(b.cov(0, 0)), s1 = std::sqrt(b.cov(1, 1));
      const auto [x0, x1] = special::truncated_bivariate_normal(
          (z[b.rest[0]] - mean(0)) / s0, (z[b.rest[1]] - mean(1)) / s1, b.cov(0, 1) / (s0 * s1), rng);
      Eigen::VectorXd e(b.pair_factor->cols());
      for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = normal(rng);
      const Eigen::VectorXd y = mean + *b.pair_gain * Eigen::Vector2d(s0 * x0, s1 * x1) + *b.pair_factor * e;
      return y.tail(n_free);
    }
    int l = -1;
    double tightest = std::numeric_limits<double>::infinity();
    for (int i = 0; i < b.n_cond_rest; ++i) {
      const double v = b.cov(i, i);
      if (!(v > 1e-12)) continue;
      const double u = (z[b.rest[i]] - mean(i)) / std::sqrt(v);
      if (u < tightest) tightest = u, l = i;
    }
    const Eigen::MatrixXd& factor = l < 0 ? b.factor : lead(b, l).factor;
    Eigen::VectorXd e(factor.cols());
    for (long attempt = 0; attempt < options.max_rejections; ++attempt) {
      for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = normal(rng);
      Eigen::VectorXd y = mean + factor * e;
      if (l >= 0) {
        const double sd = std::sqrt(b.cov(l, l));
        const double x = special::truncated_normal_upper(tightest, rng);
        y += lead(b, l).gain * (sd * x);
        y(l) = std::min(y(l), std::nextafter(z[b.rest[l]], kNegInf));
      }
      bool ok = true;
      for (int i = 0; i < b.n_cond_rest && ok; ++i) ok = y(i) < z[b.rest[i]];
      if (ok) return y.tail(n_free);
    }
    fail(ErrorCategory::sampler_nonconvergence,
         "conditional sampler: extremal-function rejection step exceeded its attempt budget");
  }
};

ConditionalSampler::ConditionalSampler(const DependenceModel& model, std::span<const Point> cond_sites,
                                       int cond_component, std::span<const SiteComponent> targets,
                                       const ConditionalOptions& options)
    : impl_(std::make_unique<Impl>()) {
  require_valid(model);
  const int comps = component_count(model);
  require(cond_component >= 0 && cond_component < comps, "conditional sampler: conditioning component out of range");
  require(!targets.empty(), "conditional sampler: empty target list");
  require(cond_sites.size() <= 20, "conditional sampler: at most 20 conditioning points supported");
  for (const auto& t : targets)
    require(t.component >= 0 && t.component < comps, "conditional sampler: target component out of range");
  for (std::size_t i = 0; i < cond_sites.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      require(!(cond_sites[i] == cond_sites[j]), "conditional sampler: conditioning sites must be distinct");

  Impl& s = *impl_;
  s.options = options;
  s.k = static_cast<int>(cond_sites.size());

  // Distinct sites and the (site, component) index of every point.
  std::vector<Point> sites;
  auto site_index = [&](Point p) {
    for (std::size_t i = 0; i < sites.size(); ++i)
      if (sites[i] == p) return static_cast<int>(i);
    sites.push_back(p);
    return static_cast<int>(sites.size()) - 1;
  };
  std::vector<std::pair<int, int>> points;
  for (const Point& p : cond_sites) points.emplace_back(site_index(p), cond_component);
  std::vector<std::pair<int, int>> target_points;
  for (const auto& t : targets) target_points.emplace_back(site_index(t.site), t.component);

  const GaussianSpec spec = cov_from_variogram(sites, model, 0);
  auto spec_index = [&](std::pair<int, int> p) { return spec.index(p.first, p.second); };
  auto gamma = [&](std::pair<int, int> p, std::pair<int, int> q) {
    const int a = spec_index(p), b = spec_index(q);
    return 0.5 * (spec.covariance(a, a) + spec.covariance(b, b)) - spec.covariance(a, b);
  };

  for (const auto& tp : target_points) {
    int source = -1;
    for (int i = 0; i < s.k && source < 0; ++i)
      if (tp == points[i] || gamma(tp, points[i]) <= kCoincident) source = i;
    if (source >= 0) {
      s.target_source.push_back(source);
    } else {
      s.target_source.push_back(-static_cast<int>(points.size()) + s.k - 1);
      points.push_back(tp);
    }
  }
  const int m = static_cast<int>(points.size());
  s.n_free = m - s.k;

  Eigen::MatrixXd c(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) c(i, j) = spec.covariance(spec_index(points[i]), spec_index(points[j]));
  double max_gamma = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) max_gamma = std::max(max_gamma, 0.5 * (c(i, i) + c(j, j)) - c(i, j));
  // A common Gaussian shift leaves the process law unchanged and makes the
  // conditioning covariance nonsingular.
  s.sigma = c + Eigen::MatrixXd::Constant(m, m, 1.0 + max_gamma);
  s.half_var = 0.5 * s.sigma.diagonal();
  s.sub.emplace(s.sigma);
  for (int i = 0; i < s.k; ++i) s.cond_idx.push_back(i);
  for (int i = s.k; i < m; ++i) s.free_idx.push_back(i);
  s.blocks.resize(std::size_t{1} << s.k);
  if (s.k <= options.max_enumerated) s.partitions = enumerate_partitions(s.k);
}

ConditionalSampler::~ConditionalSampler() = default;
ConditionalSampler::ConditionalSampler(ConditionalSampler&&) noexcept = default;
ConditionalSampler& ConditionalSampler::operator=(ConditionalSampler&&) noexcept = default;

int ConditionalSampler::condition_count() const { return impl_->k; }
int ConditionalSampler::target_count() const { return static_cast<int>(impl_->target_source.size()); }

std::vector<std::pair<std::vector<unsigned>, double>> ConditionalSampler::partition_distribution(
    std::span<const double> z) const {
  const Impl& s = *impl_;
  require(static_cast<int>(z.size()) == s.k, "partition_distribution: wrong number of conditioning values");
  require(s.k <= s.options.max_enumerated, "partition_distribution: partitions are not enumerated");
  std::vector<double> cache(s.blocks.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<double> lw;
  for (const auto& part : s.partitions) {
    double w = 0.0;
    for (unsigned mask : part) w += s.log_weight(mask, z, cache);
    lw.push_back(w);
  }
  const double total = log_sum_exp(lw);
  std::vector<std::pair<std::vector<unsigned>, double>> out;
  for (std::size_t i = 0; i < lw.size(); ++i) out.emplace_back(s.partitions[i], std::exp(lw[i] - total));
  return out;
}

Eigen::MatrixXd ConditionalSampler::sample(std::span<const double> z, int K, std::uint64_t seed) const {
  const Impl& s = *impl_;
  require(K >= 1, "conditional sampler: K must be at least 1");
  require(static_cast<int>(z.size()) == s.k, "conditional sampler: wrong number of conditioning values");
  for (double v : z) require(std::isfinite(v), "conditional sampler: conditioning values must be finite");

  std::vector<double> cache(s.blocks.size(), std::numeric_limits<double>::quiet_NaN());
  const bool enumerated = s.k <= s.options.max_enumerated;
  std::vector<double> part_lw;
  if (enumerated) {
    for (const auto& part : s.partitions) {
      double w = 0.0;
      for (unsigned mask : part) w += s.log_weight(mask, z, cache);
      part_lw.push_back(w);
    }
  }
  Rng chain_rng = make_stream(seed, kGibbsStream);
  std::vector<unsigned> chain;
  if (!enumerated) {
    for (int i = 0; i < s.k; ++i) chain.push_back(1u << i);
    for (int sweep = 0; sweep < s.options.burn_in; ++sweep) s.gibbs_sweep(chain, z, cache, chain_rng);
  }

  Eigen::MatrixXd out(K, target_count());
  for (int r = 0; r < K; ++r) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(r));
    const std::vector<unsigned>* part;
    if (enumerated) {
      part = &s.partitions[sample_index(part_lw, rng)];
    } else {
      if (r > 0) s.gibbs_sweep(chain, z, cache, chain_rng);
      part = &chain;
    }
    Eigen::VectorXd free = Eigen::VectorXd::Constant(s.n_free, kNegInf);
    if (s.n_free > 0) {
      for (unsigned mask : *part) free = free.cwiseMax(s.draw_function(mask, z, rng));
      Eigen::VectorXd rest = s.sub->simulate(rng, s.free_idx, s.cond_idx, z);
      free = free.cwiseMax(rest);
    }
    for (int t = 0; t < target_count(); ++t) {
      const int src = s.target_source[t];
      out(r, t) = src >= 0 ? z[src] : free(-src - 1);
    }
  }
  return out;
}

Eigen::MatrixXd conditional_simulate(const DependenceModel& model, const ConditioningSet& cond,
                                     std::span<const SiteComponent> targets, int K, std::uint64_t seed,
                                     const ConditionalOptions& options) {
  require(cond.sites.size() == cond.values.size(), "conditional_simulate: sites and values differ in length");
  const ConditionalSampler sampler(model, cond.sites, cond.component, targets, options);
  return sampler.sample(cond.values, K, seed);
}

}  // namespace brpp
