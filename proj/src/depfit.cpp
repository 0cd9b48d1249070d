#include "brpp/depfit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <tuple>

#include "brpp/error.hpp"
#include "brpp/optim.hpp"
#include "brpp/rng.hpp"
#include "brpp/special.hpp"

namespace brpp {

namespace {

// Label -> period indices, in increasing label order.
std::vector<std::vector<int>> group_blocks(std::span<const int> block_of) {
  std::map<int, std::vector<int>> groups;
  for (int p = 0; p < static_cast<int>(block_of.size()); ++p) groups[block_of[p]].push_back(p);
  std::vector<std::vector<int>> out;
  for (auto& [label, idx] : groups) out.push_back(std::move(idx));
  return out;
}

std::vector<double> leave_out(std::span<const double> x, std::span<const int> block_of, int label) {
  std::vector<double> out;
  for (std::size_t p = 0; p < x.size(); ++p)
    if (block_of[p] != label) out.push_back(x[p]);
  return out;
}

double madogram_from_ranks(const double* ra, const double* rb, int n) {
  double s = 0.0;
  for (int p = 0; p < n; ++p) s += std::fabs(ra[p] - rb[p]);
  return s / (2.0 * n * (n - 1.0));
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

constexpr double kSmoothMin = 0.02;
constexpr double kSmoothMax = 8.0;

std::vector<double> pack(const DependenceModel& m) {
  if (const auto* u = std::get_if<UnivVariogramParams>(&m)) {
    const double a = std::clamp(u->exponent / 2.0, 1e-9, 1.0 - 1e-9);
    return {std::log(u->scale), std::log(u->aniso.ratio), u->aniso.angle, logit(a)};
  }
  const auto& p = std::get<BivVariogramParams>(m);
  auto nu = [](double v) { return logit(std::clamp((v - kSmoothMin) / (kSmoothMax - kSmoothMin), 1e-9, 1.0 - 1e-9)); };
  const double r = std::clamp(p.rho / p.max_abs_rho(), -1.0 + 1e-9, 1.0 - 1e-9);
  return {std::log(p.sill),
          std::log(p.common_scale),
          std::log(p.aniso.ratio),
          p.aniso.angle,
          logit(std::clamp(p.long_range, 1e-9, 1.0 - 1e-9)),
          std::log(std::max(p.constant, 1e-6)),
          std::log(std::max(p.amp1, 1e-6)),
          nu(p.smooth1),
          std::log(std::max(p.amp2, 1e-6)),
          nu(p.smooth2),
          std::log(p.matern_scale),
          std::atanh(r)};
}

DependenceModel unpack(std::span<const double> x, ModelKind kind) {
  if (kind == ModelKind::univariate) return UnivVariogramParams{std::exp(x[0]), {std::exp(x[1]), x[2]}, 2.0 * logistic(x[3])};
  BivVariogramParams p;
  p.sill = std::exp(x[0]);
  p.common_scale = std::exp(x[1]);
  p.aniso = {std::exp(x[2]), x[3]};
  p.long_range = logistic(x[4]);
  p.constant = std::exp(x[5]);
  p.amp1 = std::exp(x[6]);
  p.smooth1 = kSmoothMin + (kSmoothMax - kSmoothMin) * logistic(x[7]);
  p.amp2 = std::exp(x[8]);
  p.smooth2 = kSmoothMin + (kSmoothMax - kSmoothMin) * logistic(x[9]);
  p.matern_scale = std::exp(x[10]);
  p.rho = std::tanh(x[11]) * p.max_abs_rho();
  return p;
}

DependenceModel canonical(const DependenceModel& m) {
  return std::visit([](const auto& p) -> DependenceModel { return canonicalize(p); }, m);
}

// Estimates sorted canonically and grouped by site pair so that each lag is
// evaluated once per objective call.
class CompiledObjective {
 public:
  CompiledObjective(std::span<const ThetaEstimate> estimates, std::span<const Point> locations, bool squared_weight) {
    std::vector<ThetaEstimate> sorted(estimates.begin(), estimates.end());
    std::sort(sorted.begin(), sorted.end(), [](const ThetaEstimate& a, const ThetaEstimate& b) {
      return std::tie(a.site_i, a.site_j, a.comp_i, a.comp_j, a.theta, a.variance) <
             std::tie(b.site_i, b.site_j, b.comp_i, b.comp_j, b.theta, b.variance);
    });
    const int n = static_cast<int>(locations.size());
    std::map<std::pair<int, int>, int> lag_index;
    for (const ThetaEstimate& e : sorted) {
      require(e.site_i >= 0 && e.site_i < n && e.site_j >= 0 && e.site_j < n, "wls_objective: site index out of range");
      require(e.comp_i >= 0 && e.comp_i < 2 && e.comp_j >= 0 && e.comp_j < 2, "wls_objective: component out of range");
      if (!(e.variance > 0.0)) {
        ++excluded_;
        continue;
      }
      const auto key = std::minmax(e.site_i, e.site_j);
      auto [it, inserted] = lag_index.try_emplace(key, static_cast<int>(lags_.size()));
      if (inserted) lags_.push_back(locations[key.first] - locations[key.second]);
      const double w = squared_weight ? 1.0 / e.variance : 1.0 / std::sqrt(e.variance);
      terms_.push_back({it->second, e.comp_i, e.comp_j, e.theta, w});
    }
    require(!terms_.empty(), "wls_objective: no estimates with positive variance");
  }

  int excluded() const { return excluded_; }

  double operator()(const DependenceModel& m) const {
    std::vector<Eigen::Matrix2d> theta(lags_.size());
    for (std::size_t l = 0; l < lags_.size(); ++l) {
      Eigen::Matrix2d g;
      if (const auto* u = std::get_if<UnivVariogramParams>(&m))
        g.setConstant(univ_variogram(lags_[l], *u));
      else
        g = biv_variogram(lags_[l], std::get<BivVariogramParams>(m));
      for (int i = 0; i < 4; ++i) theta[l](i) = 2.0 * special::normal_cdf(std::sqrt(std::max(g(i), 0.0) / 2.0));
    }
    double s = 0.0;
    for (const Term& t : terms_) {
      const double r = (t.theta - theta[t.lag](t.k1, t.k2)) * t.weight;
      s += r * r;
    }
    return s;
  }

 private:
  struct Term {
    int lag, k1, k2;
    double theta, weight;
  };
  std::vector<Point> lags_;
  std::vector<Term> terms_;
  int excluded_ = 0;
};

double median_distance(std::span<const Point> locations) {
  std::vector<double> d;
  for (std::size_t i = 0; i < locations.size(); ++i)
    for (std::size_t j = i + 1; j < locations.size(); ++j) d.push_back(distance(locations[i], locations[j]));
  if (d.empty()) return 1.0;
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return std::max(d[d.size() / 2], 1e-6);
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  for (int i = 0; i < n;) {
    int j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * (i + j) + 1.0;
    for (int t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double fmadogram(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "fmadogram: series lengths differ");
  require(a.size() >= 2, "fmadogram: need at least two periods");
  const std::vector<double> ra = average_ranks(a), rb = average_ranks(b);
  return madogram_from_ranks(ra.data(), rb.data(), static_cast<int>(a.size()));
}

double theta_from_madogram(double nu) {
  require(nu >= 0.0, "theta_from_madogram: negative madogram");
  if (nu >= 0.5) return 2.0;
  return std::clamp((1.0 + 2.0 * nu) / (1.0 - 2.0 * nu), 1.0, 2.0);
}

double grouped_jackknife(std::span<const double> leave_out) {
  const double b = static_cast<double>(leave_out.size());
  require(leave_out.size() >= 2, "grouped_jackknife: need at least two blocks");
  const double mean = std::accumulate(leave_out.begin(), leave_out.end(), 0.0) / b;
  double ss = 0.0;
  for (double t : leave_out) ss += (t - mean) * (t - mean);
  return (b - 1.0) / b * ss;
}

double jackknife_variance(std::span<const double> a, std::span<const double> b, std::span<const int> block_of) {
  require(a.size() == b.size() && a.size() == block_of.size(), "jackknife_variance: length mismatch");
  const auto blocks = group_blocks(block_of);
  require(blocks.size() >= 2, "jackknife_variance: need at least two blocks");
  std::vector<double> est;
  for (const auto& idx : blocks) {
    const int label = block_of[idx.front()];
    const std::vector<double> la = leave_out(a, block_of, label), lb = leave_out(b, block_of, label);
    require(la.size() >= 2, "jackknife_variance: a leave-one-block-out panel has fewer than two periods");
    est.push_back(theta_from_madogram(fmadogram(la, lb)));
  }
  return grouped_jackknife(est);
}

std::vector<ThetaEstimate> estimate_extremal_coeffs(const Eigen::MatrixXd& panel, std::span<const Point> locations,
                                                    std::span<const int> block_of, PairScheme scheme,
                                                    double max_distance) {
  const int n = static_cast<int>(locations.size());
  const int periods = static_cast<int>(panel.rows());
  require(n >= 1 && panel.cols() % n == 0, "estimate_extremal_coeffs: panel columns must be a multiple of the site count");
  const int comps = static_cast<int>(panel.cols()) / n;
  require(comps == 1 || comps == 2, "estimate_extremal_coeffs: one or two components supported");
  require(static_cast<int>(block_of.size()) == periods, "estimate_extremal_coeffs: block labels must cover every period");
  require(periods >= 2, "estimate_extremal_coeffs: need at least two periods");
  const auto blocks = group_blocks(block_of);
  require(blocks.size() >= 2, "estimate_extremal_coeffs: need at least two blocks");

  const int cols = comps * n;
  // Columns with missing (NaN) entries take the pairwise-complete slow path.
  std::vector<bool> complete(cols);
  for (int c = 0; c < cols; ++c) complete[c] = panel.col(c).allFinite();
  Eigen::MatrixXd ranks = Eigen::MatrixXd::Zero(periods, cols);
  std::vector<Eigen::MatrixXd> loo_ranks(blocks.size());
  for (int c = 0; c < cols; ++c) {
    if (!complete[c]) continue;
    const Eigen::VectorXd col = panel.col(c);
    const std::vector<double> r = average_ranks(std::span<const double>(col.data(), periods));
    ranks.col(c) = Eigen::Map<const Eigen::VectorXd>(r.data(), periods);
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const int label = block_of[blocks[b].front()];
    const int m = periods - static_cast<int>(blocks[b].size());
    require(m >= 2, "estimate_extremal_coeffs: a leave-one-block-out panel has fewer than two periods");
    loo_ranks[b].setZero(m, cols);
    for (int c = 0; c < cols; ++c) {
      if (!complete[c]) continue;
      const Eigen::VectorXd col = panel.col(c);
      const std::vector<double> kept = leave_out(std::span<const double>(col.data(), periods), block_of, label);
      const std::vector<double> r = average_ranks(kept);
      loo_ranks[b].col(c) = Eigen::Map<const Eigen::VectorXd>(r.data(), m);
    }
  }

  // nullopt when fewer than two periods are jointly observed. A pair observed
  // in fewer than two blocks gets variance 0 and is excluded from fitting.
  auto estimate = [&](int i, int j, int k1, int k2) -> std::optional<ThetaEstimate> {
    const int ca = k1 * n + i, cb = k2 * n + j;
    ThetaEstimate e{i, j, k1, k2, 0.0, 0.0};
    if (!complete[ca] || !complete[cb]) {
      std::vector<double> a, b;
      std::vector<int> lab;
      for (int p = 0; p < periods; ++p)
        if (std::isfinite(panel(p, ca)) && std::isfinite(panel(p, cb))) {
          a.push_back(panel(p, ca));
          b.push_back(panel(p, cb));
          lab.push_back(block_of[p]);
        }
      if (a.size() < 2) return std::nullopt;
      e.theta = theta_from_madogram(fmadogram(a, b));
      const auto sub = group_blocks(lab);
      bool usable = sub.size() >= 2;
      for (const auto& idx : sub) usable = usable && a.size() - idx.size() >= 2;
      if (usable) e.variance = jackknife_variance(a, b, lab);
      return e;
    }
    e.theta = theta_from_madogram(madogram_from_ranks(&ranks(0, ca), &ranks(0, cb), periods));
    std::vector<double> loo(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& r = loo_ranks[b];
      loo[b] = theta_from_madogram(madogram_from_ranks(&r(0, ca), &r(0, cb), static_cast<int>(r.rows())));
    }
    e.variance = grouped_jackknife(loo);
    return e;
  };

  std::vector<ThetaEstimate> out;
  if (scheme == PairScheme::unordered) {
    for (int k = 0; k < comps; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          if (distance(locations[i], locations[j]) <= max_distance)
            if (auto e = estimate(i, j, k, k)) out.push_back(*e);
  } else {
    // (i, j, k1, k2) and (j, i, k2, k1) coincide; compute once.
    std::map<std::tuple<int, int, int, int>, std::optional<ThetaEstimate>> cache;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (distance(locations[i], locations[j]) > max_distance) continue;
        for (int k1 = 0; k1 < comps; ++k1)
          for (int k2 = 0; k2 < comps; ++k2) {
            if (i == j && k1 == k2) continue;
            const bool swap = std::tie(j, k2) < std::tie(i, k1);
            const auto key = swap ? std::tuple{j, i, k2, k1} : std::tuple{i, j, k1, k2};
            auto it = cache.find(key);
            if (it == cache.end()) {
              const auto [a, b, c, d] = key;
              it = cache.emplace(key, estimate(a, b, c, d)).first;
            }
            if (!it->second) continue;
            ThetaEstimate e = *it->second;
            e.site_i = i;
            e.site_j = j;
            e.comp_i = k1;
            e.comp_j = k2;
            out.push_back(e);
          }
      }
  }
  return out;
}

double wls_objective(std::span<const ThetaEstimate> estimates, std::span<const Point> locations,
                     const DependenceModel& params) {
  require(!estimates.empty(), "wls_objective: empty estimate list");
  require_valid(params);
  const bool biv = std::holds_alternative<BivVariogramParams>(params);
  if (!biv)
    for (const ThetaEstimate& e : estimates)
      require(e.comp_i == 0 && e.comp_j == 0, "wls_objective: univariate model with a cross-component estimate");
  return CompiledObjective(estimates, locations, biv)(params);
}

FitResult fit_dependence(std::span<const ThetaEstimate> estimates, std::span<const Point> locations, ModelKind kind,
                         std::span<const DependenceModel> starts, const DependenceFitOptions& options) {
  require(!estimates.empty(), "fit_dependence: empty estimate list");
  require(!starts.empty(), "fit_dependence: need at least one start");
  const bool biv = kind == ModelKind::bivariate;
  const CompiledObjective objective(estimates, locations, biv);
  auto f = [&](std::span<const double> x) {
    const DependenceModel m = unpack(x, kind);
    if (validate_model(canonical(m))) return std::numeric_limits<double>::infinity();
    return objective(m);
  };

  FitResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < starts.size(); ++s) {
    require((starts[s].index() == 1) == biv, "fit_dependence: start does not match the model kind");
    NelderMeadOptions nm;
    nm.max_evals = options.max_evals;
    nm.ftol_rel = options.ftol_rel;
    nm.ftol_abs = 1e-14;
    nm.xtol = 1e-6;
    nm.steps = {0.3};
    NelderMeadResult res = nelder_mead(f, pack(starts[s]), nm);
    int evals = res.evals, iters = res.iterations;
    if (std::isfinite(res.value) && evals < options.max_evals) {
      nm.steps = {0.1};
      nm.max_evals = options.max_evals - evals;
      NelderMeadResult again = nelder_mead(f, res.x, nm);
      evals += again.evals;
      iters += again.iterations;
      if (again.value <= res.value) res = again;
    }
    if (std::isfinite(res.value) && res.value < best.objective) {
      best.params = canonical(unpack(res.x, kind));
      best.objective = res.value;
      best.converged = res.converged;
      best.best_start = static_cast<int>(s);
    }
    best.evaluations += evals;
    best.iterations += iters;
  }
  if (!std::isfinite(best.objective))
    fail(ErrorCategory::fit_nonconvergence, "fit_dependence: no start produced a finite objective");
  best.excluded_pairs = objective.excluded();
  return best;
}

std::vector<DependenceModel> default_starts(ModelKind kind, std::span<const Point> locations, int count,
                                            std::uint64_t seed) {
  require(count >= 1, "default_starts: count must be positive");
  const double d = median_distance(locations);
  Rng rng = make_stream(seed, 0xD3F17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<DependenceModel> out;
  for (int s = 0; s < count; ++s) {
    // t in [0, 1] per coordinate; the first start sits at the center.
    auto t = [&]() { return s == 0 ? 0.5 : u(rng); };
    auto log_box = [&](double lo, double hi) { return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * t()); };
    auto box = [&](double lo, double hi) { return lo + (hi - lo) * t(); };
    const double angle = box(-0.7, 0.7);
    if (kind == ModelKind::univariate) {
      out.push_back(UnivVariogramParams{log_box(0.2 / d, 3.0 / d), {log_box(0.6, 1.7), angle}, box(0.5, 1.8)});
    } else {
      BivVariogramParams p;
      p.aniso = {log_box(0.6, 1.7), angle};
      p.sill = log_box(0.3, 3.0);
      p.common_scale = log_box(0.2 / d, 3.0 / d);
      p.long_range = box(0.1, 0.9);
      p.constant = log_box(0.05, 1.5);
      p.amp1 = log_box(0.2, 2.0);
      p.smooth1 = log_box(0.3, 3.0);
      p.amp2 = log_box(0.2, 2.0);
      p.smooth2 = log_box(0.3, 3.0);
      p.matern_scale = log_box(0.2 / d, 3.0 / d);
      p.rho = box(-0.9, 0.9) * p.max_abs_rho();
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace brpp
