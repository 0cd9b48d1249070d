#include "brpp/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "brpp/error.hpp"
#include "brpp/rng.hpp"

namespace brpp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool present(double v) { return !std::isnan(v); }

std::vector<int> all_periods(int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

ComponentMargins fit_component(const Eigen::MatrixXd& y, const std::vector<std::string>& ids,
                               std::span<const int> periods, const MarginOptions& options) {
  ComponentMargins out;
  std::vector<std::vector<double>> samples(y.rows());
  for (int i = 0; i < y.rows(); ++i) {
    for (int p : periods)
      if (present(y(i, p))) samples[i].push_back(y(i, p));
    if (samples[i].size() < 20)
      fail(ErrorCategory::fit_nonconvergence, "fit_margins: station " + ids[i] + " has fewer than 20 observed periods");
    StationGevFit f = fit_gev_mle(samples[i], std::nullopt, options.gev);
    f.station = ids[i];
    out.free.push_back(f);
  }
  if (out.free.size() >= 2) {
    out.shape = spatial_constancy_test(out.free, GevComponent::shape);
    out.location = spatial_constancy_test(out.free, GevComponent::location);
    out.scale = spatial_constancy_test(out.free, GevComponent::scale);
  }
  for (const auto& f : out.free) out.common_shape += f.params.shape;
  out.common_shape /= static_cast<double>(out.free.size());
  if (!options.common_shape) {
    out.final = out.free;
    return out;
  }
  for (int i = 0; i < y.rows(); ++i) {
    StationGevFit f = fit_gev_mle(samples[i], out.common_shape, options.gev);
    f.station = ids[i];
    out.final.push_back(f);
  }
  return out;
}

}  // namespace

EnsemblePanel::EnsemblePanel(int stations_, int periods_, int members_, int hours_)
    : stations(stations_), periods(periods_), members(members_), hours(hours_) {
  require(stations >= 0 && periods >= 0 && members >= 0 && hours >= 0, "EnsemblePanel: negative dimension");
  means.assign(static_cast<std::size_t>(stations) * periods * members * hours, kNaN);
  maxima.assign(static_cast<std::size_t>(stations) * periods * members, kNaN);
}

void validate_ensemble(const EnsemblePanel& e) {
  if (e.members < 2) fail(ErrorCategory::schema, "ensemble: at least 2 members required");
  if (e.hours < 1) fail(ErrorCategory::schema, "ensemble: at least 1 hour required");
  const std::size_t cells = static_cast<std::size_t>(e.stations) * e.periods;
  if (e.means.size() != cells * e.members * e.hours || e.maxima.size() != cells * e.members)
    fail(ErrorCategory::schema, "ensemble: storage does not match the stated dimensions");
  for (double v : e.means)
    if (present(v) && !(v >= 0.0 && std::isfinite(v))) fail(ErrorCategory::schema, "ensemble: negative or infinite mean wind");
  for (double v : e.maxima)
    if (present(v) && !(v >= 0.0 && std::isfinite(v))) fail(ErrorCategory::schema, "ensemble: negative or infinite maximum");
}

CellNormalization normalize_cell(std::span<const double> means, int members, int hours, double floor) {
  require(members >= 1 && hours >= 1, "normalize_cell: empty ensemble");
  require(static_cast<long>(members) * hours > 1, "normalize_cell: need J * H > 1");
  require(means.size() == static_cast<std::size_t>(members) * hours, "normalize_cell: size mismatch");
  require(floor > 0.0, "normalize_cell: floor must be positive");
  CellNormalization out{-std::numeric_limits<double>::infinity(), 0.0};
  for (int j = 0; j < members; ++j) {
    double sum = 0.0;
    for (int h = 0; h < hours; ++h) sum += means[j * hours + h];
    out.location = std::max(out.location, sum / hours);
  }
  double ss = 0.0;
  for (double v : means) ss += (v - out.location) * (v - out.location);
  out.spread = std::max(std::sqrt(ss / (static_cast<double>(members) * hours - 1.0)), floor);
  return out;
}

Normalization ensemble_normalization(const EnsemblePanel& e, double floor) {
  validate_ensemble(e);
  Normalization n{Eigen::MatrixXd::Constant(e.stations, e.periods, kNaN),
                  Eigen::MatrixXd::Constant(e.stations, e.periods, kNaN)};
  for (int s = 0; s < e.stations; ++s)
    for (int p = 0; p < e.periods; ++p) {
      const auto cell = e.cell_means(s, p);
      if (!std::all_of(cell.begin(), cell.end(), present)) continue;
      const CellNormalization c = normalize_cell(cell, e.members, e.hours, floor);
      n.location(s, p) = c.location;
      n.spread(s, p) = c.spread;
    }
  return n;
}

double vmax_pred(std::span<const double> member_maxima) {
  require(!member_maxima.empty(), "vmax_pred: no members");
  return *std::max_element(member_maxima.begin(), member_maxima.end());
}

Eigen::MatrixXd vmax_pred(const EnsemblePanel& e) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(e.stations, e.periods, kNaN);
  for (int s = 0; s < e.stations; ++s)
    for (int p = 0; p < e.periods; ++p) {
      const auto cell = e.cell_maxima(s, p);
      if (!cell.empty() && std::all_of(cell.begin(), cell.end(), present)) out(s, p) = vmax_pred(cell);
    }
  return out;
}

void validate_panel(const MaximaPanel& panel) {
  const int n = panel.stations(), np = panel.periods();
  if (static_cast<int>(panel.station_ids.size()) != n) fail(ErrorCategory::schema, "panel: station ids and coordinates differ in length");
  if (static_cast<int>(panel.block_of.size()) != np) fail(ErrorCategory::schema, "panel: every period needs a block label");
  for (int b : panel.block_of)
    if (b < 0 || b >= static_cast<int>(panel.block_labels.size())) fail(ErrorCategory::schema, "panel: block index out of range");
  for (const Eigen::MatrixXd* m : {&panel.obs, &panel.pred})
    if (m->rows() != n || m->cols() != np) fail(ErrorCategory::schema, "panel: maxima matrix has the wrong shape");
  std::set<std::pair<double, double>> seen;
  for (int i = 0; i < n; ++i)
    if (!seen.insert({panel.locations[i].x, panel.locations[i].y}).second)
      fail(ErrorCategory::schema, "panel: station " + panel.station_ids[i] + " duplicates another station's coordinates");
  for (const Eigen::MatrixXd* m : {&panel.obs, &panel.pred})
    for (Eigen::Index k = 0; k < m->size(); ++k) {
      const double v = m->data()[k];
      if (present(v) && !(v >= 0.0 && std::isfinite(v))) fail(ErrorCategory::schema, "panel: negative or infinite maximum");
    }
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& v, const Normalization& norm) {
  require(norm.location.rows() == v.rows() && norm.location.cols() == v.cols() && norm.spread.rows() == v.rows() &&
              norm.spread.cols() == v.cols(),
          "standardize: normalization does not match the panel");
  Eigen::MatrixXd y(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index p = 0; p < v.cols(); ++p) {
      if (!present(v(i, p))) {
        y(i, p) = kNaN;
        continue;
      }
      const double m = norm.location(i, p), s = norm.spread(i, p);
      require(present(m) && present(s), "standardize: missing normalization for station " + std::to_string(i) +
                                            ", period " + std::to_string(p));
      y(i, p) = (v(i, p) - m) / s;
    }
  return y;
}

GevParams compose(const GevParams& standardized, double m, double s) {
  return {standardized.shape, m + s * standardized.location, s * standardized.scale};
}

MarginalFits MarginReport::fits() const {
  MarginalFits f;
  for (const auto& s : obs.final) f.obs.push_back(s.params);
  for (const auto& s : pred.final) f.pred.push_back(s.params);
  return f;
}

MarginReport fit_margins(const MaximaPanel& panel, const Normalization& norm, std::span<const int> periods,
                         const MarginOptions& options) {
  const std::vector<int> every = all_periods(panel.periods());
  if (periods.empty()) periods = every;
  MarginReport r;
  r.obs = fit_component(standardize(panel.obs, norm), panel.station_ids, periods, options);
  r.pred = fit_component(standardize(panel.pred, norm), panel.station_ids, periods, options);
  return r;
}

ClampedGumbel to_gumbel_clamped(double v, double m, double s, const GevParams& p) {
  require(s > 0.0, "to_gumbel_clamped: normalization scale must be positive");
  const double z = (v - m - s * p.location) / (s * p.scale);
  if (std::fabs(p.shape) >= kShapeZeroThreshold && p.shape * z <= -1.0) {
    const double prob = p.shape > 0.0 ? kSupportClampProb : 1.0 - kSupportClampProb;
    return {-std::log(-std::log(prob)), true};
  }
  return {to_gumbel(v, m, s, p), false};
}

GumbelPanel gumbel_panel(const MaximaPanel& panel, const Normalization& norm, const MarginalFits& fits,
                         std::span<const int> periods, int components) {
  require(components == 1 || components == 2, "gumbel_panel: one or two components");
  const int n = panel.stations();
  require(static_cast<int>(fits.obs.size()) == n && (components == 1 || static_cast<int>(fits.pred.size()) == n),
          "gumbel_panel: fits do not cover every station");
  const std::vector<int> every = all_periods(panel.periods());
  if (periods.empty()) periods = every;
  GumbelPanel out{Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(periods.size()), components * n, kNaN), 0};
  for (std::size_t r = 0; r < periods.size(); ++r) {
    const int p = periods[r];
    for (int c = 0; c < components; ++c)
      for (int i = 0; i < n; ++i) {
        const double v = c == 0 ? panel.obs(i, p) : panel.pred(i, p);
        const double m = norm.location(i, p), s = norm.spread(i, p);
        if (!present(v) || !present(m) || !present(s)) continue;
        const ClampedGumbel g = to_gumbel_clamped(v, m, s, c == 0 ? fits.obs[i] : fits.pred[i]);
        out.values(static_cast<Eigen::Index>(r), c * n + i) = g.value;
        out.clamped += g.clamped;
      }
  }
  return out;
}

PostProcessor::PostProcessor(const BivVariogramParams& model, std::span<const Point> sites, const MarginalFits& fits,
                             const PostprocessOptions& options)
    : model_(model), sites_(sites.begin(), sites.end()), fits_(fits), options_(options) {
  require_valid(model_);
  const int n = static_cast<int>(sites_.size());
  require(n >= 1, "PostProcessor: no sites");
  require(static_cast<int>(fits_.obs.size()) == n && static_cast<int>(fits_.pred.size()) == n,
          "PostProcessor: marginal fits do not cover every site");
  require(options_.neighbors >= 0, "PostProcessor: negative neighbor count");
  for (const auto* v : {&fits_.obs, &fits_.pred})
    for (const GevParams& g : *v) validate_gev(g);
  neighbors_.resize(n);
  if (options_.mode == ConditioningMode::joint) {
    require(n <= 20, "PostProcessor: joint conditioning supports at most 20 sites");
    for (auto& nb : neighbors_) nb = all_periods(n);
    return;
  }
  for (int i = 0; i < n; ++i) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (a == i || b == i) return a == i && b != i;
      return distance(sites_[a], sites_[i]) < distance(sites_[b], sites_[i]);
    });
    order.resize(std::min(n, options_.neighbors + 1));
    std::sort(order.begin(), order.end());
    neighbors_[i] = order;
  }
}

ConditionalSampler& PostProcessor::sampler(const std::vector<int>& cond, const std::vector<int>& targets) {
  auto key = std::make_pair(cond, targets);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  std::vector<Point> cs;
  for (int c : cond) cs.push_back(sites_[c]);
  std::vector<SiteComponent> ts;
  for (int t : targets) ts.push_back({sites_[t], 0});
  return cache_.emplace(std::move(key), ConditionalSampler(model_, cs, 1, ts, options_.sampler)).first->second;
}

PostprocessResult PostProcessor::run(std::span<const double> vmax, std::span<const double> m,
                                     std::span<const double> s, int K, std::uint64_t seed) {
  const int n = site_count();
  require(static_cast<int>(vmax.size()) == n && static_cast<int>(m.size()) == n && static_cast<int>(s.size()) == n,
          "postprocess: inputs must cover every site");
  require(K >= 1, "postprocess: K must be positive");
  PostprocessResult out{Eigen::MatrixXd::Constant(K, n, kNaN), {}};

  // Step 1.
  std::vector<double> x(n, kNaN);
  for (int i = 0; i < n; ++i) {
    if (!present(vmax[i]) || !present(m[i]) || !present(s[i])) continue;
    const ClampedGumbel g = to_gumbel_clamped(vmax[i], m[i], s[i], fits_.pred[i]);
    x[i] = g.value;
    if (g.clamped) out.clamped_sites.push_back(i);
  }

  // Step 3 applied to a K x |targets| Gumbel block.
  auto finish = [&](const Eigen::MatrixXd& g, const std::vector<int>& targets) {
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const int i = targets[t];
      if (!present(m[i]) || !present(s[i])) continue;
      for (int r = 0; r < K; ++r) out.fields(r, i) = from_gumbel(g(r, static_cast<Eigen::Index>(t)), m[i], s[i], fits_.obs[i]);
    }
  };
  auto unconditional = [&](std::uint64_t stream) {
    Eigen::MatrixXd g(K, 1);
    for (int r = 0; r < K; ++r) {
      Rng rng = make_stream(stream, static_cast<std::uint64_t>(r));
      g(r, 0) = -std::log(-std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng)));
    }
    return g;
  };

  // Step 2.
  if (options_.mode == ConditioningMode::joint) {
    std::vector<int> cond, targets = all_periods(n);
    std::vector<double> values;
    for (int i = 0; i < n; ++i)
      if (present(x[i])) cond.push_back(i), values.push_back(x[i]);
    if (cond.empty()) {
      for (int i = 0; i < n; ++i) finish(unconditional(stream_seed(seed, i)), {i});
      return out;
    }
    finish(sampler(cond, targets).sample(values, K, seed), targets);
    return out;
  }
  for (int i = 0; i < n; ++i) {
    if (!present(m[i]) || !present(s[i])) continue;
    std::vector<int> cond;
    std::vector<double> values;
    for (int c : neighbors_[i])
      if (present(x[c])) cond.push_back(c), values.push_back(x[c]);
    const std::uint64_t stream = stream_seed(seed, static_cast<std::uint64_t>(i));
    if (cond.empty())
      finish(unconditional(stream), {i});
    else
      finish(sampler(cond, {i}).sample(values, K, stream), {i});
  }
  return out;
}

PostprocessResult postprocess(const BivVariogramParams& model, std::span<const Point> sites,
                              std::span<const double> vmax, std::span<const double> m, std::span<const double> s,
                              const MarginalFits& fits, int K, std::uint64_t seed, const PostprocessOptions& options) {
  PostProcessor pp(model, sites, fits, options);
  return pp.run(vmax, m, s, K, seed);
}

}  // namespace brpp
