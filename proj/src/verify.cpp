#include "brpp/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <set>

#include "brpp/error.hpp"
#include "brpp/maxstable.hpp"
#include "brpp/rng.hpp"

namespace brpp {

namespace {

// Shared summation order keeps the one-dimensional energy score and the CRPS
// bit-identical.
template <class ToObs, class Between>
double plugin_score(int K, ToObs to_obs, Between between) {
  double a = 0.0;
  for (int i = 0; i < K; ++i) a += to_obs(i);
  double b = 0.0;
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) b += between(i, j);
  const double k = static_cast<double>(K);
  return std::max(0.0, a / k - b / (k * k));
}

bool present(double v) { return !std::isnan(v); }

std::vector<int> every_period(int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

void finalize_skill(Skill& s, const std::vector<std::pair<double, double>>& score_ref) {
  double num = 0.0, den = 0.0;
  s = Skill{};
  for (const auto& [score, ref] : score_ref) {
    num += score;
    den += ref;
    ++s.units;
    if (ref > 0.0 && skill_score(score, ref) > 0.0) ++s.positive;
  }
  if (den > 0.0) s.overall = skill_score(num, den);
}

class Fnv {
 public:
  void add(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h_ = (h_ ^ b[i]) * 0x100000001B3ULL;
  }
  void add(double v) {
    if (std::isnan(v)) v = std::numeric_limits<double>::quiet_NaN();
    add(&v, sizeof v);
  }
  void add(int v) { add(&v, sizeof v); }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

}  // namespace

double crps_empirical(std::span<const double> y, double x) {
  require(!y.empty(), "crps_empirical: empty sample");
  return plugin_score(
      static_cast<int>(y.size()), [&](int i) { return std::fabs(y[i] - x); },
      [&](int i, int j) { return std::fabs(y[i] - y[j]); });
}

double energy_score(const Eigen::MatrixXd& y, const Eigen::VectorXd& x, double chi) {
  require(y.rows() >= 1, "energy_score: empty sample");
  require(chi > 0.0 && chi < 2.0, "energy_score: chi must lie in (0, 2)");
  require(y.cols() == x.size(), "energy_score: dimension mismatch");
  const bool scalar = y.cols() == 1;
  auto power = [chi](double r) { return chi == 1.0 ? r : std::pow(r, chi); };
  auto dist = [&](auto&& a, auto&& b) {
    if (scalar) return std::fabs(a(0) - b(0));
    return (a - b).norm();
  };
  return plugin_score(
      static_cast<int>(y.rows()), [&](int i) { return power(dist(y.row(i).transpose(), x)); },
      [&](int i, int j) { return power(dist(y.row(i), y.row(j))); });
}

double skill_score(double score, double reference) {
  require(reference > 0.0, "skill_score: reference must be positive");
  return 1.0 - score / reference;
}

void ScoreReport::finalize() {
  std::vector<std::pair<double, double>> a, b, c, d;
  for (const auto& s : stations) {
    if (s.periods == 0) continue;
    const double n = s.periods;
    a.push_back({s.crps_obs / n, s.crps_pred / n});
    b.push_back({s.crps_obs / n, s.crps_orig / n});
    c.push_back({s.crps_biv / n, s.crps_orig / n});
  }
  for (const auto& p : pairs)
    if (p.periods > 0) d.push_back({p.es_br / p.periods, p.es_ind / p.periods});
  finalize_skill(obs_vs_pred, a);
  finalize_skill(obs_vs_orig, b);
  finalize_skill(biv_vs_orig, c);
  finalize_skill(br_vs_ind, d);
}

ScoreReport score_models(const MaximaPanel& panel, const EnsemblePanel& ensemble, const Normalization& norm,
                         const FittedModels& models, std::span<const int> periods, const ScoreOptions& options,
                         std::uint64_t seed) {
  const int n = panel.stations();
  require(ensemble.stations == n && ensemble.periods == panel.periods(), "score_models: ensemble does not match the panel");
  require(options.K >= 1 && options.es_samples_br >= 1 && options.es_samples_ind >= 1 && options.es_pairs >= 0,
          "score_models: sample sizes must be positive");
  const std::vector<int> all = every_period(panel.periods());
  if (periods.empty()) periods = all;

  ScoreReport r;
  r.seed = seed;
  r.K = options.K;
  r.es_samples_br = options.es_samples_br;
  r.es_samples_ind = options.es_samples_ind;
  r.periods.assign(periods.begin(), periods.end());
  for (int i = 0; i < n; ++i) r.stations.push_back({panel.station_ids[i]});

  const Eigen::MatrixXd vp = vmax_pred(ensemble);
  PostProcessor pp(models.joint, panel.locations, models.margins, options.postprocess);
  for (int p : periods) {
    require(p >= 0 && p < panel.periods(), "score_models: period out of range");
    const auto col = [&](const Eigen::MatrixXd& m) { return std::span<const double>(m.col(p).data(), n); };
    const PostprocessResult post = pp.run(col(vp), col(norm.location), col(norm.spread), options.K, stream_seed(seed, p));
    r.clamped += static_cast<int>(post.clamped_sites.size());
    for (int i = 0; i < n; ++i) {
      const double v = panel.obs(i, p), m = norm.location(i, p), s = norm.spread(i, p);
      if (!present(v) || !present(m) || !present(s) || !present(vp(i, p))) continue;
      StationScore& st = r.stations[i];
      ++st.periods;
      st.crps_obs += crps_gev(compose(models.margins.obs[i], m, s), v);
      st.crps_pred += crps_gev(compose(models.margins.pred[i], m, s), v);
      st.crps_orig += crps_empirical(ensemble.cell_maxima(i, p), v);
      const Eigen::VectorXd draws = post.fields.col(i);
      st.crps_biv += crps_empirical(std::span<const double>(draws.data(), draws.size()), v);
    }
  }

  if (options.es_pairs > 0 && n >= 2) {
    std::vector<std::tuple<double, int, int>> cand;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) cand.emplace_back(distance(panel.locations[i], panel.locations[j]), i, j);
    std::sort(cand.begin(), cand.end());
    cand.resize(std::min<std::size_t>(cand.size(), options.es_pairs));
    std::set<int> used;
    for (const auto& [d, i, j] : cand) used.insert(i), used.insert(j);
    const std::vector<int> sub(used.begin(), used.end());
    std::vector<int> slot(n, -1);
    std::vector<Point> sub_locs;
    for (std::size_t k = 0; k < sub.size(); ++k) slot[sub[k]] = static_cast<int>(k), sub_locs.push_back(panel.locations[sub[k]]);

    // Gumbel-scale draws shared by all periods.
    const auto br = simulate_br(sub_locs, models.spatial, options.es_samples_br, stream_seed(seed, 0xE5B0));
    Eigen::MatrixXd ind(options.es_samples_ind, sub.size());
    for (std::size_t k = 0; k < sub.size(); ++k) {
      Rng rng = make_stream(stream_seed(seed, 0x1DD0), static_cast<std::uint64_t>(sub[k]));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (int t = 0; t < options.es_samples_ind; ++t) ind(t, static_cast<Eigen::Index>(k)) = -std::log(-std::log(u(rng)));
    }

    Eigen::MatrixXd ybr(options.es_samples_br, 2), yind(options.es_samples_ind, 2);
    for (const auto& [d, i, j] : cand) {
      PairScore ps{i, j, d};
      for (int p : periods) {
        const double vi = panel.obs(i, p), vj = panel.obs(j, p);
        const double mi = norm.location(i, p), si = norm.spread(i, p), mj = norm.location(j, p), sj = norm.spread(j, p);
        if (!present(vi) || !present(vj) || !present(mi) || !present(si) || !present(mj) || !present(sj)) continue;
        for (int t = 0; t < options.es_samples_br; ++t) {
          ybr(t, 0) = from_gumbel(br[t].values(slot[i], 0), mi, si, models.margins.obs[i]);
          ybr(t, 1) = from_gumbel(br[t].values(slot[j], 0), mj, sj, models.margins.obs[j]);
        }
        for (int t = 0; t < options.es_samples_ind; ++t) {
          yind(t, 0) = from_gumbel(ind(t, slot[i]), mi, si, models.margins.obs[i]);
          yind(t, 1) = from_gumbel(ind(t, slot[j]), mj, sj, models.margins.obs[j]);
        }
        const Eigen::Vector2d x(vi, vj);
        ++ps.periods;
        ps.es_br += energy_score(ybr, x, options.chi);
        ps.es_ind += energy_score(yind, x, options.chi);
      }
      r.pairs.push_back(ps);
    }
  }
  r.finalize();
  return r;
}

ScoreReport merge_reports(const ScoreReport& a, const ScoreReport& b) {
  require(a.stations.size() == b.stations.size() && a.pairs.size() == b.pairs.size(),
          "merge_reports: reports cover different units");
  ScoreReport r = a;
  for (std::size_t i = 0; i < r.stations.size(); ++i) {
    require(r.stations[i].station == b.stations[i].station, "merge_reports: station order differs");
    r.stations[i].periods += b.stations[i].periods;
    r.stations[i].crps_obs += b.stations[i].crps_obs;
    r.stations[i].crps_pred += b.stations[i].crps_pred;
    r.stations[i].crps_orig += b.stations[i].crps_orig;
    r.stations[i].crps_biv += b.stations[i].crps_biv;
  }
  for (std::size_t k = 0; k < r.pairs.size(); ++k) {
    require(r.pairs[k].site_i == b.pairs[k].site_i && r.pairs[k].site_j == b.pairs[k].site_j,
            "merge_reports: pair order differs");
    r.pairs[k].periods += b.pairs[k].periods;
    r.pairs[k].es_br += b.pairs[k].es_br;
    r.pairs[k].es_ind += b.pairs[k].es_ind;
  }
  r.clamped += b.clamped;
  r.periods.insert(r.periods.end(), b.periods.begin(), b.periods.end());
  r.finalize();
  return r;
}

FittedModels FitBundle::models() const { return {margins.fits(), spatial.params, std::get<BivVariogramParams>(joint.params)}; }

FitBundle fit_models(const MaximaPanel& panel, const Normalization& norm, std::span<const int> periods,
                     const FitOptions& options, std::uint64_t seed) {
  const std::vector<int> all = every_period(panel.periods());
  if (periods.empty()) periods = all;
  FitBundle b;
  b.margins = fit_margins(panel, norm, periods, options.margins);
  const MarginalFits fits = b.margins.fits();
  const GumbelPanel g = gumbel_panel(panel, norm, fits, periods, 2);
  b.clamped = g.clamped;
  std::vector<int> blocks;
  for (int p : periods) blocks.push_back(panel.block_of[p]);
  if (std::set<int>(blocks.begin(), blocks.end()).size() < 2)
    fail(ErrorCategory::invalid_argument, "fit_models: the fitting periods span fewer than two blocks");

  const int n = panel.stations();
  const auto uni = estimate_extremal_coeffs(g.values.leftCols(n), panel.locations, blocks, PairScheme::unordered,
                                            options.max_distance);
  b.spatial = fit_dependence(uni, panel.locations, ModelKind::univariate,
                             default_starts(ModelKind::univariate, panel.locations, options.starts_univariate, seed),
                             options.dependence);
  const auto biv = estimate_extremal_coeffs(g.values, panel.locations, blocks, PairScheme::ordered_all_components,
                                            options.max_distance);
  b.joint = fit_dependence(biv, panel.locations, ModelKind::bivariate,
                           default_starts(ModelKind::bivariate, panel.locations, options.starts_bivariate, seed),
                           options.dependence);
  return b;
}

std::uint64_t fit_input_hash(const MaximaPanel& panel, const EnsemblePanel& ensemble, std::span<const int> periods) {
  Fnv h;
  for (const Point& s : panel.locations) h.add(s.x), h.add(s.y);
  for (int p : periods) {
    h.add(p);
    h.add(panel.block_of[p]);
    for (int i = 0; i < panel.stations(); ++i) {
      h.add(panel.obs(i, p));
      h.add(panel.pred(i, p));
      for (double v : ensemble.cell_means(i, p)) h.add(v);
      for (double v : ensemble.cell_maxima(i, p)) h.add(v);
    }
  }
  return h.value();
}

CrossValidationReport cross_validate(const MaximaPanel& panel, const EnsemblePanel& ensemble,
                                     const FitOptions& fit_options, const ScoreOptions& score_options,
                                     std::uint64_t seed, double spread_floor) {
  validate_panel(panel);
  const std::set<int> labels(panel.block_of.begin(), panel.block_of.end());
  require(labels.size() >= 2, "cross_validate: need at least two blocks");
  const Normalization norm = ensemble_normalization(ensemble, spread_floor);
  CrossValidationReport out;
  for (int b : labels) {
    FoldReport f;
    f.block = b;
    f.label = panel.block_labels[b];
    std::vector<int> held;
    for (int p = 0; p < panel.periods(); ++p) (panel.block_of[p] == b ? held : f.training_periods).push_back(p);
    f.training_hash = fit_input_hash(panel, ensemble, f.training_periods);
    f.models = fit_models(panel, norm, f.training_periods, fit_options, seed).models();
    f.scores = score_models(panel, ensemble, norm, f.models, held, score_options, seed);
    out.pooled = out.folds.empty() ? f.scores : merge_reports(out.pooled, f.scores);
    out.folds.push_back(std::move(f));
  }
  return out;
}

}  // namespace brpp
