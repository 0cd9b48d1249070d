#include "brpp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "brpp/error.hpp"
#include "brpp/maxstable.hpp"
#include "brpp/rng.hpp"

namespace brpp {

BivVariogramParams synthetic_default_model() {
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

SyntheticData generate_synthetic(const SyntheticConfig& c) {
  require(c.stations >= 2 && c.periods >= 2 && c.periods_per_block >= 1, "generate_synthetic: too small");
  require(c.members >= 2 && c.hours >= 1, "generate_synthetic: ensemble too small");
  require(c.missing_fraction >= 0.0 && c.missing_fraction < 1.0, "generate_synthetic: missing fraction in [0, 1)");
  require_valid(c.model);
  const int n = c.stations, np = c.periods;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;

  SyntheticData d;
  d.model = c.model;
  MaximaPanel& panel = d.panel;
  Rng geo = make_stream(c.seed, 0);
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "S%03d", i + 1);
    panel.station_ids.push_back(buf);
    panel.locations.push_back({std::round(c.width_km * unif(geo) * 1000.0) / 1000.0,
                               std::round(c.height_km * unif(geo) * 1000.0) / 1000.0});
  }
  for (int p = 0; p < np; ++p) {
    std::snprintf(buf, sizeof buf, "P%04d", p + 1);
    panel.period_ids.push_back(buf);
    const int b = p / c.periods_per_block;
    if (b == static_cast<int>(panel.block_labels.size())) {
      std::snprintf(buf, sizeof buf, "M%02d", b + 1);
      panel.block_labels.push_back(buf);
    }
    panel.block_of.push_back(b);
  }

  // Location and scale co-vary across stations; pred is biased low and
  // under-dispersed relative to obs.
  Rng st = make_stream(c.seed, 1);
  std::vector<double> exposure(n);
  for (int i = 0; i < n; ++i) {
    const double u = unif(st);
    exposure[i] = 0.8 + 0.4 * unif(st);
    const GevParams obs{c.obs_shape, 1.5 + 1.0 * u, 0.6 + 0.5 * u + 0.05 * normal(st)};
    const GevParams pred{c.pred_shape, obs.location - 0.1 - 0.1 * unif(st), 0.9 * obs.scale};
    d.truth.obs.push_back(obs);
    d.truth.pred.push_back(pred);
  }

  EnsemblePanel& e = d.ensemble;
  e = EnsemblePanel(n, np, c.members, c.hours);
  Rng wx = make_stream(c.seed, 2);
  for (int p = 0; p < np; ++p) {
    const double level = 4.0 + 6.0 * std::exp(0.4 * normal(wx) - 0.08);
    std::vector<double> member_bias(c.members);
    for (double& b : member_bias) b = 0.08 * normal(wx);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c.members; ++j)
        for (int h = 0; h < c.hours; ++h)
          e.mean(i, p, j, h) = std::max(0.0, level * exposure[i] * (1.0 + member_bias[j]) + 0.6 * normal(wx));
  }
  const Normalization norm = ensemble_normalization(e);

  const auto fields = simulate_br(panel.locations, c.model, np, stream_seed(c.seed, 3));
  panel.obs.resize(n, np);
  panel.pred.resize(n, np);
  Rng mx = make_stream(c.seed, 4);
  for (int p = 0; p < np; ++p)
    for (int i = 0; i < n; ++i) {
      const double m = norm.location(i, p), s = norm.spread(i, p);
      panel.obs(i, p) = std::max(0.0, from_gumbel(fields[p].values(i, 0), m, s, d.truth.obs[i]));
      const double top = std::max(0.0, from_gumbel(fields[p].values(i, 1), m, s, d.truth.pred[i]));
      panel.pred(i, p) = top;
      std::uniform_int_distribution<int> pick(0, c.members - 1);
      const int leader = pick(mx);
      for (int j = 0; j < c.members; ++j) {
        const double drop = j == leader ? 0.0 : 0.6 * s * std::exponential_distribution<double>(1.0)(mx);
        e.maximum(i, p, j) = std::max(0.0, top - drop);
      }
      if (c.missing_fraction > 0.0 && unif(mx) < c.missing_fraction) panel.obs(i, p) = std::nan("");
    }
  return d;
}

}  // namespace brpp
