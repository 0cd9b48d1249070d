#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "brpp/condsim.hpp"
#include "brpp/margins.hpp"
#include "brpp/variogram.hpp"

namespace brpp {

inline constexpr double kSpreadFloor = 1e-6;      // m/s
inline constexpr double kSupportClampProb = 1e-6;  // endpoint quantile for step-1 clamping

// Ensemble forecasts on a (station, period) grid. Hourly means are stored
// member-major within each cell; NaN marks a missing value.
struct EnsemblePanel {
  int stations = 0;
  int periods = 0;
  int members = 0;
  int hours = 0;
  std::vector<double> means;   // stations * periods * members * hours
  std::vector<double> maxima;  // stations * periods * members

  EnsemblePanel() = default;
  EnsemblePanel(int stations, int periods, int members, int hours);

  std::size_t cell(int s, int p) const { return static_cast<std::size_t>(s) * periods + p; }
  double& mean(int s, int p, int j, int h) { return means[(cell(s, p) * members + j) * hours + h]; }
  double mean(int s, int p, int j, int h) const { return means[(cell(s, p) * members + j) * hours + h]; }
  double& maximum(int s, int p, int j) { return maxima[cell(s, p) * members + j]; }
  double maximum(int s, int p, int j) const { return maxima[cell(s, p) * members + j]; }

  std::span<const double> cell_means(int s, int p) const {
    return {means.data() + cell(s, p) * members * hours, static_cast<std::size_t>(members) * hours};
  }
  std::span<const double> cell_maxima(int s, int p) const {
    return {maxima.data() + cell(s, p) * members, static_cast<std::size_t>(members)};
  }
};

// Throws schema unless J >= 2, H >= 1, sizes agree and present entries are >= 0.
void validate_ensemble(const EnsemblePanel& e);

// Per (station, period) location and spread; NaN where the ensemble cell is
// incomplete. Present spreads are >= the floor.
struct Normalization {
  Eigen::MatrixXd location;  // m-hat, stations x periods
  Eigen::MatrixXd spread;    // s-hat, stations x periods
};

struct CellNormalization {
  double location = 0.0;
  double spread = 0.0;
};

// m-hat = max over members of the across-hours mean;
// s-hat = sqrt(sum (v - m-hat)^2 / (J H - 1)), floored.
CellNormalization normalize_cell(std::span<const double> means, int members, int hours, double floor = kSpreadFloor);
Normalization ensemble_normalization(const EnsemblePanel& e, double floor = kSpreadFloor);

double vmax_pred(std::span<const double> member_maxima);
// stations x periods; NaN where any member maximum is missing.
Eigen::MatrixXd vmax_pred(const EnsemblePanel& e);

// Station x period maxima with planar coordinates (km). NaN marks a missing
// value. block_of[p] indexes block_labels and groups periods into months.
struct MaximaPanel {
  std::vector<std::string> station_ids;
  std::vector<Point> locations;
  std::vector<std::string> period_ids;
  std::vector<int> block_of;
  std::vector<std::string> block_labels;
  Eigen::MatrixXd obs;
  Eigen::MatrixXd pred;

  int stations() const { return static_cast<int>(locations.size()); }
  int periods() const { return static_cast<int>(period_ids.size()); }
};

// Throws schema on size mismatches, duplicate coordinates or negative values.
void validate_panel(const MaximaPanel& panel);

// (v - m-hat) / s-hat entrywise; NaN propagates. Throws invalid_argument when
// a present value has no normalization.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& v, const Normalization& norm);

// Standardized GEV parameters per station; the GEV of v at (l, p) has location
// m-hat + s-hat mu and scale s-hat sigma.
struct MarginalFits {
  std::vector<GevParams> obs;
  std::vector<GevParams> pred;
};

GevParams compose(const GevParams& standardized, double m, double s);

struct MarginOptions {
  bool common_shape = true;  // refit with the across-station mean shape
  GevFitOptions gev;
};

struct ComponentMargins {
  std::vector<StationGevFit> free;  // shape estimated per station
  ConstancyTest shape, location, scale;
  double common_shape = 0.0;         // across-station mean of free shapes
  std::vector<StationGevFit> final;  // used downstream
};

struct MarginReport {
  ComponentMargins obs;
  ComponentMargins pred;
  MarginalFits fits() const;
};

// Fits both components on the listed periods (all periods when empty).
MarginReport fit_margins(const MaximaPanel& panel, const Normalization& norm, std::span<const int> periods = {},
                         const MarginOptions& options = {});

struct ClampedGumbel {
  double value = 0.0;
  bool clamped = false;
};

// to_gumbel, but values outside the GEV support map to the Gumbel quantile of
// probability 1e-6 (below the lower endpoint) or 1 - 1e-6 (above the upper).
ClampedGumbel to_gumbel_clamped(double v, double m, double s, const GevParams& p);

struct GumbelPanel {
  Eigen::MatrixXd values;  // periods x (components * stations), NaN missing
  int clamped = 0;
};

// Layout matches estimate_extremal_coeffs: column c * stations + i.
GumbelPanel gumbel_panel(const MaximaPanel& panel, const Normalization& norm, const MarginalFits& fits,
                         std::span<const int> periods, int components);

enum class ConditioningMode {
  local,  // each site given its own forecast and its nearest neighbors' forecasts
  joint,  // all sites given all forecasts (at most 20 sites)
};

struct PostprocessOptions {
  ConditioningMode mode = ConditioningMode::local;
  int neighbors = 2;
  ConditionalOptions sampler;
};

struct PostprocessResult {
  Eigen::MatrixXd fields;          // K x sites, m/s; NaN where no normalization
  std::vector<int> clamped_sites;  // step-1 support violations
};

// Three-step pipeline: forecast to Gumbel with pred parameters, conditional
// simulation of the obs component, back to m/s with obs parameters.
// Conditional samplers are cached by conditioning pattern, so one instance
// should serve every period. Not safe for concurrent use.
class PostProcessor {
 public:
  PostProcessor(const BivVariogramParams& model, std::span<const Point> sites, const MarginalFits& fits,
                const PostprocessOptions& options = {});

  // vmax_pred, m, s per site; NaN entries are dropped from the conditioning.
  // Site i in local mode draws from the stream seed stream_seed(seed, i).
  PostprocessResult run(std::span<const double> vmax_pred, std::span<const double> m, std::span<const double> s, int K,
                        std::uint64_t seed);

  int site_count() const { return static_cast<int>(sites_.size()); }
  const std::vector<int>& neighbors(int site) const { return neighbors_[site]; }

 private:
  ConditionalSampler& sampler(const std::vector<int>& cond, const std::vector<int>& targets);

  BivVariogramParams model_;
  std::vector<Point> sites_;
  MarginalFits fits_;
  PostprocessOptions options_;
  std::vector<std::vector<int>> neighbors_;  // conditioning sites per target, self included
  std::map<std::pair<std::vector<int>, std::vector<int>>, ConditionalSampler> cache_;
};

PostprocessResult postprocess(const BivVariogramParams& model, std::span<const Point> sites,
                              std::span<const double> vmax_pred, std::span<const double> m,
                              std::span<const double> s, const MarginalFits& fits, int K, std::uint64_t seed,
                              const PostprocessOptions& options = {});

}  // namespace brpp
