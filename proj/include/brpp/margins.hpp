#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace brpp {

// Generalized extreme value law G_{shape, location, scale}.
struct GevParams {
  double shape = 0.0;
  double location = 0.0;
  double scale = 1.0;

  friend bool operator==(const GevParams&, const GevParams&) = default;
};

// Throws invalid_argument unless scale > 0, shape < 0.5 and all finite.
void validate_gev(const GevParams& p);

enum class GevComponent { shape = 0, location = 1, scale = 2 };

struct StationGevFit {
  std::string station;
  GevParams params;
  // Standard errors in (shape, location, scale) order; shape error is 0 when
  // the shape was held fixed.
  std::array<double, 3> std_errors{};
  double log_likelihood = 0.0;
  int sample_count = 0;

  double estimate(GevComponent c) const;
  double std_error(GevComponent c) const { return std_errors[static_cast<int>(c)]; }
};

// |shape| below this uses the Gumbel limit (with first-order correction).
inline constexpr double kShapeZeroThreshold = 1e-8;

double gev_cdf(double x, const GevParams& p);
double gev_quantile(double prob, const GevParams& p);
double gev_log_density(double x, const GevParams& p);
double gev_log_likelihood(std::span<const double> samples, const GevParams& p);

struct GevFitOptions {
  int max_evals = 10000;
};

// Maximum likelihood on (location, log scale, shape) by simplex search from
// probability-weighted-moment starting values. Requires >= 20 samples.
StationGevFit fit_gev_mle(std::span<const double> samples, std::optional<double> fixed_shape = std::nullopt,
                          const GevFitOptions& options = {});

// Probability-weighted-moment estimates (Hosking, Wallis & Wood).
GevParams gev_pwm_estimate(std::span<const double> samples);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// One-sample Kolmogorov-Smirnov against an arbitrary continuous cdf; the
// p-value uses the asymptotic Kolmogorov series.
KsResult ks_test(std::span<const double> values, const std::function<double(double)>& cdf);
KsResult ks_test_gumbel(std::span<const double> values);
KsResult ks_test_normal(std::span<const double> values);

struct ConstancyTest {
  std::vector<double> residuals;
  KsResult ks;
};

// Residuals (estimate - across-station mean) / std error, tested against N(0,1).
ConstancyTest spatial_constancy_test(std::span<const StationGevFit> fits, GevComponent which);

// Maps a value with normalization (m, s) and standardized GEV params to the
// standard Gumbel scale, and back.
double to_gumbel(double v, double m, double s, const GevParams& p);
double from_gumbel(double x, double m, double s, const GevParams& p);

// Closed-form CRPS of a GEV forecast for observation x. Requires shape < 1.
double crps_gev(const GevParams& p, double x);

}  // namespace brpp
