#include "brpp/variogram.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "brpp/error.hpp"
#include "brpp/special.hpp"

namespace brpp {

namespace {

constexpr double kQuarterPi = std::numbers::pi / 4.0;

std::optional<ParamViolation> violation(std::string field, std::string message) {
  return ParamViolation{std::move(field), std::move(message)};
}

std::optional<ParamViolation> check_aniso(const AnisotropyParams& a) {
  if (!(a.ratio > 0.0) || !std::isfinite(a.ratio)) return violation("aniso.ratio", "must be positive");
  if (!(a.angle > -kQuarterPi && a.angle <= kQuarterPi)) return violation("aniso.angle", "must lie in (-pi/4, pi/4]");
  return std::nullopt;
}

// Returns the factor by which length scales must be multiplied.
double canonicalize_aniso(AnisotropyParams& a) {
  double t = a.angle - std::numbers::pi * std::round(a.angle / std::numbers::pi);
  double factor = 1.0;
  if (t > kQuarterPi || t <= -kQuarterPi) {
    t += t > 0.0 ? -std::numbers::pi / 2.0 : std::numbers::pi / 2.0;
    factor = a.ratio;
    a.ratio = 1.0 / a.ratio;
  }
  a.angle = t;
  return factor;
}

}  // namespace

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double BivVariogramParams::max_abs_rho() const {
  return 2.0 * std::sqrt(smooth1 * smooth2) / (smooth1 + smooth2);
}

double aniso_norm(Point h, const AnisotropyParams& a) {
  const double c = std::cos(a.angle);
  const double s = std::sin(a.angle);
  const double u = c * h.x + s * h.y;
  const double v = a.ratio * (-s * h.x + c * h.y);
  return std::hypot(u, v);
}

double univ_variogram(Point h, const UnivVariogramParams& p) {
  const double r = aniso_norm(h, p.aniso);
  if (r == 0.0) return 0.0;
  return std::pow(p.scale * r, p.exponent);
}

double matern_correlation(double r, double nu, double a) {
  require(nu > 0.0 && a > 0.0, "matern_correlation: smoothness and scale must be positive");
  require(r >= 0.0, "matern_correlation: negative distance");
  const double x = a * r;
  if (x == 0.0) return 1.0;
  if (x > 700.0) return 0.0;
  const double log_norm = (1.0 - nu) * std::numbers::ln2 - std::lgamma(nu);
  return std::exp(log_norm + nu * std::log(x)) * special::bessel_k(nu, x);
}

double gamma0(Point h, const BivVariogramParams& p) {
  const double t = p.common_scale * aniso_norm(h, p.aniso);
  const double t2 = t * t;
  return p.sill * p.sill * t2 / std::pow(t2 + 1.0, p.long_range);
}

Eigen::Matrix2d biv_variogram(Point h, const BivVariogramParams& p) {
  const double r = aniso_norm(h, p.aniso);
  const double t2 = std::pow(p.common_scale * r, 2);
  const double common = p.sill * p.sill * t2 / std::pow(t2 + 1.0, p.long_range);
  const double s1 = p.amp1 * p.amp1;
  const double s2 = p.amp2 * p.amp2;
  const double m1 = s1 > 0.0 ? matern_correlation(r, p.smooth1, p.matern_scale) : 1.0;
  const double m2 = s2 > 0.0 ? matern_correlation(r, p.smooth2, p.matern_scale) : 1.0;
  const double cross = p.rho * p.amp1 * p.amp2;
  const double m12 = cross != 0.0 ? matern_correlation(r, p.cross_smooth(), p.matern_scale) : 0.0;
  Eigen::Matrix2d g;
  g(0, 0) = common + s1 * (1.0 - m1);
  g(1, 1) = common + s2 * (1.0 - m2);
  g(0, 1) = g(1, 0) = common + 0.5 * (s1 + p.constant * p.constant + s2) - cross * m12;
  return g;
}

double model_variogram(const DependenceModel& m, Point h, int k1, int k2) {
  if (const auto* u = std::get_if<UnivVariogramParams>(&m)) {
    require(k1 == 0 && k2 == 0, "model_variogram: univariate model has a single component");
    return univ_variogram(h, *u);
  }
  require(k1 >= 0 && k1 < 2 && k2 >= 0 && k2 < 2, "model_variogram: component index out of range");
  return biv_variogram(h, std::get<BivVariogramParams>(m))(k1, k2);
}

std::optional<ParamViolation> validate_univ_params(const UnivVariogramParams& p) {
  if (!(p.scale > 0.0) || !std::isfinite(p.scale)) return violation("scale", "must be positive");
  if (auto v = check_aniso(p.aniso)) return v;
  if (!(p.exponent > 0.0 && p.exponent <= 2.0)) return violation("exponent", "must lie in (0, 2]");
  return std::nullopt;
}

std::optional<ParamViolation> validate_biv_params(const BivVariogramParams& p) {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  auto nonneg = [](double v) { return v >= 0.0 && std::isfinite(v); };
  if (!positive(p.sill)) return violation("sill", "must be positive");
  if (!positive(p.common_scale)) return violation("common_scale", "must be positive");
  if (auto v = check_aniso(p.aniso)) return v;
  if (!(p.long_range > 0.0 && p.long_range < 1.0)) return violation("long_range", "must lie in (0, 1)");
  if (!nonneg(p.constant)) return violation("constant", "must be nonnegative");
  if (!nonneg(p.amp1)) return violation("amp1", "must be nonnegative");
  if (!positive(p.smooth1)) return violation("smooth1", "must be positive");
  if (!nonneg(p.amp2)) return violation("amp2", "must be nonnegative");
  if (!positive(p.smooth2)) return violation("smooth2", "must be positive");
  if (!positive(p.matern_scale)) return violation("matern_scale", "must be positive");
  if (!std::isfinite(p.rho) || std::fabs(p.rho) > p.max_abs_rho()) {
    std::ostringstream msg;
    msg << "|rho| must not exceed 2 sqrt(nu1 nu2)/(nu1 + nu2) = " << p.max_abs_rho();
    return violation("rho", msg.str());
  }
  return std::nullopt;
}

std::optional<ParamViolation> validate_model(const DependenceModel& m) {
  return std::visit(
      [](const auto& p) -> std::optional<ParamViolation> {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, UnivVariogramParams>)
          return validate_univ_params(p);
        else
          return validate_biv_params(p);
      },
      m);
}

void require_valid(const DependenceModel& m) {
  if (auto v = validate_model(m)) fail(ErrorCategory::invalid_argument, "invalid variogram parameter " + v->field + ": " + v->message);
}

double cross_variogram_bound_excess(const BivVariogramParams& p, std::span<const Point> grid) {
  const double nugget = biv_variogram({0.0, 0.0}, p)(0, 1);
  double excess = 0.0;
  for (const Point& h : grid) {
    const Eigen::Matrix2d g = biv_variogram(h, p);
    const double r11 = std::sqrt(std::max(g(0, 0), 0.0));
    const double r22 = std::sqrt(std::max(g(1, 1), 0.0));
    const double r12 = std::sqrt(std::max(g(0, 1), 0.0));
    excess = std::max(excess, (r11 - r22) * (r11 - r22) - 4.0 * nugget);
    excess = std::max(excess, (r11 - r12) * (r11 - r12) - nugget);
    excess = std::max(excess, (r22 - r12) * (r22 - r12) - nugget);
  }
  return excess;
}

UnivVariogramParams canonicalize(UnivVariogramParams p) {
  p.scale *= canonicalize_aniso(p.aniso);
  return p;
}

BivVariogramParams canonicalize(BivVariogramParams p) {
  const double f = canonicalize_aniso(p.aniso);
  p.common_scale *= f;
  p.matern_scale *= f;
  return p;
}

}  // namespace brpp
