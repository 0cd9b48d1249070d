#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>

#include <Eigen/Dense>

namespace brpp {

// Planar coordinates or lag vectors, in km.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend bool operator==(const Point&, const Point&) = default;
};

double distance(Point a, Point b);

// Geometric anisotropy: ||A(ratio, angle) h|| with
// A = [[cos angle, sin angle], [-ratio sin angle, ratio cos angle]].
struct AnisotropyParams {
  double ratio = 1.0;
  double angle = 0.0;  // radians, canonical range (-pi/4, pi/4]
};

// gamma(h) = (scale * ||A h||)^exponent
struct UnivVariogramParams {
  double scale = 1.0;  // 1/km
  AnisotropyParams aniso;
  double exponent = 1.0;
};

// Pseudo cross-variogram built from a smoothed power-law common part and a
// parsimonious bivariate Matern cross-covariance plus a constant effect in
// the second component.
struct BivVariogramParams {
  double sill = 1.0;         // sigma of the common part
  double common_scale = 0.01;  // kappa, 1/km
  AnisotropyParams aniso;
  double long_range = 0.5;   // beta in (0, 1)
  double constant = 0.0;     // c
  double amp1 = 1.0;         // sigma_1
  double smooth1 = 1.0;      // nu_1
  double amp2 = 1.0;         // sigma_2
  double smooth2 = 1.0;      // nu_2
  double matern_scale = 0.05;  // a, 1/km
  double rho = 0.0;

  double cross_smooth() const { return 0.5 * (smooth1 + smooth2); }
  double max_abs_rho() const;
};

using DependenceModel = std::variant<UnivVariogramParams, BivVariogramParams>;

inline int component_count(const DependenceModel& m) {
  return std::holds_alternative<BivVariogramParams>(m) ? 2 : 1;
}

double aniso_norm(Point h, const AnisotropyParams& a);
double univ_variogram(Point h, const UnivVariogramParams& p);

// 2^(1-nu)/Gamma(nu) (a r)^nu K_nu(a r); 1 at r = 0.
double matern_correlation(double r, double nu, double a);

double gamma0(Point h, const BivVariogramParams& p);

// (gamma_11, gamma_12; gamma_12, gamma_22) at lag h.
Eigen::Matrix2d biv_variogram(Point h, const BivVariogramParams& p);

// Entry (k1, k2) of the model's (pseudo cross-)variogram at lag h. For a
// univariate model only (0, 0) is defined.
double model_variogram(const DependenceModel& m, Point h, int k1, int k2);

struct ParamViolation {
  std::string field;
  std::string message;
};

std::optional<ParamViolation> validate_univ_params(const UnivVariogramParams& p);
std::optional<ParamViolation> validate_biv_params(const BivVariogramParams& p);
std::optional<ParamViolation> validate_model(const DependenceModel& m);
void require_valid(const DependenceModel& m);

// Largest positive excess, over the lags in grid, of the necessary bounds
//   (sqrt g11(h) - sqrt g22(h))^2 <= 4 g12(0)
//   (sqrt gii(h) - sqrt g12(h))^2 <= g12(0),  i = 1, 2
// that any valid pseudo cross-variogram satisfies. 0 if none is violated.
double cross_variogram_bound_excess(const BivVariogramParams& p, std::span<const Point> grid);

// Maps the anisotropy angle into (-pi/4, pi/4] using the identity
// ||A(b, t) h|| = b ||A(1/b, t + pi/2) h||; length scales absorb the factor.
UnivVariogramParams canonicalize(UnivVariogramParams p);
BivVariogramParams canonicalize(BivVariogramParams p);

}  // namespace brpp
