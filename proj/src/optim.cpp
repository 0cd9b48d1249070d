#include "brpp/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "brpp/error.hpp"

namespace brpp {

NelderMeadResult nelder_mead(const Objective& f, std::vector<double> x0,
                             const NelderMeadOptions& options) {
  const std::size_t n = x0.size();
  require(n > 0, "nelder_mead: empty start vector");
  require(!options.steps.empty(), "nelder_mead: no initial steps");

  const double dn = static_cast<double>(n);
  const double alpha = 1.0;
  const double beta = 1.0 + 2.0 / dn;
  const double gamma = 0.75 - 1.0 / (2.0 * dn);
  const double delta = 1.0 - 1.0 / dn;

  NelderMeadResult result;
  auto eval = [&](const std::vector<double>& x) {
    ++result.evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<std::vector<double>> simplex(n + 1, x0);
  std::vector<double> values(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double step = options.steps.size() == 1 ? options.steps[0] : options.steps.at(i);
    simplex[i + 1][i] += step;
  }
  for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  auto along = [&](double t, std::vector<double>& out) {
    for (std::size_t j = 0; j < n; ++j) out[j] = centroid[j] + t * (simplex[order[n]][j] - centroid[j]);
  };

  while (result.evals < options.max_evals) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    const double best = values[order[0]];
    const double worst = values[order[n]];

    double diameter = 0.0;
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        diameter = std::max(diameter, std::fabs(simplex[order[i]][j] - simplex[order[0]][j]));
    if (std::isfinite(worst) &&
        worst - best <= options.ftol_abs + options.ftol_rel * std::fabs(best) && diameter <= options.xtol) {
      result.converged = true;
      break;
    }
    ++result.iterations;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[order[i]][j] / dn;

    along(-alpha, xr);
    const double fr = eval(xr);
    const double second_worst = values[order[n - 1]];
    if (fr < best) {
      along(-alpha * beta, xe);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[order[n]] = xe;
        values[order[n]] = fe;
      } else {
        simplex[order[n]] = xr;
        values[order[n]] = fr;
      }
      continue;
    }
    if (fr < second_worst) {
      simplex[order[n]] = xr;
      values[order[n]] = fr;
      continue;
    }
    const bool outside = fr < worst;
    along(outside ? -alpha * gamma : gamma, xc);
    const double fc = eval(xc);
    if (fc < (outside ? fr : worst)) {
      simplex[order[n]] = xc;
      values[order[n]] = fc;
      continue;
    }
    // shrink toward the best vertex
    for (std::size_t i = 1; i <= n; ++i) {
      auto& v = simplex[order[i]];
      for (std::size_t j = 0; j < n; ++j) v[j] = simplex[order[0]][j] + delta * (v[j] - simplex[order[0]][j]);
      values[order[i]] = eval(v);
    }
  }

  const auto best_it = std::min_element(values.begin(), values.end());
  result.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
  result.value = *best_it;
  return result;
}

}  // namespace brpp
