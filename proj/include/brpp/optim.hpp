#pragma once

#include <functional>
#include <span>
#include <vector>

namespace brpp {

struct NelderMeadOptions {
  int max_evals = 10000;
  double ftol_abs = 1e-12;
  double ftol_rel = 1e-10;
  double xtol = 1e-8;
  // Per-coordinate initial simplex offsets; a single value is broadcast.
  std::vector<double> steps = {0.1};
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int evals = 0;
  int iterations = 0;
  bool converged = false;
};

using Objective = std::function<double(std::span<const double>)>;

// Derivative-free simplex minimizer with dimension-adaptive coefficients
// (Gao & Han). Non-finite objective values are treated as +inf.
NelderMeadResult nelder_mead(const Objective& f, std::vector<double> x0,
                             const NelderMeadOptions& options = {});

}  // namespace brpp
