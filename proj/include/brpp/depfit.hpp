#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "brpp/variogram.hpp"

namespace brpp {

struct ThetaEstimate {
  int site_i = 0;
  int site_j = 0;
  int comp_i = 0;
  int comp_j = 0;
  double theta = 1.0;     // in [1, 2]
  double variance = 0.0;  // jackknife; 0 means excluded from fitting
};

enum class ModelKind { univariate, bivariate };

struct FitResult {
  DependenceModel params;
  double objective = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  int excluded_pairs = 0;  // estimates skipped for zero variance
  int best_start = 0;
};

// Average ranks (1-based), ties share their mean rank.
std::vector<double> average_ranks(std::span<const double> x);

// 1/(2 n (n-1)) sum_p |R_p(a) - R_p(b)|
double fmadogram(std::span<const double> a, std::span<const double> b);

// clamp((1 + 2 nu)/(1 - 2 nu), 1, 2); nu >= 1/2 maps to 2.
double theta_from_madogram(double nu);

// ((B - 1)/B) sum_b (t_b - mean t)^2 over leave-one-block-out estimates.
double grouped_jackknife(std::span<const double> leave_out);

// Jackknife variance of the madogram-based coefficient of two series, with
// block_of[p] the block label of period p.
double jackknife_variance(std::span<const double> a, std::span<const double> b, std::span<const int> block_of);

enum class PairScheme {
  // i < j, same component; the univariate fitting set.
  unordered,
  // every ordered (i, j) and every component pair, skipping the trivial
  // self-pairs (i == j, same component); the bivariate fitting set.
  ordered_all_components,
};

// panel: rows are periods, column c * n_sites + i holds component c at site i.
// Pairs farther apart than max_distance are skipped. NaN marks a missing
// value; such pairs use their jointly observed periods only.
std::vector<ThetaEstimate> estimate_extremal_coeffs(const Eigen::MatrixXd& panel, std::span<const Point> locations,
                                                    std::span<const int> block_of, PairScheme scheme,
                                                    double max_distance = std::numeric_limits<double>::infinity());

// Univariate models: sum ((theta_hat - theta) / sqrt(var))^2.
// Bivariate models:  sum ((theta_hat - theta) / var)^2.
// Entries with variance 0 are skipped; throws if nothing remains.
double wls_objective(std::span<const ThetaEstimate> estimates, std::span<const Point> locations,
                     const DependenceModel& params);

struct DependenceFitOptions {
  int max_evals = 4000;  // per start, including one restart from its optimum
  double ftol_rel = 1e-9;
};

FitResult fit_dependence(std::span<const ThetaEstimate> estimates, std::span<const Point> locations, ModelKind kind,
                         std::span<const DependenceModel> starts, const DependenceFitOptions& options = {});

// Starting values drawn from boxes scaled by the median inter-site distance.
// The first start is the box center.
std::vector<DependenceModel> default_starts(ModelKind kind, std::span<const Point> locations, int count,
                                            std::uint64_t seed);

}  // namespace brpp
