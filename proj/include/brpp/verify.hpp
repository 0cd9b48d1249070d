#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "brpp/depfit.hpp"
#include "brpp/postproc.hpp"

namespace brpp {

// Plug-in CRPS of the empirical law of the samples:
// (1/K) sum |y_k - x| - (1/(2K^2)) sum_i sum_j |y_i - y_j|.
double crps_empirical(std::span<const double> samples, double x);

// Plug-in energy score with exponent chi in (0, 2); samples are rows.
// Dimension 1 with chi = 1 reproduces crps_empirical bit for bit.
double energy_score(const Eigen::MatrixXd& samples, const Eigen::VectorXd& x, double chi = 1.0);

// 1 - score / reference; reference must be positive.
double skill_score(double score, double reference);

struct ScoreOptions {
  int K = 100;              // post-processed samples per site and period
  int es_samples_br = 500;  // Brown-Resnick draws for pairwise energy scores
  int es_samples_ind = 50;  // independent draws per margin
  int es_pairs = 50;        // closest station pairs scored; 0 disables
  double chi = 1.0;
  PostprocessOptions postprocess;
};

// Everything needed to score one period set.
struct FittedModels {
  MarginalFits margins;
  DependenceModel spatial;    // obs-only model for energy scores
  BivVariogramParams joint;   // obs/pred model for post-processing
};

// Sums over the scored periods; means are sum / periods.
struct StationScore {
  std::string station;
  int periods = 0;
  double crps_obs = 0.0;
  double crps_pred = 0.0;
  double crps_orig = 0.0;
  double crps_biv = 0.0;
};

struct PairScore {
  int site_i = 0;
  int site_j = 0;
  double distance = 0.0;
  int periods = 0;
  double es_br = 0.0;
  double es_ind = 0.0;
};

struct Skill {
  double overall = std::numeric_limits<double>::quiet_NaN();  // on summed per-unit means
  int positive = 0;                                            // units with positive own skill
  int units = 0;
};

struct ScoreReport {
  std::vector<StationScore> stations;
  std::vector<PairScore> pairs;
  Skill obs_vs_pred;  // S
  Skill obs_vs_orig;  // S-tilde
  Skill biv_vs_orig;
  Skill br_vs_ind;    // energy scores
  int clamped = 0;    // step-1 support violations
  std::uint64_t seed = 0;
  int K = 0;
  int es_samples_br = 0;
  int es_samples_ind = 0;
  std::vector<int> periods;

  // Recomputes the skill aggregates from the per-unit sums.
  void finalize();
};

// Scores the listed periods (all when empty). Post-processing of period p
// uses the stream seed stream_seed(seed, p), so a period gets the same
// samples whichever period set it is scored in.
ScoreReport score_models(const MaximaPanel& panel, const EnsemblePanel& ensemble, const Normalization& norm,
                         const FittedModels& models, std::span<const int> periods, const ScoreOptions& options,
                         std::uint64_t seed);

// Sums two reports unit by unit (stations and pairs must match).
ScoreReport merge_reports(const ScoreReport& a, const ScoreReport& b);

struct FitOptions {
  MarginOptions margins;
  DependenceFitOptions dependence;
  int starts_univariate = 20;
  int starts_bivariate = 4;
  double max_distance = std::numeric_limits<double>::infinity();  // km, for extremal-coefficient pairs
};

struct FitBundle {
  MarginReport margins;
  FitResult spatial;
  FitResult joint;
  int clamped = 0;
  FittedModels models() const;
};

// Margins, the univariate obs model and the bivariate obs/pred model, all on
// the listed periods (all when empty).
FitBundle fit_models(const MaximaPanel& panel, const Normalization& norm, std::span<const int> periods,
                     const FitOptions& options, std::uint64_t seed);

// FNV-1a over the period indices and every datum the fit reads.
std::uint64_t fit_input_hash(const MaximaPanel& panel, const EnsemblePanel& ensemble, std::span<const int> periods);

struct FoldReport {
  int block = 0;
  std::string label;
  std::vector<int> training_periods;
  std::uint64_t training_hash = 0;
  FittedModels models;
  ScoreReport scores;
};

struct CrossValidationReport {
  std::vector<FoldReport> folds;
  ScoreReport pooled;  // sums over the held-out blocks
};

// Leave-one-block-out: refits on the complement of each block, scores the
// block. Needs at least two blocks.
CrossValidationReport cross_validate(const MaximaPanel& panel, const EnsemblePanel& ensemble,
                                     const FitOptions& fit_options, const ScoreOptions& score_options,
                                     std::uint64_t seed, double spread_floor = kSpreadFloor);

}  // namespace brpp
