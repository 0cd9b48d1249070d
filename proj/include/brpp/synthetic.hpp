#pragma once

#include <cstdint>

#include "brpp/margins.hpp"
#include "brpp/postproc.hpp"
#include "brpp/variogram.hpp"

namespace brpp {

// A bivariate model with strong obs/pred dependence and extremal
// coefficients spanning roughly [1.2, 1.9] over a few hundred km.
BivVariogramParams synthetic_default_model();

// Synthetic (obs, pred, ensemble) data drawn from a known bivariate
// Brown-Resnick model. Ensembles are built first; maxima are then placed on
// the GEV scales implied by the ensemble normalization, so the generating
// margins are exactly of the fitted form.
struct SyntheticConfig {
  int stations = 120;
  double width_km = 600.0;
  double height_km = 250.0;
  int periods = 360;
  int periods_per_block = 30;
  int members = 20;
  int hours = 10;
  double missing_fraction = 0.0;  // of observations, independently
  BivVariogramParams model = synthetic_default_model();
  double obs_shape = 0.043;
  double pred_shape = 0.028;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  MaximaPanel panel;
  EnsemblePanel ensemble;
  MarginalFits truth;  // generating standardized GEV parameters
  BivVariogramParams model;
};

SyntheticData generate_synthetic(const SyntheticConfig& config);

}  // namespace brpp
