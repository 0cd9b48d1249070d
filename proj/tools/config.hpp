#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>

#include "brpp/depfit.hpp"
#include "brpp/postproc.hpp"

namespace brpp::cli {

// Every field is settable by a `key = value` line of the same name. Relative
// paths resolve against the directory of the config file.
struct RunConfig {
  std::filesystem::path observations;
  std::filesystem::path ensemble_means;
  std::filesystem::path ensemble_max;
  std::filesystem::path margins_file;     // optional: reuse fitted margins
  std::filesystem::path dependence_file;  // optional: reuse fitted dependence models
  std::filesystem::path output_dir = "out";

  std::string x_column = "x_km";
  std::string y_column = "y_km";
  std::string month_column = "month";  // period -> block label; optional in the data
  int periods_per_block = 30;          // used when the month column is absent

  ModelKind model = ModelKind::bivariate;
  int starts_univariate = 20;
  int starts_bivariate = 4;
  int max_evals = 4000;
  double ftol = 1e-9;
  int gev_max_evals = 10000;
  bool common_shape = true;
  double max_distance_km = std::numeric_limits<double>::infinity();

  int K = 100;
  double chi = 1.0;
  int es_samples_br = 500;
  int es_samples_ind = 50;
  int es_pairs = 50;
  ConditioningMode conditioning = ConditioningMode::local;
  int neighbors = 2;
  double spread_floor = kSpreadFloor;
  long max_rejections = 1'000'000;

  std::optional<std::uint64_t> seed;
  int replicates = 100;  // simulate

  int synthetic_stations = 40;
  int synthetic_periods = 120;
  int synthetic_periods_per_block = 30;
  int synthetic_members = 20;
  int synthetic_hours = 4;
  double synthetic_missing_fraction = 0.0;
  double synthetic_width_km = 600.0;
  double synthetic_height_km = 250.0;
};

// Throws schema errors citing the offending line; unknown and repeated keys
// are errors.
RunConfig load_config(const std::filesystem::path& path);

// Positivity and range checks, after command-line overrides.
void validate_config(const RunConfig& c);

}  // namespace brpp::cli
