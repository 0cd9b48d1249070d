#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "brpp/depfit.hpp"
#include "brpp/postproc.hpp"
#include "config.hpp"

namespace brpp::cli {

// Shortest round-trip decimal form; NaN becomes the empty field.
std::string num(double v);

struct Dataset {
  MaximaPanel panel;  // pred = max over ensemble members
  EnsemblePanel ensemble;
  std::vector<std::string> members;
  std::vector<std::string> hours;
  std::vector<std::string> warnings;
};

// Reads the three CSV inputs. Stations keep their order of first appearance
// in the observations, as do periods. Stations whose observations are all
// missing are dropped with a warning.
Dataset ingest(const RunConfig& config);

// Inverse of ingest for complete grids (every station has every period).
void write_dataset(const Dataset& d, const std::filesystem::path& observations,
                   const std::filesystem::path& ensemble_means, const std::filesystem::path& ensemble_max);

void write_margins(std::ostream& out, const MaximaPanel& panel, const MarginReport& report);
MarginalFits read_margins(const std::filesystem::path& path, const MaximaPanel& panel);

struct DependenceFile {
  std::optional<UnivVariogramParams> univariate;
  std::optional<BivVariogramParams> bivariate;
};

// Sections [univariate] and [bivariate] of key = value lines; the fit
// diagnostics are written for reference and ignored on reading.
void write_dependence_section(std::ostream& out, const FitResult& fit);
void write_model_section(std::ostream& out, const DependenceModel& model);
DependenceFile read_dependence(const std::filesystem::path& path);

}  // namespace brpp::cli
