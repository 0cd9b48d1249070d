#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "brpp/variogram.hpp"

namespace brpp {

struct SiteComponent {
  Point site;
  int component = 0;
};

// Observed values (Gumbel scale) of one component at distinct sites.
struct ConditioningSet {
  std::vector<Point> sites;
  std::vector<double> values;
  int component = 1;  // 0-based: 1 is the forecast component of a bivariate model
};

struct ConditionalOptions {
  int max_enumerated = 7;     // exact partition enumeration up to this many points
  int burn_in = 200;          // Gibbs sweeps before the first replicate
  long max_rejections = 1'000'000;  // per extremal-function draw
};

// Draws from the law of a Brown-Resnick process at target (site, component)
// pairs given its values at the conditioning points, via the hitting-scenario
// decomposition: a random partition of the conditioning points, one extremal
// function per block, and an independent sub-extremal remainder.
//
// The sampler precomputes Gaussian conditional laws and can be reused for
// many conditioning values at the same points. Not safe for concurrent use.
class ConditionalSampler {
 public:
  ConditionalSampler(const DependenceModel& model, std::span<const Point> cond_sites, int cond_component,
                     std::span<const SiteComponent> targets, const ConditionalOptions& options = {});
  ~ConditionalSampler();
  ConditionalSampler(ConditionalSampler&&) noexcept;
  ConditionalSampler& operator=(ConditionalSampler&&) noexcept;

  int condition_count() const;
  int target_count() const;

  // K x targets matrix. Replicate r depends only on (seed, r) when the
  // partition is enumerated; with Gibbs sampling, on the chain position r.
  Eigen::MatrixXd sample(std::span<const double> cond_values, int K, std::uint64_t seed) const;

  // Probability of every partition of the conditioning points, as lists of
  // block bitmasks. Only available when the partition is enumerated.
  std::vector<std::pair<std::vector<unsigned>, double>> partition_distribution(std::span<const double> cond_values) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Eigen::MatrixXd conditional_simulate(const DependenceModel& model, const ConditioningSet& cond,
                                     std::span<const SiteComponent> targets, int K, std::uint64_t seed,
                                     const ConditionalOptions& options = {});

}  // namespace brpp
