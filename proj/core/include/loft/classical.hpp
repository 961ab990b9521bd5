#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "loft/sim.hpp"

namespace loft {

/// Nonnegative weights over the output grid, summing to 1.
class TargetSpec {
 public:
  TargetSpec() = default;
  /// Normalizes `weights` to unit sum. Throws if any weight is negative or all are zero.
  explicit TargetSpec(std::vector<double> weights);

  /// Equal weight on each (row, col) in `points` of a side x side grid.
  static TargetSpec points(std::size_t side, const std::vector<std::pair<std::size_t, std::size_t>>& points);
  static TargetSpec uniform(std::size_t n_outputs);
  /// Uses a (normalized) speckle as the weight map.
  static TargetSpec from_pattern(const SpecklePattern& pattern);

  std::size_t size() const noexcept { return weights_.size(); }
  std::span<const double> weights() const noexcept { return weights_; }
  const std::vector<std::size_t>& support() const noexcept { return support_; }

  /// Weight map rescaled so that its maximum is 1, as a normalized speckle (the network input).
  SpecklePattern as_speckle() const;

  bool operator==(const TargetSpec&) const = default;

 private:
  std::vector<double> weights_;
  std::vector<std::size_t> support_;
};

/// sum_m w_m I_m with unnormalized intensities.
double objective(const TransmissionMatrix& tm, const PhasePattern& phase, const TargetSpec& target);

/// phi_n = -arg(sum_m w_m t_mn), as a code in [0, 1). Columns whose weighted sum is
/// exactly zero get phase 0. Exactly optimal for single-mode targets.
PhasePattern phase_conjugate(const TransmissionMatrix& tm, const TargetSpec& target);

/// Phase pattern -> scalar figure of merit. Must be deterministic within one run.
using ObjectiveOracle = std::function<double(const PhasePattern&)>;

ObjectiveOracle make_oracle(const TransmissionMatrix& tm, const TargetSpec& target);

struct OptimizerTrace {
  PhasePattern initial;
  PhasePattern best;
  double best_objective = 0.0;
  /// One entry per accepted step (CSA) or per generation (GA).
  std::vector<double> objective;
  std::size_t evaluations = 0;
};

/// Continuous sequential algorithm: for each element in turn try every level
/// k/levels and keep the best immediately. Ties keep the incumbent.
/// The start pattern is drawn from `seed` on the same level grid.
OptimizerTrace continuous_sequential(const ObjectiveOracle& oracle, std::size_t n, int levels, int sweeps,
                                     std::uint64_t seed);

struct GaConfig {
  std::size_t population = 30;
  std::size_t generations = 200;
  double mutation_initial = 0.1;
  double mutation_decay = 0.995;
  double elite_fraction = 0.1;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when population < 2, elite fraction outside (0, 1)
  /// or mutation settings outside [0, 1].
  void validate() const;
};

/// Genetic algorithm: rank-proportional parent selection, uniform crossover,
/// per-gene uniform resampling at rate mutation_initial * decay^generation,
/// and elitism. `seed_population`, when non-empty, replaces the random
/// initial population (it must hold cfg.population patterns of length n).
OptimizerTrace genetic_optimize(const ObjectiveOracle& oracle, std::size_t n, const GaConfig& cfg,
                                const std::vector<PhasePattern>& seed_population = {});

/// Writes "iteration,objective" rows.
void write_trace_csv(const OptimizerTrace& trace, const std::string& path);

}  // namespace loft
