#include "loft/classical.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "loft/error.hpp"
#include "loft/io.hpp"
#include "loft/rng.hpp"

namespace loft {

TargetSpec::TargetSpec(std::vector<double> weights) : weights_(std::move(weights)) {
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("target weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("target needs at least one positive weight");
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    weights_[i] /= total;
    if (weights_[i] > 0.0) support_.push_back(i);
  }
}

TargetSpec TargetSpec::points(std::size_t side, const std::vector<std::pair<std::size_t, std::size_t>>& points) {
  std::vector<double> w(side * side, 0.0);
  for (auto [r, c] : points) {
    if (r >= side || c >= side) {
      throw std::invalid_argument("target point (" + std::to_string(r) + ", " + std::to_string(c) +
                                  ") outside a " + std::to_string(side) + "x" + std::to_string(side) + " grid");
    }
    w[r * side + c] = 1.0;
  }
  return TargetSpec(std::move(w));
}

TargetSpec TargetSpec::uniform(std::size_t n_outputs) { return TargetSpec(std::vector<double>(n_outputs, 1.0)); }

TargetSpec TargetSpec::from_pattern(const SpecklePattern& pattern) {
  return TargetSpec(std::vector<double>(pattern.values().begin(), pattern.values().end()));
}

SpecklePattern TargetSpec::as_speckle() const {
  const double peak = *std::max_element(weights_.begin(), weights_.end());
  std::vector<double> v(weights_.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = weights_[i] / peak;
  return SpecklePattern(std::move(v), true);
}

double objective(const TransmissionMatrix& tm, const PhasePattern& phase, const TargetSpec& target) {
  if (target.size() != tm.rows()) {
    throw ShapeError("objective: target has " + std::to_string(target.size()) + " modes, matrix has " +
                     std::to_string(tm.rows()) + " rows");
  }
  const SpecklePattern s = speckle(tm, phase, false);
  double acc = 0.0;
  for (std::size_t m : target.support()) acc += target.weights()[m] * s[m];
  return acc;
}

PhasePattern phase_conjugate(const TransmissionMatrix& tm, const TargetSpec& target) {
  if (target.size() != tm.rows()) {
    throw ShapeError("phase_conjugate: target has " + std::to_string(target.size()) + " modes, matrix has " +
                     std::to_string(tm.rows()) + " rows");
  }
  std::vector<double> codes(tm.cols(), 0.0);
  for (std::size_t n = 0; n < tm.cols(); ++n) {
    cplx acc = 0.0;
    for (std::size_t m : target.support()) acc += target.weights()[m] * tm(m, n);
    if (acc == cplx(0.0, 0.0)) continue;
    double code = -std::arg(acc) / (2.0 * std::numbers::pi);
    code -= std::floor(code);
    if (code >= 1.0) code = 0.0;
    codes[n] = code;
  }
  return PhasePattern(std::move(codes));
}

ObjectiveOracle make_oracle(const TransmissionMatrix& tm, const TargetSpec& target) {
  return [&tm, &target](const PhasePattern& p) { return objective(tm, p, target); };
}

OptimizerTrace continuous_sequential(const ObjectiveOracle& oracle, std::size_t n, int levels, int sweeps,
                                     std::uint64_t seed) {
  if (levels < 2) throw std::invalid_argument("continuous_sequential: levels must be >= 2");
  if (n == 0) throw std::invalid_argument("continuous_sequential: n must be >= 1");
  if (sweeps < 0) throw std::invalid_argument("continuous_sequential: sweeps must be >= 0");

  Rng rng(seed);
  std::vector<int> level_of(n);
  std::vector<double> codes(n);
  for (std::size_t i = 0; i < n; ++i) {
    level_of[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(levels)));
    codes[i] = static_cast<double>(level_of[i]) / levels;
  }

  OptimizerTrace trace;
  trace.initial = PhasePattern(codes);
  double current = oracle(trace.initial);
  trace.evaluations = 1;
  trace.objective.push_back(current);

  for (int s = 0; s < sweeps; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      int best_level = level_of[i];
      double best_value = current;
      for (int l = 0; l < levels; ++l) {
        if (l == level_of[i]) continue;
        codes[i] = static_cast<double>(l) / levels;
        const double value = oracle(PhasePattern(codes));
        ++trace.evaluations;
        if (value > best_value) {
          best_value = value;
          best_level = l;
        }
      }
      level_of[i] = best_level;
      codes[i] = static_cast<double>(best_level) / levels;
      current = best_value;
      trace.objective.push_back(current);
    }
  }
  trace.best = PhasePattern(codes);
  trace.best_objective = current;
  return trace;
}

void GaConfig::validate() const {
  if (population < 2) throw std::invalid_argument("GaConfig: population must be >= 2");
  if (!(elite_fraction > 0.0 && elite_fraction < 1.0)) {
    throw std::invalid_argument("GaConfig: elite_fraction must lie in (0, 1)");
  }
  if (!(mutation_initial >= 0.0 && mutation_initial <= 1.0)) {
    throw std::invalid_argument("GaConfig: mutation_initial must lie in [0, 1]");
  }
  if (!(mutation_decay > 0.0 && mutation_decay <= 1.0)) {
    throw std::invalid_argument("GaConfig: mutation_decay must lie in (0, 1]");
  }
}

OptimizerTrace genetic_optimize(const ObjectiveOracle& oracle, std::size_t n, const GaConfig& cfg,
                                const std::vector<PhasePattern>& seed_population) {
  cfg.validate();
  if (n == 0) throw std::invalid_argument("genetic_optimize: n must be >= 1");
  const std::size_t pop_size = cfg.population;
  Rng rng(cfg.seed);

  std::vector<std::vector<double>> pop(pop_size);
  if (!seed_population.empty()) {
    if (seed_population.size() != pop_size) {
      throw ShapeError("genetic_optimize: seed population size != cfg.population");
    }
    for (std::size_t i = 0; i < pop_size; ++i) {
      if (seed_population[i].size() != n) throw ShapeError("genetic_optimize: seed individual length != n");
      pop[i].assign(seed_population[i].values().begin(), seed_population[i].values().end());
    }
  } else {
    for (auto& ind : pop) {
      ind.resize(n);
      for (double& g : ind) g = rng.uniform();
    }
  }

  OptimizerTrace trace;
  std::vector<double> fitness(pop_size);
  for (std::size_t i = 0; i < pop_size; ++i) fitness[i] = oracle(PhasePattern(pop[i]));
  trace.evaluations = pop_size;

  auto best_index = static_cast<std::size_t>(std::max_element(fitness.begin(), fitness.end()) - fitness.begin());
  trace.initial = PhasePattern(pop[best_index]);
  std::vector<double> best = pop[best_index];
  double best_value = fitness[best_index];
  trace.objective.push_back(best_value);

  const std::size_t n_elite = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.elite_fraction * pop_size));
  // Rank r (0 = fittest) is drawn with probability proportional to pop_size - r.
  std::vector<double> rank_cdf(pop_size);
  {
    double acc = 0.0;
    for (std::size_t r = 0; r < pop_size; ++r) {
      acc += static_cast<double>(pop_size - r);
      rank_cdf[r] = acc;
    }
    for (double& c : rank_cdf) c /= acc;
  }
  auto draw_rank = [&]() {
    const double u = rng.uniform();
    auto it = std::upper_bound(rank_cdf.begin(), rank_cdf.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - rank_cdf.begin()), pop_size - 1);
  };

  double rate = cfg.mutation_initial;
  for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
    std::vector<std::size_t> order(pop_size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fitness[a] > fitness[b]; });

    std::vector<std::vector<double>> next;
    std::vector<double> next_fitness;
    next.reserve(pop_size);
    next_fitness.reserve(pop_size);
    for (std::size_t e = 0; e < n_elite; ++e) {
      next.push_back(pop[order[e]]);
      next_fitness.push_back(fitness[order[e]]);
    }
    while (next.size() < pop_size) {
      const auto& a = pop[order[draw_rank()]];
      const auto& b = pop[order[draw_rank()]];
      std::vector<double> child(n);
      for (std::size_t g = 0; g < n; ++g) {
        child[g] = (rng.uniform() < 0.5) ? a[g] : b[g];
        if (rng.uniform() < rate) child[g] = rng.uniform();
      }
      next_fitness.push_back(oracle(PhasePattern(child)));
      ++trace.evaluations;
      next.push_back(std::move(child));
    }
    pop = std::move(next);
    fitness = std::move(next_fitness);

    best_index = static_cast<std::size_t>(std::max_element(fitness.begin(), fitness.end()) - fitness.begin());
    if (fitness[best_index] > best_value) {
      best_value = fitness[best_index];
      best = pop[best_index];
    }
    trace.objective.push_back(best_value);
    rate *= cfg.mutation_decay;
  }

  trace.best = PhasePattern(std::move(best));
  trace.best_objective = best_value;
  return trace;
}

void write_trace_csv(const OptimizerTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "iteration,objective\n";
  for (std::size_t i = 0; i < trace.objective.size(); ++i) {
    out << i << ',' << io::format_double(trace.objective[i]) << '\n';
  }
}

}  // namespace loft
