#pragma once

#include <cstdint>
#include <optional>

#include "gpkit/engine.hpp"

namespace gpkit {

struct TrainConfig {
  int restarts = 4;
  int max_iters = 200;
  double gradient_tolerance = 1e-6;
  std::uint64_t seed = 0;
  /// When set, used instead of Latin-hypercube starts; length must be >=
  /// restarts (extra entries ignored).
  std::optional<std::vector<Hyperparameters>> starts;
};

struct RestartResult {
  Hyperparameters start;
  Hyperparameters end;
  double objective = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  bool skipped = false;  // factorization failed at the start point
};

struct TrainReport {
  Hyperparameters best;
  double best_objective = -std::numeric_limits<double>::infinity();
  std::vector<RestartResult> per_restart;
};

/// Multi-start maximization of the marginal log-likelihood: independent
/// BFGS ascents with backtracking line search in packed (log-where-flagged)
/// space, bound-clamped, from deterministic seeded Latin-hypercube starts.
/// Ties within 1e-12 break toward the lower restart index. Restarts run
/// concurrently; the report is deterministic for a fixed seed.
TrainReport train(const Dataset& data, const KernelExpr& kernel, const PriorMean& mean,
                  const Hyperparameters& tmpl, const TrainConfig& cfg);

/// Objective evaluated along a path of hyperparameter sets; entries where
/// factorization fails are recorded as nullopt rather than aborting.
std::vector<std::optional<double>> objective_trace(const Dataset& data, const KernelExpr& kernel,
                                                   const PriorMean& mean,
                                                   const std::vector<Hyperparameters>& path);

}  // namespace gpkit
