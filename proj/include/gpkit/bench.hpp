#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "gpkit/multitask.hpp"
#include "gpkit/train.hpp"

#include <json.hpp>

namespace gpkit::bench {

/// Deterministic synthetic target with a known domain; stands in for the
/// instrument data in the figure-style experiments.
struct GroundTruth {
  std::string name;
  int dim = 0;
  std::vector<std::array<double, 2>> domain;
  std::function<double(const IndexPoint&)> eval;
};

const GroundTruth& ground_truth(const std::string& name);
std::vector<std::string> ground_truth_names();

/// Seeded uniform sampling over the domain plus Gaussian noise; additive2d
/// confines samples to the two coordinate axes to match the data layout the
/// additive kernel is meant for. Prefix-stable: the first n points of
/// generate(gt, m, seed, ...) equal generate(gt, n, seed, ...) for n <= m.
Dataset generate(const GroundTruth& gt, int n, std::uint64_t seed, double noise_variance);

/// Held-out evaluation points drawn from a seed-derived stream so they never
/// collide with the training draw.
std::vector<IndexPoint> sample_points(const GroundTruth& gt, int n, std::uint64_t seed);

/// Synthetic multi-task spectra with two Gaussian peaks whose centers drift
/// linearly across the sample plane.
MultiTaskDataset generate_ir_peaks(int records, int tasks, std::uint64_t seed,
                                   double noise_variance);
double ir_peaks_truth(const IndexPoint& lifted_point);

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct KernelRecipe {
  std::string name;
  nlohmann::json expr;
  Hyperparameters hyper;
};

struct RunConfig {
  // source: exactly one of ground_truth / csv_path / ir_peaks
  std::string ground_truth;
  std::string csv_path;
  std::string csv_layout = "single_task";
  double holdout_fraction = 0.2;
  bool ir_peaks = false;
  int ir_tasks = 8;

  int train_points = 50;
  int test_points = 200;
  int grid_size = 0;  // 0 = pick per dimension
  std::uint64_t seed = 0;
  double noise_variance = 0.01;

  std::vector<KernelRecipe> kernels;
  bool zero_mean = true;
  Param mean_constant = 0.0;

  TrainConfig train;
  std::vector<std::string> metrics;
  std::string out_dir;

  std::vector<int> n_schedule;
  int candidates = 200;
};

RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const nlohmann::json& j);

/// Builds a kernel expression from its declarative description.
KernelExpr build_kernel(const nlohmann::json& expr);

// ---------------------------------------------------------------------------
// Metrics and runs
// ---------------------------------------------------------------------------

struct MetricsReport {
  double rmse = 0.0;
  double mean_abs_error = 0.0;
  double nll = 0.0;
  double coverage95 = 0.0;
  double runtime_seconds = 0.0;
};

/// rmse / mean_abs_error compare the posterior mean with the latent ground
/// truth; nll / coverage95 are predictive scores of the held-out
/// measurements, so the observation noise enters the predictive variance.
MetricsReport compute_metrics(const Vector& truth, const Vector& observed,
                              const Vector& observation_noise, const Posterior& post);

struct RunResult {
  std::string kernel_name;
  MetricsReport metrics;
  TrainReport report;
  FittedState state;
};

/// Full pipeline for one kernel recipe: data -> train -> held-out posterior
/// -> metrics. Artifacts are written under out_dir/<recipe-name>/ when
/// out_dir is set (plot-ready grids, predictions, metrics, train report).
RunResult run_single(const RunConfig& cfg, const KernelRecipe& recipe);

/// Runs every recipe in the config.
std::vector<RunResult> run(const RunConfig& cfg);

/// RMSE as a function of the training-set size, one column per recipe.
/// Datasets are nested: the N=a set is a prefix of the N=b set for a < b.
struct ErrorCurve {
  std::vector<int> n_values;
  std::vector<std::string> kernel_names;
  Matrix rmse;  // n_values.size() x kernels
};

ErrorCurve error_vs_n(const RunConfig& cfg);

/// Highest-posterior-variance candidate; ties break to the lowest index.
IndexPoint suggest_next(const FittedState& state, const std::vector<IndexPoint>& candidates);

// ---------------------------------------------------------------------------
// CSV I/O (shortest round-trip decimals)
// ---------------------------------------------------------------------------

std::string format_double(double v);

Dataset load_csv_single_task(const std::filesystem::path& path, double default_noise = 1e-6);
MultiTaskDataset load_csv_multi_task(const std::filesystem::path& path,
                                     double default_noise = 1e-6);
void save_csv(const std::filesystem::path& path, const Dataset& data);
void save_csv(const std::filesystem::path& path, const MultiTaskDataset& data);

}  // namespace gpkit::bench
