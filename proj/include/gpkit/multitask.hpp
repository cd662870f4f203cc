#pragma once

#include "gpkit/engine.hpp"

namespace gpkit {

/// Physical coordinates of the output-index axis (e.g. wave numbers),
/// strictly increasing.
class TaskGrid {
public:
  explicit TaskGrid(Vector coords);
  int size() const { return static_cast<int>(coords_.size()); }
  double coord(int i) const { return coords_[i]; }
  const Vector& coords() const { return coords_; }

private:
  Vector coords_;
};

struct MultiTaskRecord {
  IndexPoint input;   // point of the input space (n1 coordinates)
  Vector values;      // one value per task
  Vector noise_vars;  // per-task noise variances
};

struct MultiTaskDataset {
  IndexSpace base_space;  // input space only (output_dim == 0)
  TaskGrid tasks;
  std::vector<MultiTaskRecord> records;

  int record_count() const { return static_cast<int>(records.size()); }
};

MultiTaskDataset make_multitask_dataset(IndexSpace base_space, TaskGrid tasks,
                                        std::vector<MultiTaskRecord> records);

/// Flattens to a single-task Dataset over the (n1+1)-dimensional product
/// space: N*T points [x_i, task_coord], record-major then task-major, with
/// diagonal noise. Inverse of unlift.
Dataset lift(const MultiTaskDataset& mt);

/// Restores the record/task structure from a lifted dataset (exact).
MultiTaskDataset unlift(const Dataset& lifted, const TaskGrid& tasks);

/// Product-space stationary kernel for spectra over a 2-D sample plane:
/// sigma2 * exp_kernel(anisotropic plane distance) * matern_nu(task gap).
KernelExpr ir_stationary_kernel(Param l_space_1, Param l_space_2, Param l_task, double nu_task,
                                Param sigma2);

/// Non-stationary variant: the stationary product plus a separable term
/// A(x1) A(x2) built from two Gaussian bumps in the task coordinate whose
/// centers drift linearly with the sample-plane position:
///   p1(x) = phi0 (phi1 x1) + (phi2 x2),  p2(x) = phi3 (phi4 x1) + (phi5 x2)
///   A(x)  = exp(-(x3 - p1(x))^2 / phi6) + exp(-(x3 - p2(x))^2 / phi6)
/// giving sigma2 * (stationary + A1 A2).
KernelExpr ir_nonstationary_kernel(const std::array<Param, 10>& phi, Param sigma2,
                                   double nu_task);

/// Kernel between [x, t_j] and [x, t_k] for all task pairs under the fitted
/// hyperparameters: the task-covariance structure at one sample location.
Matrix cross_task_covariance(const FittedState& state, const IndexPoint& input,
                             const TaskGrid& tasks);

}  // namespace gpkit
