#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "gpkit/core.hpp"

namespace gpkit {

/// Distance metric backing the stationary kernels: a single isotropic length
/// scale, one length scale per axis, or a full SPD matrix M giving
/// dist2 = (x1-x2)^T M (x1-x2).
class Metric {
public:
  enum class Kind { Isotropic, AxisLengths, Full };

  static Metric isotropic(Param length);
  static Metric axis_lengths(std::vector<Param> lengths);
  static Metric full(Matrix m);

  Kind kind() const { return kind_; }

  /// Squared scaled distance; always >= 0, exactly 0 at x1 == x2.
  double dist2(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h) const;

  /// dist2 plus d(dist2)/d(value) accumulated into grad for referenced entries.
  double dist2_grad(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h,
                    Eigen::Ref<Vector> grad) const;

  void collect_params(std::set<std::string>& names) const;

private:
  Metric() = default;
  Kind kind_ = Kind::Isotropic;
  std::vector<Param> lengths_;  // 1 entry when isotropic
  Matrix m_;
};

/// Parametric scalar field over the index space, used by Warp and as the
/// signal-amplitude field of the Paciorek-Risser kernel.
class ScalarField {
public:
  virtual ~ScalarField() = default;
  virtual double value(const IndexPoint& x, const Hyperparameters& h) const = 0;
  /// value plus d(value)/d(hyperparameter) accumulated into grad.
  virtual double value_grad(const IndexPoint& x, const Hyperparameters& h,
                            Eigen::Ref<Vector> grad) const = 0;
  virtual void collect_params(std::set<std::string>& names) const = 0;
};

using ScalarFieldPtr = std::shared_ptr<const ScalarField>;

ScalarFieldPtr constant_field(Param c);
/// a^T x + b over the full index space (coeffs length = dim).
ScalarFieldPtr linear_field(std::vector<Param> coeffs, Param intercept);
/// scale * (radius - ||x||) + offset.
ScalarFieldPtr radial_field(Param scale, double radius, Param offset);
/// sum_j exp(-(x[axis] - c_j(x))^2 / width); centers are scalar fields so
/// they may drift with the remaining coordinates.
ScalarFieldPtr bump_sum_field(int axis, std::vector<ScalarFieldPtr> centers, Param width);

/// Parametric SPD matrix field Sigma(x) = L(x) L(x)^T + 1e-8 I built from a
/// lower-triangular factor, so it is SPD at every x by construction.
class MatrixField {
public:
  virtual ~MatrixField() = default;
  virtual Matrix value(const IndexPoint& x, const Hyperparameters& h) const = 0;
  virtual void collect_params(std::set<std::string>& names) const = 0;
};

using MatrixFieldPtr = std::shared_ptr<const MatrixField>;

/// L = diag(lengths), constant over the space.
MatrixFieldPtr constant_diag_matrix_field(std::vector<Param> lengths);
/// L = (a + b * ||x||) * I: isotropic length scale varying with the radius.
MatrixFieldPtr radial_diag_matrix_field(int dim, Param a, Param b);
/// Constant lower-triangular factor given literally.
MatrixFieldPtr tril_matrix_field(Matrix lower);

/// Affine map g(x) = A x + b used by the operator-derived kernels.
struct AffineMap {
  Matrix a;
  Vector b;
  IndexPoint apply(const IndexPoint& x) const;
};

/// A node of the kernel-expression tree. Expressions are immutable and
/// evaluation is pure; hyperparameter values are passed at every call, so a
/// single tree serves all optimizer iterates and all threads.
class Kernel {
public:
  virtual ~Kernel() = default;

  virtual double eval(const IndexPoint& x1, const IndexPoint& x2,
                      const Hyperparameters& h) const = 0;

  /// eval plus d(k)/d(hyperparameter value) accumulated into grad (size
  /// h.size()). Nodes without analytic derivatives contribute value only;
  /// their parameters are reported through collect_fd_params and handled by
  /// finite differences at the likelihood level.
  virtual double eval_grad(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h,
                           Eigen::Ref<Vector> grad) const = 0;

  /// Names of every hyperparameter the expression reads.
  virtual void collect_params(std::set<std::string>& names) const = 0;

  /// Entry indices whose derivative must come from finite differences.
  virtual void collect_fd_params(const Hyperparameters& h, std::set<int>& idx) const;
};

using KernelExpr = std::shared_ptr<const Kernel>;

// ---- base kernels (unit signal variance; wrap in scale() for sigma_s^2) ----

/// exp(-dist2 / 2)
KernelExpr sqexp(Metric metric);
/// exp(-sqrt(dist2))
KernelExpr exponential(Metric metric);
/// Matern with half-integer smoothness nu in {1/2, 3/2, 5/2}; nu = 1/2 is
/// identical to exponential(). Other nu values throw UnsupportedNu.
KernelExpr matern(Metric metric, double nu);
KernelExpr constant(Param c);

// ---- combinators ----

KernelExpr sum(std::vector<KernelExpr> children);
KernelExpr product(std::vector<KernelExpr> children);
KernelExpr scale(Param sigma2, KernelExpr child);
/// Child sees only the listed coordinate axes (0-based).
KernelExpr axis_restrict(std::vector<int> axes, KernelExpr child);
/// f(x1) f(x2) k(x1, x2); valid for any field f.
KernelExpr warp(ScalarFieldPtr field, KernelExpr child);

// ---- operator transforms ----

/// (1/|G|^2) sum_{g,h in G} k(g(x1), h(x2)) over the given transform list.
KernelExpr group_average(std::vector<AffineMap> transforms, KernelExpr child);
/// The four sign-flip maps (+-x1, +-x2) of a 2-D space.
std::vector<AffineMap> axial_symmetry_group();
/// Rotations by 2 pi p / order, p = 0..order-1, of a 2-D space.
std::vector<AffineMap> rotation_group(int order);
/// group_average over rotation_group(6): the 36-term six-fold kernel.
KernelExpr six_fold(KernelExpr child);
/// Averages shifts {0, +p, -p} of the chosen axis on both arguments: the
/// 9-term finite periodicity construction. Not exactly translation
/// invariant; see the shift maps themselves for the expansion.
KernelExpr periodic_shift(int axis, double period, KernelExpr child);
std::vector<AffineMap> shift_maps(int dim, int axis, double period);

// ---- non-stationary ----

/// sigma_s^2(x1) sigma_s^2(x2) / sqrt(|(S1+S2)/2|) * matern_nu(sqrt(Q)),
/// Q = (x1-x2)^T ((S1+S2)/2)^{-1} (x1-x2), where sigma_s^2(x) is the
/// amplitude field squared and S = Sigma(x). Gradient is finite-difference.
KernelExpr paciorek_risser(ScalarFieldPtr amplitude, MatrixFieldPtr sigma, double nu);

// ---- diagnostics ----

struct PsdReport {
  double min_eig = 0.0;
  double trace = 0.0;
  bool pass = false;
};

/// Builds the Gram matrix on the given points, symmetrizes, and checks
/// min eigenvalue >= -1e-8 * max(1, trace). Reports instead of throwing.
PsdReport psd_check(const KernelExpr& k, const Hyperparameters& h,
                    const std::vector<IndexPoint>& points);

/// Matern profile as a function of the scaled distance a = sqrt(dist2).
double matern_profile(double a, double nu);

}  // namespace gpkit
