#pragma once

#include <optional>

#include "gpkit/core.hpp"
#include "gpkit/kernels.hpp"

namespace gpkit {

/// Prior mean function: zero or a (possibly trainable) constant.
class PriorMean {
public:
  PriorMean() = default;  // zero mean
  static PriorMean zero() { return PriorMean{}; }
  static PriorMean constant(Param c) {
    PriorMean m;
    m.zero_ = false;
    m.c_ = std::move(c);
    return m;
  }

  bool is_zero() const { return zero_; }
  double value(const Hyperparameters& h) const { return zero_ ? 0.0 : c_.resolve(h); }
  int param_index(const Hyperparameters& h) const { return zero_ ? -1 : c_.index_in(h); }

private:
  bool zero_ = true;
  Param c_ = 0.0;
};

/// Dense Gram matrix K[i][j] = k(x_i, x_j); exactly symmetric (upper
/// triangle evaluated and mirrored). Rows may be computed in parallel.
Matrix build_gram(const KernelExpr& k, const std::vector<IndexPoint>& points,
                  const Hyperparameters& h);

/// Cross-covariance kappa[i][j] = k(rows_i, cols_j).
Matrix build_cross(const KernelExpr& k, const std::vector<IndexPoint>& rows,
                   const std::vector<IndexPoint>& cols, const Hyperparameters& h);

struct CholFactor {
  Matrix lower;        // L with L L^T = K + V + jitter I
  double jitter_used;  // absolute diagonal addition (0 when none was needed)
};

/// Cholesky of K + V with an escalating jitter ladder
/// {0, 1e-10, 1e-8, 1e-6, 1e-4} * mean(diag(K + V)). Throws NotFactorizable
/// when even the last rung fails.
CholFactor factorize(const Matrix& k, const NoiseModel& noise);

/// Everything posterior evaluation needs, precomputed once per fit.
struct FittedState {
  Dataset data;
  KernelExpr kernel;
  PriorMean mean;
  Hyperparameters hyper;
  Matrix chol_lower;
  Vector alpha;  // (K+V+jitter)^{-1} (y - mu)
  double jitter_used = 0.0;
};

FittedState fit(const Dataset& data, KernelExpr kernel, PriorMean mean,
                const Hyperparameters& h);

/// -1/2 (y-mu)^T (K+V)^{-1} (y-mu) - 1/2 log|K+V| - N/2 log(2 pi)
double log_marginal_likelihood(const Dataset& data, const KernelExpr& kernel,
                               const PriorMean& mean, const Hyperparameters& h);

/// Gradient of the marginal log-likelihood with respect to every
/// hyperparameter value. Analytic where the expression supplies
/// derivatives; central finite differences (relative step 1e-6, log-space
/// for log-scale entries) for parameters under nodes that do not.
Vector log_marginal_likelihood_grad(const Dataset& data, const KernelExpr& kernel,
                                    const PriorMean& mean, const Hyperparameters& h);

struct Posterior {
  Vector mean;
  Vector variance;
  std::optional<Matrix> covariance;
};

/// Posterior mean and variance (optionally the full covariance) at the
/// query points, via triangular solves against the cached factor.
Posterior posterior(const FittedState& state, const std::vector<IndexPoint>& query,
                    bool want_full_cov = false);

}  // namespace gpkit
