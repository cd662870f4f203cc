#include "gpkit/engine.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <exception>
#include <thread>

namespace gpkit {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Runs fn(i) for i in [0, n), striding rows across threads. Row i of an
// upper-triangular sweep costs n - i, so striding balances the load.
template <typename Fn>
void parallel_rows(int n, const Fn& fn) {
  unsigned workers = std::thread::hardware_concurrency();
  if (workers < 2 || n < 48) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = std::min(workers, 8u);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = static_cast<int>(t); i < n; i += static_cast<int>(workers)) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Vector residual(const Dataset& data, const PriorMean& mean, const Hyperparameters& h) {
  Vector r = data.values;
  if (!mean.is_zero()) r.array() -= mean.value(h);
  return r;
}

}  // namespace

Matrix build_gram(const KernelExpr& k, const std::vector<IndexPoint>& points,
                  const Hyperparameters& h) {
  const int n = static_cast<int>(points.size());
  if (n < 1) throw InvalidArgument("build_gram: need at least one point");
  Matrix gram(n, n);
  parallel_rows(n, [&](int i) {
    for (int j = i; j < n; ++j) {
      const double v = k->eval(points[i], points[j], h);
      gram(i, j) = v;
      gram(j, i) = v;
    }
  });
  return gram;
}

Matrix build_cross(const KernelExpr& k, const std::vector<IndexPoint>& rows,
                   const std::vector<IndexPoint>& cols, const Hyperparameters& h) {
  const int n = static_cast<int>(rows.size());
  const int m = static_cast<int>(cols.size());
  Matrix out(n, m);
  parallel_rows(n, [&](int i) {
    for (int j = 0; j < m; ++j) out(i, j) = k->eval(rows[i], cols[j], h);
  });
  return out;
}

CholFactor factorize(const Matrix& k, const NoiseModel& noise) {
  if (k.rows() != k.cols()) throw DimensionMismatch("factorize: K must be square");
  Matrix a = k;
  noise.add_to(a);
  if (!a.allFinite()) throw NotFactorizable("factorize: K+V contains NaN/Inf");

  const int n = static_cast<int>(a.rows());
  const double base = a.diagonal().mean();
  // A pivot this small relative to the diagonal means the factor is useless
  // for solves even if the decomposition nominally succeeded.
  const double pivot_floor = 1e-12 * std::max(base, 1e-300);

  static constexpr double kLadder[] = {0.0, 1e-10, 1e-8, 1e-6, 1e-4};
  for (double mult : kLadder) {
    Matrix trial = a;
    const double jitter = mult * base;
    trial.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(trial);
    if (llt.info() != Eigen::Success) continue;
    Matrix lower = llt.matrixL();
    double min_pivot2 = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) min_pivot2 = std::min(min_pivot2, lower(i, i) * lower(i, i));
    if (min_pivot2 < pivot_floor) continue;
    return CholFactor{std::move(lower), jitter};
  }
  throw NotFactorizable("factorize: Cholesky failed at every jitter level");
}

FittedState fit(const Dataset& data, KernelExpr kernel, PriorMean mean,
                const Hyperparameters& h) {
  const Matrix gram = build_gram(kernel, data.points, h);
  CholFactor f = factorize(gram, data.noise);
  const Vector r = residual(data, mean, h);
  Vector alpha = f.lower.triangularView<Eigen::Lower>().solve(r);
  f.lower.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha);
  return FittedState{data,        std::move(kernel), std::move(mean), h,
                     std::move(f.lower), std::move(alpha),  f.jitter_used};
}

double log_marginal_likelihood(const Dataset& data, const KernelExpr& kernel,
                               const PriorMean& mean, const Hyperparameters& h) {
  const FittedState s = fit(data, kernel, mean, h);
  const Vector r = residual(data, mean, h);
  const double quad = r.dot(s.alpha);
  const double logdet = 2.0 * s.chol_lower.diagonal().array().log().sum();
  const int n = data.size();
  return -0.5 * quad - 0.5 * logdet - 0.5 * n * std::log(kTwoPi);
}

Vector log_marginal_likelihood_grad(const Dataset& data, const KernelExpr& kernel,
                                    const PriorMean& mean, const Hyperparameters& h) {
  const int n = data.size();
  const int m = h.size();
  Vector grad = Vector::Zero(m);
  if (m == 0) return grad;

  const FittedState s = fit(data, kernel, mean, h);

  // A^{-1} once; each dK/dphi_j then costs an elementwise dot.
  Matrix ainv = Matrix::Identity(n, n);
  s.chol_lower.triangularView<Eigen::Lower>().solveInPlace(ainv);
  s.chol_lower.triangularView<Eigen::Lower>().transpose().solveInPlace(ainv);

  std::vector<Matrix> dk(m, Matrix(n, n));
  parallel_rows(n, [&](int i) {
    Vector g(m);
    for (int j = i; j < n; ++j) {
      g.setZero();
      kernel->eval_grad(data.points[i], data.points[j], h, g);
      for (int p = 0; p < m; ++p) {
        dk[p](i, j) = g[p];
        dk[p](j, i) = g[p];
      }
    }
  });

  for (int p = 0; p < m; ++p) {
    const double quad = s.alpha.dot(dk[p] * s.alpha);
    const double tr = ainv.cwiseProduct(dk[p]).sum();
    grad[p] = 0.5 * (quad - tr);
  }

  // Constant prior mean: d/dc of -1/2 (y - c 1)^T A^{-1} (y - c 1) = 1^T alpha.
  const int mean_idx = mean.param_index(h);
  if (mean_idx >= 0) grad[mean_idx] += s.alpha.sum();

  // Parameters under nodes without analytic derivatives: central finite
  // differences on the full objective, log-space for log-scale entries.
  std::set<int> fd;
  kernel->collect_fd_params(h, fd);
  for (int p : fd) {
    const auto& e = h.entry(p);
    auto eval_at = [&](double value) {
      std::vector<HyperEntry> entries = h.entries();
      entries[p].value = value;
      entries[p].low = std::min(entries[p].low, value);
      entries[p].high = std::max(entries[p].high, value);
      return log_marginal_likelihood(data, kernel, mean, Hyperparameters(entries));
    };
    double d;
    if (e.scale == ParamScale::Log) {
      const double u = std::log(e.value);
      const double step = 1e-6 * std::max(1.0, std::abs(u));
      d = (eval_at(std::exp(u + step)) - eval_at(std::exp(u - step))) / (2.0 * step) / e.value;
    } else {
      const double step = 1e-6 * std::max(1.0, std::abs(e.value));
      d = (eval_at(e.value + step) - eval_at(e.value - step)) / (2.0 * step);
    }
    grad[p] = d;
  }
  return grad;
}

Posterior posterior(const FittedState& state, const std::vector<IndexPoint>& query,
                    bool want_full_cov) {
  if (query.empty()) throw InvalidArgument("posterior: empty query list");
  for (const auto& q : query) state.data.space.validate_point(q);
  const int m = static_cast<int>(query.size());

  const Matrix kappa = build_cross(state.kernel, state.data.points, query, state.hyper);
  Posterior post;
  post.mean = kappa.transpose() * state.alpha;
  if (!state.mean.is_zero()) post.mean.array() += state.mean.value(state.hyper);

  // W = L^{-1} kappa; prior covariance minus W^T W is the posterior covariance.
  Matrix w = kappa;
  state.chol_lower.triangularView<Eigen::Lower>().solveInPlace(w);

  post.variance.resize(m);
  for (int i = 0; i < m; ++i) {
    const double prior = state.kernel->eval(query[i], query[i], state.hyper);
    double v = prior - w.col(i).squaredNorm();
    if (v < -1e-10)
      throw InternalError("posterior: variance " + std::to_string(v) +
                          " below the -1e-10 consistency floor");
    post.variance[i] = std::max(v, 0.0);
  }

  if (want_full_cov) {
    Matrix prior = build_gram(state.kernel, query, state.hyper);
    Matrix cov = prior - w.transpose() * w;
    cov.diagonal() = post.variance;  // keep the checked/clamped diagonal
    post.covariance = std::move(cov);
  }
  return post;
}

}  // namespace gpkit
