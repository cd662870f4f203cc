#include "gpkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

namespace gpkit {

namespace {

struct PackedProblem {
  const Dataset& data;
  const KernelExpr& kernel;
  const PriorMean& mean;
  const Hyperparameters& tmpl;
  Vector lo, hi;

  double neg_mll(const Vector& x) const {
    return -log_marginal_likelihood(data, kernel, mean, tmpl.unpack(x));
  }

  // Gradient of -MLL in packed space (chain rule through the log map).
  Vector neg_mll_grad(const Vector& x) const {
    const Hyperparameters h = tmpl.unpack(x);
    const Vector gv = log_marginal_likelihood_grad(data, kernel, mean, h);
    Vector gu(x.size());
    for (int i = 0; i < x.size(); ++i) {
      const auto& e = h.entry(i);
      gu[i] = -gv[i] * (e.scale == ParamScale::Log ? e.value : 1.0);
    }
    return gu;
  }

  Vector clamp(Vector x) const {
    for (int i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    return x;
  }

  Vector projected(const Vector& x, const Vector& g) const {
    Vector pg = g;
    for (int i = 0; i < x.size(); ++i) {
      if (lo[i] == hi[i]) pg[i] = 0.0;                          // pinned entry
      else if (x[i] <= lo[i] && g[i] > 0.0) pg[i] = 0.0;        // pushing out at lower bound
      else if (x[i] >= hi[i] && g[i] < 0.0) pg[i] = 0.0;        // pushing out at upper bound
    }
    return pg;
  }
};

RestartResult run_restart(const PackedProblem& prob, const Vector& start, int max_iters,
                          double tol) {
  const int d = static_cast<int>(start.size());
  RestartResult out;
  out.start = prob.tmpl.unpack(start);

  Vector x = prob.clamp(start);
  double fx;
  try {
    fx = prob.neg_mll(x);
    if (!std::isfinite(fx)) throw NotFactorizable("non-finite objective at start");
  } catch (const NotFactorizable&) {
    out.end = prob.tmpl.unpack(x);
    out.skipped = true;
    return out;
  }

  Vector g = prob.neg_mll_grad(x);
  Matrix hinv = Matrix::Identity(d, d);
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    const Vector pg = prob.projected(x, g);
    if (pg.lpNorm<Eigen::Infinity>() <= tol) {
      out.converged = true;
      break;
    }

    Vector dir = -(hinv * pg);
    if (dir.dot(pg) >= 0.0) {  // not a descent direction; restart the metric
      hinv.setIdentity();
      dir = -pg;
    }
    // keep single steps bounded in packed space
    const double dmax = dir.lpNorm<Eigen::Infinity>();
    if (dmax > 5.0) dir *= 5.0 / dmax;

    double t = 1.0;
    bool accepted = false;
    Vector xn;
    double fn = 0.0;
    for (int bt = 0; bt < 40; ++bt, t *= 0.5) {
      xn = prob.clamp(x + t * dir);
      const double slope = g.dot(xn - x);
      if (slope >= 0.0) continue;
      try {
        fn = prob.neg_mll(xn);
      } catch (const NotFactorizable&) {
        continue;
      }
      if (std::isfinite(fn) && fn <= fx + 1e-4 * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    Vector gn = prob.neg_mll_grad(xn);
    const Vector s = xn - x;
    const Vector y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Matrix m = Matrix::Identity(d, d) - rho * s * y.transpose();
      hinv = m * hinv * m.transpose() + rho * s * s.transpose();
    }
    x = std::move(xn);
    fx = fn;
    g = std::move(gn);
  }

  out.end = prob.tmpl.unpack(x);
  out.objective = -fx;
  out.iterations = iter;
  return out;
}

std::vector<Vector> latin_hypercube_starts(const PackedProblem& prob, int restarts,
                                           std::uint64_t seed) {
  const int d = static_cast<int>(prob.lo.size());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<int>> strata(d, std::vector<int>(restarts));
  for (int j = 0; j < d; ++j) {
    std::iota(strata[j].begin(), strata[j].end(), 0);
    std::shuffle(strata[j].begin(), strata[j].end(), rng);
  }
  std::vector<Vector> starts(restarts, Vector(d));
  for (int r = 0; r < restarts; ++r)
    for (int j = 0; j < d; ++j) {
      const double width = (prob.hi[j] - prob.lo[j]) / restarts;
      starts[r][j] = prob.lo[j] + (strata[j][r] + unit(rng)) * width;
    }
  return starts;
}

}  // namespace

TrainReport train(const Dataset& data, const KernelExpr& kernel, const PriorMean& mean,
                  const Hyperparameters& tmpl, const TrainConfig& cfg) {
  if (cfg.restarts < 1) throw InvalidArgument("train: restarts must be >= 1");
  if (!(cfg.gradient_tolerance > 0.0)) throw InvalidArgument("train: tolerance must be > 0");

  PackedProblem prob{data, kernel, mean, tmpl, tmpl.packed_low(), tmpl.packed_high()};
  if (!prob.lo.allFinite() || !prob.hi.allFinite())
    throw InvalidArgument("train: template bounds must be finite");

  std::vector<Vector> starts;
  if (cfg.starts) {
    if (static_cast<int>(cfg.starts->size()) < cfg.restarts)
      throw InvalidArgument("train: fewer user starts than restarts");
    for (int r = 0; r < cfg.restarts; ++r) starts.push_back((*cfg.starts)[r].pack());
  } else {
    starts = latin_hypercube_starts(prob, cfg.restarts, cfg.seed);
  }

  std::vector<RestartResult> results(cfg.restarts);
  std::vector<std::exception_ptr> errors(cfg.restarts);
  {
    unsigned workers = std::max(1u, std::min(std::thread::hardware_concurrency(), 8u));
    workers = std::min<unsigned>(workers, cfg.restarts);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        for (int r = static_cast<int>(t); r < cfg.restarts; r += static_cast<int>(workers)) {
          try {
            results[r] = run_restart(prob, starts[r], cfg.max_iters, cfg.gradient_tolerance);
          } catch (...) {
            errors[r] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  TrainReport report;
  report.per_restart = std::move(results);
  int best = -1;
  for (int r = 0; r < cfg.restarts; ++r) {
    const auto& res = report.per_restart[r];
    if (res.skipped || !std::isfinite(res.objective)) continue;
    if (best < 0 || res.objective > report.best_objective + 1e-12) {
      best = r;
      report.best_objective = res.objective;
    }
  }
  if (best < 0) throw AllRestartsFailed("train: every restart was skipped or diverged");
  report.best = report.per_restart[best].end;
  return report;
}

std::vector<std::optional<double>> objective_trace(const Dataset& data, const KernelExpr& kernel,
                                                   const PriorMean& mean,
                                                   const std::vector<Hyperparameters>& path) {
  std::vector<std::optional<double>> out;
  out.reserve(path.size());
  for (const auto& h : path) {
    try {
      out.push_back(log_marginal_likelihood(data, kernel, mean, h));
    } catch (const NotFactorizable&) {
      out.push_back(std::nullopt);
    }
  }
  return out;
}

}  // namespace gpkit
