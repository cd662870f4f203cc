// Shared test utilities: point samplers, hand-coded operator-expansion
// oracles, a dense-conditioning oracle, finite-difference gradients, and a
// random kernel-composition generator. Everything here is deliberately
// independent of the library's Cholesky/eval pipeline where it serves as an
// oracle for it.
#pragma once

#include <random>

#include "gpkit/engine.hpp"

namespace gpkit::testing {

inline IndexPoint pt(double a) {
  IndexPoint p(1);
  p << a;
  return p;
}

inline IndexPoint pt(double a, double b) {
  IndexPoint p(2);
  p << a, b;
  return p;
}

inline IndexPoint pt(double a, double b, double c) {
  IndexPoint p(3);
  p << a, b, c;
  return p;
}

inline std::vector<IndexPoint> random_points(std::mt19937_64& rng, int n, int dim, double lo,
                                             double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<IndexPoint> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    IndexPoint p(dim);
    for (int d = 0; d < dim; ++d) p[d] = u(rng);
    pts.push_back(std::move(p));
  }
  return pts;
}

// The explicit 16-term axial-symmetry expansion, transcribed term by term.
inline double axial16(const KernelExpr& k, const Hyperparameters& h, const IndexPoint& x1,
                      const IndexPoint& x2) {
  const double a1 = x1[0], b1 = x1[1], a2 = x2[0], b2 = x2[1];
  auto P = [](double a, double b) { return pt(a, b); };
  auto K = [&](const IndexPoint& u, const IndexPoint& v) { return k->eval(u, v, h); };
  return (K(P(a1, b1), P(a2, b2)) + K(P(-a1, b1), P(a2, b2)) + K(P(a1, -b1), P(a2, b2)) +
          K(P(-a1, -b1), P(a2, b2)) + K(P(a1, b1), P(-a2, b2)) + K(P(a1, b1), P(a2, -b2)) +
          K(P(a1, b1), P(-a2, -b2)) + K(P(-a1, b1), P(-a2, b2)) + K(P(-a1, b1), P(a2, -b2)) +
          K(P(-a1, b1), P(-a2, -b2)) + K(P(a1, -b1), P(-a2, b2)) + K(P(a1, -b1), P(a2, -b2)) +
          K(P(a1, -b1), P(-a2, -b2)) + K(P(-a1, -b1), P(-a2, b2)) + K(P(-a1, -b1), P(a2, -b2)) +
          K(P(-a1, -b1), P(-a2, -b2))) /
         16.0;
}

// The explicit 9-term periodicity expansion.
inline double periodic9(const KernelExpr& k, const Hyperparameters& h, int axis, double p,
                        const IndexPoint& x1, const IndexPoint& x2) {
  auto sh = [&](const IndexPoint& x, double s) {
    IndexPoint y = x;
    y[axis] += s;
    return y;
  };
  auto K = [&](const IndexPoint& u, const IndexPoint& v) { return k->eval(u, v, h); };
  return (K(x1, x2) + K(x1, sh(x2, p)) + K(x1, sh(x2, -p)) + K(sh(x1, p), x2) +
          K(sh(x1, p), sh(x2, p)) + K(sh(x1, p), sh(x2, -p)) + K(sh(x1, -p), x2) +
          K(sh(x1, -p), sh(x2, p)) + K(sh(x1, -p), sh(x2, -p))) /
         9.0;
}

struct DensePosterior {
  Vector mean;
  Vector variance;
  Matrix covariance;
  double log_det;
};

// Conditions the explicit joint Gaussian by direct matrix inversion; no
// Cholesky, no triangular solves.
inline DensePosterior dense_conditioning(const KernelExpr& k, const Hyperparameters& h,
                                         const Dataset& data, double mu0,
                                         const std::vector<IndexPoint>& query) {
  const int n = data.size();
  const int m = static_cast<int>(query.size());
  Matrix kv(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) kv(i, j) = k->eval(data.points[i], data.points[j], h);
  kv = 0.5 * (kv + kv.transpose());
  data.noise.add_to(kv);

  Matrix kappa(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) kappa(i, j) = k->eval(data.points[i], query[j], h);
  Matrix kq(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) kq(i, j) = k->eval(query[i], query[j], h);

  const Matrix inv = kv.inverse();
  const Vector resid = data.values.array() - mu0;
  DensePosterior out;
  out.mean = Vector::Constant(m, mu0) + kappa.transpose() * inv * resid;
  out.covariance = kq - kappa.transpose() * inv * kappa;
  out.variance = out.covariance.diagonal();
  out.log_det = std::log(kv.determinant());
  return out;
}

// Central finite differences of the marginal log-likelihood in value space.
inline Vector fd_mll_grad(const Dataset& data, const KernelExpr& k, const PriorMean& mean,
                          const Hyperparameters& h) {
  Vector g(h.size());
  for (int i = 0; i < h.size(); ++i) {
    const double v = h.value(i);
    const double step = 6e-6 * std::max(1.0, std::abs(v));
    auto at = [&](double value) {
      std::vector<HyperEntry> entries = h.entries();
      entries[i].value = value;
      entries[i].low = std::min(entries[i].low, value);
      entries[i].high = std::max(entries[i].high, value);
      return log_marginal_likelihood(data, k, mean, Hyperparameters(entries));
    };
    g[i] = (at(v + step) - at(v - step)) / (2.0 * step);
  }
  return g;
}

// Draws one sample path of the zero-mean prior at the given points.
inline Vector sample_gp_prior(const KernelExpr& k, const Hyperparameters& h,
                              const std::vector<IndexPoint>& points, std::uint64_t seed) {
  const int n = static_cast<int>(points.size());
  Matrix gram(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gram(i, j) = k->eval(points[i], points[j], h);
  gram.diagonal().array() += 1e-10 * gram.diagonal().mean();
  Eigen::LLT<Matrix> llt(gram);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector z(n);
  for (int i = 0; i < n; ++i) z[i] = gauss(rng);
  return Matrix(llt.matrixL()) * z;
}

// Random composition of depth <= max_depth over the combinator set
// {sum, product, scale, warp, group_average, axis_restrict} with stationary
// leaves; used by the closure suite.
inline KernelExpr random_composition(std::mt19937_64& rng, int depth, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto ulen = [&] { return 0.3 + 1.7 * u(rng); };

  if (depth == 0) {
    switch (static_cast<int>(u(rng) * 4)) {
      case 0: return sqexp(Metric::isotropic(ulen()));
      case 1: return exponential(Metric::isotropic(ulen()));
      case 2: return matern(Metric::isotropic(ulen()), u(rng) < 0.5 ? 1.5 : 2.5);
      default: return constant(0.1 + u(rng));
    }
  }
  const int pick = static_cast<int>(u(rng) * (dim == 2 ? 6 : 5));
  switch (pick) {
    case 0:
      return sum({random_composition(rng, depth - 1, dim), random_composition(rng, depth - 1, dim)});
    case 1:
      return product(
          {random_composition(rng, depth - 1, dim), random_composition(rng, depth - 1, dim)});
    case 2:
      return scale(0.2 + u(rng), random_composition(rng, depth - 1, dim));
    case 3: {
      ScalarFieldPtr f;
      const int kind = static_cast<int>(u(rng) * 3);
      if (kind == 0) {
        std::vector<Param> coeffs;
        for (int d = 0; d < dim; ++d) coeffs.emplace_back(u(rng) - 0.5);
        f = linear_field(std::move(coeffs), u(rng));
      } else if (kind == 1) {
        f = radial_field(0.5 + u(rng), 3.0, u(rng));
      } else {
        f = constant_field(0.5 + u(rng));
      }
      return warp(std::move(f), random_composition(rng, depth - 1, dim));
    }
    case 4: {
      std::vector<int> axes;
      for (int d = 0; d < dim; ++d)
        if (u(rng) < 0.5) axes.push_back(d);
      if (axes.empty()) axes.push_back(static_cast<int>(u(rng) * dim));
      const int sub = static_cast<int>(axes.size());
      return axis_restrict(std::move(axes), random_composition(rng, depth - 1, sub));
    }
    default:
      return group_average(axial_symmetry_group(), random_composition(rng, depth - 1, 2));
  }
}

}  // namespace gpkit::testing
