#include "gpkit/kernels.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <utility>

namespace gpkit {

namespace {

double positive_or_throw(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string(what) + " must be positive");
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Metric
// ---------------------------------------------------------------------------

Metric Metric::isotropic(Param length) {
  Metric m;
  m.kind_ = Kind::Isotropic;
  m.lengths_ = {std::move(length)};
  return m;
}

Metric Metric::axis_lengths(std::vector<Param> lengths) {
  if (lengths.empty()) throw InvalidArgument("Metric::axis_lengths: empty length list");
  Metric m;
  m.kind_ = Kind::AxisLengths;
  m.lengths_ = std::move(lengths);
  return m;
}

Metric Metric::full(Matrix mat) {
  if (mat.rows() != mat.cols() || mat.rows() == 0)
    throw InvalidArgument("Metric::full: M must be square");
  const double scale = std::max(1.0, mat.cwiseAbs().maxCoeff());
  if ((mat - mat.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InvalidArgument("Metric::full: M must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(mat, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > 0.0))
    throw InvalidArgument("Metric::full: M must be positive definite");
  Metric m;
  m.kind_ = Kind::Full;
  m.m_ = std::move(mat);
  return m;
}

double Metric::dist2(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h) const {
  if (x1.size() != x2.size()) throw DimensionMismatch("Metric::dist2: point dimensions differ");
  switch (kind_) {
    case Kind::Isotropic: {
      const double l = positive_or_throw(lengths_[0].resolve(h), "metric length");
      return (x1 - x2).squaredNorm() / (l * l);
    }
    case Kind::AxisLengths: {
      if (static_cast<int>(lengths_.size()) != x1.size())
        throw DimensionMismatch("Metric::axis_lengths: expected dimension " +
                                std::to_string(lengths_.size()));
      double q = 0.0;
      for (int i = 0; i < x1.size(); ++i) {
        const double l = positive_or_throw(lengths_[i].resolve(h), "metric length");
        const double d = (x1[i] - x2[i]) / l;
        q += d * d;
      }
      return q;
    }
    case Kind::Full: {
      if (m_.rows() != x1.size())
        throw DimensionMismatch("Metric::full: expected dimension " + std::to_string(m_.rows()));
      const Vector d = x1 - x2;
      return d.dot(m_ * d);
    }
  }
  return 0.0;
}

double Metric::dist2_grad(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h,
                          Eigen::Ref<Vector> grad) const {
  switch (kind_) {
    case Kind::Isotropic: {
      const double l = positive_or_throw(lengths_[0].resolve(h), "metric length");
      const double q = (x1 - x2).squaredNorm() / (l * l);
      const int idx = lengths_[0].index_in(h);
      if (idx >= 0) grad[idx] += -2.0 * q / l;
      return q;
    }
    case Kind::AxisLengths: {
      if (static_cast<int>(lengths_.size()) != x1.size())
        throw DimensionMismatch("Metric::axis_lengths: expected dimension " +
                                std::to_string(lengths_.size()));
      double q = 0.0;
      for (int i = 0; i < x1.size(); ++i) {
        const double l = positive_or_throw(lengths_[i].resolve(h), "metric length");
        const double di = x1[i] - x2[i];
        const double qi = di * di / (l * l);
        q += qi;
        const int idx = lengths_[i].index_in(h);
        if (idx >= 0) grad[idx] += -2.0 * qi / l;
      }
      return q;
    }
    case Kind::Full:
      return dist2(x1, x2, h);  // literal matrix, no parameters
  }
  return 0.0;
}

void Metric::collect_params(std::set<std::string>& names) const {
  for (const auto& p : lengths_)
    if (p.is_ref()) names.insert(p.name());
}

// ---------------------------------------------------------------------------
// Scalar fields
// ---------------------------------------------------------------------------

namespace {

class ConstantField final : public ScalarField {
public:
  explicit ConstantField(Param c) : c_(std::move(c)) {}
  double value(const IndexPoint&, const Hyperparameters& h) const override { return c_.resolve(h); }
  double value_grad(const IndexPoint&, const Hyperparameters& h,
                    Eigen::Ref<Vector> grad) const override {
    const int idx = c_.index_in(h);
    if (idx >= 0) grad[idx] += 1.0;
    return c_.resolve(h);
  }
  void collect_params(std::set<std::string>& names) const override {
    if (c_.is_ref()) names.insert(c_.name());
  }

private:
  Param c_;
};

class LinearField final : public ScalarField {
public:
  LinearField(std::vector<Param> coeffs, Param intercept)
      : coeffs_(std::move(coeffs)), intercept_(std::move(intercept)) {
    if (coeffs_.empty()) throw InvalidArgument("linear_field: empty coefficient list");
  }

  double value(const IndexPoint& x, const Hyperparameters& h) const override {
    check_dim(x);
    double v = intercept_.resolve(h);
    for (int i = 0; i < x.size(); ++i) v += coeffs_[i].resolve(h) * x[i];
    return v;
  }

  double value_grad(const IndexPoint& x, const Hyperparameters& h,
                    Eigen::Ref<Vector> grad) const override {
    check_dim(x);
    double v = intercept_.resolve(h);
    const int bi = intercept_.index_in(h);
    if (bi >= 0) grad[bi] += 1.0;
    for (int i = 0; i < x.size(); ++i) {
      v += coeffs_[i].resolve(h) * x[i];
      const int ai = coeffs_[i].index_in(h);
      if (ai >= 0) grad[ai] += x[i];
    }
    return v;
  }

  void collect_params(std::set<std::string>& names) const override {
    for (const auto& p : coeffs_)
      if (p.is_ref()) names.insert(p.name());
    if (intercept_.is_ref()) names.insert(intercept_.name());
  }

private:
  void check_dim(const IndexPoint& x) const {
    if (static_cast<int>(coeffs_.size()) != x.size())
      throw DimensionMismatch("linear_field: expected dimension " + std::to_string(coeffs_.size()));
  }
  std::vector<Param> coeffs_;
  Param intercept_;
};

class RadialField final : public ScalarField {
public:
  RadialField(Param scale, double radius, Param offset)
      : scale_(std::move(scale)), radius_(radius), offset_(std::move(offset)) {}

  double value(const IndexPoint& x, const Hyperparameters& h) const override {
    return scale_.resolve(h) * (radius_ - x.norm()) + offset_.resolve(h);
  }

  double value_grad(const IndexPoint& x, const Hyperparameters& h,
                    Eigen::Ref<Vector> grad) const override {
    const double r = radius_ - x.norm();
    const int si = scale_.index_in(h);
    if (si >= 0) grad[si] += r;
    const int oi = offset_.index_in(h);
    if (oi >= 0) grad[oi] += 1.0;
    return scale_.resolve(h) * r + offset_.resolve(h);
  }

  void collect_params(std::set<std::string>& names) const override {
    if (scale_.is_ref()) names.insert(scale_.name());
    if (offset_.is_ref()) names.insert(offset_.name());
  }

private:
  Param scale_;
  double radius_;
  Param offset_;
};

class BumpSumField final : public ScalarField {
public:
  BumpSumField(int axis, std::vector<ScalarFieldPtr> centers, Param width)
      : axis_(axis), centers_(std::move(centers)), width_(std::move(width)) {
    if (axis_ < 0) throw AxisOutOfRange("bump_sum_field: negative axis");
    if (centers_.empty()) throw InvalidArgument("bump_sum_field: need at least one center");
  }

  double value(const IndexPoint& x, const Hyperparameters& h) const override {
    const double t = coord(x);
    const double w = positive_or_throw(width_.resolve(h), "bump width");
    double v = 0.0;
    for (const auto& c : centers_) {
      const double d = t - c->value(x, h);
      v += std::exp(-d * d / w);
    }
    return v;
  }

  double value_grad(const IndexPoint& x, const Hyperparameters& h,
                    Eigen::Ref<Vector> grad) const override {
    const double t = coord(x);
    const double w = positive_or_throw(width_.resolve(h), "bump width");
    const int wi = width_.index_in(h);
    Vector cgrad(h.size());
    double v = 0.0;
    for (const auto& c : centers_) {
      cgrad.setZero();
      const double cv = c->value_grad(x, h, cgrad);
      const double d = t - cv;
      const double e = std::exp(-d * d / w);
      v += e;
      grad += e * (2.0 * d / w) * cgrad;
      if (wi >= 0) grad[wi] += e * d * d / (w * w);
    }
    return v;
  }

  void collect_params(std::set<std::string>& names) const override {
    for (const auto& c : centers_) c->collect_params(names);
    if (width_.is_ref()) names.insert(width_.name());
  }

private:
  double coord(const IndexPoint& x) const {
    if (axis_ >= x.size())
      throw AxisOutOfRange("bump_sum_field: axis " + std::to_string(axis_) +
                           " out of range for dimension " + std::to_string(x.size()));
    return x[axis_];
  }
  int axis_;
  std::vector<ScalarFieldPtr> centers_;
  Param width_;
};

}  // namespace

ScalarFieldPtr constant_field(Param c) { return std::make_shared<ConstantField>(std::move(c)); }

ScalarFieldPtr linear_field(std::vector<Param> coeffs, Param intercept) {
  return std::make_shared<LinearField>(std::move(coeffs), std::move(intercept));
}

ScalarFieldPtr radial_field(Param scale, double radius, Param offset) {
  return std::make_shared<RadialField>(std::move(scale), radius, std::move(offset));
}

ScalarFieldPtr bump_sum_field(int axis, std::vector<ScalarFieldPtr> centers, Param width) {
  return std::make_shared<BumpSumField>(axis, std::move(centers), std::move(width));
}

// ---------------------------------------------------------------------------
// Matrix fields
// ---------------------------------------------------------------------------

namespace {

constexpr double kSpdFloor = 1e-8;

class ConstantDiagMatrixField final : public MatrixField {
public:
  explicit ConstantDiagMatrixField(std::vector<Param> lengths) : lengths_(std::move(lengths)) {
    if (lengths_.empty()) throw InvalidArgument("constant_diag_matrix_field: empty lengths");
  }
  Matrix value(const IndexPoint& x, const Hyperparameters& h) const override {
    const int n = static_cast<int>(lengths_.size());
    if (x.size() != n)
      throw DimensionMismatch("matrix field: expected dimension " + std::to_string(n));
    Matrix s = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      const double l = lengths_[i].resolve(h);
      s(i, i) = l * l + kSpdFloor;
    }
    return s;
  }
  void collect_params(std::set<std::string>& names) const override {
    for (const auto& p : lengths_)
      if (p.is_ref()) names.insert(p.name());
  }

private:
  std::vector<Param> lengths_;
};

class RadialDiagMatrixField final : public MatrixField {
public:
  RadialDiagMatrixField(int dim, Param a, Param b) : dim_(dim), a_(std::move(a)), b_(std::move(b)) {
    if (dim_ < 1) throw InvalidArgument("radial_diag_matrix_field: dim must be >= 1");
  }
  Matrix value(const IndexPoint& x, const Hyperparameters& h) const override {
    if (x.size() != dim_)
      throw DimensionMismatch("matrix field: expected dimension " + std::to_string(dim_));
    const double l = a_.resolve(h) + b_.resolve(h) * x.norm();
    return (l * l + kSpdFloor) * Matrix::Identity(dim_, dim_);
  }
  void collect_params(std::set<std::string>& names) const override {
    if (a_.is_ref()) names.insert(a_.name());
    if (b_.is_ref()) names.insert(b_.name());
  }

private:
  int dim_;
  Param a_, b_;
};

class TrilMatrixField final : public MatrixField {
public:
  explicit TrilMatrixField(Matrix lower) : sigma_() {
    if (lower.rows() != lower.cols() || lower.rows() == 0)
      throw InvalidArgument("tril_matrix_field: factor must be square");
    Matrix l = lower.triangularView<Eigen::Lower>();
    sigma_ = l * l.transpose() + kSpdFloor * Matrix::Identity(l.rows(), l.cols());
  }
  Matrix value(const IndexPoint& x, const Hyperparameters&) const override {
    if (x.size() != sigma_.rows())
      throw DimensionMismatch("matrix field: expected dimension " + std::to_string(sigma_.rows()));
    return sigma_;
  }
  void collect_params(std::set<std::string>&) const override {}

private:
  Matrix sigma_;
};

}  // namespace

MatrixFieldPtr constant_diag_matrix_field(std::vector<Param> lengths) {
  return std::make_shared<ConstantDiagMatrixField>(std::move(lengths));
}

MatrixFieldPtr radial_diag_matrix_field(int dim, Param a, Param b) {
  return std::make_shared<RadialDiagMatrixField>(dim, std::move(a), std::move(b));
}

MatrixFieldPtr tril_matrix_field(Matrix lower) {
  return std::make_shared<TrilMatrixField>(std::move(lower));
}

// ---------------------------------------------------------------------------
// Kernel nodes
// ---------------------------------------------------------------------------

void Kernel::collect_fd_params(const Hyperparameters&, std::set<int>&) const {}

IndexPoint AffineMap::apply(const IndexPoint& x) const {
  if (a.cols() != x.size())
    throw DimensionMismatch("AffineMap: map expects dimension " + std::to_string(a.cols()));
  return a * x + b;
}

double matern_profile(double a, double nu) {
  if (nu == 0.5) return std::exp(-a);
  if (nu == 1.5) {
    const double c = std::sqrt(3.0) * a;
    return (1.0 + c) * std::exp(-c);
  }
  if (nu == 2.5) {
    const double c = std::sqrt(5.0) * a;
    return (1.0 + c + c * c / 3.0) * std::exp(-c);
  }
  throw UnsupportedNu("matern: nu must be one of {0.5, 1.5, 2.5}");
}

namespace {

enum class Profile { SqExp, Exponential, Matern32, Matern52 };

class StationaryKernel final : public Kernel {
public:
  StationaryKernel(Metric metric, Profile profile)
      : metric_(std::move(metric)), profile_(profile) {}

  double eval(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h) const override {
    return value_of(metric_.dist2(x1, x2, h));
  }

  double eval_grad(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h,
                   Eigen::Ref<Vector> grad) const override {
    Vector dq = Vector::Zero(h.size());
    const double q = metric_.dist2_grad(x1, x2, h, dq);
    grad += dkernel_dq(q) * dq;
    return value_of(q);
  }

  void collect_params(std::set<std::string>& names) const override {
    metric_.collect_params(names);
  }

private:
  double value_of(double q) const {
    switch (profile_) {
      case Profile::SqExp: return std::exp(-0.5 * q);
      case Profile::Exponential: return matern_profile(std::sqrt(q), 0.5);
      case Profile::Matern32: return matern_profile(std::sqrt(q), 1.5);
      case Profile::Matern52: return matern_profile(std::sqrt(q), 2.5);
    }
    return 0.0;
  }

  // d(value)/d(dist2); finite for every profile (the exponential kink at
  // q = 0 is harmless because d(dist2)/d(param) vanishes there too).
  double dkernel_dq(double q) const {
    const double a = std::sqrt(q);
    switch (profile_) {
      case Profile::SqExp:
        return -0.5 * std::exp(-0.5 * q);
      case Profile::Exponential:
        return a < 1e-300 ? 0.0 : -std::exp(-a) / (2.0 * a);
      case Profile::Matern32:
        return -1.5 * std::exp(-std::sqrt(3.0) * a);
      case Profile::Matern52: {
        const double c = std::sqrt(5.0) * a;
        return -(5.0 / 6.0) * (1.0 + c) * std::exp(-c);
      }
    }
    return 0.0;
  }

  Metric metric_;
  Profile profile_;
};

class ConstantKernel final : public Kernel {
public:
  explicit ConstantKernel(Param c) : c_(std::move(c)) {
    if (!c_.is_ref() && c_.resolve(Hyperparameters{}) < 0.0)
      throw InvalidArgument("constant kernel: c must be >= 0");
  }
  double eval(const IndexPoint&, const IndexPoint&, const Hyperparameters& h) const override {
    return c_.resolve(h);
  }
  double eval_grad(const IndexPoint&, const IndexPoint&, const Hyperparameters& h,
                   Eigen::Ref<Vector> grad) const override {
    const int idx = c_.index_in(h);
    if (idx >= 0) grad[idx] += 1.0;
    return c_.resolve(h);
  }
  void collect_params(std::set<std::string>& names) const override {
    if (c_.is_ref()) names.insert(c_.name());
  }

private:
  Param c_;
};

class SumKernel final : public Kernel {
public:
  explicit SumKernel(std::vector<KernelExpr> children) : children_(std::move(children)) {}
  double eval(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h) const override {
    double v = 0.0;
    for (const auto& c : children_) v += c->eval(x1, x2, h);
    return v;
  }
  double eval_grad(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h,
                   Eigen::Ref<Vector> grad) const override {
    double v = 0.0;
    for (const auto& c : children_) v += c->eval_grad(x1, x2, h, grad);
    return v;
  }
  void collect_params(std::set<std::string>& names) const override {
    for (const auto& c : children_) c->collect_params(names);
  }
  void collect_fd_params(const Hyperparameters& h, std::set<int>& idx) const override {
    for (const auto& c : children_) c->collect_fd_params(h, idx);
  }

private:
  std::vector<KernelExpr> children_;
};

class ProductKernel final : public Kernel {
public:
  explicit ProductKernel(std::vector<KernelExpr> children) : children_(std::move(children)) {}
  double eval(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h) const override {
    double v = 1.0;
    for (const auto& c : children_) v *= c->eval(x1, x2, h);
    return v;
  }
  double eval_grad(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h,
                   Eigen::Ref<Vector> grad) const override {
    const int m = static_cast<int>(children_.size());
    std::vector<double> vals(m);
    std::vector<Vector> grads(m, Vector::Zero(h.size()));
    for (int i = 0; i < m; ++i) vals[i] = children_[i]->eval_grad(x1, x2, h, grads[i]);
    // leave-one-out products via prefix/suffix scans (zeros stay exact)
    std::vector<double> pre(m + 1, 1.0), suf(m + 1, 1.0);
    for (int i = 0; i < m; ++i) pre[i + 1] = pre[i] * vals[i];
    for (int i = m - 1; i >= 0; --i) suf[i] = suf[i + 1] * vals[i];
    for (int i = 0; i < m; ++i) grad += pre[i] * suf[i + 1] * grads[i];
    return pre[m];
  }
  void collect_params(std::set<std::string>& names) const override {
    for (const auto& c : children_) c->collect_params(names);
  }
  void collect_fd_params(const Hyperparameters& h, std::set<int>& idx) const override {
    for (const auto& c : children_) c->collect_fd_params(h, idx);
  }

private:
  std::vector<KernelExpr> children_;
};

class ScaleKernel final : public Kernel {
public:
  ScaleKernel(Param sigma2, KernelExpr child) : sigma2_(std::move(sigma2)), child_(std::move(child)) {}
  double eval(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h) const override {
    return sigma2_.resolve(h) * child_->eval(x1, x2, h);
  }
  double eval_grad(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h,
                   Eigen::Ref<Vector> grad) const override {
    Vector cg = Vector::Zero(h.size());
    const double cv = child_->eval_grad(x1, x2, h, cg);
    const double s = sigma2_.resolve(h);
    grad += s * cg;
    const int idx = sigma2_.index_in(h);
    if (idx >= 0) grad[idx] += cv;
    return s * cv;
  }
  void collect_params(std::set<std::string>& names) const override {
    if (sigma2_.is_ref()) names.insert(sigma2_.name());
    child_->collect_params(names);
  }
  void collect_fd_params(const Hyperparameters& h, std::set<int>& idx) const override {
    child_->collect_fd_params(h, idx);
  }

private:
  Param sigma2_;
  KernelExpr child_;
};

class AxisRestrictKernel final : public Kernel {
public:
  AxisRestrictKernel(std::vector<int> axes, KernelExpr child)
      : axes_(std::move(axes)), child_(std::move(child)) {
    if (axes_.empty()) throw InvalidArgument("axis_restrict: empty axis list");
    for (int a : axes_)
      if (a < 0) throw AxisOutOfRange("axis_restrict: negative axis");
  }
  double eval(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h) const override {
    return child_->eval(gather(x1), gather(x2), h);
  }
  double eval_grad(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h,
                   Eigen::Ref<Vector> grad) const override {
    return child_->eval_grad(gather(x1), gather(x2), h, grad);
  }
  void collect_params(std::set<std::string>& names) const override {
    child_->collect_params(names);
  }
  void collect_fd_params(const Hyperparameters& h, std::set<int>& idx) const override {
    child_->collect_fd_params(h, idx);
  }

private:
  IndexPoint gather(const IndexPoint& x) const {
    IndexPoint sub(axes_.size());
    for (size_t i = 0; i < axes_.size(); ++i) {
      if (axes_[i] >= x.size())
        throw AxisOutOfRange("axis_restrict: axis " + std::to_string(axes_[i]) +
                             " out of range for dimension " + std::to_string(x.size()));
      sub[static_cast<int>(i)] = x[axes_[i]];
    }
    return sub;
  }
  std::vector<int> axes_;
  KernelExpr child_;
};

class WarpKernel final : public Kernel {
public:
  WarpKernel(ScalarFieldPtr field, KernelExpr child)
      : field_(std::move(field)), child_(std::move(child)) {}
  double eval(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h) const override {
    return field_->value(x1, h) * field_->value(x2, h) * child_->eval(x1, x2, h);
  }
  double eval_grad(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h,
                   Eigen::Ref<Vector> grad) const override {
    Vector g1 = Vector::Zero(h.size());
    Vector g2 = Vector::Zero(h.size());
    Vector gk = Vector::Zero(h.size());
    const double f1 = field_->value_grad(x1, h, g1);
    const double f2 = field_->value_grad(x2, h, g2);
    const double kv = child_->eval_grad(x1, x2, h, gk);
    grad += f1 * f2 * gk + kv * (f1 * g2 + f2 * g1);
    return f1 * f2 * kv;
  }
  void collect_params(std::set<std::string>& names) const override {
    field_->collect_params(names);
    child_->collect_params(names);
  }
  void collect_fd_params(const Hyperparameters& h, std::set<int>& idx) const override {
    child_->collect_fd_params(h, idx);
  }

private:
  ScalarFieldPtr field_;
  KernelExpr child_;
};

class GroupAverageKernel final : public Kernel {
public:
  GroupAverageKernel(std::vector<AffineMap> transforms, KernelExpr child)
      : transforms_(std::move(transforms)), child_(std::move(child)) {
    if (transforms_.empty()) throw EmptyTransformList("group_average: empty transform list");
    for (const auto& t : transforms_)
      if (t.a.rows() != t.a.cols() || t.a.rows() != t.b.size())
        throw DimensionMismatch("group_average: transform shapes inconsistent");
  }

  double eval(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h) const override {
    const auto i1 = images(x1);
    const auto i2 = images(x2);
    double s = 0.0;
    for (const auto& a : i1)
      for (const auto& b : i2) s += child_->eval(a, b, h);
    const double g = static_cast<double>(transforms_.size());
    return s / (g * g);
  }

  double eval_grad(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h,
                   Eigen::Ref<Vector> grad) const override {
    const auto i1 = images(x1);
    const auto i2 = images(x2);
    Vector acc = Vector::Zero(h.size());
    double s = 0.0;
    for (const auto& a : i1)
      for (const auto& b : i2) s += child_->eval_grad(a, b, h, acc);
    const double g = static_cast<double>(transforms_.size());
    grad += acc / (g * g);
    return s / (g * g);
  }

  void collect_params(std::set<std::string>& names) const override {
    child_->collect_params(names);
  }
  void collect_fd_params(const Hyperparameters& h, std::set<int>& idx) const override {
    child_->collect_fd_params(h, idx);
  }

private:
  std::vector<IndexPoint> images(const IndexPoint& x) const {
    std::vector<IndexPoint> out;
    out.reserve(transforms_.size());
    for (const auto& t : transforms_) out.push_back(t.apply(x));
    return out;
  }
  std::vector<AffineMap> transforms_;
  KernelExpr child_;
};

// The 9-term finite periodicity construction: shifts {0, +p, -p} of one axis
// applied to each argument independently.
class PeriodicShiftKernel final : public Kernel {
public:
  PeriodicShiftKernel(int axis, double period, KernelExpr child)
      : axis_(axis), period_(period), child_(std::move(child)) {
    if (!(period_ > 0.0)) throw NonPositivePeriod("periodic_shift: period must be > 0");
    if (axis_ < 0) throw AxisOutOfRange("periodic_shift: negative axis");
  }

  double eval(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h) const override {
    double s = 0.0;
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j) s += child_->eval(shifted(x1, i), shifted(x2, j), h);
    return s / 9.0;
  }

  double eval_grad(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h,
                   Eigen::Ref<Vector> grad) const override {
    Vector acc = Vector::Zero(h.size());
    double s = 0.0;
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j) s += child_->eval_grad(shifted(x1, i), shifted(x2, j), h, acc);
    grad += acc / 9.0;
    return s / 9.0;
  }

  void collect_params(std::set<std::string>& names) const override {
    child_->collect_params(names);
  }
  void collect_fd_params(const Hyperparameters& h, std::set<int>& idx) const override {
    child_->collect_fd_params(h, idx);
  }

private:
  IndexPoint shifted(const IndexPoint& x, int steps) const {
    if (axis_ >= x.size())
      throw AxisOutOfRange("periodic_shift: axis " + std::to_string(axis_) +
                           " out of range for dimension " + std::to_string(x.size()));
    IndexPoint y = x;
    y[axis_] += steps * period_;
    return y;
  }
  int axis_;
  double period_;
  KernelExpr child_;
};

class PaciorekRisserKernel final : public Kernel {
public:
  PaciorekRisserKernel(ScalarFieldPtr amplitude, MatrixFieldPtr sigma, double nu)
      : amplitude_(std::move(amplitude)), sigma_(std::move(sigma)), nu_(nu) {
    matern_profile(0.0, nu_);  // validates nu
  }

  double eval(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h) const override {
    const double f1 = amplitude_->value(x1, h);
    const double f2 = amplitude_->value(x2, h);
    const Matrix avg = 0.5 * (sigma_->value(x1, h) + sigma_->value(x2, h));
    if (avg.rows() != x1.size())
      throw DimensionMismatch("paciorek_risser: matrix field dimension mismatch");
    Eigen::LLT<Matrix> llt(avg);
    if (llt.info() != Eigen::Success)
      throw NonSPDField("paciorek_risser: average matrix not SPD");
    const Matrix l = llt.matrixL();
    double det = 1.0;
    for (int i = 0; i < l.rows(); ++i) det *= l(i, i) * l(i, i);
    if (!(det >= 1e-300))
      throw SingularAverageMatrix("paciorek_risser: |avg Sigma| below 1e-300");
    const Vector w = llt.matrixL().solve(x1 - x2);
    const double q = w.squaredNorm();
    // signal field enters squared so the amplitude is >= 0 for any field
    return (f1 * f1) * (f2 * f2) / std::sqrt(det) * matern_profile(std::sqrt(q), nu_);
  }

  double eval_grad(const IndexPoint& x1, const IndexPoint& x2, const Hyperparameters& h,
                   Eigen::Ref<Vector>) const override {
    // no analytic derivatives; parameters are reported via collect_fd_params
    return eval(x1, x2, h);
  }

  void collect_params(std::set<std::string>& names) const override {
    amplitude_->collect_params(names);
    sigma_->collect_params(names);
  }

  void collect_fd_params(const Hyperparameters& h, std::set<int>& idx) const override {
    std::set<std::string> names;
    collect_params(names);
    for (const auto& n : names) {
      const int i = h.index_of(n);
      if (i >= 0) idx.insert(i);
    }
  }

private:
  ScalarFieldPtr amplitude_;
  MatrixFieldPtr sigma_;
  double nu_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

KernelExpr sqexp(Metric metric) {
  return std::make_shared<StationaryKernel>(std::move(metric), Profile::SqExp);
}

KernelExpr exponential(Metric metric) {
  return std::make_shared<StationaryKernel>(std::move(metric), Profile::Exponential);
}

KernelExpr matern(Metric metric, double nu) {
  if (nu == 0.5) return std::make_shared<StationaryKernel>(std::move(metric), Profile::Exponential);
  if (nu == 1.5) return std::make_shared<StationaryKernel>(std::move(metric), Profile::Matern32);
  if (nu == 2.5) return std::make_shared<StationaryKernel>(std::move(metric), Profile::Matern52);
  throw UnsupportedNu("matern: nu must be one of {0.5, 1.5, 2.5}");
}

KernelExpr constant(Param c) { return std::make_shared<ConstantKernel>(std::move(c)); }

KernelExpr sum(std::vector<KernelExpr> children) {
  if (children.empty()) throw EmptyChildList("sum: no children");
  if (children.size() == 1) return children[0];
  return std::make_shared<SumKernel>(std::move(children));
}

KernelExpr product(std::vector<KernelExpr> children) {
  if (children.empty()) throw EmptyChildList("product: no children");
  if (children.size() == 1) return children[0];
  return std::make_shared<ProductKernel>(std::move(children));
}

KernelExpr scale(Param sigma2, KernelExpr child) {
  return std::make_shared<ScaleKernel>(std::move(sigma2), std::move(child));
}

KernelExpr axis_restrict(std::vector<int> axes, KernelExpr child) {
  return std::make_shared<AxisRestrictKernel>(std::move(axes), std::move(child));
}

KernelExpr warp(ScalarFieldPtr field, KernelExpr child) {
  return std::make_shared<WarpKernel>(std::move(field), std::move(child));
}

KernelExpr group_average(std::vector<AffineMap> transforms, KernelExpr child) {
  return std::make_shared<GroupAverageKernel>(std::move(transforms), std::move(child));
}

std::vector<AffineMap> axial_symmetry_group() {
  std::vector<AffineMap> g;
  for (double s1 : {1.0, -1.0})
    for (double s2 : {1.0, -1.0}) {
      AffineMap m;
      m.a = Matrix::Zero(2, 2);
      m.a(0, 0) = s1;
      m.a(1, 1) = s2;
      m.b = Vector::Zero(2);
      g.push_back(std::move(m));
    }
  return g;
}

std::vector<AffineMap> rotation_group(int order) {
  if (order < 1) throw InvalidArgument("rotation_group: order must be >= 1");
  std::vector<AffineMap> g;
  g.reserve(order);
  for (int p = 0; p < order; ++p) {
    const double phi = 2.0 * M_PI * p / order;
    AffineMap m;
    m.a = Matrix(2, 2);
    m.a << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
    m.b = Vector::Zero(2);
    g.push_back(std::move(m));
  }
  return g;
}

KernelExpr six_fold(KernelExpr child) {
  return group_average(rotation_group(6), std::move(child));
}

KernelExpr periodic_shift(int axis, double period, KernelExpr child) {
  return std::make_shared<PeriodicShiftKernel>(axis, period, std::move(child));
}

std::vector<AffineMap> shift_maps(int dim, int axis, double period) {
  if (!(period > 0.0)) throw NonPositivePeriod("shift_maps: period must be > 0");
  if (axis < 0 || axis >= dim) throw AxisOutOfRange("shift_maps: axis out of range");
  std::vector<AffineMap> g;
  for (int s : {0, 1, -1}) {
    AffineMap m;
    m.a = Matrix::Identity(dim, dim);
    m.b = Vector::Zero(dim);
    m.b[axis] = s * period;
    g.push_back(std::move(m));
  }
  return g;
}

KernelExpr paciorek_risser(ScalarFieldPtr amplitude, MatrixFieldPtr sigma, double nu) {
  return std::make_shared<PaciorekRisserKernel>(std::move(amplitude), std::move(sigma), nu);
}

PsdReport psd_check(const KernelExpr& k, const Hyperparameters& h,
                    const std::vector<IndexPoint>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 2) throw InvalidArgument("psd_check: need at least 2 points");
  Matrix gram(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double v = k->eval(points[i], points[j], h);
      gram(i, j) = v;
      gram(j, i) = v;
    }
  const Matrix sym = 0.5 * (gram + gram.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  PsdReport r;
  r.min_eig = es.eigenvalues().minCoeff();
  r.trace = sym.trace();
  r.pass = r.min_eig >= -1e-8 * std::max(1.0, r.trace);
  return r;
}

}  // namespace gpkit
