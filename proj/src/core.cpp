#include "gpkit/core.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace gpkit {

IndexSpace::IndexSpace(int input_dim, int output_dim,
                       std::optional<std::vector<std::array<double, 2>>> bounds)
    : input_dim_(input_dim), output_dim_(output_dim), bounds_(std::move(bounds)) {
  if (input_dim_ < 1) throw InvalidArgument("IndexSpace: input_dim must be >= 1");
  if (output_dim_ < 0) throw InvalidArgument("IndexSpace: output_dim must be >= 0");
  if (bounds_) {
    if (static_cast<int>(bounds_->size()) != dim())
      throw DimensionMismatch("IndexSpace: bounds must cover every axis");
    for (const auto& b : *bounds_) {
      if (!(b[0] < b[1]))
        throw InvalidArgument("IndexSpace: bound low must be < high on every axis");
    }
  }
}

void IndexSpace::validate_point(const IndexPoint& x) const {
  if (static_cast<int>(x.size()) != dim())
    throw DimensionMismatch("point has dimension " + std::to_string(x.size()) +
                            ", space expects " + std::to_string(dim()));
  if (!x.allFinite()) throw NonFiniteValue("point contains NaN/Inf coordinates");
}

NoiseModel NoiseModel::iid(double sigma2) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw InvalidArgument("NoiseModel::iid: sigma2 must be positive and finite");
  NoiseModel m;
  m.kind_ = Kind::Iid;
  m.sigma2_ = sigma2;
  return m;
}

NoiseModel NoiseModel::diagonal(Vector variances) {
  if (variances.size() == 0) throw InvalidArgument("NoiseModel::diagonal: empty variance vector");
  if (!variances.allFinite() || (variances.array() <= 0.0).any())
    throw InvalidArgument("NoiseModel::diagonal: every variance must be positive and finite");
  NoiseModel m;
  m.kind_ = Kind::Diagonal;
  m.variances_ = std::move(variances);
  return m;
}

NoiseModel NoiseModel::full(Matrix v) {
  if (v.rows() != v.cols() || v.rows() == 0)
    throw InvalidArgument("NoiseModel::full: V must be square and non-empty");
  if (!v.allFinite()) throw NonFiniteValue("NoiseModel::full: V contains NaN/Inf");
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  if (((v - v.transpose()).cwiseAbs().maxCoeff()) > 1e-12 * scale)
    throw InvalidArgument("NoiseModel::full: V must be symmetric (1e-12 relative)");
  Matrix sym = 0.5 * (v + v.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < -1e-10 * sym.trace())
    throw InvalidArgument("NoiseModel::full: V is not PSD (min eigenvalue " +
                          std::to_string(min_eig) + ")");
  NoiseModel m;
  m.kind_ = Kind::Full;
  m.full_ = std::move(sym);
  return m;
}

int NoiseModel::size() const {
  switch (kind_) {
    case Kind::Iid: return -1;
    case Kind::Diagonal: return static_cast<int>(variances_.size());
    case Kind::Full: return static_cast<int>(full_.rows());
  }
  return -1;
}

void NoiseModel::check_size(int n) const {
  const int s = size();
  if (s >= 0 && s != n)
    throw NoiseShapeMismatch("noise model covers " + std::to_string(s) +
                             " points, dataset has " + std::to_string(n));
}

void NoiseModel::add_to(Matrix& a) const {
  check_size(static_cast<int>(a.rows()));
  switch (kind_) {
    case Kind::Iid:
      a.diagonal().array() += sigma2_;
      break;
    case Kind::Diagonal:
      a.diagonal() += variances_;
      break;
    case Kind::Full:
      a += full_;
      break;
  }
}

Dataset make_dataset(const IndexSpace& space, std::vector<IndexPoint> points,
                     Vector values, NoiseModel noise) {
  if (points.empty()) throw InvalidArgument("make_dataset: need at least one point");
  if (static_cast<int>(points.size()) != values.size())
    throw LengthMismatch("make_dataset: " + std::to_string(points.size()) + " points but " +
                         std::to_string(values.size()) + " values");
  for (const auto& p : points) space.validate_point(p);
  if (!values.allFinite()) throw NonFiniteValue("make_dataset: values contain NaN/Inf");
  noise.check_size(static_cast<int>(points.size()));
  return Dataset{space, std::move(points), std::move(values), std::move(noise)};
}

Hyperparameters::Hyperparameters(std::vector<HyperEntry> entries) {
  for (auto& e : entries) {
    validate_entry(e);
    if (index_of(e.name) >= 0)
      throw InvalidArgument("Hyperparameters: duplicate name '" + e.name + "'");
    entries_.push_back(std::move(e));
  }
}

Hyperparameters& Hyperparameters::add(std::string name, double value, double low, double high,
                                      ParamScale scale) {
  HyperEntry e{std::move(name), value, low, high, scale};
  validate_entry(e);
  if (index_of(e.name) >= 0)
    throw InvalidArgument("Hyperparameters: duplicate name '" + e.name + "'");
  entries_.push_back(std::move(e));
  return *this;
}

void Hyperparameters::validate_entry(const HyperEntry& e) const {
  if (e.name.empty()) throw InvalidArgument("Hyperparameters: empty name");
  if (!(e.low <= e.value && e.value <= e.high))
    throw InvalidArgument("Hyperparameters: '" + e.name + "' value " + std::to_string(e.value) +
                          " outside [" + std::to_string(e.low) + ", " + std::to_string(e.high) + "]");
  if (e.scale == ParamScale::Log && !(e.low > 0.0))
    throw InvalidArgument("Hyperparameters: log-scale entry '" + e.name +
                          "' needs a positive lower bound");
  if (!std::isfinite(e.value) || !std::isfinite(e.low) || !std::isfinite(e.high))
    throw NonFiniteValue("Hyperparameters: '" + e.name + "' has non-finite fields");
}

int Hyperparameters::index_of(const std::string& name) const {
  for (int i = 0; i < static_cast<int>(entries_.size()); ++i)
    if (entries_[i].name == name) return i;
  return -1;
}

double Hyperparameters::value(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) throw MissingHyperparameter("hyperparameter '" + name + "' not found");
  return entries_[i].value;
}

Vector Hyperparameters::pack() const {
  Vector v(size());
  for (int i = 0; i < size(); ++i) {
    const auto& e = entries_[i];
    const double clamped = std::clamp(e.value, e.low, e.high);
    v[i] = e.scale == ParamScale::Log ? std::log(clamped) : clamped;
  }
  return v;
}

Hyperparameters Hyperparameters::unpack(const Vector& packed) const {
  if (packed.size() != size())
    throw LengthMismatch("unpack: vector length " + std::to_string(packed.size()) +
                         " != " + std::to_string(size()) + " entries");
  Hyperparameters out = *this;
  for (int i = 0; i < size(); ++i) {
    auto& e = out.entries_[i];
    const double raw = e.scale == ParamScale::Log ? std::exp(packed[i]) : packed[i];
    e.value = std::clamp(raw, e.low, e.high);
  }
  return out;
}

Hyperparameters Hyperparameters::with_values(const Vector& values) const {
  if (values.size() != size())
    throw LengthMismatch("with_values: vector length mismatch");
  Hyperparameters out = *this;
  for (int i = 0; i < size(); ++i) {
    auto& e = out.entries_[i];
    e.value = std::clamp(values[i], e.low, e.high);
  }
  return out;
}

Vector Hyperparameters::packed_low() const {
  Vector v(size());
  for (int i = 0; i < size(); ++i)
    v[i] = entries_[i].scale == ParamScale::Log ? std::log(entries_[i].low) : entries_[i].low;
  return v;
}

Vector Hyperparameters::packed_high() const {
  Vector v(size());
  for (int i = 0; i < size(); ++i)
    v[i] = entries_[i].scale == ParamScale::Log ? std::log(entries_[i].high) : entries_[i].high;
  return v;
}

}  // namespace gpkit
