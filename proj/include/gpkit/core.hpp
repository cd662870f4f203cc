#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gpkit/errors.hpp"

namespace gpkit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A point of the index set is a plain coordinate vector; its first
/// `input_dim` entries live in the input space, the remaining ones in the
/// output(task)-index space.
using IndexPoint = Eigen::VectorXd;

/// The product index space X = X_i x X_o, dimension n = n1 + n2.
class IndexSpace {
public:
  IndexSpace() : IndexSpace(1) {}
  IndexSpace(int input_dim, int output_dim = 0,
             std::optional<std::vector<std::array<double, 2>>> bounds = std::nullopt);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  int dim() const { return input_dim_ + output_dim_; }
  const std::optional<std::vector<std::array<double, 2>>>& bounds() const { return bounds_; }

  /// Throws DimensionMismatch / NonFiniteValue if x is not a valid point.
  void validate_point(const IndexPoint& x) const;

private:
  int input_dim_;
  int output_dim_;
  std::optional<std::vector<std::array<double, 2>>> bounds_;
};

/// Measurement-noise covariance V: scalar i.i.d., per-point diagonal, or a
/// full symmetric PSD matrix.
class NoiseModel {
public:
  enum class Kind { Iid, Diagonal, Full };

  NoiseModel() = default;  // iid unit noise placeholder; factories validate real models

  static NoiseModel iid(double sigma2);
  static NoiseModel diagonal(Vector variances);
  static NoiseModel full(Matrix v);

  Kind kind() const { return kind_; }
  double iid_sigma2() const { return sigma2_; }
  const Vector& variances() const { return variances_; }
  const Matrix& matrix() const { return full_; }

  /// Number of data points this model is shaped for; -1 when iid (any).
  int size() const;

  /// Throws NoiseShapeMismatch if the model cannot cover n points.
  void check_size(int n) const;

  /// Adds V to a dense n x n matrix in place.
  void add_to(Matrix& a) const;

private:
  Kind kind_ = Kind::Iid;
  double sigma2_ = 1.0;
  Vector variances_;
  Matrix full_;
};

/// Immutable set of measurements: locations, values y, and the noise model.
struct Dataset {
  IndexSpace space;
  std::vector<IndexPoint> points;
  Vector values;
  NoiseModel noise;

  int size() const { return static_cast<int>(points.size()); }
};

/// Validates and assembles a Dataset. Points are kept in input order.
Dataset make_dataset(const IndexSpace& space, std::vector<IndexPoint> points,
                     Vector values, NoiseModel noise);

enum class ParamScale { Linear, Log };

struct HyperEntry {
  std::string name;
  double value = 0.0;
  double low = 0.0;
  double high = 0.0;
  ParamScale scale = ParamScale::Linear;
};

/// Named, bounded hyperparameter vector threaded through kernel evaluation
/// and training. Entries are ordered; log-scale entries are optimized in
/// log-space (see pack/unpack).
class Hyperparameters {
public:
  Hyperparameters() = default;
  explicit Hyperparameters(std::vector<HyperEntry> entries);

  Hyperparameters& add(std::string name, double value, double low, double high,
                       ParamScale scale = ParamScale::Linear);

  int size() const { return static_cast<int>(entries_.size()); }
  const std::vector<HyperEntry>& entries() const { return entries_; }
  const HyperEntry& entry(int i) const { return entries_.at(i); }

  /// Index of a named entry, or -1 when absent.
  int index_of(const std::string& name) const;

  /// Value of a named entry; throws MissingHyperparameter when absent.
  double value(const std::string& name) const;
  double value(int i) const { return entries_.at(i).value; }

  /// Clamps every value into its bounds and maps log-scale entries to
  /// log-space. The result is what optimizers work on.
  Vector pack() const;

  /// Inverse of pack against this template: maps from packed space back to
  /// values, clamping out-of-bounds results to the nearest bound.
  Hyperparameters unpack(const Vector& packed) const;

  /// Copy with entry values replaced (same names/bounds/scales), clamped.
  Hyperparameters with_values(const Vector& values) const;

  /// Bounds in packed space.
  Vector packed_low() const;
  Vector packed_high() const;

private:
  void validate_entry(const HyperEntry& e) const;
  std::vector<HyperEntry> entries_;
};

/// A scalar parameter of a kernel expression: either a literal constant or a
/// named reference into a Hyperparameters set. Expressions store Params so
/// one immutable tree serves every optimizer iterate.
class Param {
public:
  Param(double value) : value_(value) {}                      // NOLINT(google-explicit-constructor)
  Param(std::string name) : name_(std::move(name)) {}         // NOLINT(google-explicit-constructor)
  Param(const char* name) : name_(name) {}                    // NOLINT(google-explicit-constructor)

  bool is_ref() const { return !name_.empty(); }
  const std::string& name() const { return name_; }

  double resolve(const Hyperparameters& h) const {
    return is_ref() ? h.value(name_) : value_;
  }

  /// Entry index when referencing h, -1 for literals.
  int index_in(const Hyperparameters& h) const {
    if (!is_ref()) return -1;
    int i = h.index_of(name_);
    if (i < 0) throw MissingHyperparameter("hyperparameter '" + name_ + "' not found");
    return i;
  }

private:
  double value_ = 0.0;
  std::string name_;
};

}  // namespace gpkit
