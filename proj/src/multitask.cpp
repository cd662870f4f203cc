#include "gpkit/multitask.hpp"

#include <cmath>

namespace gpkit {

TaskGrid::TaskGrid(Vector coords) : coords_(std::move(coords)) {
  if (coords_.size() < 1) throw InvalidArgument("TaskGrid: need at least one task");
  if (!coords_.allFinite()) throw NonFiniteValue("TaskGrid: non-finite coordinate");
  for (int i = 1; i < coords_.size(); ++i)
    if (!(coords_[i] > coords_[i - 1]))
      throw InvalidArgument("TaskGrid: coordinates must be strictly increasing");
}

MultiTaskDataset make_multitask_dataset(IndexSpace base_space, TaskGrid tasks,
                                        std::vector<MultiTaskRecord> records) {
  if (base_space.output_dim() != 0)
    throw InvalidArgument("multitask: base space must have output_dim 0");
  if (records.empty()) throw InvalidArgument("multitask: need at least one record");
  const int t = tasks.size();
  for (const auto& r : records) {
    base_space.validate_point(r.input);
    if (r.values.size() != t || r.noise_vars.size() != t)
      throw LengthMismatch("multitask: record value/noise length != task count");
    if (!r.values.allFinite()) throw NonFiniteValue("multitask: record values contain NaN/Inf");
    if ((r.noise_vars.array() <= 0.0).any())
      throw InvalidArgument("multitask: noise variances must be positive");
  }
  return MultiTaskDataset{std::move(base_space), std::move(tasks), std::move(records)};
}

Dataset lift(const MultiTaskDataset& mt) {
  const int n1 = mt.base_space.input_dim();
  const int t = mt.tasks.size();
  const int n = mt.record_count();

  IndexSpace lifted_space(n1, 1);
  std::vector<IndexPoint> points;
  points.reserve(static_cast<size_t>(n) * t);
  Vector values(n * t);
  Vector noise(n * t);
  for (int i = 0; i < n; ++i) {
    const auto& rec = mt.records[i];
    for (int j = 0; j < t; ++j) {
      IndexPoint p(n1 + 1);
      p.head(n1) = rec.input;
      p[n1] = mt.tasks.coord(j);
      points.push_back(std::move(p));
      values[i * t + j] = rec.values[j];
      noise[i * t + j] = rec.noise_vars[j];
    }
  }
  return make_dataset(lifted_space, std::move(points), std::move(values),
                      NoiseModel::diagonal(std::move(noise)));
}

MultiTaskDataset unlift(const Dataset& lifted, const TaskGrid& tasks) {
  const int t = tasks.size();
  const int total = lifted.size();
  if (total % t != 0)
    throw LengthMismatch("unlift: dataset size not divisible by task count");
  if (lifted.space.output_dim() != 1)
    throw DimensionMismatch("unlift: expected a product space with one output axis");
  if (lifted.noise.kind() != NoiseModel::Kind::Diagonal)
    throw InvalidArgument("unlift: expected diagonal noise");
  const int n1 = lifted.space.input_dim();
  const int n = total / t;

  std::vector<MultiTaskRecord> records;
  records.reserve(n);
  for (int i = 0; i < n; ++i) {
    MultiTaskRecord rec;
    rec.input = lifted.points[static_cast<size_t>(i) * t].head(n1);
    rec.values.resize(t);
    rec.noise_vars.resize(t);
    for (int j = 0; j < t; ++j) {
      const auto& p = lifted.points[i * t + j];
      if ((p.head(n1) - rec.input).cwiseAbs().maxCoeff() != 0.0 || p[n1] != tasks.coord(j))
        throw InvalidArgument("unlift: points are not in record-major lifted order");
      rec.values[j] = lifted.values[i * t + j];
      rec.noise_vars[j] = lifted.noise.variances()[i * t + j];
    }
    records.push_back(std::move(rec));
  }
  return make_multitask_dataset(IndexSpace(n1), tasks, std::move(records));
}

KernelExpr ir_stationary_kernel(Param l_space_1, Param l_space_2, Param l_task, double nu_task,
                                Param sigma2) {
  auto plane = axis_restrict(
      {0, 1}, exponential(Metric::axis_lengths({std::move(l_space_1), std::move(l_space_2)})));
  auto task = axis_restrict({2}, matern(Metric::isotropic(std::move(l_task)), nu_task));
  return scale(std::move(sigma2), product({std::move(plane), std::move(task)}));
}

namespace {

/// p(x) = outer * (inner * x1) + (other * x2); the redundant outer*inner
/// product is kept as two separate parameters on purpose.
class DriftingCenterField final : public ScalarField {
public:
  DriftingCenterField(Param outer, Param inner, Param other)
      : outer_(std::move(outer)), inner_(std::move(inner)), other_(std::move(other)) {}

  double value(const IndexPoint& x, const Hyperparameters& h) const override {
    check(x);
    return outer_.resolve(h) * (inner_.resolve(h) * x[0]) + other_.resolve(h) * x[1];
  }

  double value_grad(const IndexPoint& x, const Hyperparameters& h,
                    Eigen::Ref<Vector> grad) const override {
    check(x);
    const double a = outer_.resolve(h), b = inner_.resolve(h), c = other_.resolve(h);
    const int ia = outer_.index_in(h), ib = inner_.index_in(h), ic = other_.index_in(h);
    if (ia >= 0) grad[ia] += b * x[0];
    if (ib >= 0) grad[ib] += a * x[0];
    if (ic >= 0) grad[ic] += x[1];
    return a * (b * x[0]) + c * x[1];
  }

  void collect_params(std::set<std::string>& names) const override {
    for (const Param* p : {&outer_, &inner_, &other_})
      if (p->is_ref()) names.insert(p->name());
  }

private:
  void check(const IndexPoint& x) const {
    if (x.size() < 3)
      throw DimensionMismatch("ir kernel: expected points of the lifted 3-D product space");
  }
  Param outer_, inner_, other_;
};

}  // namespace

KernelExpr ir_nonstationary_kernel(const std::array<Param, 10>& phi, Param sigma2,
                                   double nu_task) {
  auto stationary = product(
      {axis_restrict({0, 1}, exponential(Metric::axis_lengths({phi[7], phi[8]}))),
       axis_restrict({2}, matern(Metric::isotropic(phi[9]), nu_task))});

  auto center1 = std::make_shared<DriftingCenterField>(phi[0], phi[1], phi[2]);
  auto center2 = std::make_shared<DriftingCenterField>(phi[3], phi[4], phi[5]);
  auto bumps = bump_sum_field(2, {std::move(center1), std::move(center2)}, phi[6]);

  // A1*A2 is a pure warp of the constant kernel, so the sum stays PSD.
  auto drift = warp(std::move(bumps), constant(1.0));
  return scale(std::move(sigma2), sum({std::move(stationary), std::move(drift)}));
}

Matrix cross_task_covariance(const FittedState& state, const IndexPoint& input,
                             const TaskGrid& tasks) {
  const int n1 = state.data.space.input_dim();
  if (input.size() != n1)
    throw DimensionMismatch("cross_task_covariance: input must have " + std::to_string(n1) +
                            " coordinates");
  const int t = tasks.size();
  std::vector<IndexPoint> pts;
  pts.reserve(t);
  for (int j = 0; j < t; ++j) {
    IndexPoint p(n1 + 1);
    p.head(n1) = input;
    p[n1] = tasks.coord(j);
    pts.push_back(std::move(p));
  }
  return build_gram(state.kernel, pts, state.hyper);
}

}  // namespace gpkit
