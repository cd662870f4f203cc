#include <doctest.h>

#include <random>

#include "support.hpp"
#include "gpkit/multitask.hpp"

using namespace gpkit;
using namespace gpkit::testing;

namespace {

const Hyperparameters kNoHyper{};

MultiTaskDataset small_mt(int records, int tasks, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector coords(tasks);
  for (int j = 0; j < tasks; ++j) coords[j] = 0.5 * j + 0.2;
  std::vector<MultiTaskRecord> recs;
  for (int i = 0; i < records; ++i) {
    MultiTaskRecord r;
    r.input = pt(u(rng), u(rng));
    r.values.resize(tasks);
    for (int j = 0; j < tasks; ++j) r.values[j] = u(rng) - 0.5;
    r.noise_vars = Vector::Constant(tasks, 0.01);
    recs.push_back(std::move(r));
  }
  return make_multitask_dataset(IndexSpace(2), TaskGrid(coords), std::move(recs));
}

}  // namespace

TEST_CASE("lift flattens record-major and unlift inverts it") {
  const MultiTaskDataset mt = small_mt(2, 3);
  const Dataset lifted = lift(mt);
  CHECK(lifted.size() == 6);
  CHECK(lifted.space.input_dim() == 2);
  CHECK(lifted.space.output_dim() == 1);

  const MultiTaskDataset back = unlift(lifted, mt.tasks);
  REQUIRE(back.record_count() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(back.records[i].input == mt.records[i].input);
    CHECK(back.records[i].values == mt.records[i].values);
    CHECK(back.records[i].noise_vars == mt.records[i].noise_vars);
  }
}

TEST_CASE("flattened index of (record i, task j) is i*T + j") {
  for (int n = 1; n <= 4; ++n)
    for (int t = 1; t <= 4; ++t) {
      const MultiTaskDataset mt = small_mt(n, t, 100 * n + t);
      const Dataset lifted = lift(mt);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < t; ++j) {
          const auto& p = lifted.points[i * t + j];
          CHECK(p.head(2) == mt.records[i].input);
          CHECK(p[2] == mt.tasks.coord(j));
          CHECK(lifted.values[i * t + j] == mt.records[i].values[j]);
        }
    }
}

TEST_CASE("single-task lift appends the lone task coordinate") {
  const MultiTaskDataset mt = small_mt(3, 1);
  const Dataset lifted = lift(mt);
  CHECK(lifted.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(lifted.points[i].head(2) == mt.records[i].input);
    CHECK(lifted.points[i][2] == mt.tasks.coord(0));
    CHECK(lifted.values[i] == mt.records[i].values[0]);
  }
}

TEST_CASE("task grid validation") {
  Vector bad(2);
  bad << 1.0, 1.0;
  CHECK_THROWS_AS(TaskGrid{bad}, InvalidArgument);
  Vector down(2);
  down << 2.0, 1.0;
  CHECK_THROWS_AS(TaskGrid{down}, InvalidArgument);
}

TEST_CASE("ir stationary kernel") {
  Hyperparameters h;
  h.add("l1", 0.4, 0.01, 10.0, ParamScale::Log);
  h.add("l2", 0.6, 0.01, 10.0, ParamScale::Log);
  h.add("lt", 0.8, 0.01, 10.0, ParamScale::Log);
  h.add("s2", 1.7, 0.01, 10.0, ParamScale::Log);
  const auto k = ir_stationary_kernel(Param("l1"), Param("l2"), Param("lt"), 1.5, Param("s2"));

  SUBCASE("coincident points return sigma2") {
    const auto x = pt(0.3, 0.4, 1.2);
    CHECK(k->eval(x, x, h) == doctest::Approx(1.7).epsilon(1e-14));
  }
  SUBCASE("pure task gap factors through the matern profile") {
    const auto x1 = pt(0.3, 0.4, 1.2);
    const auto x2 = pt(0.3, 0.4, 2.0);
    const double gap = 0.8 / 0.8;  // task distance over task length scale
    CHECK(k->eval(x1, x2, h) == doctest::Approx(1.7 * matern_profile(gap, 1.5)).epsilon(1e-12));
  }
  SUBCASE("gram on a lifted 3x5 set is numerically PSD") {
    const Dataset lifted = lift(small_mt(3, 5));
    const auto report = psd_check(k, h, lifted.points);
    CHECK(report.pass);
  }
}

TEST_CASE("ir non-stationary kernel") {
  auto make_h = [](double phi0, double phi2) {
    Hyperparameters h;
    h.add("p0", phi0, -5.0, 5.0);
    h.add("p1", 1.0, -5.0, 5.0);
    h.add("p2", phi2, -5.0, 5.0);
    h.add("p3", phi0, -5.0, 5.0);
    h.add("p4", 1.0, -5.0, 5.0);
    h.add("p5", phi2, -5.0, 5.0);
    h.add("p6", 0.04, 0.001, 1.0, ParamScale::Log);
    h.add("p7", 0.5, 0.01, 10.0, ParamScale::Log);
    h.add("p8", 0.5, 0.01, 10.0, ParamScale::Log);
    h.add("p9", 0.7, 0.01, 10.0, ParamScale::Log);
    h.add("s2", 1.0, 0.01, 10.0, ParamScale::Log);
    return h;
  };
  const std::array<Param, 10> phi = {Param("p0"), Param("p1"), Param("p2"), Param("p3"),
                                     Param("p4"), Param("p5"), Param("p6"), Param("p7"),
                                     Param("p8"), Param("p9")};
  const auto k = ir_nonstationary_kernel(phi, Param("s2"), 1.5);
  const auto stat = product(
      {axis_restrict({0, 1}, exponential(Metric::axis_lengths({Param("p7"), Param("p8")}))),
       axis_restrict({2}, matern(Metric::isotropic(Param("p9")), 1.5))});

  SUBCASE("pinned centers give the squared double-bump A-term") {
    const Hyperparameters h = make_h(0.0, 0.0);  // both centers at zero
    const auto x = pt(0.7, 0.3, 0.25);
    const double bump = std::exp(-x[2] * x[2] / 0.04);
    const double expected_a = (2.0 * bump) * (2.0 * bump);
    const double total = k->eval(x, x, h);
    const double stationary = stat->eval(x, x, h);
    CHECK(total == doctest::Approx(1.0 * (stationary + expected_a)).epsilon(1e-12));
  }

  SUBCASE("far from both centers the kernel is the stationary part") {
    const Hyperparameters h = make_h(0.0, 0.0);
    const double far = 10.0 * std::sqrt(0.04);
    const auto x1 = pt(0.2, 0.8, far);
    const auto x2 = pt(0.5, 0.1, far + 0.05);
    const double a_term = k->eval(x1, x2, h) - stat->eval(x1, x2, h);
    CHECK(std::abs(a_term) <= 1e-20);
  }

  SUBCASE("gram on a lifted 4x8 set is numerically PSD") {
    const Hyperparameters h = make_h(0.8, 0.4);
    const Dataset lifted = lift(small_mt(4, 8));
    CHECK(psd_check(k, h, lifted.points).pass);
  }

  SUBCASE("psd on 50 random lifted points for 20 random hyperparameter draws") {
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int draw = 0; draw < 20; ++draw) {
      Hyperparameters h;
      h.add("p0", 2.0 * u(rng) - 1.0, -5.0, 5.0);
      h.add("p1", 2.0 * u(rng) - 1.0, -5.0, 5.0);
      h.add("p2", 2.0 * u(rng) - 1.0, -5.0, 5.0);
      h.add("p3", 2.0 * u(rng) - 1.0, -5.0, 5.0);
      h.add("p4", 2.0 * u(rng) - 1.0, -5.0, 5.0);
      h.add("p5", 2.0 * u(rng) - 1.0, -5.0, 5.0);
      h.add("p6", 0.01 + u(rng), 0.001, 2.0, ParamScale::Log);
      h.add("p7", 0.1 + u(rng), 0.01, 10.0, ParamScale::Log);
      h.add("p8", 0.1 + u(rng), 0.01, 10.0, ParamScale::Log);
      h.add("p9", 0.1 + u(rng), 0.01, 10.0, ParamScale::Log);
      h.add("s2", 0.5 + u(rng), 0.01, 10.0, ParamScale::Log);
      std::vector<IndexPoint> pts;
      for (int i = 0; i < 50; ++i) pts.push_back(pt(u(rng), u(rng), 2.2 * u(rng)));
      const auto report = psd_check(k, h, pts);
      CHECK_MESSAGE(report.pass, "draw ", draw, " min_eig ", report.min_eig);
    }
  }
}

TEST_CASE("cross-task covariance structure") {
  const MultiTaskDataset mt = small_mt(4, 6);
  const Dataset lifted = lift(mt);

  SUBCASE("stationary product kernel is constant along diagonals") {
    Hyperparameters h;
    h.add("l1", 0.5, 0.01, 10.0, ParamScale::Log);
    h.add("l2", 0.5, 0.01, 10.0, ParamScale::Log);
    h.add("lt", 0.9, 0.01, 10.0, ParamScale::Log);
    h.add("s2", 1.3, 0.01, 10.0, ParamScale::Log);
    const auto k = ir_stationary_kernel(Param("l1"), Param("l2"), Param("lt"), 0.5, Param("s2"));
    const FittedState s = fit(lifted, k, PriorMean::zero(), h);
    const Matrix c = cross_task_covariance(s, pt(0.4, 0.6), mt.tasks);
    REQUIRE(c.rows() == 6);
    CHECK((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
    double max_dev = 0.0;
    for (int off = 0; off < 6; ++off) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (int i = 0; i + off < 6; ++i) {
        lo = std::min(lo, c(i, i + off));
        hi = std::max(hi, c(i, i + off));
      }
      max_dev = std::max(max_dev, hi - lo);
    }
    CHECK(max_dev <= 1e-12);
  }

  SUBCASE("active bumps break diagonal constancy") {
    Hyperparameters h;
    h.add("p0", 1.2, -5.0, 5.0);
    h.add("p1", 1.0, -5.0, 5.0);
    h.add("p2", 0.5, -5.0, 5.0);
    h.add("p3", 0.2, -5.0, 5.0);
    h.add("p4", 1.0, -5.0, 5.0);
    h.add("p5", 1.5, -5.0, 5.0);
    h.add("p6", 0.08, 0.001, 1.0, ParamScale::Log);
    h.add("p7", 0.5, 0.01, 10.0, ParamScale::Log);
    h.add("p8", 0.5, 0.01, 10.0, ParamScale::Log);
    h.add("p9", 0.7, 0.01, 10.0, ParamScale::Log);
    h.add("s2", 1.0, 0.01, 10.0, ParamScale::Log);
    const std::array<Param, 10> phi = {Param("p0"), Param("p1"), Param("p2"), Param("p3"),
                                       Param("p4"), Param("p5"), Param("p6"), Param("p7"),
                                       Param("p8"), Param("p9")};
    const auto k = ir_nonstationary_kernel(phi, Param("s2"), 1.5);
    const FittedState s = fit(lifted, k, PriorMean::zero(), h);
    const Matrix c = cross_task_covariance(s, pt(0.4, 0.6), mt.tasks);
    double max_dev = 0.0;
    for (int off = 0; off < 6; ++off) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (int i = 0; i + off < 6; ++i) {
        lo = std::min(lo, c(i, i + off));
        hi = std::max(hi, c(i, i + off));
      }
      max_dev = std::max(max_dev, hi - lo);
    }
    CHECK(max_dev > 1e-3);
  }

  SUBCASE("single task gives a 1x1 matrix") {
    const MultiTaskDataset one = small_mt(3, 1);
    const Dataset lifted1 = lift(one);
    Hyperparameters h;
    h.add("l1", 0.5, 0.01, 10.0, ParamScale::Log);
    h.add("l2", 0.5, 0.01, 10.0, ParamScale::Log);
    h.add("lt", 0.9, 0.01, 10.0, ParamScale::Log);
    h.add("s2", 1.3, 0.01, 10.0, ParamScale::Log);
    const auto k = ir_stationary_kernel(Param("l1"), Param("l2"), Param("lt"), 0.5, Param("s2"));
    const FittedState s = fit(lifted1, k, PriorMean::zero(), h);
    const Matrix c = cross_task_covariance(s, pt(0.2, 0.9), one.tasks);
    REQUIRE(c.rows() == 1);
    const auto x = pt(0.2, 0.9, one.tasks.coord(0));
    CHECK(c(0, 0) == doctest::Approx(k->eval(x, x, h)).epsilon(1e-14));
  }
}

TEST_CASE("vanishing task length scale decouples the tasks") {
  // with l_task -> 0 the off-task Gram entries vanish and the lifted GP
  // reproduces independent per-task posteriors
  const MultiTaskDataset mt = small_mt(5, 3, 9);
  const Dataset lifted = lift(mt);
  Hyperparameters h;
  h.add("l1", 0.5, 0.01, 10.0, ParamScale::Log);
  h.add("l2", 0.5, 0.01, 10.0, ParamScale::Log);
  h.add("lt", 1e-4, 1e-5, 10.0, ParamScale::Log);
  h.add("s2", 1.0, 0.01, 10.0, ParamScale::Log);
  const auto k = ir_stationary_kernel(Param("l1"), Param("l2"), Param("lt"), 0.5, Param("s2"));

  const Matrix gram = build_gram(k, lifted.points, h);
  for (int a = 0; a < lifted.size(); ++a)
    for (int b = 0; b < lifted.size(); ++b)
      if (lifted.points[a][2] != lifted.points[b][2]) CHECK(std::abs(gram(a, b)) <= 1e-12);

  // per-task independent GP over the inputs, same plane kernel
  const FittedState joint = fit(lifted, k, PriorMean::zero(), h);
  const Posterior joint_post = posterior(joint, lifted.points);
  const auto plane = scale(Param("s2"),
                           exponential(Metric::axis_lengths({Param("l1"), Param("l2")})));
  for (int j = 0; j < mt.tasks.size(); ++j) {
    std::vector<IndexPoint> xs;
    Vector y(mt.record_count());
    Vector noise(mt.record_count());
    for (int i = 0; i < mt.record_count(); ++i) {
      xs.push_back(mt.records[i].input);
      y[i] = mt.records[i].values[j];
      noise[i] = mt.records[i].noise_vars[j];
    }
    const Dataset taskwise =
        make_dataset(IndexSpace(2), xs, y, NoiseModel::diagonal(noise));
    const FittedState single = fit(taskwise, plane, PriorMean::zero(), h);
    const Posterior single_post = posterior(single, xs);
    for (int i = 0; i < mt.record_count(); ++i) {
      CHECK(std::abs(joint_post.mean[i * mt.tasks.size() + j] - single_post.mean[i]) <= 1e-8);
      CHECK(std::abs(joint_post.variance[i * mt.tasks.size() + j] - single_post.variance[i]) <=
            1e-8);
    }
  }
}
