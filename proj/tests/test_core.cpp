#include <doctest.h>

#include <random>

#include "support.hpp"

using namespace gpkit;
using gpkit::testing::pt;

TEST_CASE("make_dataset accepts a minimal valid input") {
  const Dataset d = make_dataset(IndexSpace(1), {pt(0.0)}, Vector::Constant(1, 1.0),
                                 NoiseModel::iid(0.01));
  CHECK(d.size() == 1);
  CHECK(d.space.dim() == 1);
  CHECK(d.values[0] == 1.0);
}

TEST_CASE("make_dataset rejects invalid inputs") {
  IndexSpace three(3);
  CHECK_THROWS_AS(make_dataset(three, {pt(0.0, 1.0)}, Vector::Constant(1, 1.0),
                               NoiseModel::iid(0.01)),
                  DimensionMismatch);

  Vector bad(1);
  bad << std::nan("");
  CHECK_THROWS_AS(make_dataset(IndexSpace(1), {pt(0.0)}, bad, NoiseModel::iid(0.01)),
                  NonFiniteValue);

  // shape mismatches
  CHECK_THROWS_AS(make_dataset(IndexSpace(1), {pt(0.0), pt(1.0)}, Vector::Constant(2, 0.0),
                               NoiseModel::diagonal(Vector::Constant(3, 0.1))),
                  NoiseShapeMismatch);
  CHECK_THROWS_AS(make_dataset(IndexSpace(1), {pt(0.0)}, Vector::Constant(2, 0.0),
                               NoiseModel::iid(1.0)),
                  LengthMismatch);
}

TEST_CASE("duplicate measurement locations are permitted") {
  const Dataset d = make_dataset(IndexSpace(1), {pt(0.5), pt(0.5)}, Vector::Constant(2, 1.0),
                                 NoiseModel::iid(0.01));
  CHECK(d.size() == 2);
}

TEST_CASE("dataset construction is pure") {
  auto build = [] {
    return make_dataset(IndexSpace(2), {pt(0.1, 0.2), pt(0.3, 0.4)}, Vector::Constant(2, 1.5),
                        NoiseModel::iid(0.5));
  };
  const Dataset a = build();
  const Dataset b = build();
  CHECK(a.values == b.values);
  for (int i = 0; i < a.size(); ++i) CHECK(a.points[i] == b.points[i]);
}

TEST_CASE("noise model invariants") {
  CHECK_THROWS_AS(NoiseModel::iid(0.0), InvalidArgument);
  CHECK_THROWS_AS(NoiseModel::iid(-1.0), InvalidArgument);
  CHECK_THROWS_AS(NoiseModel::diagonal(Vector::Zero(2)), InvalidArgument);

  Matrix skew(2, 2);
  skew << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS_AS(NoiseModel::full(skew), InvalidArgument);

  Matrix neg(2, 2);
  neg << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3, -1
  CHECK_THROWS_AS(NoiseModel::full(neg), InvalidArgument);

  Matrix ok(2, 2);
  ok << 2.0, 0.5, 0.5, 1.0;
  CHECK(NoiseModel::full(ok).kind() == NoiseModel::Kind::Full);
}

TEST_CASE("hyperparameter validation") {
  Hyperparameters h;
  h.add("l", 1.0, 0.1, 10.0, ParamScale::Log);
  CHECK_THROWS_AS(h.add("l", 2.0, 0.1, 10.0), InvalidArgument);           // duplicate
  CHECK_THROWS_AS(h.add("bad", 5.0, 0.1, 1.0), InvalidArgument);          // out of bounds
  CHECK_THROWS_AS(h.add("neg", 1.0, 0.0, 10.0, ParamScale::Log), InvalidArgument);
}

TEST_CASE("pack maps log entries to log-space") {
  Hyperparameters h;
  h.add("l", 1.0, 0.1, 10.0, ParamScale::Log);
  CHECK(h.pack()[0] == 0.0);  // ln 1
}

TEST_CASE("pack/unpack round trip is identity within 1e-14 relative") {
  Hyperparameters tmpl;
  tmpl.add("l", 1.0, 0.1, 10.0, ParamScale::Log);
  tmpl.add("s", 0.5, -2.0, 2.0, ParamScale::Linear);
  tmpl.add("w", 2.0, 0.01, 100.0, ParamScale::Log);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Vector v(3);
    v[0] = 0.1 + u(rng) * 9.9;
    v[1] = -2.0 + u(rng) * 4.0;
    v[2] = 0.01 + u(rng) * 99.99;
    const Hyperparameters h = tmpl.with_values(v);
    const Hyperparameters rt = tmpl.unpack(h.pack());
    for (int i = 0; i < 3; ++i)
      CHECK(std::abs(rt.value(i) - h.value(i)) <= 1e-14 * std::abs(h.value(i)));
  }
}

TEST_CASE("unpack clamps out-of-bounds values to the bound") {
  Hyperparameters tmpl;
  tmpl.add("l", 1.0, 0.1, 10.0, ParamScale::Log);
  tmpl.add("s", 0.0, -1.0, 1.0);

  Vector packed(2);
  packed << std::log(100.0), -3.0;
  const Hyperparameters h = tmpl.unpack(packed);
  CHECK(h.value("l") == 10.0);
  CHECK(h.value("s") == -1.0);

  Vector wrong(3);
  CHECK_THROWS_AS(tmpl.unpack(wrong), LengthMismatch);
}

TEST_CASE("param resolution") {
  Hyperparameters h;
  h.add("l", 2.5, 0.1, 10.0);
  CHECK(Param("l").resolve(h) == 2.5);
  CHECK(Param(3.0).resolve(h) == 3.0);
  CHECK_THROWS_AS(Param("missing").resolve(h), MissingHyperparameter);
  CHECK(Param(3.0).index_in(h) == -1);
  CHECK(Param("l").index_in(h) == 0);
}

TEST_CASE("index space bounds validation") {
  CHECK_THROWS_AS(IndexSpace(0), InvalidArgument);
  CHECK_THROWS_AS(IndexSpace(1, -1), InvalidArgument);
  CHECK_THROWS_AS(IndexSpace(1, 0, std::vector<std::array<double, 2>>{{1.0, 1.0}}),
                  InvalidArgument);
  const IndexSpace s(2, 1);
  CHECK(s.dim() == 3);
}
