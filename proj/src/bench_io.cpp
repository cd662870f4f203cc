#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "gpkit/bench.hpp"

namespace gpkit::bench {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw InternalError("format_double: conversion failed");
  return std::string(buf, p);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& cell, int line_no, int col_no) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  auto [p, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || p != end)
    throw ParseError("line " + std::to_string(line_no) + ", column " + std::to_string(col_no) +
                     ": cannot parse number '" + cell + "'");
  return v;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

Dataset load_csv_single_task(const std::filesystem::path& path, double default_noise) {
  const auto lines = read_lines(path);
  if (lines.size() < 2) throw SchemaError(path.string() + ": need a header and at least one row");

  const auto header = split_line(lines[0]);
  bool has_noise = !header.empty() && header.back() == "noise_var";
  const int y_col = static_cast<int>(header.size()) - (has_noise ? 2 : 1);
  if (y_col < 1 || header[y_col] != "y")
    throw SchemaError(path.string() + ": header must end with ...,y[,noise_var]");
  const int dim = y_col;

  std::vector<IndexPoint> points;
  std::vector<double> values, noises;
  for (size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto cells = split_line(lines[li]);
    if (static_cast<int>(cells.size()) != static_cast<int>(header.size()))
      throw SchemaError(path.string() + ": line " + std::to_string(li + 1) + " has " +
                        std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(header.size()));
    IndexPoint p(dim);
    for (int d = 0; d < dim; ++d) p[d] = parse_number(cells[d], static_cast<int>(li + 1), d + 1);
    points.push_back(std::move(p));
    values.push_back(parse_number(cells[y_col], static_cast<int>(li + 1), y_col + 1));
    if (has_noise)
      noises.push_back(parse_number(cells.back(), static_cast<int>(li + 1),
                                    static_cast<int>(cells.size())));
  }
  if (points.empty()) throw SchemaError(path.string() + ": no data rows");

  Vector y = Eigen::Map<Vector>(values.data(), static_cast<int>(values.size()));
  NoiseModel noise =
      has_noise ? NoiseModel::diagonal(Eigen::Map<Vector>(noises.data(),
                                                          static_cast<int>(noises.size())))
                : NoiseModel::iid(default_noise);
  return make_dataset(IndexSpace(dim), std::move(points), std::move(y), std::move(noise));
}

MultiTaskDataset load_csv_multi_task(const std::filesystem::path& path, double default_noise) {
  const auto lines = read_lines(path);
  if (lines.size() < 3)
    throw SchemaError(path.string() + ": need the tasks line, a header, and at least one row");

  const std::string prefix = "# tasks:";
  if (lines[0].rfind(prefix, 0) != 0)
    throw SchemaError(path.string() + ": first line must be '# tasks: t1,...,tT'");
  const auto task_cells = split_line(lines[0].substr(prefix.size()));
  Vector task_coords(task_cells.size());
  for (size_t i = 0; i < task_cells.size(); ++i) {
    std::string c = task_cells[i];
    c.erase(0, c.find_first_not_of(' '));
    task_coords[static_cast<int>(i)] = parse_number(c, 1, static_cast<int>(i + 1));
  }
  const int t = static_cast<int>(task_coords.size());

  const auto header = split_line(lines[1]);
  const int n1 = static_cast<int>(header.size()) - t;
  if (n1 < 1)
    throw SchemaError(path.string() + ": header has " + std::to_string(header.size()) +
                      " columns for " + std::to_string(t) + " tasks");
  // the trailing value columns must be v1..vT so a task-count mismatch is
  // detectable rather than silently reinterpreted as extra input columns
  for (int j = 0; j < t; ++j)
    if (header[n1 + j] != "v" + std::to_string(j + 1))
      throw SchemaError(path.string() + ": expected value column 'v" + std::to_string(j + 1) +
                        "', found '" + header[n1 + j] + "' (tasks line lists " +
                        std::to_string(t) + " tasks)");

  std::vector<MultiTaskRecord> records;
  for (size_t li = 2; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto cells = split_line(lines[li]);
    if (static_cast<int>(cells.size()) != n1 + t)
      throw SchemaError(path.string() + ": line " + std::to_string(li + 1) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(n1 + t));
    MultiTaskRecord r;
    r.input.resize(n1);
    for (int d = 0; d < n1; ++d)
      r.input[d] = parse_number(cells[d], static_cast<int>(li + 1), d + 1);
    r.values.resize(t);
    for (int j = 0; j < t; ++j)
      r.values[j] = parse_number(cells[n1 + j], static_cast<int>(li + 1), n1 + j + 1);
    r.noise_vars = Vector::Constant(t, default_noise);
    records.push_back(std::move(r));
  }
  if (records.empty()) throw SchemaError(path.string() + ": no data rows");
  return make_multitask_dataset(IndexSpace(n1), TaskGrid(std::move(task_coords)),
                                std::move(records));
}

void save_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const int dim = data.space.dim();
  const bool noise_col = data.noise.kind() != NoiseModel::Kind::Full;
  for (int d = 0; d < dim; ++d) out << 'x' << (d + 1) << ',';
  out << 'y';
  if (noise_col) out << ",noise_var";
  out << '\n';
  for (int i = 0; i < data.size(); ++i) {
    for (int d = 0; d < dim; ++d) out << format_double(data.points[i][d]) << ',';
    out << format_double(data.values[i]);
    if (noise_col)
      out << ',' << format_double(data.noise.kind() == NoiseModel::Kind::Iid
                                      ? data.noise.iid_sigma2()
                                      : data.noise.variances()[i]);
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const MultiTaskDataset& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# tasks:";
  for (int j = 0; j < data.tasks.size(); ++j)
    out << (j == 0 ? " " : ",") << format_double(data.tasks.coord(j));
  out << '\n';
  const int n1 = data.base_space.input_dim();
  for (int d = 0; d < n1; ++d) out << 'x' << (d + 1) << ',';
  for (int j = 0; j < data.tasks.size(); ++j) out << 'v' << (j + 1) << (j + 1 < data.tasks.size() ? "," : "");
  out << '\n';
  for (const auto& r : data.records) {
    for (int d = 0; d < n1; ++d) out << format_double(r.input[d]) << ',';
    for (int j = 0; j < data.tasks.size(); ++j)
      out << format_double(r.values[j]) << (j + 1 < data.tasks.size() ? "," : "");
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Config / kernel recipes
// ---------------------------------------------------------------------------

namespace {

void expect_keys(const json& j, const std::vector<std::string>& allowed, const char* ctx) {
  if (!j.is_object()) throw ConfigError(std::string(ctx) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError(std::string(ctx) + ": unknown key '" + it.key() + "'");
  }
}

const json& require(const json& j, const char* key, const char* ctx) {
  auto it = j.find(key);
  if (it == j.end())
    throw ConfigError(std::string(ctx) + ": missing required key '" + key + "'");
  return *it;
}

Param parse_param(const json& j, const char* ctx) {
  if (j.is_number()) return Param(j.get<double>());
  if (j.is_string()) return Param(j.get<std::string>());
  throw ConfigError(std::string(ctx) + ": parameter must be a number or a hyperparameter name");
}

Metric parse_metric(const json& j) {
  expect_keys(j, {"kind", "length", "lengths", "matrix"}, "metric");
  const std::string kind = require(j, "kind", "metric").get<std::string>();
  if (kind == "isotropic") return Metric::isotropic(parse_param(require(j, "length", "metric"), "metric.length"));
  if (kind == "axis_lengths") {
    std::vector<Param> ls;
    for (const auto& e : require(j, "lengths", "metric")) ls.push_back(parse_param(e, "metric.lengths"));
    return Metric::axis_lengths(std::move(ls));
  }
  if (kind == "full") {
    const auto& rows = require(j, "matrix", "metric");
    const int n = static_cast<int>(rows.size());
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
      if (static_cast<int>(rows[i].size()) != n) throw ConfigError("metric.matrix: ragged rows");
      for (int k = 0; k < n; ++k) m(i, k) = rows[i][k].get<double>();
    }
    return Metric::full(std::move(m));
  }
  throw ConfigError("metric: unknown kind '" + kind + "'");
}

ScalarFieldPtr parse_field(const json& j) {
  expect_keys(j, {"kind", "value", "coeffs", "intercept", "scale", "radius", "offset", "axis",
                  "centers", "width"},
              "field");
  const std::string kind = require(j, "kind", "field").get<std::string>();
  if (kind == "constant") return constant_field(parse_param(require(j, "value", "field"), "field.value"));
  if (kind == "linear") {
    std::vector<Param> coeffs;
    for (const auto& e : require(j, "coeffs", "field")) coeffs.push_back(parse_param(e, "field.coeffs"));
    return linear_field(std::move(coeffs), parse_param(require(j, "intercept", "field"), "field.intercept"));
  }
  if (kind == "radial")
    return radial_field(parse_param(require(j, "scale", "field"), "field.scale"),
                        require(j, "radius", "field").get<double>(),
                        parse_param(require(j, "offset", "field"), "field.offset"));
  if (kind == "bump_sum") {
    std::vector<ScalarFieldPtr> centers;
    for (const auto& e : require(j, "centers", "field")) centers.push_back(parse_field(e));
    return bump_sum_field(require(j, "axis", "field").get<int>(), std::move(centers),
                          parse_param(require(j, "width", "field"), "field.width"));
  }
  throw ConfigError("field: unknown kind '" + kind + "'");
}

MatrixFieldPtr parse_matrix_field(const json& j) {
  expect_keys(j, {"kind", "lengths", "dim", "a", "b", "lower"}, "matrix_field");
  const std::string kind = require(j, "kind", "matrix_field").get<std::string>();
  if (kind == "constant_diag") {
    std::vector<Param> ls;
    for (const auto& e : require(j, "lengths", "matrix_field"))
      ls.push_back(parse_param(e, "matrix_field.lengths"));
    return constant_diag_matrix_field(std::move(ls));
  }
  if (kind == "radial_diag")
    return radial_diag_matrix_field(require(j, "dim", "matrix_field").get<int>(),
                                    parse_param(require(j, "a", "matrix_field"), "matrix_field.a"),
                                    parse_param(require(j, "b", "matrix_field"), "matrix_field.b"));
  if (kind == "tril") {
    const auto& rows = require(j, "lower", "matrix_field");
    const int n = static_cast<int>(rows.size());
    Matrix m = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < static_cast<int>(rows[i].size()); ++k) m(i, k) = rows[i][k].get<double>();
    return tril_matrix_field(std::move(m));
  }
  throw ConfigError("matrix_field: unknown kind '" + kind + "'");
}

}  // namespace

KernelExpr build_kernel(const json& j) {
  expect_keys(j,
              {"type", "metric", "nu", "value", "children", "sigma2", "child", "axes", "field",
               "order", "axis", "period", "amplitude", "sigma", "l1", "l2", "l_task", "nu_task",
               "phi"},
              "kernel");
  const std::string type = require(j, "type", "kernel").get<std::string>();

  if (type == "sqexp") return sqexp(parse_metric(require(j, "metric", type.c_str())));
  if (type == "exponential") return exponential(parse_metric(require(j, "metric", type.c_str())));
  if (type == "matern")
    return matern(parse_metric(require(j, "metric", type.c_str())),
                  require(j, "nu", type.c_str()).get<double>());
  if (type == "constant") return constant(parse_param(require(j, "value", type.c_str()), "constant.value"));

  if (type == "sum" || type == "product") {
    std::vector<KernelExpr> children;
    for (const auto& c : require(j, "children", type.c_str())) children.push_back(build_kernel(c));
    return type == "sum" ? sum(std::move(children)) : product(std::move(children));
  }
  if (type == "scale")
    return scale(parse_param(require(j, "sigma2", "scale"), "scale.sigma2"),
                 build_kernel(require(j, "child", "scale")));
  if (type == "axis_restrict") {
    std::vector<int> axes;
    for (const auto& a : require(j, "axes", "axis_restrict")) axes.push_back(a.get<int>());
    return axis_restrict(std::move(axes), build_kernel(require(j, "child", "axis_restrict")));
  }
  if (type == "warp")
    return warp(parse_field(require(j, "field", "warp")), build_kernel(require(j, "child", "warp")));
  if (type == "axial_symmetry")
    return group_average(axial_symmetry_group(), build_kernel(require(j, "child", "axial_symmetry")));
  if (type == "rotation_symmetry")
    return group_average(rotation_group(require(j, "order", "rotation_symmetry").get<int>()),
                         build_kernel(require(j, "child", "rotation_symmetry")));
  if (type == "six_fold") return six_fold(build_kernel(require(j, "child", "six_fold")));
  if (type == "periodic_shift")
    return periodic_shift(require(j, "axis", "periodic_shift").get<int>(),
                          require(j, "period", "periodic_shift").get<double>(),
                          build_kernel(require(j, "child", "periodic_shift")));
  if (type == "paciorek_risser")
    return paciorek_risser(parse_field(require(j, "amplitude", "paciorek_risser")),
                           parse_matrix_field(require(j, "sigma", "paciorek_risser")),
                           require(j, "nu", "paciorek_risser").get<double>());
  if (type == "ir_stationary")
    return ir_stationary_kernel(parse_param(require(j, "l1", "ir_stationary"), "ir.l1"),
                                parse_param(require(j, "l2", "ir_stationary"), "ir.l2"),
                                parse_param(require(j, "l_task", "ir_stationary"), "ir.l_task"),
                                require(j, "nu_task", "ir_stationary").get<double>(),
                                parse_param(require(j, "sigma2", "ir_stationary"), "ir.sigma2"));
  if (type == "ir_nonstationary") {
    const auto& arr = require(j, "phi", "ir_nonstationary");
    if (arr.size() != 10) throw ConfigError("ir_nonstationary: phi must list 10 parameters");
    std::array<Param, 10> phi = {Param(0.0), Param(0.0), Param(0.0), Param(0.0), Param(0.0),
                                 Param(0.0), Param(0.0), Param(0.0), Param(0.0), Param(0.0)};
    for (int i = 0; i < 10; ++i) phi[i] = parse_param(arr[i], "ir_nonstationary.phi");
    return ir_nonstationary_kernel(phi,
                                   parse_param(require(j, "sigma2", "ir_nonstationary"), "ir.sigma2"),
                                   require(j, "nu_task", "ir_nonstationary").get<double>());
  }
  throw ConfigError("kernel: unknown type '" + type + "'");
}

namespace {

Hyperparameters parse_hyperparameters(const json& j) {
  Hyperparameters h;
  for (const auto& e : j) {
    expect_keys(e, {"name", "value", "low", "high", "scale"}, "hyperparameter");
    ParamScale scale = ParamScale::Linear;
    if (e.contains("scale")) {
      const std::string s = e["scale"].get<std::string>();
      if (s == "log") scale = ParamScale::Log;
      else if (s != "linear") throw ConfigError("hyperparameter: scale must be linear or log");
    }
    h.add(require(e, "name", "hyperparameter").get<std::string>(),
          require(e, "value", "hyperparameter").get<double>(),
          require(e, "low", "hyperparameter").get<double>(),
          require(e, "high", "hyperparameter").get<double>(), scale);
  }
  return h;
}

}  // namespace

RunConfig parse_config(const json& j) {
  expect_keys(j,
              {"source", "seed", "train_points", "test_points", "grid_size", "noise_variance",
               "kernels", "mean", "train", "metrics", "out", "n_schedule", "candidates"},
              "config");
  RunConfig cfg;

  const json& src = require(j, "source", "config");
  expect_keys(src, {"ground_truth", "csv", "layout", "holdout_fraction", "ir_peaks", "tasks"},
              "source");
  int sources = 0;
  if (src.contains("ground_truth")) {
    cfg.ground_truth = src["ground_truth"].get<std::string>();
    ground_truth(cfg.ground_truth);  // validates the name
    ++sources;
  }
  if (src.contains("csv")) {
    cfg.csv_path = src["csv"].get<std::string>();
    if (src.contains("layout")) {
      cfg.csv_layout = src["layout"].get<std::string>();
      if (cfg.csv_layout != "single_task" && cfg.csv_layout != "multi_task")
        throw ConfigError("source.layout must be single_task or multi_task");
    }
    if (src.contains("holdout_fraction")) cfg.holdout_fraction = src["holdout_fraction"].get<double>();
    ++sources;
  }
  if (src.contains("ir_peaks") && src["ir_peaks"].get<bool>()) {
    cfg.ir_peaks = true;
    if (src.contains("tasks")) cfg.ir_tasks = src["tasks"].get<int>();
    ++sources;
  }
  if (sources != 1) throw ConfigError("source: set exactly one of ground_truth, csv, ir_peaks");

  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("train_points")) cfg.train_points = j["train_points"].get<int>();
  if (j.contains("test_points")) cfg.test_points = j["test_points"].get<int>();
  if (j.contains("grid_size")) cfg.grid_size = j["grid_size"].get<int>();
  if (j.contains("noise_variance")) cfg.noise_variance = j["noise_variance"].get<double>();
  if (cfg.train_points < 1) throw ConfigError("train_points must be >= 1");
  if (cfg.test_points < 1) throw ConfigError("test_points must be >= 1");

  for (const auto& k : require(j, "kernels", "config")) {
    expect_keys(k, {"name", "expr", "hyperparameters"}, "kernels[]");
    KernelRecipe recipe;
    recipe.name = require(k, "name", "kernels[]").get<std::string>();
    recipe.expr = require(k, "expr", "kernels[]");
    recipe.hyper = k.contains("hyperparameters") ? parse_hyperparameters(k["hyperparameters"])
                                                 : Hyperparameters{};
    // validates the recipe shape and that every referenced name is declared
    const KernelExpr expr = build_kernel(recipe.expr);
    std::set<std::string> names;
    expr->collect_params(names);
    for (const auto& name : names)
      if (recipe.hyper.index_of(name) < 0)
        throw ConfigError("kernel '" + recipe.name + "' references undeclared hyperparameter '" +
                          name + "'");
    cfg.kernels.push_back(std::move(recipe));
  }
  if (cfg.kernels.empty()) throw ConfigError("config lists no kernels");

  if (j.contains("mean")) {
    const json& m = j["mean"];
    expect_keys(m, {"kind", "value"}, "mean");
    const std::string kind = require(m, "kind", "mean").get<std::string>();
    if (kind == "zero") {
      cfg.zero_mean = true;
    } else if (kind == "constant") {
      cfg.zero_mean = false;
      cfg.mean_constant = parse_param(require(m, "value", "mean"), "mean.value");
    } else {
      throw ConfigError("mean.kind must be zero or constant");
    }
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    expect_keys(t, {"restarts", "max_iters", "gradient_tolerance", "seed"}, "train");
    if (t.contains("restarts")) cfg.train.restarts = t["restarts"].get<int>();
    if (t.contains("max_iters")) cfg.train.max_iters = t["max_iters"].get<int>();
    if (t.contains("gradient_tolerance"))
      cfg.train.gradient_tolerance = t["gradient_tolerance"].get<double>();
    if (t.contains("seed")) cfg.train.seed = t["seed"].get<std::uint64_t>();
  }

  if (j.contains("metrics")) {
    for (const auto& m : j["metrics"]) {
      const std::string name = m.get<std::string>();
      if (name != "rmse" && name != "mean_abs_error" && name != "nll" && name != "coverage95")
        throw ConfigError("metrics: unknown metric '" + name + "'");
      cfg.metrics.push_back(name);
    }
  }

  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  if (j.contains("n_schedule"))
    for (const auto& n : j["n_schedule"]) cfg.n_schedule.push_back(n.get<int>());
  if (j.contains("candidates")) cfg.candidates = j["candidates"].get<int>();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace gpkit::bench
