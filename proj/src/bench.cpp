#include "gpkit/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace gpkit::bench {

namespace {

constexpr double kPi = 3.14159265358979323846;

double ackley(const IndexPoint& x) {
  // cos through |x| so sign flips are bit-exact
  const double r2 = 0.5 * (x[0] * x[0] + x[1] * x[1]);
  const double c = 0.5 * (std::cos(2.0 * kPi * std::abs(x[0])) +
                          std::cos(2.0 * kPi * std::abs(x[1])));
  return -20.0 * std::exp(-0.2 * std::sqrt(r2)) - std::exp(c) + 20.0 + std::exp(1.0);
}

double additive2d(const IndexPoint& x) {
  return std::sin(2.0 * kPi * x[0]) + 0.6 * std::cos(2.0 * kPi * x[1]);
}

constexpr double kPeriod = 0.25;

double periodic2d(const IndexPoint& x) {
  // periodic in the second coordinate by construction (fmod is exact)
  double u = std::fmod(x[1], kPeriod);
  if (u < 0.0) u += kPeriod;
  return std::sin(2.0 * kPi * u / kPeriod) * (1.0 + 0.5 * std::sin(kPi * x[0])) +
         0.3 * std::cos(kPi * x[0]);
}

double sixfold2d(const IndexPoint& x) {
  const double r2 = x[0] * x[0] + x[1] * x[1];
  const double theta = std::atan2(x[1], x[0]);
  return std::cos(6.0 * theta) * r2 * std::exp(1.0 - r2) + 0.5 * std::exp(-r2);
}

// rough multi-sine texture with near-unit variance; the fixed frequencies
// and phases make it behave like one draw of a short-length-scale process
double sine_texture(double t) {
  static constexpr double freq[] = {2.3, 3.1, 4.7, 5.9, 7.3, 8.9, 10.7, 12.1, 13.9, 15.5};
  static constexpr double phase[] = {0.9, 2.2, 4.1, 0.3, 5.2, 1.7, 3.6, 2.9, 0.6, 4.8};
  double v = 0.0;
  for (int k = 0; k < 10; ++k)
    v += std::sin(freq[k] * t + phase[k]) / std::sqrt(1.0 + 0.12 * freq[k] * freq[k]);
  double norm = 0.0;
  for (int k = 0; k < 10; ++k) norm += 0.5 / (1.0 + 0.12 * freq[k] * freq[k]);
  return v / std::sqrt(norm);
}

double nonstat1d(const IndexPoint& x) { return 0.25 * x[0] * sine_texture(x[0]); }

double nonstat2d(const IndexPoint& x) {
  const double r2 = x[0] * x[0] + x[1] * x[1];
  const double amp = 2.0 * (std::sqrt(50.0) - std::sqrt(r2)) / std::sqrt(50.0);
  return amp * std::sin(0.25 * r2);
}

std::vector<GroundTruth> make_registry() {
  std::vector<GroundTruth> g;
  g.push_back({"additive2d", 2, {{{0.0, 1.0}, {0.0, 1.0}}}, additive2d});
  g.push_back({"ackley_symmetric", 2, {{{-3.0, 3.0}, {-3.0, 3.0}}}, ackley});
  g.push_back({"periodic2d", 2, {{{0.0, 1.0}, {0.0, 1.0}}}, periodic2d});
  g.push_back({"sixfold2d", 2, {{{-2.5, 2.5}, {-2.5, 2.5}}}, sixfold2d});
  g.push_back({"nonstat1d", 1, {{{0.0, 6.0}}}, nonstat1d});
  g.push_back({"nonstat2d", 2, {{{0.0, 5.0}, {0.0, 5.0}}}, nonstat2d});
  return g;
}

const std::vector<GroundTruth>& registry() {
  static const std::vector<GroundTruth> r = make_registry();
  return r;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + salt + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

const GroundTruth& ground_truth(const std::string& name) {
  for (const auto& g : registry())
    if (g.name == name) return g;
  throw ConfigError("unknown ground truth '" + name + "'");
}

std::vector<std::string> ground_truth_names() {
  std::vector<std::string> names;
  for (const auto& g : registry()) names.push_back(g.name);
  return names;
}

Dataset generate(const GroundTruth& gt, int n, std::uint64_t seed, double noise_variance) {
  if (n < 1) throw InvalidArgument("generate: n must be >= 1");
  if (noise_variance < 0.0) throw InvalidArgument("generate: negative noise variance");
  std::mt19937_64 rng(mix_seed(seed, 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma = std::sqrt(noise_variance);

  std::vector<IndexPoint> points;
  points.reserve(n);
  Vector values(n);
  // one point's draws are consumed before the next begins, so a longer run
  // with the same seed extends rather than reshuffles the set
  for (int i = 0; i < n; ++i) {
    IndexPoint p(gt.dim);
    for (int d = 0; d < gt.dim; ++d)
      p[d] = gt.domain[d][0] + unit(rng) * (gt.domain[d][1] - gt.domain[d][0]);
    if (gt.name == "additive2d") {
      // data only on the two axes; interior reconstruction is the point
      p[unit(rng) < 0.5 ? 0 : 1] = 0.0;
    }
    values[i] = gt.eval(p) + (sigma > 0.0 ? sigma * gauss(rng) : 0.0);
    points.push_back(std::move(p));
  }
  return make_dataset(IndexSpace(gt.dim, 0, gt.domain), std::move(points), std::move(values),
                      NoiseModel::iid(std::max(noise_variance, 1e-12)));
}

std::vector<IndexPoint> sample_points(const GroundTruth& gt, int n, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 2));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<IndexPoint> points;
  points.reserve(n);
  for (int i = 0; i < n; ++i) {
    IndexPoint p(gt.dim);
    for (int d = 0; d < gt.dim; ++d)
      p[d] = gt.domain[d][0] + unit(rng) * (gt.domain[d][1] - gt.domain[d][0]);
    points.push_back(std::move(p));
  }
  return points;
}

namespace {

// two peaks whose task positions drift linearly with the sample position;
// slopes only, so the drift is representable by the non-stationary recipe
double ir_spectrum(double x1, double x2, double t) {
  const double c1 = 1.8 * x1 + 0.2 * x2;
  const double c2 = 0.3 * x1 + 1.9 * x2;
  const double w = 0.06;
  return std::exp(-(t - c1) * (t - c1) / w) + std::exp(-(t - c2) * (t - c2) / w) + 0.15;
}

}  // namespace

double ir_peaks_truth(const IndexPoint& p) {
  if (p.size() != 3) throw DimensionMismatch("ir_peaks_truth: expected a lifted 3-D point");
  return ir_spectrum(p[0], p[1], p[2]);
}

MultiTaskDataset generate_ir_peaks(int records, int tasks, std::uint64_t seed,
                                   double noise_variance) {
  if (records < 1 || tasks < 1) throw InvalidArgument("generate_ir_peaks: empty shape");
  std::mt19937_64 rng(mix_seed(seed, 3));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma = std::sqrt(noise_variance);

  Vector task_coords(tasks);
  for (int j = 0; j < tasks; ++j)
    task_coords[j] = 0.1 + 2.0 * j / std::max(1, tasks - 1);
  TaskGrid grid(task_coords);

  std::vector<MultiTaskRecord> recs;
  recs.reserve(records);
  for (int i = 0; i < records; ++i) {
    MultiTaskRecord r;
    r.input = IndexPoint(2);
    r.input[0] = unit(rng);
    r.input[1] = unit(rng);
    r.values.resize(tasks);
    r.noise_vars = Vector::Constant(tasks, std::max(noise_variance, 1e-12));
    for (int j = 0; j < tasks; ++j)
      r.values[j] = ir_spectrum(r.input[0], r.input[1], grid.coord(j)) +
                    (sigma > 0.0 ? sigma * gauss(rng) : 0.0);
    recs.push_back(std::move(r));
  }
  return make_multitask_dataset(IndexSpace(2), std::move(grid), std::move(recs));
}

MetricsReport compute_metrics(const Vector& truth, const Vector& observed,
                              const Vector& observation_noise, const Posterior& post) {
  const int n = static_cast<int>(truth.size());
  if (n == 0 || post.mean.size() != n || observed.size() != n || observation_noise.size() != n)
    throw LengthMismatch("compute_metrics: truth/posterior size mismatch");
  MetricsReport m;
  double se = 0.0, ae = 0.0, nll = 0.0;
  int covered = 0;
  for (int i = 0; i < n; ++i) {
    const double d = truth[i] - post.mean[i];
    se += d * d;
    ae += std::abs(d);
    const double r = observed[i] - post.mean[i];
    const double v = std::max(post.variance[i] + observation_noise[i], 1e-12);
    nll += 0.5 * std::log(2.0 * kPi * v) + r * r / (2.0 * v);
    if (std::abs(r) <= 1.96 * std::sqrt(v)) ++covered;
  }
  m.rmse = std::sqrt(se / n);
  m.mean_abs_error = ae / n;
  m.nll = nll / n;
  m.coverage95 = static_cast<double>(covered) / n;
  return m;
}

IndexPoint suggest_next(const FittedState& state, const std::vector<IndexPoint>& candidates) {
  if (candidates.empty()) throw EmptyGrid("suggest_next: empty candidate grid");
  const Posterior post = posterior(state, candidates);
  int best = 0;
  for (int i = 1; i < post.variance.size(); ++i)
    if (post.variance[i] > post.variance[best]) best = i;
  return candidates[best];
}

// ---------------------------------------------------------------------------
// Run pipeline
// ---------------------------------------------------------------------------

namespace {

struct Problem {
  Dataset train_data;
  std::vector<IndexPoint> test_points;
  Vector test_truth;     // latent values (observed y for csv sources)
  Vector test_observed;  // noisy held-out measurements
  Vector test_noise;     // per-point observation noise variance
  const GroundTruth* gt = nullptr;  // null for csv / ir sources
};

Dataset subset(const Dataset& d, const std::vector<int>& idx) {
  std::vector<IndexPoint> pts;
  Vector vals(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    pts.push_back(d.points[idx[i]]);
    vals[static_cast<int>(i)] = d.values[idx[i]];
  }
  NoiseModel noise = d.noise;
  if (d.noise.kind() == NoiseModel::Kind::Diagonal) {
    Vector v(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) v[static_cast<int>(i)] = d.noise.variances()[idx[i]];
    noise = NoiseModel::diagonal(std::move(v));
  } else if (d.noise.kind() == NoiseModel::Kind::Full) {
    Matrix v(idx.size(), idx.size());
    for (size_t i = 0; i < idx.size(); ++i)
      for (size_t j = 0; j < idx.size(); ++j) v(i, j) = d.noise.matrix()(idx[i], idx[j]);
    noise = NoiseModel::full(std::move(v));
  }
  return make_dataset(d.space, std::move(pts), std::move(vals), std::move(noise));
}

Problem build_problem(const RunConfig& cfg) {
  Problem p;
  if (!cfg.ground_truth.empty()) {
    const GroundTruth& gt = ground_truth(cfg.ground_truth);
    p.gt = &gt;
    p.train_data = generate(gt, cfg.train_points, cfg.seed, cfg.noise_variance);
    p.test_points = sample_points(gt, cfg.test_points, cfg.seed);
    p.test_truth.resize(cfg.test_points);
    for (int i = 0; i < cfg.test_points; ++i) p.test_truth[i] = gt.eval(p.test_points[i]);
    p.test_observed = p.test_truth;
    if (cfg.noise_variance > 0.0) {
      std::mt19937_64 rng(mix_seed(cfg.seed, 5));
      std::normal_distribution<double> gauss(0.0, std::sqrt(cfg.noise_variance));
      for (int i = 0; i < cfg.test_points; ++i) p.test_observed[i] += gauss(rng);
    }
    p.test_noise = Vector::Constant(cfg.test_points, std::max(cfg.noise_variance, 1e-12));
  } else if (cfg.ir_peaks) {
    const int test_records = std::max(2, cfg.test_points);
    MultiTaskDataset all = generate_ir_peaks(cfg.train_points + test_records, cfg.ir_tasks,
                                             cfg.seed, cfg.noise_variance);
    MultiTaskDataset train{all.base_space, all.tasks,
                           {all.records.begin(), all.records.begin() + cfg.train_points}};
    p.train_data = lift(train);
    std::vector<double> observed;
    for (int i = cfg.train_points; i < all.record_count(); ++i) {
      for (int j = 0; j < all.tasks.size(); ++j) {
        IndexPoint q(3);
        q.head(2) = all.records[i].input;
        q[2] = all.tasks.coord(j);
        p.test_points.push_back(std::move(q));
        observed.push_back(all.records[i].values[j]);
      }
    }
    const int m = static_cast<int>(p.test_points.size());
    p.test_truth.resize(m);
    for (int i = 0; i < m; ++i) p.test_truth[i] = ir_peaks_truth(p.test_points[i]);
    p.test_observed = Eigen::Map<Vector>(observed.data(), m);
    p.test_noise = Vector::Constant(m, std::max(cfg.noise_variance, 1e-12));
  } else if (!cfg.csv_path.empty()) {
    Dataset all = cfg.csv_layout == "multi_task"
                      ? lift(load_csv_multi_task(cfg.csv_path))
                      : load_csv_single_task(cfg.csv_path);
    const int n = all.size();
    int n_test = static_cast<int>(std::lround(cfg.holdout_fraction * n));
    n_test = std::clamp(n_test, 1, n - 1);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(cfg.seed, 4));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> train_idx(order.begin(), order.end() - n_test);
    std::vector<int> test_idx(order.end() - n_test, order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    p.train_data = subset(all, train_idx);
    p.test_truth.resize(n_test);
    p.test_noise.resize(n_test);
    for (int i = 0; i < n_test; ++i) {
      p.test_points.push_back(all.points[test_idx[i]]);
      p.test_truth[i] = all.values[test_idx[i]];
      switch (all.noise.kind()) {
        case NoiseModel::Kind::Iid: p.test_noise[i] = all.noise.iid_sigma2(); break;
        case NoiseModel::Kind::Diagonal: p.test_noise[i] = all.noise.variances()[test_idx[i]]; break;
        case NoiseModel::Kind::Full: p.test_noise[i] = all.noise.matrix()(test_idx[i], test_idx[i]); break;
      }
    }
    p.test_observed = p.test_truth;  // no latent truth is available for csv data
  } else {
    throw ConfigError("config needs a source: ground_truth, csv, or ir_peaks");
  }

  // held-out points must not coincide with training locations
  for (const auto& q : p.test_points)
    for (const auto& t : p.train_data.points)
      if (q.size() == t.size() && (q - t).cwiseAbs().maxCoeff() == 0.0)
        throw InternalError("train/test sets overlap");
  return p;
}

PriorMean config_mean(const RunConfig& cfg) {
  return cfg.zero_mean ? PriorMean::zero() : PriorMean::constant(cfg.mean_constant);
}

// linspace whose symmetric points are exact negations when lo == -hi
std::vector<double> grid_axis(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
  if (lo == -hi)
    for (int i = 0; i < n / 2; ++i) v[n - 1 - i] = -v[i];
  return v;
}

void write_grid_csv(const std::filesystem::path& path, const Problem& prob,
                    const FittedState& state, int grid_size) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& gt = *prob.gt;
  if (gt.dim == 1) {
    const int g = grid_size > 0 ? grid_size : 200;
    auto xs = grid_axis(gt.domain[0][0], gt.domain[0][1], g);
    std::vector<IndexPoint> pts;
    for (double x : xs) pts.push_back(Vector::Constant(1, x));
    const Posterior post = posterior(state, pts);
    out << "x1,mean,variance,abs_diff\n";
    for (int i = 0; i < g; ++i)
      out << format_double(xs[i]) << ',' << format_double(post.mean[i]) << ','
          << format_double(post.variance[i]) << ','
          << format_double(std::abs(post.mean[i] - gt.eval(pts[i]))) << '\n';
    return;
  }
  const int g = grid_size > 0 ? grid_size : 40;
  auto xs = grid_axis(gt.domain[0][0], gt.domain[0][1], g);
  auto ys = grid_axis(gt.domain[1][0], gt.domain[1][1], g);
  std::vector<IndexPoint> pts;
  pts.reserve(static_cast<size_t>(g) * g);
  for (double x : xs)
    for (double y : ys) {
      IndexPoint p(2);
      p << x, y;
      pts.push_back(std::move(p));
    }
  const Posterior post = posterior(state, pts);
  out << "x1,x2,mean,variance,abs_diff\n";
  for (size_t i = 0; i < pts.size(); ++i) {
    const int k = static_cast<int>(i);
    out << format_double(pts[i][0]) << ',' << format_double(pts[i][1]) << ','
        << format_double(post.mean[k]) << ',' << format_double(post.variance[k]) << ','
        << format_double(std::abs(post.mean[k] - gt.eval(pts[i]))) << '\n';
  }
}

void write_artifacts(const RunConfig& cfg, const KernelRecipe& recipe, const Problem& prob,
                     const RunResult& result, const Posterior& post) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(cfg.out_dir) / recipe.name;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());

  save_csv(dir / "dataset.csv", prob.train_data);

  {
    std::ofstream out(dir / "predictions.csv");
    if (!out) throw IoError("cannot write predictions.csv");
    const int dim = prob.train_data.space.dim();
    for (int d = 0; d < dim; ++d) out << 'x' << (d + 1) << ',';
    out << "truth,observed,mean,variance\n";
    for (size_t i = 0; i < prob.test_points.size(); ++i) {
      const int k = static_cast<int>(i);
      for (int d = 0; d < dim; ++d) out << format_double(prob.test_points[i][d]) << ',';
      out << format_double(prob.test_truth[k]) << ',' << format_double(prob.test_observed[k])
          << ',' << format_double(post.mean[k]) << ',' << format_double(post.variance[k]) << '\n';
    }
  }

  {
    std::ofstream out(dir / "train_report.csv");
    if (!out) throw IoError("cannot write train_report.csv");
    out << "restart,objective,iterations,converged,skipped\n";
    for (size_t r = 0; r < result.report.per_restart.size(); ++r) {
      const auto& res = result.report.per_restart[r];
      out << r << ',' << (res.skipped ? "" : format_double(res.objective)) << ','
          << res.iterations << ',' << (res.converged ? 1 : 0) << ',' << (res.skipped ? 1 : 0)
          << '\n';
    }
  }

  {
    std::ofstream out(dir / "hyperparameters.csv");
    if (!out) throw IoError("cannot write hyperparameters.csv");
    out << "name,value,low,high,scale\n";
    for (const auto& e : result.report.best.entries())
      out << e.name << ',' << format_double(e.value) << ',' << format_double(e.low) << ','
          << format_double(e.high) << ',' << (e.scale == ParamScale::Log ? "log" : "linear")
          << '\n';
  }

  {
    nlohmann::ordered_json j;
    j["kernel"] = recipe.name;
    j["rmse"] = result.metrics.rmse;
    j["mean_abs_error"] = result.metrics.mean_abs_error;
    j["nll"] = result.metrics.nll;
    j["coverage95"] = result.metrics.coverage95;
    j["best_objective"] = result.report.best_objective;
    j["runtime_seconds"] = result.metrics.runtime_seconds;
    std::ofstream out(dir / "metrics.json");
    if (!out) throw IoError("cannot write metrics.json");
    out << j.dump(2) << '\n';
  }

  if (prob.gt != nullptr && prob.gt->dim <= 2)
    write_grid_csv(dir / "grid.csv", prob, result.state, cfg.grid_size);
}

RunResult run_on_problem(const RunConfig& cfg, const KernelRecipe& recipe, const Problem& prob) {
  const auto t0 = std::chrono::steady_clock::now();

  KernelExpr kernel = build_kernel(recipe.expr);
  const PriorMean mean = config_mean(cfg);
  TrainReport report = train(prob.train_data, kernel, mean, recipe.hyper, cfg.train);
  FittedState state = fit(prob.train_data, kernel, mean, report.best);
  const Posterior post = posterior(state, prob.test_points);

  RunResult result;
  result.kernel_name = recipe.name;
  result.metrics = compute_metrics(prob.test_truth, prob.test_observed, prob.test_noise, post);
  result.metrics.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.report = std::move(report);
  result.state = std::move(state);

  if (!cfg.out_dir.empty()) write_artifacts(cfg, recipe, prob, result, post);
  return result;
}

}  // namespace

RunResult run_single(const RunConfig& cfg, const KernelRecipe& recipe) {
  return run_on_problem(cfg, recipe, build_problem(cfg));
}

std::vector<RunResult> run(const RunConfig& cfg) {
  if (cfg.kernels.empty()) throw ConfigError("config lists no kernels");
  const Problem prob = build_problem(cfg);
  std::vector<RunResult> results;
  for (const auto& recipe : cfg.kernels) results.push_back(run_on_problem(cfg, recipe, prob));
  return results;
}

ErrorCurve error_vs_n(const RunConfig& cfg) {
  if (cfg.n_schedule.empty()) throw ConfigError("error-curve needs a non-empty n_schedule");
  if (cfg.kernels.empty()) throw ConfigError("config lists no kernels");
  for (size_t i = 1; i < cfg.n_schedule.size(); ++i)
    if (cfg.n_schedule[i] <= cfg.n_schedule[i - 1])
      throw ConfigError("n_schedule must be strictly increasing");

  ErrorCurve curve;
  curve.n_values = cfg.n_schedule;
  for (const auto& k : cfg.kernels) curve.kernel_names.push_back(k.name);
  curve.rmse.resize(cfg.n_schedule.size(), cfg.kernels.size());

  RunConfig sub = cfg;
  sub.out_dir.clear();
  for (size_t ni = 0; ni < cfg.n_schedule.size(); ++ni) {
    sub.train_points = cfg.n_schedule[ni];
    const Problem prob = build_problem(sub);  // prefix of the n_max draw by construction
    for (size_t ki = 0; ki < cfg.kernels.size(); ++ki) {
      const RunResult r = run_on_problem(sub, cfg.kernels[ki], prob);
      curve.rmse(static_cast<int>(ni), static_cast<int>(ki)) = r.metrics.rmse;
    }
  }

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream out(std::filesystem::path(cfg.out_dir) / "error_curve.csv");
    if (!out) throw IoError("cannot write error_curve.csv");
    out << "n";
    for (const auto& name : curve.kernel_names) out << ',' << name;
    out << '\n';
    for (size_t ni = 0; ni < curve.n_values.size(); ++ni) {
      out << curve.n_values[ni];
      for (size_t ki = 0; ki < curve.kernel_names.size(); ++ki)
        out << ',' << format_double(curve.rmse(static_cast<int>(ni), static_cast<int>(ki)));
      out << '\n';
    }
  }
  return curve;
}

}  // namespace gpkit::bench
