// Command-line front end: fit / predict / benchmark / error-curve /
// psd-check / suggest, all driven by a JSON config file.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "gpkit/bench.hpp"

namespace fs = std::filesystem;
using namespace gpkit;
using nlohmann::ordered_json;

namespace {

struct CliOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string verb;
};

bench::RunConfig load(const CliOptions& opt) {
  bench::RunConfig cfg = bench::load_config(opt.config_path);
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  return cfg;
}

void write_model(const fs::path& dir, const bench::KernelRecipe& recipe,
                 const TrainReport& report) {
  fs::create_directories(dir);
  ordered_json j;
  j["kernel"] = recipe.name;
  j["best_objective"] = report.best_objective;
  j["hyperparameters"] = ordered_json::array();
  for (const auto& e : report.best.entries()) {
    ordered_json entry;
    entry["name"] = e.name;
    entry["value"] = e.value;
    entry["low"] = e.low;
    entry["high"] = e.high;
    entry["scale"] = e.scale == ParamScale::Log ? "log" : "linear";
    j["hyperparameters"].push_back(entry);
  }
  std::ofstream out(dir / "model.json");
  if (!out) throw IoError("cannot write model.json under " + dir.string());
  out << j.dump(2) << '\n';
}

Hyperparameters read_model(const fs::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw IoError("no model.json under " + dir.string() + " (run `gpkit fit` first)");
  nlohmann::json j;
  in >> j;
  Hyperparameters h;
  for (const auto& e : j.at("hyperparameters"))
    h.add(e.at("name").get<std::string>(), e.at("value").get<double>(),
          e.at("low").get<double>(), e.at("high").get<double>(),
          e.at("scale").get<std::string>() == "log" ? ParamScale::Log : ParamScale::Linear);
  return h;
}

int cmd_fit(const bench::RunConfig& cfg) {
  bench::RunConfig quiet = cfg;
  quiet.out_dir.clear();  // fit writes model files only
  for (const auto& recipe : cfg.kernels) {
    const bench::RunResult r = bench::run_single(quiet, recipe);
    write_model(fs::path(cfg.out_dir.empty() ? "." : cfg.out_dir) / recipe.name, recipe, r.report);
    std::cout << recipe.name << ": objective " << bench::format_double(r.report.best_objective)
              << ", rmse " << bench::format_double(r.metrics.rmse) << '\n';
  }
  return 0;
}

int cmd_predict(const bench::RunConfig& cfg) {
  for (const auto& recipe : cfg.kernels) {
    const fs::path dir = fs::path(cfg.out_dir.empty() ? "." : cfg.out_dir) / recipe.name;
    const Hyperparameters h = read_model(dir);
    bench::RunConfig one = cfg;
    one.kernels = {recipe};
    one.train.restarts = 1;
    one.train.max_iters = 0;  // evaluate at the stored hyperparameters
    one.train.starts = std::vector<Hyperparameters>{h};
    bench::KernelRecipe pinned = recipe;
    pinned.hyper = h;
    bench::RunResult r = bench::run_single(one, pinned);
    std::cout << recipe.name << ": rmse " << bench::format_double(r.metrics.rmse)
              << ", coverage95 " << bench::format_double(r.metrics.coverage95) << '\n';
  }
  return 0;
}

int cmd_benchmark(const bench::RunConfig& cfg) {
  const auto results = bench::run(cfg);
  for (const auto& r : results)
    std::cout << r.kernel_name << ": rmse " << bench::format_double(r.metrics.rmse) << ", mae "
              << bench::format_double(r.metrics.mean_abs_error) << ", nll "
              << bench::format_double(r.metrics.nll) << ", coverage95 "
              << bench::format_double(r.metrics.coverage95) << '\n';
  return 0;
}

int cmd_error_curve(const bench::RunConfig& cfg) {
  const auto curve = bench::error_vs_n(cfg);
  std::cout << "n";
  for (const auto& name : curve.kernel_names) std::cout << ',' << name;
  std::cout << '\n';
  for (size_t i = 0; i < curve.n_values.size(); ++i) {
    std::cout << curve.n_values[i];
    for (size_t k = 0; k < curve.kernel_names.size(); ++k)
      std::cout << ',' << bench::format_double(curve.rmse(static_cast<int>(i), static_cast<int>(k)));
    std::cout << '\n';
  }
  return 0;
}

std::vector<IndexPoint> candidate_grid(const bench::RunConfig& cfg) {
  if (cfg.ground_truth.empty())
    throw ConfigError("this verb needs a ground_truth source for its candidate grid");
  return bench::sample_points(bench::ground_truth(cfg.ground_truth), cfg.candidates,
                              cfg.seed + 1);
}

int cmd_psd_check(const bench::RunConfig& cfg) {
  const auto pts = candidate_grid(cfg);
  std::vector<IndexPoint> sample(pts.begin(), pts.begin() + std::min<size_t>(pts.size(), 30));
  bool all_pass = true;
  for (const auto& recipe : cfg.kernels) {
    const KernelExpr k = bench::build_kernel(recipe.expr);
    const PsdReport r = psd_check(k, recipe.hyper, sample);
    all_pass = all_pass && r.pass;
    std::cout << recipe.name << ": min_eig " << bench::format_double(r.min_eig) << ", trace "
              << bench::format_double(r.trace) << ", " << (r.pass ? "pass" : "FAIL") << '\n';
  }
  return all_pass ? 0 : 3;
}

int cmd_suggest(const bench::RunConfig& cfg) {
  bench::RunConfig quiet = cfg;
  quiet.out_dir.clear();
  const bench::RunResult r = bench::run_single(quiet, cfg.kernels.front());
  const auto candidates = candidate_grid(cfg);
  const IndexPoint next = bench::suggest_next(r.state, candidates);
  std::cout << "next";
  for (int d = 0; d < next.size(); ++d) std::cout << ' ' << bench::format_double(next[d]);
  std::cout << '\n';
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    std::ofstream out(fs::path(cfg.out_dir) / "suggestion.csv");
    if (!out) throw IoError("cannot write suggestion.csv");
    for (int d = 0; d < next.size(); ++d) out << (d ? "," : "") << 'x' << (d + 1);
    out << '\n';
    for (int d = 0; d < next.size(); ++d)
      out << (d ? "," : "") << bench::format_double(next[d]);
    out << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-process regression with composable kernel expressions"};
  app.require_subcommand(1);

  CliOptions opt;
  app.add_option("--config", opt.config_path, "JSON config file")->required();
  app.add_option("--seed", opt.seed, "override the config seed");
  app.add_option("--out", opt.out, "override the config output directory");

  for (const char* verb :
       {"fit", "predict", "benchmark", "error-curve", "psd-check", "suggest"})
    app.add_subcommand(verb)->callback([&opt, verb] { opt.verb = verb; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const bench::RunConfig cfg = load(opt);
    if (opt.verb == "fit") return cmd_fit(cfg);
    if (opt.verb == "predict") return cmd_predict(cfg);
    if (opt.verb == "benchmark") return cmd_benchmark(cfg);
    if (opt.verb == "error-curve") return cmd_error_curve(cfg);
    if (opt.verb == "psd-check") return cmd_psd_check(cfg);
    if (opt.verb == "suggest") return cmd_suggest(cfg);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 2;
  } catch (const NotFactorizable& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const AllRestartsFailed& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
