// Command-line front end: dataset generation, two-stage training, evaluation,
// sampling, hyperparameter sweeps and the numerical self-checks.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 divergence guard,
// 4 numeric error.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tcm/battery.hpp"
#include "tcm/config.hpp"
#include "tcm/errors.hpp"
#include "tcm/metrics.hpp"
#include "tcm/net.hpp"
#include "tcm/oracle.hpp"
#include "tcm/train.hpp"

namespace fs = std::filesystem;
using namespace tcm;

namespace {

constexpr const char* kVersion = "tcm 1.0.0";

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void check_sigma_match(const CmParams& p, const Dataset& data) {
  if (std::abs(p.sigma_data - data.sigma_data) > 1e-12)
    throw ConfigError("sigma_data mismatch: checkpoint " + format_double(p.sigma_data) +
                      " vs dataset " + format_double(data.sigma_data) +
                      " (metrics would be computed at the wrong scale)");
}

Dataset dataset_for(const Config& cfg, const std::string& data_path) {
  if (data_path.empty()) return cfg.build_dataset();
  return load_dataset(data_path);
}

int run_train(const std::string& config_path, int stage, const std::string& init_ckpt,
              const std::string& data_path, const std::string& out_dir) {
  if (stage == 2 && init_ckpt.empty())
    throw ConfigError("--stage 2 requires --init <stage-1 checkpoint>");

  const Config cfg = Config::from_file(config_path);
  const TrainerConfig tc = cfg.trainer(stage);
  const Dataset data = dataset_for(cfg, data_path);

  RunManifest manifest;
  manifest.config_hash = cfg.hash();
  manifest.code_version = kVersion;
  manifest.started_at = timestamp_now();

  fs::create_directories(out_dir);
  TrainResult res;
  if (stage == 1) {
    CmParams init;
    const bool resume = !init_ckpt.empty();
    if (resume) init = load_checkpoint(init_ckpt);
    res = train_stage1(data, tc, resume ? &init : nullptr);
  } else {
    CmParams stage1 = load_checkpoint(init_ckpt);
    check_sigma_match(stage1, data);
    res = train_stage2(stage1, data, tc);
  }

  for (const auto& [iter, snap] : res.snapshots) {
    const std::string p = out_dir + "/ckpt_" + std::to_string(iter) + "_ema.tcm";
    save_checkpoint(snap, p);
    manifest.checkpoint_paths.push_back(p);
  }
  const std::string raw_path = out_dir + "/ckpt_final.tcm";
  const std::string ema_path = out_dir + "/ckpt_final_ema.tcm";
  save_checkpoint(res.params, raw_path);
  save_checkpoint(res.ema_params, ema_path);
  manifest.checkpoint_paths.push_back(raw_path);
  manifest.checkpoint_paths.push_back(ema_path);

  write_metric_log(res.log, out_dir + "/metrics.csv");
  if (!res.log.empty()) {
    manifest.final_metrics["loss"] = res.log.back().loss;
    manifest.final_metrics["grad_norm"] = res.log.back().grad_norm;
  }
  manifest.finished_at = timestamp_now();
  save_manifest(manifest, out_dir + "/manifest.json");
  std::cout << "stage " << stage << " done: " << ema_path << "\n";
  return 0;
}

int run_eval(const std::vector<std::string>& ckpts, const std::string& data_path,
             const std::string& what, std::uint64_t seed, std::size_t n,
             const std::string& t_grid_str, const std::string& out_path) {
  const Dataset data = load_dataset(data_path);
  std::vector<double> t_grid;
  {
    std::istringstream ss(t_grid_str);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) t_grid.push_back(std::stod(tok));
  }
  NoiseSpec spec;
  spec.sigma_data = data.sigma_data;

  std::vector<ReportRow> rows;
  for (const auto& ckpt_path : ckpts) {
    const CmParams p = load_checkpoint(ckpt_path);
    check_sigma_match(p, data);
    const std::string name = fs::path(ckpt_path).filename().string();
    auto add = [&](double t, const std::string& metric, double value) {
      rows.push_back({name, p.iteration, t, metric, value, n, seed});
    };

    if (what == "onestep") {
      Rng rng(seed, "eval-onestep");
      add(spec.t_max, "one_step_w2",
          w2(sample_onestep(p, n, rng, spec), draw_batch(data, n, rng), data.d));
    } else if (what == "twostep") {
      Rng rng(seed, "eval-twostep");
      const double t_mid = p.t_prime > 0.0 ? p.t_prime : 1.0;
      add(t_mid, "two_step_w2",
          w2(sample_twostep(p, n, t_mid, rng, spec), draw_batch(data, n, rng), data.d));
    } else if (what == "dfid") {
      for (std::size_t k = 0; k < t_grid.size(); ++k) {
        Rng rng(seed, "eval-dfid", k);
        add(t_grid[k], "denoising_w2", denoising_divergence(p, t_grid[k], data, n, rng));
      }
    } else if (what == "gap") {
      for (std::size_t k = 0; k < t_grid.size(); ++k) {
        Rng rng(seed, "eval-gap", k);
        add(t_grid[k], "oracle_gap", oracle_gap(p, t_grid[k], data, n, rng));
      }
    } else if (what == "tradeoff") {
      const MetricRecord rec = evaluate_checkpoint(p, data, t_grid, n, seed);
      add(spec.t_max, "one_step_w2", rec.one_step_div);
      add(p.t_prime > 0.0 ? p.t_prime : 1.0, "two_step_w2", rec.two_step_div);
      for (const auto& [t, v] : rec.dfid_grid) add(t, "denoising_w2", v);
    } else {
      throw ConfigError("unknown eval kind '" + what + "'");
    }
  }
  if (what == "tradeoff" && ckpts.size() < 2)
    throw ConfigError("tradeoff needs at least 2 checkpoints");
  write_report(rows, out_path);
  std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
  return 0;
}

int run_sweep(const std::string& config_path, int stage, const std::string& init_ckpt,
              const std::string& param, const std::vector<std::string>& values,
              const std::string& data_path, const std::string& out_dir) {
  if (values.empty()) throw ConfigError("sweep: empty values list");
  const Config base = Config::from_file(config_path);
  fs::create_directories(out_dir);

  std::vector<ReportRow> summary;
  for (const auto& value : values) {
    Config cfg = base;
    cfg.set(param, value);  // rejects non-registry keys
    const std::string run_dir = out_dir + "/" + param + "=" + value;
    fs::create_directories(run_dir);
    {
      std::ofstream f(run_dir + "/config.cfg");
      f << cfg.serialize();
    }
    const TrainerConfig tc = cfg.trainer(stage);
    const Dataset data = dataset_for(cfg, data_path);
    TrainResult res;
    if (stage == 1) {
      res = train_stage1(data, tc);
    } else {
      if (init_ckpt.empty()) throw ConfigError("sweep: --stage 2 requires --init");
      res = train_stage2(load_checkpoint(init_ckpt), data, tc);
    }
    save_checkpoint(res.ema_params, run_dir + "/ckpt_final_ema.tcm");
    write_metric_log(res.log, run_dir + "/metrics.csv");

    const std::size_t n = cfg.get_size("eval.n");
    Rng rng(tc.seed, "eval-onestep");
    NoiseSpec spec = cfg.noise();
    const double div =
        w2(sample_onestep(res.ema_params, n, rng, spec), draw_batch(data, n, rng), data.d);
    summary.push_back({param + "=" + value, res.ema_params.iteration, spec.t_max,
                       "one_step_w2", div, n, tc.seed});
    std::cout << param << "=" << value << "  one_step_w2=" << format_double(div) << "\n";
  }
  write_report(summary, out_dir + "/summary.csv");
  return 0;
}

int run_gradcheck() {
  const auto rows = gradient_battery(/*seed=*/1234, /*points=*/100);
  bool ok = true;
  std::printf("%-18s %-14s %s\n", "check", "max_rel_err", "status");
  for (const auto& [name, err] : rows) {
    const bool pass = err < kGradCheckTolerance;
    ok = ok && pass;
    std::printf("%-18s %-14.3e %s\n", name.c_str(), err, pass ? "pass" : "FAIL");
  }
  return ok ? 0 : 1;
}

int run_oracle_check() {
  const Dataset data = make_dataset("ring8", 512, 2, 7);
  Rng rng(99, "oracle-check");
  bool ok = true;

  // Score vs finite differences of the log density.
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double t = std::exp(std::log(0.002) + rng.uniform() * std::log(80.0 / 0.002));
    std::vector<double> x = {3.0 * rng.normal(), 3.0 * rng.normal()};
    const auto s = exact_score(x, t, data);
    for (std::size_t j = 0; j < 2; ++j) {
      const double h = 1e-5 * t;
      std::vector<double> xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (log_density(xp, t, data) - log_density(xm, t, data)) / (2.0 * h);
      worst = std::max(worst, std::abs(s[j] - fd) / std::max(1.0, std::abs(s[j])));
    }
  }
  std::printf("score vs finite-difference rel err: %.3e %s\n", worst,
              worst < 1e-6 ? "pass" : "FAIL");
  ok = ok && worst < 1e-6;

  // Heun self-convergence order.
  std::vector<double> x0 = {1.5, -0.7};
  const auto a = pf_ode_solve(x0, 80.0, 0.002, 100, data);
  const auto b = pf_ode_solve(x0, 80.0, 0.002, 200, data);
  const auto c = pf_ode_solve(x0, 80.0, 0.002, 400, data);
  auto dist = [](const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) s += (u[j] - v[j]) * (u[j] - v[j]);
    return std::sqrt(s);
  };
  const double ratio = dist(a, c) / std::max(dist(b, c), 1e-300);
  std::printf("heun halving error ratio: %.2f %s\n", ratio,
              (ratio > 3.2 && ratio < 4.8) ? "pass" : "FAIL");
  ok = ok && ratio > 3.2 && ratio < 4.8;

  // Semigroup property of the endpoint map. Splitting at the geometric
  // midpoint keeps the two legs on the direct solve's step grid, so any
  // disagreement is an integrator-restart bug, not discretization error.
  const double t_split = std::sqrt(80.0 * 0.002);
  const auto direct = oracle_endpoint(x0, 80.0, data, 400);
  const auto mid = pf_ode_solve(x0, 80.0, t_split, 200, data);
  const auto two_leg = oracle_endpoint(mid, t_split, data, 200);
  const double gap = dist(direct, two_leg);
  std::printf("semigroup endpoint gap: %.3e %s\n", gap, gap < 1e-6 ? "pass" : "FAIL");
  ok = ok && gap < 1e-6;

  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Truncated consistency model training on toy densities"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a normalized dataset file");
  std::string gen_name = "ring8", gen_out = "data.tcm";
  std::size_t gen_n = 2048, gen_d = 2;
  std::uint64_t gen_seed = 7;
  double gen_sigma = 0.5;
  gen->add_option("--name", gen_name, "ring8 | grid25 | two-moons");
  gen->add_option("--n", gen_n);
  gen->add_option("--d", gen_d);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--sigma-data", gen_sigma);
  gen->add_option("--out", gen_out)->required();

  // train
  auto* train = app.add_subcommand("train", "Run stage-1 or stage-2 training");
  std::string train_cfg, train_init, train_data, train_out = "run";
  int train_stage = 1;
  train->add_option("--config", train_cfg)->required();
  train->add_option("--stage", train_stage)->check(CLI::Range(1, 2));
  train->add_option("--init", train_init, "checkpoint to initialize from");
  train->add_option("--data", train_data, "dataset file (default: generated from config)");
  train->add_option("--out-dir", train_out);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints against a dataset");
  std::vector<std::string> eval_ckpts;
  std::string eval_data, eval_what = "onestep", eval_out = "report.csv";
  std::string eval_grid = "0.2,0.5,1,2,5,80";
  std::uint64_t eval_seed = 0;
  std::size_t eval_n = 2048;
  eval->add_option("--ckpt", eval_ckpts)->required();
  eval->add_option("--data", eval_data)->required();
  eval->add_option("--what", eval_what, "onestep | twostep | dfid | gap | tradeoff");
  eval->add_option("--seed", eval_seed);
  eval->add_option("--n", eval_n);
  eval->add_option("--t-grid", eval_grid);
  eval->add_option("--out", eval_out);

  // sample
  auto* sample = app.add_subcommand("sample", "Draw samples from a checkpoint");
  std::string sample_ckpt, sample_out = "samples.tcm";
  std::size_t sample_n = 2048;
  std::uint64_t sample_seed = 0;
  bool sample_two_step = false;
  sample->add_option("--ckpt", sample_ckpt)->required();
  sample->add_option("--n", sample_n);
  sample->add_option("--seed", sample_seed);
  sample->add_flag("--two-step", sample_two_step);
  sample->add_option("--out", sample_out);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Sequential single-parameter sweep");
  std::string sweep_cfg, sweep_param, sweep_out = "sweep", sweep_init, sweep_data;
  std::vector<std::string> sweep_values;
  int sweep_stage = 2;
  sweep->add_option("--config", sweep_cfg)->required();
  sweep->add_option("--param", sweep_param)->required();
  sweep->add_option("--values", sweep_values)->required()->delimiter(',');
  sweep->add_option("--stage", sweep_stage)->check(CLI::Range(1, 2));
  sweep->add_option("--init", sweep_init);
  sweep->add_option("--data", sweep_data);
  sweep->add_option("--out-dir", sweep_out);

  app.add_subcommand("gradcheck", "Finite-difference battery over primitives and losses");
  app.add_subcommand("oracle-check", "Score/ODE oracle self-checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const Dataset data = make_dataset(gen_name, gen_n, gen_d, gen_seed, gen_sigma);
      save_dataset(data, gen_out);
      std::cout << "wrote " << gen_out << "\n";
      return 0;
    }
    if (train->parsed())
      return run_train(train_cfg, train_stage, train_init, train_data, train_out);
    if (eval->parsed())
      return run_eval(eval_ckpts, eval_data, eval_what, eval_seed, eval_n, eval_grid, eval_out);
    if (sample->parsed()) {
      const CmParams p = load_checkpoint(sample_ckpt);
      NoiseSpec spec;
      spec.sigma_data = p.sigma_data;
      Rng rng(sample_seed, "sample");
      std::vector<double> pts;
      if (sample_two_step) {
        const double t_mid = p.t_prime > 0.0 ? p.t_prime : 1.0;
        pts = sample_twostep(p, sample_n, t_mid, rng, spec);
      } else {
        pts = sample_onestep(p, sample_n, rng, spec);
      }
      write_samples(pts, p.arch.in_dim, p.sigma_data, sample_out);
      std::cout << "wrote " << sample_out << "\n";
      return 0;
    }
    if (sweep->parsed())
      return run_sweep(sweep_cfg, sweep_stage, sweep_init, sweep_param, sweep_values,
                       sweep_data, sweep_out);
    if (app.get_subcommand("gradcheck")->parsed()) return run_gradcheck();
    if (app.get_subcommand("oracle-check")->parsed()) return run_oracle_check();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence guard: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
