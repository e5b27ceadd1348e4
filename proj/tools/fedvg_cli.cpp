#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedvg/config.hpp"
#include "fedvg/diagnostics.hpp"
#include "fedvg/io.hpp"
#include "fedvg/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace fedvg;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void apply_thread_cap() {
#ifdef _OPENMP
  if (const char* env = std::getenv("FEDVG_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1 && cap < omp_get_max_threads()) omp_set_num_threads(cap);
  }
#endif
}

struct RunOutput {
  ExperimentResult result;
  double wall_seconds = 0.0;
};

RunOutput run_to_dir(const ExperimentConfig& config, const fs::path& out_dir,
                     const RoundObserver& observer = nullptr) {
  fs::create_directories(out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  RunOutput out;
  out.result = run_experiment(config, observer);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_file((out_dir / "config_snapshot.ini").string(), config_snapshot(config));
  write_file((out_dir / "rounds.csv").string(), rounds_csv(out.result.rounds));
  write_file((out_dir / "scores.csv").string(), scores_csv(out.result.rounds));
  write_file((out_dir / "summary.json").string(), summary_json(out.result));
  // Timing is kept out of summary.json so reruns stay byte-identical.
  write_file((out_dir / "timing.txt").string(),
             "wall_time_seconds " + format_float(out.wall_seconds) + "\n");
  return out;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::optional<uint64_t> seed) {
  ExperimentConfig config = load_config(config_path);
  if (seed) config.master_seed = *seed;
  const auto out = run_to_dir(config, out_dir);
  std::cout << "best_acc=" << format_float(out.result.best_acc)
            << " best_round=" << out.result.best_round
            << " final_acc=" << format_float(out.result.final_acc)
            << " wall_s=" << format_float(out.wall_seconds) << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<double>& alphas,
              const std::vector<std::string>& strategies, const std::vector<uint64_t>& seeds,
              const std::string& out_dir, int jobs) {
  if (alphas.empty() || strategies.empty() || seeds.empty())
    throw InputError("sweep: --alphas, --strategies and --seeds must be non-empty");
  const ExperimentConfig base = load_config(config_path);
  fs::create_directories(out_dir);

  struct Job {
    std::string strategy;
    double alpha;
    uint64_t seed;
    double best_acc = 0.0;
    int best_round = 0;
    std::string error;
  };
  std::vector<Job> jobs_list;
  for (const auto& strat : strategies)
    for (double alpha : alphas)
      for (uint64_t seed : seeds) jobs_list.push_back({strat, alpha, seed});

  const int n = static_cast<int>(jobs_list.size());
#ifdef _OPENMP
  const int threads = std::max(1, std::min(jobs, n));
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#else
  (void)jobs;
#endif
  for (int i = 0; i < n; ++i) {
    auto& job = jobs_list[static_cast<size_t>(i)];
    try {
      ExperimentConfig config = base;
      parse_strategy(job.strategy, &config.strategy, &config.weighting);
      config.alpha = job.alpha;
      config.master_seed = job.seed;
      config.validate();
      char alpha_buf[32];
      std::snprintf(alpha_buf, sizeof(alpha_buf), "%g", job.alpha);
      const fs::path run_dir = fs::path(out_dir) / (job.strategy + "_a" + alpha_buf + "_s" +
                                                    std::to_string(job.seed));
      const auto out = run_to_dir(config, run_dir);
      job.best_acc = out.result.best_acc;
      job.best_round = out.result.best_round;
    } catch (const std::exception& e) {
      job.error = e.what();
    }
  }

  std::string csv = "strategy,alpha,seed,best_acc,best_round\n";
  std::string failures;
  for (const auto& job : jobs_list) {
    if (!job.error.empty()) {
      failures += job.strategy + "," + format_float(job.alpha) + "," + std::to_string(job.seed) +
                  ",\"" + job.error + "\"\n";
      continue;
    }
    csv += job.strategy + "," + format_float(job.alpha) + "," + std::to_string(job.seed) + "," +
           format_float(job.best_acc) + "," + std::to_string(job.best_round) + "\n";
  }
  write_file((fs::path(out_dir) / "sweep.csv").string(), csv);
  if (!failures.empty())
    write_file((fs::path(out_dir) / "failures.csv").string(),
               "strategy,alpha,seed,error\n" + failures);

  // Sample standard deviation (n-1) per (strategy, alpha) cell.
  std::string summary = "strategy,alpha,mean_best_acc,std_best_acc\n";
  for (const auto& strat : strategies) {
    for (double alpha : alphas) {
      std::vector<double> accs;
      for (const auto& job : jobs_list)
        if (job.strategy == strat && job.alpha == alpha && job.error.empty())
          accs.push_back(job.best_acc);
      if (accs.empty()) continue;
      double mean = 0.0;
      for (double a : accs) mean += a;
      mean /= static_cast<double>(accs.size());
      double var = 0.0;
      for (double a : accs) var += (a - mean) * (a - mean);
      const double stdev = accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1)) : 0.0;
      summary += strat + "," + format_float(alpha) + "," + format_float(mean) + "," +
                 format_float(stdev) + "\n";
    }
  }
  write_file((fs::path(out_dir) / "sweep_summary.csv").string(), summary);

  const size_t failed =
      static_cast<size_t>(std::count_if(jobs_list.begin(), jobs_list.end(),
                                        [](const Job& j) { return !j.error.empty(); }));
  std::cout << jobs_list.size() - failed << "/" << jobs_list.size() << " runs succeeded\n";
  return 0;
}

int cmd_check(const std::string& out_dir, bool inject_fault) {
  fs::create_directories(out_dir);
  nlohmann::ordered_json report;
  bool all_pass = true;
  std::vector<std::string> failed_audits;

  const auto record_grad = [&](const std::string& name, const ModelTopology& topo,
                               uint64_t seeds, double tol) {
    double worst = 0.0;
    bool pass = true;
    for (uint64_t s = 1; s <= seeds; ++s) {
      const auto rep = inject_fault ? grad_audit_fault_injected(topo, s, tol)
                                    : grad_audit(topo, s, tol);
      worst = std::max(worst, rep.max_rel_error);
      pass = pass && rep.pass;
    }
    report[name] = {{"max_rel_error", worst}, {"tolerance", tol}, {"pass", pass}};
    if (!pass) failed_audits.push_back(name);
    all_pass = all_pass && pass;
  };

  record_grad("grad_audit_linear_softmax", build_mlp(4, {}, 3, 7).topology, 5, 1e-6);
  record_grad("grad_audit_mlp", build_mlp(4, {8}, 3, 7).topology, 10, 1e-4);
  record_grad("grad_audit_tiny_cnn", build_tiny_cnn(12, 12, 1, 3, 7).topology, 3, 1e-4);

  {
    double worst = 0.0;
    bool pass = true;
    for (uint64_t s = 1; s <= 10; ++s) {
      const auto model = build_mlp(6, {10}, 4, s);
      const auto ds = make_blobs(4, 12, 6, 3.0, 1.0, s);
      const auto rep = fisher_audit(model.topology, model.params, ds);
      worst = std::max(worst, rep.trace_rel_error);
      pass = pass && rep.trace_pass && rep.zero_limit_pass;
    }
    report["fisher_audit"] = {{"max_rel_error", worst}, {"tolerance", 1e-9}, {"pass", pass}};
    if (!pass) failed_audits.push_back("fisher_audit");
    all_pass = all_pass && pass;
  }

  write_file((fs::path(out_dir) / "diagnostics.json").string(), report.dump(2) + "\n");
  if (!all_pass) {
    std::cerr << "failed audits:";
    for (const auto& name : failed_audits) std::cerr << " " << name;
    std::cerr << "\n";
    return 1;
  }
  std::cout << "all audits passed\n";
  return 0;
}

int cmd_heatmap(const std::string& config_path, int round, const std::string& out_path) {
  ExperimentConfig config = load_config(config_path);
  if (round < 1 || round > config.rounds)
    throw InputError("heatmap: round must be in [1, rounds]");
  if (config.norm == NormKind::Delta)
    throw InputError("heatmap: per-layer gradient norms need l1, l2 or spectral");
  if (config.data.val_frac <= 0.0)
    throw InputError("heatmap: a validation split is required");
  config.rounds = round;

  std::string csv;
  const RoundObserver observer = [&](const RoundRecord& rec,
                                     const std::vector<LayeredParams>& thetas,
                                     const LayeredParams&, const ModelTopology& topo,
                                     const Dataset& val) {
    if (rec.round != round) return;
    std::vector<ClientNormProfile> profiles;
    for (size_t i = 0; i < thetas.size(); ++i)
      profiles.push_back(mean_layerwise_grad_norm(
          rec.sampled[i], validation_gradient(thetas[i], topo, val), config.norm));
    csv = heatmap_to_csv(norm_heatmap(profiles));
  };
  run_experiment(config, observer);
  write_file(out_path, csv);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();

  CLI::App app{"FedVG federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", out_path = "heatmap.csv";
  std::optional<uint64_t> seed;
  std::vector<double> alphas;
  std::vector<std::string> strategies;
  std::vector<uint64_t> seeds;
  int jobs = 1, round = 1;
  bool inject_fault = false;

  auto* run = app.add_subcommand("run", "run one experiment from a config file");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seed", seed, "override master_seed");

  auto* sweep = app.add_subcommand("sweep", "cross-product of strategies x alphas x seeds");
  sweep->add_option("--config", config_path, "base config file")->required();
  sweep->add_option("--alphas", alphas, "Dirichlet alphas")->required()->delimiter(',');
  sweep->add_option("--strategies", strategies, "strategy names")->required()->delimiter(',');
  sweep->add_option("--seeds", seeds, "master seeds")->required()->delimiter(',');
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_option("--jobs", jobs, "parallel runs");

  auto* check = app.add_subcommand("check", "gradient and Fisher audits");
  check->add_option("--out", out_dir, "output directory");
  check->add_flag("--inject-fault", inject_fault,
                  "corrupt one gradient entry to exercise the failure path");

  auto* heatmap = app.add_subcommand("heatmap", "per-client per-layer validation gradient norms");
  heatmap->add_option("--config", config_path, "experiment config file")->required();
  heatmap->add_option("--round", round, "round to capture")->required();
  heatmap->add_option("--out", out_path, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, seed);
    if (sweep->parsed()) return cmd_sweep(config_path, alphas, strategies, seeds, out_dir, jobs);
    if (check->parsed()) return cmd_check(out_dir, inject_fault);
    if (heatmap->parsed()) return cmd_heatmap(config_path, round, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
