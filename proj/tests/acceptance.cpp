// Acceptance suite: one pass/fail line per criterion, non-zero exit when any
// criterion fails. Each check pins its tolerance in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "fedvg/config.hpp"
#include "fedvg/diagnostics.hpp"
#include "fedvg/io.hpp"
#include "fedvg/orchestrator.hpp"
#include "fedvg/rng.hpp"
#include "testutil.hpp"

using namespace fedvg;
namespace fs = std::filesystem;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define REQUIRE_TRUE(cond, msg)                                 \
  do {                                                          \
    if (!(cond)) throw Failure(std::string("assert failed: ") + (msg)); \
  } while (0)

void require_close(double a, double b, double tol, const std::string& what) {
  if (!(std::abs(a - b) <= tol))
    throw Failure(what + ": |" + std::to_string(a) + " - " + std::to_string(b) + "| > " +
                  std::to_string(tol));
}

// ---------------------------------------------------------------- criterion 1

void criterion_score_kernel() {
  const auto sv = scores_from_norms({{0, 1.0}, {1, 3.0}}, 1e-300);
  require_close(sv.weights[0][0], 0.75, 1e-12, "score of norm 1.0");
  require_close(sv.weights[0][1], 0.25, 1e-12, "score of norm 3.0");

  Rng rng(1001);
  for (int rep = 0; rep < 1000; ++rep) {
    const size_t k = 1 + rng.uniform_below(8);
    std::vector<std::pair<int, double>> norms;
    for (size_t i = 0; i < k; ++i) norms.emplace_back(static_cast<int>(i), rng.uniform(0.0, 4.0));
    const auto scores = scores_from_norms(norms, 1e-8);
    double sum = 0.0;
    for (double w : scores.weights[0]) sum += w;
    require_close(sum, 1.0, 1e-9, "group sum");

    size_t lo = 0;
    bool unique = true;
    for (size_t i = 1; i < k; ++i) {
      if (norms[i].second < norms[lo].second) lo = i;
    }
    for (size_t i = 0; i < k; ++i)
      if (i != lo && norms[i].second == norms[lo].second) unique = false;
    if (unique) {
      size_t smax = 0;
      for (size_t i = 1; i < k; ++i)
        if (scores.weights[0][i] > scores.weights[0][smax]) smax = i;
      REQUIRE_TRUE(smax == lo, "argmax(s) == argmin(norm)");
    }
  }
}

// ---------------------------------------------------------------- criterion 2

void criterion_imbalance_sampler() {
  REQUIRE_TRUE(imbalance_counts(4, 0.5, 100) == (std::vector<int64_t>{53, 26, 13, 6}),
               "C=4 rho=0.5 N'=100 hand case");
  for (int c = 1; c <= 10; ++c) {
    for (double rho : {0.25, 0.5, 0.75, 1.0}) {
      for (int64_t budget : {int64_t{20}, int64_t{100}, int64_t{1000}}) {
        const auto got = imbalance_counts(c, rho, budget);
        long double denom = 0.0L;
        for (int i = 0; i < c; ++i) denom += std::pow((long double)rho, i);
        for (int i = 0; i < c; ++i) {
          const long double p = std::pow((long double)rho, i) / denom;
          const auto expect = static_cast<int64_t>(std::floor((double)(p * budget)));
          REQUIRE_TRUE(got[static_cast<size_t>(i)] == expect,
                       "floor formula at C=" + std::to_string(c) + " rho=" + std::to_string(rho) +
                           " N'=" + std::to_string(budget) + " i=" + std::to_string(i));
        }
      }
    }
  }
}

// ---------------------------------------------------------------- criterion 3

void criterion_grad_audit() {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    {
      const auto m = build_mlp(4, {8}, 3, seed);
      const Tensor x = testutil::random_tensor({4, 4}, seed * 17 + 1);
      std::vector<int> y;
      Rng rng(seed * 31 + 2);
      for (int i = 0; i < 4; ++i) y.push_back(static_cast<int>(rng.uniform_below(3)));
      const auto bw = backward(m.params, x, y, m.topology);
      const auto fd = testutil::finite_difference_grads(m.params, x, y, m.topology);
      const double err = testutil::max_rel_error(bw.grads, fd);
      REQUIRE_TRUE(err < 1e-4, "MLP rel error " + std::to_string(err));
    }
    {
      const auto m = build_tiny_cnn(12, 12, 1, 3, seed);
      const Tensor x = testutil::random_tensor({2, 144}, seed * 13 + 3);
      std::vector<int> y;
      Rng rng(seed * 7 + 4);
      for (int i = 0; i < 2; ++i) y.push_back(static_cast<int>(rng.uniform_below(3)));
      const auto bw = backward(m.params, x, y, m.topology);
      const auto fd = testutil::finite_difference_grads(m.params, x, y, m.topology);
      const double err = testutil::max_rel_error(bw.grads, fd);
      REQUIRE_TRUE(err < 1e-4, "CNN rel error " + std::to_string(err));
    }
  }
}

// ---------------------------------------------------------------- criterion 4

void criterion_fisher_identity() {
  for (uint64_t seed = 1; seed <= 50; ++seed) {
    const auto m = build_mlp(static_cast<int64_t>(4 + seed % 3),
                             {static_cast<int64_t>(5 + seed % 4)},
                             static_cast<int64_t>(2 + seed % 3), seed);
    const auto ds = make_blobs(2 + static_cast<int>(seed % 3), 6, 4 + static_cast<int>(seed % 3),
                               3.0, 1.0, seed);
    const auto rep = fisher_audit(m.topology, m.params, ds);
    REQUIRE_TRUE(rep.trace_pass,
                 "trace identity at seed " + std::to_string(seed) + " rel err " +
                     std::to_string(rep.trace_rel_error));
  }

  // interpolating model: per-sample CE < 1e-8 forces the diagonal under 1e-6
  const auto ds = make_blobs(2, 2, 3, 6.0, 0.1, 5);
  auto model = build_mlp(3, {6}, 2, 5);
  SgdState opt;
  for (int it = 0; it < 300; ++it) {
    const auto bw = backward(model.params, ds.features, ds.labels, model.topology);
    sgd_step(model.params, bw.grads, 0.5, 0.0, opt);
  }
  for (auto& t : model.params.layers.back().tensors)
    for (auto& v : t.data) v *= 30.0;
  for (int64_t s = 0; s < ds.n(); ++s) {
    const auto one = ds.subset({s});
    const double ce = cross_entropy(forward(model.params, one.features, model.topology), one.labels);
    REQUIRE_TRUE(ce < 1e-8, "interpolation precondition, CE=" + std::to_string(ce));
  }
  const auto diag = fisher_diag(model.params, model.topology, ds);
  for (const auto& l : diag.layers)
    for (const auto& t : l.tensors)
      for (double v : t.data)
        REQUIRE_TRUE(v < 1e-6, "Joint Fisher entry " + std::to_string(v) + " >= 1e-6");
}

// ---------------------------------------------------------------- criterion 5

ExperimentConfig equivalence_config(const std::string& strategy) {
  ExperimentConfig c;
  c.data.num_classes = 3;
  c.data.samples_per_class = 60;
  c.data.feature_dim = 4;
  c.data.separation = 3.0;
  c.data.noise = 1.0;
  c.model.hidden_dims = {8};
  c.num_clients = 5;
  c.join_ratio = 1.0;
  c.alpha = 1.0;
  c.rounds = 5;
  c.local_epochs = 2;
  c.batch_size = 16;
  c.lr = 0.05;
  c.master_seed = 77;
  parse_strategy(strategy, &c.strategy, &c.weighting);
  return c;
}

void require_identical_runs(const ExperimentResult& a, const ExperimentResult& b,
                            const std::string& what) {
  REQUIRE_TRUE(testutil::bitwise_equal(a.final_model, b.final_model), what + ": final model bits");
  REQUIRE_TRUE(a.rounds.size() == b.rounds.size(), what + ": round count");
  for (size_t t = 0; t < a.rounds.size(); ++t) {
    REQUIRE_TRUE(a.rounds[t].sampled == b.rounds[t].sampled, what + ": sampled clients");
    REQUIRE_TRUE(a.rounds[t].val_loss == b.rounds[t].val_loss, what + ": val loss bits");
    REQUIRE_TRUE(a.rounds[t].test_acc == b.rounds[t].test_acc, what + ": test acc bits");
  }
}

void criterion_degenerate_equivalences() {
  const auto fedavg = run_experiment(equivalence_config("fedavg"));

  auto prox = equivalence_config("fedprox");
  prox.hyper.prox_mu = 0.0;
  require_identical_runs(run_experiment(prox), fedavg, "FedProx(mu=0) == FedAvg");

  auto avgm = equivalence_config("fedavgm");
  avgm.hyper.server_momentum = 0.0;
  require_identical_runs(run_experiment(avgm), fedavg, "FedAvgM(m=0) == FedAvg");

  auto dyn = equivalence_config("feddyn");
  dyn.hyper.dyn_alpha = 0.0;
  require_identical_runs(run_experiment(dyn), fedavg, "FedDyn(alpha=0) == FedAvg");

  // layerwise == modelwise on a 1-layer model
  auto vg_model = equivalence_config("fedvg");
  vg_model.model.hidden_dims = {};
  auto vg_layer = vg_model;
  vg_layer.granularity = Granularity::Layerwise;
  require_identical_runs(run_experiment(vg_layer), run_experiment(vg_model),
                         "layerwise FedVG == modelwise FedVG on L=1");
}

// ---------------------------------------------------------------- criterion 6

void criterion_aggregation_properties() {
  Rng rng(606);
  for (int rep = 0; rep < 1000; ++rep) {
    const size_t k = 1 + rng.uniform_below(5);
    const int64_t width = 1 + static_cast<int64_t>(rng.uniform_below(4));
    LayeredParams global;
    global.layers = {{"w", {Tensor({width})}}};
    for (auto& v : global.layers[0].tensors[0].data) v = rng.normal();

    std::vector<ClientUpdate> updates;
    std::vector<std::vector<double>> clients(k);
    std::vector<double> w(k);
    double wsum = 0.0;
    for (size_t i = 0; i < k; ++i) {
      clients[i].resize(static_cast<size_t>(width));
      ClientUpdate u;
      u.client_id = static_cast<int>(i);
      u.n_k = 1;
      u.delta = LayeredParams::zeros_like(global);
      for (int64_t j = 0; j < width; ++j) {
        clients[i][static_cast<size_t>(j)] = rng.normal();
        u.delta.layers[0].tensors[0].data[static_cast<size_t>(j)] =
            global.layers[0].tensors[0].data[static_cast<size_t>(j)] -
            clients[i][static_cast<size_t>(j)];
      }
      updates.push_back(std::move(u));
      w[i] = rng.uniform(0.0, 1.0) + 1e-9;
      wsum += w[i];
    }
    for (auto& x : w) x /= wsum;

    ScoreVector sv;
    sv.granularity = Granularity::Modelwise;
    sv.group_ids = {"model"};
    for (size_t i = 0; i < k; ++i) sv.client_ids.push_back(static_cast<int>(i));
    sv.weights = {w};

    StrategyState state = StrategyState::init(StrategyKind::FedAvg, {}, global,
                                              static_cast<int>(k));
    const auto out = aggregate(global, updates, sv, state);
    for (int64_t j = 0; j < width; ++j) {
      double lo = clients[0][static_cast<size_t>(j)], hi = lo;
      for (size_t i = 1; i < k; ++i) {
        lo = std::min(lo, clients[i][static_cast<size_t>(j)]);
        hi = std::max(hi, clients[i][static_cast<size_t>(j)]);
      }
      const double v = out.layers[0].tensors[0].data[static_cast<size_t>(j)];
      REQUIRE_TRUE(v >= lo - 1e-12 && v <= hi + 1e-12, "convex hull");
    }

    // fixed point: zero deltas leave the model bitwise unchanged
    std::vector<ClientUpdate> zero_updates;
    for (size_t i = 0; i < k; ++i) {
      ClientUpdate u;
      u.client_id = static_cast<int>(i);
      u.n_k = 1;
      u.delta = LayeredParams::zeros_like(global);
      zero_updates.push_back(std::move(u));
    }
    const auto same = aggregate(global, zero_updates, sv, state);
    REQUIRE_TRUE(testutil::bitwise_equal(same, global), "fixed point");
  }
}

// ---------------------------------------------------------------- criterion 7

void criterion_dirichlet_partitioner() {
  REQUIRE_TRUE(apportion_largest_remainder(10, {0.3, 0.7}) == (std::vector<int64_t>{3, 7}),
               "injected proportions [0.3,0.7] -> [3,7]");

  Rng rng(707);
  for (int rep = 0; rep < 200; ++rep) {
    const int classes = 1 + static_cast<int>(rng.uniform_below(5));
    const int K = 1 + static_cast<int>(rng.uniform_below(6));
    const double alpha = std::pow(10.0, rng.uniform(-1.0, 2.0));
    const auto ds = make_blobs(classes, 30, 2, 3.0, 0.5, rng.next_u64());
    const auto spec = dirichlet_partition(ds, K, alpha, rng.next_u64());
    std::set<int64_t> seen;
    int64_t total = 0;
    for (const auto& client : spec.client_indices) {
      REQUIRE_TRUE(!client.empty(), "non-empty client");
      total += static_cast<int64_t>(client.size());
      for (int64_t idx : client) REQUIRE_TRUE(seen.insert(idx).second, "disjointness");
    }
    REQUIRE_TRUE(total == ds.n(), "exhaustive");
  }

  // monotone mean TV distance in alpha, K=10, balanced 10 classes, N=10,000
  const auto ds = make_blobs(10, 1000, 2, 3.0, 0.5, 4242);
  const auto global_counts = ds.class_counts();
  const std::vector<double> alphas = {0.05, 0.1, 1.0, 10.0, 100.0};
  std::vector<double> tv(alphas.size(), 0.0);
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    for (size_t a = 0; a < alphas.size(); ++a) {
      const auto spec = dirichlet_partition(ds, 10, alphas[a], seed);
      double mean_tv = 0.0;
      for (const auto& client : spec.client_indices) {
        std::vector<double> frac(10, 0.0);
        for (int64_t idx : client)
          frac[static_cast<size_t>(ds.labels[static_cast<size_t>(idx)])] += 1.0;
        double d = 0.0;
        for (size_t c = 0; c < 10; ++c)
          d += std::abs(frac[c] / static_cast<double>(client.size()) -
                        static_cast<double>(global_counts[c]) / static_cast<double>(ds.n()));
        mean_tv += 0.5 * d;
      }
      tv[a] += mean_tv / 10.0;
    }
  }
  for (auto& v : tv) v /= 20.0;
  for (size_t a = 1; a < tv.size(); ++a)
    REQUIRE_TRUE(tv[a] <= tv[a - 1] + 1e-12,
                 "TV(" + std::to_string(alphas[a]) + ") <= TV(" + std::to_string(alphas[a - 1]) +
                     ") got " + std::to_string(tv[a]) + " vs " + std::to_string(tv[a - 1]));
}

// ---------------------------------------------------------------- criterion 8

ExperimentConfig benefit_config(const std::string& strategy, double alpha, uint64_t seed) {
  ExperimentConfig c;
  c.data.num_classes = 5;
  c.data.samples_per_class = 1540;  // 65% train split ~= 5005 samples
  c.data.feature_dim = 8;
  c.data.separation = 3.0;
  c.data.noise = 2.0;
  c.model.hidden_dims = {16};
  c.num_clients = 10;
  c.join_ratio = 0.5;
  c.alpha = alpha;
  c.rounds = 40;
  c.local_epochs = 5;
  c.batch_size = 32;
  c.lr = 0.01;
  c.master_seed = seed;
  parse_strategy(strategy, &c.strategy, &c.weighting);
  return c;
}

void criterion_directional_benefit() {
  const std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  double avg_low = 0.0, vg_low = 0.0, avg_high = 0.0, vg_high = 0.0;
  for (uint64_t seed : seeds) {
    avg_low += run_experiment(benefit_config("fedavg", 0.05, seed)).best_acc;
    vg_low += run_experiment(benefit_config("fedvg", 0.05, seed)).best_acc;
    avg_high += run_experiment(benefit_config("fedavg", 100.0, seed)).best_acc;
    vg_high += run_experiment(benefit_config("fedvg", 100.0, seed)).best_acc;
  }
  const double n = static_cast<double>(seeds.size());
  avg_low /= n;
  vg_low /= n;
  avg_high /= n;
  vg_high /= n;
  std::printf("    alpha=0.05: fedavg %.4f fedvg %.4f | alpha=100: fedavg %.4f fedvg %.4f\n",
              avg_low, vg_low, avg_high, vg_high);
  REQUIRE_TRUE(vg_low >= avg_low - 0.01,
               "FedVG mean best acc " + std::to_string(vg_low) + " < FedAvg - 1pt " +
                   std::to_string(avg_low - 0.01) + " at alpha=0.05");
  REQUIRE_TRUE(std::abs(vg_high - avg_high) < 0.05,
               "means differ by " + std::to_string(std::abs(vg_high - avg_high)) +
                   " >= 5pt at alpha=100");
}

// ---------------------------------------------------------------- criterion 9

void criterion_balanced_client() {
  int hits_l1 = 0, hits_l2 = 0;
  const uint64_t seeds = 5;
  for (uint64_t seed = 1; seed <= seeds; ++seed) {
    AblationConfig cfg;
    cfg.master_seed = seed;
    const auto result = balanced_client_ablation(cfg);
    for (const auto& [norm, tail] : result.tail_means) {
      if (norm != NormKind::L1 && norm != NormKind::L2) continue;
      size_t best = 0;
      for (size_t k = 1; k < tail.size(); ++k)
        if (tail[k] > tail[best]) best = k;
      const bool balanced_wins = static_cast<int>(best) == result.balanced_client;
      if (norm == NormKind::L1 && balanced_wins) ++hits_l1;
      if (norm == NormKind::L2 && balanced_wins) ++hits_l2;
    }
  }
  std::printf("    balanced client wins: L1 %d/%d, L2 %d/%d\n", hits_l1, (int)seeds, hits_l2,
              (int)seeds);
  REQUIRE_TRUE(hits_l1 >= 4, "L1: balanced client max weight in " + std::to_string(hits_l1) + "/5");
  REQUIRE_TRUE(hits_l2 >= 4, "L2: balanced client max weight in " + std::to_string(hits_l2) + "/5");
}

// --------------------------------------------------------------- criterion 10

void criterion_cli_determinism() {
  const fs::path tmp = fs::temp_directory_path() / "fedvg_acceptance_cli";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  const std::string config =
      "[model]\nkind = mlp\nhidden = 8\n"
      "[data]\nkind = blobs\nclasses = 3\nsamples_per_class = 60\nfeature_dim = 4\n"
      "separation = 3.0\nnoise = 1.0\n"
      "[federation]\nclients = 5\njoin_ratio = 0.6\nalpha = 0.5\nrounds = 4\n"
      "local_epochs = 2\nbatch_size = 16\nlr = 0.05\n"
      "[strategy]\nname = fedvg\n"
      "[run]\nmaster_seed = 9\n";
  write_file((tmp / "config.ini").string(), config);

  const auto invoke = [&](const std::string& out) {
    const std::string cmd = std::string(FEDVG_CLI_PATH) + " run --config " +
                            (tmp / "config.ini").string() + " --out " + (tmp / out).string() +
                            " >/dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
  };
  REQUIRE_TRUE(invoke("a") == 0, "first run exits 0");
  REQUIRE_TRUE(invoke("b") == 0, "second run exits 0");
  for (const char* name : {"rounds.csv", "scores.csv", "summary.json"}) {
    const auto a = read_file((tmp / "a" / name).string());
    const auto b = read_file((tmp / "b" / name).string());
    REQUIRE_TRUE(a == b, std::string(name) + " byte-identical");
  }
  fs::remove_all(tmp);
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<void()> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "score kernel exactness", criterion_score_kernel},
      {2, "imbalance sampler exactness", criterion_imbalance_sampler},
      {3, "gradient audit vs finite differences", criterion_grad_audit},
      {4, "Fisher trace identity and zero limit", criterion_fisher_identity},
      {5, "degenerate strategy equivalences", criterion_degenerate_equivalences},
      {6, "aggregation fixed point and convex hull", criterion_aggregation_properties},
      {7, "Dirichlet partitioner properties", criterion_dirichlet_partitioner},
      {8, "directional FedVG benefit", criterion_directional_benefit},
      {9, "balanced-client norm ablation", criterion_balanced_client},
      {10, "CLI byte determinism", criterion_cli_determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string error;
    try {
      c.fn();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (error.empty()) {
      std::printf("[PASS] criterion %2d (%6.2fs): %s\n", c.id, secs, c.name);
    } else {
      std::printf("[FAIL] criterion %2d (%6.2fs): %s\n       %s\n", c.id, secs, c.name,
                  error.c_str());
      ++failures;
    }
    std::fflush(stdout);
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
