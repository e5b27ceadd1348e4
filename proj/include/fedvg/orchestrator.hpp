#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedvg/aggregation.hpp"
#include "fedvg/data.hpp"
#include "fedvg/models.hpp"

namespace fedvg {

struct ModelSpec {
  enum class Kind { Mlp, TinyCnn } kind = Kind::Mlp;
  std::vector<int64_t> hidden_dims;          // MLP
  int64_t input_h = 0, input_w = 0, input_c = 0;  // CNN
};

struct DataSpec {
  enum class Kind { Blobs, Csv } kind = Kind::Blobs;
  // blobs
  int num_classes = 5;
  int64_t samples_per_class = 200;
  int64_t feature_dim = 8;
  double separation = 3.0;
  double noise = 1.0;
  // csv
  std::string path;
  // split
  double val_frac = 0.10;
  double test_frac = 0.25;
};

struct ExperimentConfig {
  ModelSpec model;
  DataSpec data;
  int num_clients = 10;                 // K
  double join_ratio = 0.1;              // p
  double alpha = 100.0;                 // Dirichlet concentration
  int rounds = 200;                     // T
  int local_epochs = 5;                 // E
  int batch_size = 32;
  double lr = 0.01;
  double momentum = 0.0;
  StrategyKind strategy = StrategyKind::FedAvg;
  Weighting weighting = Weighting::DataSize;
  StrategyHyper hyper;
  NormKind norm = NormKind::L1;
  Granularity granularity = Granularity::Modelwise;
  double epsilon = 1e-8;
  std::optional<double> rho;            // validation class-imbalance ratio
  uint64_t master_seed = 1;

  void validate() const;  // throws InputError naming the offending field
};

struct RoundRecord {
  int round = 0;                     // 1-based
  std::vector<int> sampled;          // ascending client ids
  std::vector<double> scores;        // per sampled client (mean over groups)
  std::vector<double> mean_norms;    // per sampled client; 0 when not computed
  double val_loss = 0.0;
  double test_acc = 0.0;
  double wall_time_s = 0.0;
};

// ceil(p*K) distinct ids, uniform without replacement, returned ascending.
std::vector<int> sample_clients(int num_clients, double join_ratio, uint64_t round_seed);

struct TrainParams {
  int epochs = 5;
  int batch_size = 32;
  double lr = 0.01;
  double momentum = 0.0;
};

struct LocalTrainResult {
  LayeredParams theta_k;
  ClientUpdate update;
  int64_t steps = 0;
};

// E epochs of mini-batch SGD on the hook-adjusted objective, fresh optimizer
// state, epoch shuffles drawn from client_round_seed. Returns
// delta = theta_g - theta_k. Scaffold control updates are filled by the
// caller, which knows lr and the step count.
LocalTrainResult local_train(const LayeredParams& global, const ModelTopology& topo,
                             const Dataset& client_data, const TrainParams& params,
                             const LocalHook& hook, uint64_t client_round_seed);

// Per-round callback; client_params holds the locally trained models of the
// round's sampled clients, in the same order as RoundRecord::sampled.
using RoundObserver =
    std::function<void(const RoundRecord&, const std::vector<LayeredParams>& client_params,
                       const LayeredParams& global, const ModelTopology& topo, const Dataset& val)>;

struct ExperimentResult {
  std::vector<RoundRecord> rounds;
  ModelTopology topology;
  LayeredParams final_model;
  LayeredParams best_model;
  int best_round = 0;       // 1-based; selected by test accuracy (ties: earliest)
  double best_acc = 0.0;
  double final_acc = 0.0;
};

// Aborts with NumericError identifying round and client if any local loss
// turns non-finite.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const RoundObserver& observer = nullptr);

// Dataset/partition assembly as run_experiment performs it, exposed for
// diagnostics and tests.
struct ExperimentData {
  Dataset train, val, test;
  PartitionSpec partition;
};
ExperimentData prepare_data(const ExperimentConfig& config);

std::string to_string(StrategyKind k);
std::string strategy_name(StrategyKind k, Weighting w);
// Accepts fedavg, fedavgm, fedprox, scaffold, feddyn, fedvg, and
// "<base>+fedvg" combinations; fedavg+fedvg averages both weight tables.
void parse_strategy(const std::string& name, StrategyKind* kind, Weighting* weighting);

}  // namespace fedvg
