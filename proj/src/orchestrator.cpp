#include "fedvg/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedvg/rng.hpp"

namespace fedvg {

namespace {
constexpr uint64_t kTagSample = 0x73616d70;   // "samp"
constexpr uint64_t kTagClient = 0x636c6e74;   // "clnt"
constexpr uint64_t kTagData = 0x64617461;     // "data"
constexpr uint64_t kTagSplit = 0x73706c74;    // "splt"
constexpr uint64_t kTagPart = 0x70617274;     // "part"
constexpr uint64_t kTagImb = 0x696d6261;      // "imba"
}  // namespace

void ExperimentConfig::validate() const {
  if (num_clients < 1) throw InputError("config: clients must be >= 1");
  if (!(join_ratio > 0.0 && join_ratio <= 1.0))
    throw InputError("config: join_ratio must be in (0, 1]");
  if (rounds < 1) throw InputError("config: rounds must be >= 1");
  if (local_epochs < 0) throw InputError("config: local_epochs must be >= 0");
  if (batch_size < 1) throw InputError("config: batch_size must be >= 1");
  if (lr < 0.0) throw InputError("config: lr must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw InputError("config: momentum must be in [0,1)");
  if (alpha <= 0.0) throw InputError("config: alpha must be positive");
  if (epsilon <= 0.0) throw InputError("config: epsilon must be positive");
  if (rho && (*rho <= 0.0 || *rho > 1.0)) throw InputError("config: rho must be in (0, 1]");
  if (weighting != Weighting::DataSize && data.val_frac <= 0.0)
    throw InputError("config: validation-gradient weighting requires val_frac > 0");
  if (weighting == Weighting::MeanOfBoth && granularity != Granularity::Modelwise)
    throw InputError("config: fedavg+fedvg averaging is defined for modelwise granularity");
  if (model.kind == ModelSpec::Kind::TinyCnn) {
    if (model.input_h < 8 || model.input_w < 8 || model.input_c < 1)
      throw InputError("config: cnn input_h/input_w must be >= 8 and input_c >= 1");
  }
  if (data.kind == DataSpec::Kind::Blobs) {
    if (data.num_classes < 1 || data.samples_per_class < 1 || data.feature_dim < 1)
      throw InputError("config: blobs sizes must be positive");
    if (data.noise < 0.0) throw InputError("config: blobs noise must be non-negative");
  } else if (data.path.empty()) {
    throw InputError("config: csv dataset needs a path");
  }
}

std::vector<int> sample_clients(int num_clients, double join_ratio, uint64_t round_seed) {
  const int take = static_cast<int>(std::ceil(join_ratio * num_clients));
  std::vector<int> ids(static_cast<size_t>(num_clients));
  std::iota(ids.begin(), ids.end(), 0);
  if (take >= num_clients) return ids;
  Rng rng(round_seed);
  // Partial Fisher-Yates: the first `take` slots end up a uniform sample.
  for (int i = 0; i < take; ++i) {
    const auto j = i + static_cast<int>(rng.uniform_below(static_cast<uint64_t>(num_clients - i)));
    std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
  }
  ids.resize(static_cast<size_t>(take));
  std::sort(ids.begin(), ids.end());
  return ids;
}

LocalTrainResult local_train(const LayeredParams& global, const ModelTopology& topo,
                             const Dataset& client_data, const TrainParams& params,
                             const LocalHook& hook, uint64_t client_round_seed) {
  if (client_data.n() < 1) throw InputError("local_train: client has no samples");

  LocalTrainResult res;
  res.theta_k = global;
  SgdState opt;  // momentum state is fresh each local run
  Rng rng(client_round_seed);

  const int64_t n = client_data.n();
  const int64_t d = client_data.feature_dim();
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    rng.shuffle(order);
    for (int64_t start = 0; start < n; start += params.batch_size) {
      const int64_t bs = std::min<int64_t>(params.batch_size, n - start);
      Tensor bx({bs, d});
      std::vector<int> by(static_cast<size_t>(bs));
      for (int64_t i = 0; i < bs; ++i) {
        const int64_t src = order[static_cast<size_t>(start + i)];
        std::copy_n(client_data.features.data.data() + src * d, d, bx.data.data() + i * d);
        by[static_cast<size_t>(i)] = client_data.labels[static_cast<size_t>(src)];
      }
      auto bw = backward(res.theta_k, bx, by, topo);
      if (!std::isfinite(bw.loss)) throw NumericError("local_train: non-finite loss");
      local_grad_adjust(hook, bw.grads, res.theta_k, global);
      sgd_step(res.theta_k, bw.grads, params.lr, params.momentum, opt);
      ++res.steps;
    }
  }

  res.update.n_k = n;
  res.update.delta = global;
  res.update.delta.add_scaled(res.theta_k, -1.0);  // theta_g - theta_k
  return res;
}

ExperimentData prepare_data(const ExperimentConfig& config) {
  Dataset full;
  if (config.data.kind == DataSpec::Kind::Blobs) {
    full = make_blobs(config.data.num_classes, config.data.samples_per_class,
                      config.data.feature_dim, config.data.separation, config.data.noise,
                      derive_seed(config.master_seed, kTagData));
  } else {
    full = load_csv_dataset(config.data.path);
  }
  ExperimentData out;
  auto split = split_train_val_test(full, config.data.val_frac, config.data.test_frac,
                                    derive_seed(config.master_seed, kTagSplit));
  out.train = std::move(split.train);
  out.val = std::move(split.val);
  out.test = std::move(split.test);
  if (config.rho && out.val.n() > 0)
    out.val = imbalance_sample(out.val, *config.rho, derive_seed(config.master_seed, kTagImb));
  out.partition = dirichlet_partition(out.train, config.num_clients, config.alpha,
                                      derive_seed(config.master_seed, kTagPart));
  return out;
}

namespace {

BuiltModel build_model(const ExperimentConfig& config, const ExperimentData& data) {
  if (config.model.kind == ModelSpec::Kind::Mlp)
    return build_mlp(data.train.feature_dim(), config.model.hidden_dims,
                     data.train.num_classes, config.master_seed);
  const auto& m = config.model;
  if (m.input_h * m.input_w * m.input_c != data.train.feature_dim())
    throw InputError("config: cnn input shape does not match dataset feature_dim");
  return build_tiny_cnn(m.input_h, m.input_w, m.input_c, data.train.num_classes,
                        config.master_seed);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const RoundObserver& observer) {
  config.validate();
  const ExperimentData data = prepare_data(config);
  if (config.weighting != Weighting::DataSize && data.val.n() == 0)
    throw InputError("run_experiment: validation-gradient weighting needs a non-empty D_val");

  BuiltModel model = build_model(config, data);
  LayeredParams global = std::move(model.params);
  const ModelTopology& topo = model.topology;

  std::vector<Dataset> client_data;
  client_data.reserve(static_cast<size_t>(config.num_clients));
  for (const auto& idx : data.partition.client_indices) client_data.push_back(data.train.subset(idx));

  StrategyState state = StrategyState::init(config.strategy, config.hyper, global,
                                            config.num_clients);
  const TrainParams tp{config.local_epochs, config.batch_size, config.lr, config.momentum};
  const FedVgConfig vg{config.norm, config.granularity, config.epsilon};

  ExperimentResult result;
  result.topology = topo;
  result.best_acc = -1.0;

  for (int t = 1; t <= config.rounds; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sampled =
        sample_clients(config.num_clients, config.join_ratio,
                       derive_seed(config.master_seed, kTagSample, static_cast<uint64_t>(t)));
    const int s = static_cast<int>(sampled.size());

    std::vector<LocalTrainResult> locals(static_cast<size_t>(s));
    std::vector<std::string> failures(static_cast<size_t>(s));
    // Clients are independent; per-client RNG streams keep any interleaving
    // bit-reproducible.
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < s; ++i) {
      const int cid = sampled[static_cast<size_t>(i)];
      LocalHook hook;
      hook.kind = config.strategy;
      hook.prox_mu = config.hyper.prox_mu;
      hook.dyn_alpha = config.hyper.dyn_alpha;
      hook.dyn_max_grad_norm = config.hyper.dyn_max_grad_norm;
      if (config.strategy == StrategyKind::FedDyn)
        hook.dyn_prev_grad = &state.client_prev_grads[static_cast<size_t>(cid)];
      if (config.strategy == StrategyKind::Scaffold) {
        hook.server_control = &*state.server_control;
        hook.client_control = &state.client_controls[static_cast<size_t>(cid)];
      }
      try {
        locals[static_cast<size_t>(i)] =
            local_train(global, topo, client_data[static_cast<size_t>(cid)], tp, hook,
                        derive_seed(config.master_seed, static_cast<uint64_t>(t),
                                    static_cast<uint64_t>(cid), kTagClient));
        locals[static_cast<size_t>(i)].update.client_id = cid;
      } catch (const std::exception& e) {
        failures[static_cast<size_t>(i)] = e.what();
      }
    }
    for (int i = 0; i < s; ++i)
      if (!failures[static_cast<size_t>(i)].empty())
        throw NumericError("round " + std::to_string(t) + ", client " +
                           std::to_string(sampled[static_cast<size_t>(i)]) + ": " +
                           failures[static_cast<size_t>(i)]);

    // Strategy state updates are serialized at the round barrier.
    std::vector<ClientUpdate> updates;
    updates.reserve(static_cast<size_t>(s));
    for (auto& lt : locals) {
      if (config.strategy == StrategyKind::Scaffold) {
        // c_k+ = c_k - c + delta/(steps*lr); store the difference to c_k.
        GradSet control_delta = LayeredParams::zeros_like(global);
        control_delta.add_scaled(*state.server_control, -1.0);
        const double steps_lr = static_cast<double>(lt.steps) * config.lr;
        if (steps_lr > 0.0) control_delta.add_scaled(lt.update.delta, 1.0 / steps_lr);
        lt.update.control_delta = control_delta;
        auto& ck = state.client_controls[static_cast<size_t>(lt.update.client_id)];
        ck.add_scaled(control_delta, 1.0);
      }
      if (config.strategy == StrategyKind::FedDyn) {
        // g_prev += alpha * (theta_g - theta_k)
        state.client_prev_grads[static_cast<size_t>(lt.update.client_id)].add_scaled(
            lt.update.delta, config.hyper.dyn_alpha);
      }
      updates.push_back(std::move(lt.update));
    }

    ScoreVector weights;
    std::vector<double> mean_norms(static_cast<size_t>(s), 0.0);
    if (config.weighting == Weighting::DataSize) {
      weights = fedavg_weights(updates);
    } else {
      std::vector<std::pair<int, const LayeredParams*>> clients;
      for (int i = 0; i < s; ++i)
        clients.emplace_back(sampled[static_cast<size_t>(i)],
                             &locals[static_cast<size_t>(i)].theta_k);
      auto vg_scores = fedvg_weights(global, clients, topo, data.val, vg);
      for (int i = 0; i < s; ++i)
        mean_norms[static_cast<size_t>(i)] = vg_scores.profiles[static_cast<size_t>(i)].mean_norm;
      weights = config.weighting == Weighting::MeanOfBoth
                    ? hybrid_mean_weights(fedavg_weights(updates), vg_scores.scores)
                    : std::move(vg_scores.scores);
    }

    global = aggregate(global, updates, weights, state);
    if (!global.all_finite())
      throw NumericError("round " + std::to_string(t) + ": aggregated model has non-finite entries");

    RoundRecord rec;
    rec.round = t;
    rec.sampled = sampled;
    rec.scores = weights.client_summary();
    rec.mean_norms = std::move(mean_norms);
    rec.val_loss = data.val.n() > 0
                       ? cross_entropy(forward(global, data.val.features, topo), data.val.labels)
                       : std::numeric_limits<double>::quiet_NaN();
    rec.test_acc = data.test.n() > 0
                       ? accuracy(forward(global, data.test.features, topo), data.test.labels)
                       : std::numeric_limits<double>::quiet_NaN();
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (observer) {
      std::vector<LayeredParams> thetas;
      thetas.reserve(static_cast<size_t>(s));
      for (const auto& lt : locals) thetas.push_back(lt.theta_k);
      observer(rec, thetas, global, topo, data.val);
    }

    if (data.test.n() > 0 && rec.test_acc > result.best_acc) {
      result.best_acc = rec.test_acc;
      result.best_round = t;
      result.best_model = global;
    }
    result.rounds.push_back(std::move(rec));
  }

  result.final_model = global;
  result.final_acc = result.rounds.back().test_acc;
  if (result.best_round == 0) {  // no test set; fall back to the final model
    result.best_model = result.final_model;
    result.best_round = config.rounds;
    result.best_acc = result.final_acc;
  }
  return result;
}

std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::FedAvg: return "fedavg";
    case StrategyKind::FedAvgM: return "fedavgm";
    case StrategyKind::FedProx: return "fedprox";
    case StrategyKind::Scaffold: return "scaffold";
    case StrategyKind::FedDyn: return "feddyn";
  }
  return "?";
}

std::string strategy_name(StrategyKind k, Weighting w) {
  if (w == Weighting::DataSize) return to_string(k);
  if (k == StrategyKind::FedAvg && w == Weighting::ValidationGrad) return "fedvg";
  return to_string(k) + "+fedvg";
}

void parse_strategy(const std::string& name, StrategyKind* kind, Weighting* weighting) {
  const auto base = [](const std::string& s) -> std::optional<StrategyKind> {
    if (s == "fedavg") return StrategyKind::FedAvg;
    if (s == "fedavgm") return StrategyKind::FedAvgM;
    if (s == "fedprox") return StrategyKind::FedProx;
    if (s == "scaffold") return StrategyKind::Scaffold;
    if (s == "feddyn") return StrategyKind::FedDyn;
    return std::nullopt;
  };
  if (name == "fedvg") {
    *kind = StrategyKind::FedAvg;
    *weighting = Weighting::ValidationGrad;
    return;
  }
  if (auto k = base(name)) {
    *kind = *k;
    *weighting = Weighting::DataSize;
    return;
  }
  const auto plus = name.find("+fedvg");
  if (plus != std::string::npos && plus + 6 == name.size()) {
    if (auto k = base(name.substr(0, plus))) {
      *kind = *k;
      *weighting = *k == StrategyKind::FedAvg ? Weighting::MeanOfBoth : Weighting::ValidationGrad;
      return;
    }
  }
  throw InputError("unknown strategy '" + name + "'");
}

}  // namespace fedvg
