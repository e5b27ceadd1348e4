#include "fedvg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fedvg/rng.hpp"

namespace fedvg {

namespace {

LayeredParams random_params_for(const ModelTopology& topo, uint64_t seed) {
  LayeredParams p;
  Rng rng(derive_seed(seed, 0x7061726d /* "parm" */));
  for (const auto& spec : topo.layers) {
    if (spec.id.empty()) continue;
    NamedTensors nt;
    nt.layer_id = spec.id;
    if (spec.kind == LayerKind::Dense) {
      nt.tensors.emplace_back(std::vector<int64_t>{spec.out_dim, spec.in_dim});
      nt.tensors.emplace_back(std::vector<int64_t>{spec.out_dim});
    } else {
      nt.tensors.emplace_back(std::vector<int64_t>{spec.out_c, spec.in_c, spec.kh, spec.kw});
      nt.tensors.emplace_back(std::vector<int64_t>{spec.out_c});
    }
    for (auto& t : nt.tensors)
      for (auto& v : t.data) v = rng.uniform(-0.5, 0.5);
    p.layers.push_back(std::move(nt));
  }
  return p;
}

void random_batch(const ModelTopology& topo, uint64_t seed, int64_t batch, Tensor* x,
                  std::vector<int>* y) {
  Rng rng(derive_seed(seed, 0x62617463 /* "batc" */));
  *x = Tensor({batch, topo.input_size()});
  for (auto& v : x->data) v = rng.normal();
  y->resize(static_cast<size_t>(batch));
  for (auto& lab : *y) lab = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(topo.num_classes)));
}

double fd_rel_error(const ModelTopology& topo, LayeredParams params, const Tensor& x,
                    const std::vector<int>& y, const GradSet& grads, double inject) {
  constexpr double kStep = 1e-5;
  constexpr double kFloor = 1e-8;
  double worst = 0.0;
  bool injected = false;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    for (size_t t = 0; t < params.layers[l].tensors.size(); ++t) {
      auto& data = params.layers[l].tensors[t].data;
      for (size_t i = 0; i < data.size(); ++i) {
        const double orig = data[i];
        data[i] = orig + kStep;
        const double up = cross_entropy(forward(params, x, topo), y);
        data[i] = orig - kStep;
        const double down = cross_entropy(forward(params, x, topo), y);
        data[i] = orig;
        const double fd = (up - down) / (2.0 * kStep);
        double g = grads.layers[l].tensors[t].data[i];
        if (!injected && inject != 0.0) {
          g += inject;
          injected = true;
        }
        const double denom = std::max({std::abs(g), std::abs(fd), kFloor});
        worst = std::max(worst, std::abs(g - fd) / denom);
      }
    }
  }
  return worst;
}

GradAuditReport audit_impl(const ModelTopology& topo, uint64_t seed, double tolerance,
                           double inject) {
  const LayeredParams params = random_params_for(topo, seed);
  Tensor x;
  std::vector<int> y;
  random_batch(topo, seed, 4, &x, &y);
  const auto bw = backward(params, x, y, topo);

  GradAuditReport rep;
  rep.tolerance = tolerance;
  rep.params_checked = params.param_count();
  rep.max_rel_error = fd_rel_error(topo, params, x, y, bw.grads, inject);
  rep.pass = rep.max_rel_error < tolerance;
  return rep;
}

}  // namespace

GradAuditReport grad_audit(const ModelTopology& topo, uint64_t seed, double tolerance) {
  return audit_impl(topo, seed, tolerance, 0.0);
}

GradAuditReport grad_audit_fault_injected(const ModelTopology& topo, uint64_t seed,
                                          double tolerance) {
  return audit_impl(topo, seed, tolerance, 1e-2);
}

FisherAuditReport fisher_audit(const ModelTopology& topo, const LayeredParams& params,
                               const Dataset& ds) {
  if (ds.n() == 0) throw InputError("fisher_audit: empty dataset");
  FisherAuditReport rep;

  // Independent route: accumulate per-sample squared norms sample by sample.
  double mean_sq_norm = 0.0;
  const int64_t d = ds.feature_dim();
  for (int64_t s = 0; s < ds.n(); ++s) {
    Tensor x({1, d});
    std::copy_n(ds.features.data.data() + s * d, d, x.data.data());
    const auto bw = backward(params, x, {ds.labels[static_cast<size_t>(s)]}, topo);
    double sq = 0.0;
    for (const auto& l : bw.grads.layers)
      for (const auto& t : l.tensors)
        for (double v : t.data) sq += v * v;
    mean_sq_norm += sq;
    rep.max_grad_norm = std::max(rep.max_grad_norm, std::sqrt(sq));
  }
  mean_sq_norm /= static_cast<double>(ds.n());

  const GradSet diag = fisher_diag(params, topo, ds);
  double trace = 0.0;
  for (const auto& l : diag.layers)
    for (const auto& t : l.tensors)
      for (double v : t.data) {
        trace += v;
        rep.max_fisher_entry = std::max(rep.max_fisher_entry, v);
      }

  rep.trace_rel_error = std::abs(trace - mean_sq_norm) / std::max(std::abs(mean_sq_norm), 1e-300);
  rep.trace_pass = rep.trace_rel_error < 1e-9;
  // J_j <= delta^2 whenever every per-sample norm is < delta; allow rounding slack.
  rep.zero_limit_pass =
      rep.max_fisher_entry <= rep.max_grad_norm * rep.max_grad_norm * (1.0 + 1e-9) + 1e-300;
  return rep;
}

namespace {

struct AblationData {
  std::vector<Dataset> clients;  // balanced client last
  Dataset val, test;
};

AblationData build_ablation_data(const AblationConfig& cfg) {
  const int K = cfg.num_heterogeneous + 1;
  const int64_t val_per_class = 40, test_per_class = 60;
  const int64_t per_class =
      static_cast<int64_t>(K) * cfg.samples_per_client + val_per_class + test_per_class;
  const Dataset pool = make_blobs(cfg.num_classes, per_class, cfg.feature_dim, cfg.separation,
                                  cfg.noise, derive_seed(cfg.master_seed, 0x61626c /* "abl" */));

  std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(cfg.num_classes));
  for (int64_t i = 0; i < pool.n(); ++i)
    by_class[static_cast<size_t>(pool.labels[static_cast<size_t>(i)])].push_back(i);
  Rng rng(derive_seed(cfg.master_seed, 0x61626c32 /* "abl2" */));
  for (auto& v : by_class) rng.shuffle(v);

  std::vector<size_t> cursor(static_cast<size_t>(cfg.num_classes), 0);
  const auto take = [&](int cls, int64_t count) {
    auto& cur = cursor[static_cast<size_t>(cls)];
    const auto& src = by_class[static_cast<size_t>(cls)];
    if (cur + static_cast<size_t>(count) > src.size())
      throw SamplingError("ablation: class " + std::to_string(cls) + " pool exhausted");
    std::vector<int64_t> out(src.begin() + static_cast<int64_t>(cur),
                             src.begin() + static_cast<int64_t>(cur) + count);
    cur += static_cast<size_t>(count);
    return out;
  };

  AblationData data;
  std::vector<int64_t> val_idx, test_idx;
  for (int c = 0; c < cfg.num_classes; ++c) {
    auto v = take(c, val_per_class);
    val_idx.insert(val_idx.end(), v.begin(), v.end());
    auto t = take(c, test_per_class);
    test_idx.insert(test_idx.end(), t.begin(), t.end());
  }
  data.val = pool.subset(val_idx);
  data.test = pool.subset(test_idx);

  const std::vector<double> uniform(static_cast<size_t>(cfg.num_classes),
                                    1.0 / cfg.num_classes);
  for (int k = 0; k < K; ++k) {
    std::vector<double> q = uniform;
    if (k < cfg.num_heterogeneous) {  // label skew from a per-client Dirichlet draw
      double sum = 0.0;
      for (auto& v : q) {
        v = rng.gamma(cfg.alpha);
        sum += v;
      }
      if (sum <= 0.0) q.assign(q.size(), 1.0 / cfg.num_classes);
      else
        for (auto& v : q) v /= sum;
    }
    const auto counts = apportion_largest_remainder(cfg.samples_per_client, q);
    std::vector<int64_t> idx;
    for (int c = 0; c < cfg.num_classes; ++c) {
      auto got = take(c, counts[static_cast<size_t>(c)]);
      idx.insert(idx.end(), got.begin(), got.end());
    }
    data.clients.push_back(pool.subset(idx));
  }
  return data;
}

}  // namespace

AblationResult balanced_client_ablation(const AblationConfig& cfg) {
  if (cfg.num_heterogeneous < 1) throw InputError("ablation: need heterogeneous clients");
  if (cfg.samples_per_client < cfg.num_classes)
    throw InputError("ablation: samples_per_client must cover every class");
  const AblationData data = build_ablation_data(cfg);
  const int K = cfg.num_heterogeneous + 1;

  AblationResult result;
  result.balanced_client = cfg.num_heterogeneous;

  const TrainParams tp{cfg.local_epochs, cfg.batch_size, cfg.lr, 0.0};
  const int tail_start = cfg.rounds - std::max(1, cfg.rounds / 4);

  for (NormKind norm : {NormKind::L1, NormKind::L2, NormKind::Spectral, NormKind::Delta}) {
    BuiltModel model = build_mlp(cfg.feature_dim, cfg.hidden_dims, cfg.num_classes,
                                 cfg.master_seed);
    LayeredParams global = std::move(model.params);
    const FedVgConfig vg{norm, Granularity::Modelwise, cfg.epsilon};
    std::vector<double> tail_sum(static_cast<size_t>(K), 0.0);
    int tail_rounds = 0;

    for (int t = 1; t <= cfg.rounds; ++t) {
      std::vector<LocalTrainResult> locals(static_cast<size_t>(K));
#pragma omp parallel for schedule(dynamic)
      for (int k = 0; k < K; ++k)
        locals[static_cast<size_t>(k)] =
            local_train(global, model.topology, data.clients[static_cast<size_t>(k)], tp, {},
                        derive_seed(cfg.master_seed, static_cast<uint64_t>(t),
                                    static_cast<uint64_t>(k)));

      std::vector<ClientUpdate> updates;
      std::vector<std::pair<int, const LayeredParams*>> clients;
      for (int k = 0; k < K; ++k) {
        locals[static_cast<size_t>(k)].update.client_id = k;
        clients.emplace_back(k, &locals[static_cast<size_t>(k)].theta_k);
      }
      for (auto& lt : locals) updates.push_back(std::move(lt.update));

      const auto scored = fedvg_weights(global, clients, model.topology, data.val, vg);
      StrategyState state =
          StrategyState::init(StrategyKind::FedAvg, {}, global, K);
      global = aggregate(global, updates, scored.scores, state);

      const auto& row = scored.scores.modelwise_row();
      for (int k = 0; k < K; ++k) {
        result.trace.push_back({t, norm, k, row[static_cast<size_t>(k)]});
        if (t > tail_start) tail_sum[static_cast<size_t>(k)] += row[static_cast<size_t>(k)];
      }
      if (t > tail_start) ++tail_rounds;
    }

    for (auto& v : tail_sum) v /= tail_rounds;
    result.tail_means.emplace_back(norm, std::move(tail_sum));
  }
  return result;
}

std::string weight_trace_csv(const std::vector<WeightTraceRow>& trace) {
  std::string out = "round,norm_kind,client_id,weight\n";
  char buf[64];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.17g\n", row.round, to_string(row.norm).c_str(),
                  row.client_id, row.weight);
    out += buf;
  }
  return out;
}

}  // namespace fedvg
