#include "fedvg/aggregation.hpp"

#include <algorithm>
#include <cmath>

namespace fedvg {

StrategyState StrategyState::init(StrategyKind kind, const StrategyHyper& hyper,
                                  const LayeredParams& shape, int num_clients) {
  StrategyState st;
  st.kind = kind;
  st.hyper = hyper;
  st.num_clients = num_clients;
  switch (kind) {
    case StrategyKind::FedAvgM:
      st.momentum_buf = LayeredParams::zeros_like(shape);
      break;
    case StrategyKind::Scaffold:
      st.server_control = LayeredParams::zeros_like(shape);
      st.client_controls.assign(static_cast<size_t>(num_clients),
                                LayeredParams::zeros_like(shape));
      break;
    case StrategyKind::FedDyn:
      st.drift_accum = LayeredParams::zeros_like(shape);
      st.client_prev_grads.assign(static_cast<size_t>(num_clients),
                                  LayeredParams::zeros_like(shape));
      break;
    default:
      break;
  }
  return st;
}

LayeredParams aggregate(const LayeredParams& global, const std::vector<ClientUpdate>& updates,
                        const ScoreVector& weights, StrategyState& state) {
  if (updates.empty()) throw InputError("aggregate: no client updates");
  weights.check();
  if (weights.client_ids.size() != updates.size())
    throw InputError("aggregate: weight table covers " + std::to_string(weights.client_ids.size()) +
                     " clients but " + std::to_string(updates.size()) + " updates arrived");
  for (size_t k = 0; k < updates.size(); ++k) {
    if (weights.client_ids[k] != updates[k].client_id)
      throw InputError("aggregate: weight/update client mismatch at position " + std::to_string(k));
    global.require_congruent(updates[k].delta, "aggregate delta");
  }

  LayeredParams post = global;
  for (size_t l = 0; l < post.layers.size(); ++l) {
    const std::string& layer_id = post.layers[l].layer_id;
    for (size_t k = 0; k < updates.size(); ++k) {
      const double w = weights.weight_for(layer_id, k);
      for (size_t t = 0; t < post.layers[l].tensors.size(); ++t) {
        auto& dst = post.layers[l].tensors[t].data;
        const auto& d = updates[k].delta.layers[l].tensors[t].data;
        for (size_t i = 0; i < dst.size(); ++i) dst[i] -= w * d[i];
      }
    }
  }

  if (state.kind == StrategyKind::Scaffold) scaffold_server_update(state, updates);
  switch (state.kind) {
    case StrategyKind::FedAvg:
    case StrategyKind::FedProx:
      return post;  // R = 0
    default: {
      const LayeredParams r = server_regularizer(state, global, post);
      post.add_scaled(r, 1.0);
      return post;
    }
  }
}

ScoreVector fedavg_weights(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw InputError("fedavg_weights: no client updates");
  int64_t total = 0;
  for (const auto& u : updates) {
    if (u.n_k < 0) throw InputError("fedavg_weights: negative sample count");
    total += u.n_k;
  }
  if (total == 0) throw InputError("fedavg_weights: all sample counts are zero");
  ScoreVector sv;
  sv.granularity = Granularity::Modelwise;
  sv.group_ids = {"model"};
  std::vector<double> row;
  for (const auto& u : updates) {
    sv.client_ids.push_back(u.client_id);
    row.push_back(static_cast<double>(u.n_k) / static_cast<double>(total));
  }
  sv.weights.push_back(std::move(row));
  sv.check();
  return sv;
}

FedVgScores fedvg_weights(const LayeredParams& global,
                          const std::vector<std::pair<int, const LayeredParams*>>& clients,
                          const ModelTopology& topo, const Dataset& global_val,
                          const FedVgConfig& config) {
  if (clients.empty()) throw InputError("fedvg_weights: no clients");
  if (config.norm != NormKind::Delta && global_val.n() == 0)
    throw InputError("fedvg_weights: validation set is empty");

  FedVgScores out;
  out.profiles.resize(clients.size());
  for (size_t k = 0; k < clients.size(); ++k) {
    const auto& [id, params] = clients[k];
    if (config.norm == NormKind::Delta) {
      out.profiles[k] = delta_norm(id, global, *params, NormKind::L2);
    } else {
      const GradSet grads = validation_gradient(*params, topo, global_val);
      out.profiles[k] = mean_layerwise_grad_norm(id, grads, config.norm);
    }
  }

  switch (config.granularity) {
    case Granularity::Modelwise: {
      std::vector<std::pair<int, double>> norms;
      for (const auto& p : out.profiles) norms.emplace_back(p.client_id, p.mean_norm);
      out.scores = scores_from_norms(norms, config.epsilon);
      break;
    }
    case Granularity::Layerwise:
      out.scores = layerwise_scores(out.profiles, config.epsilon);
      break;
    case Granularity::Blockwise:
      out.scores = blockwise_scores(out.profiles, topo.block_map, config.epsilon);
      break;
  }
  return out;
}

ScoreVector hybrid_mean_weights(const ScoreVector& a, const ScoreVector& b) {
  a.check();
  b.check();
  if (a.client_ids != b.client_ids)
    throw InputError("hybrid_mean_weights: client sets differ");
  if (a.granularity != b.granularity || a.group_ids != b.group_ids)
    throw InputError("hybrid_mean_weights: granularity differs");
  ScoreVector out = a;
  for (size_t g = 0; g < out.weights.size(); ++g)
    for (size_t k = 0; k < out.weights[g].size(); ++k)
      out.weights[g][k] = 0.5 * (a.weights[g][k] + b.weights[g][k]);
  out.check();
  return out;
}

namespace {

double sq_l2_diff(const LayeredParams& a, const LayeredParams& b) {
  double acc = 0.0;
  for (size_t l = 0; l < a.layers.size(); ++l)
    for (size_t t = 0; t < a.layers[l].tensors.size(); ++t) {
      const auto& x = a.layers[l].tensors[t].data;
      const auto& y = b.layers[l].tensors[t].data;
      for (size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
    }
  return acc;
}

double inner_product(const LayeredParams& a, const LayeredParams& b) {
  double acc = 0.0;
  for (size_t l = 0; l < a.layers.size(); ++l)
    for (size_t t = 0; t < a.layers[l].tensors.size(); ++t) {
      const auto& x = a.layers[l].tensors[t].data;
      const auto& y = b.layers[l].tensors[t].data;
      for (size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    }
  return acc;
}

double global_l2(const GradSet& g) {
  double acc = 0.0;
  for (const auto& l : g.layers)
    for (const auto& t : l.tensors)
      for (double v : t.data) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace

double local_objective(const LocalHook& hook, double base_loss, const LayeredParams& theta,
                       const LayeredParams& theta_g) {
  theta.require_congruent(theta_g, "local_objective");
  switch (hook.kind) {
    case StrategyKind::FedProx:
      return base_loss + 0.5 * hook.prox_mu * sq_l2_diff(theta, theta_g);
    case StrategyKind::FedDyn: {
      double loss = base_loss + 0.5 * hook.dyn_alpha * sq_l2_diff(theta, theta_g);
      if (hook.dyn_prev_grad) loss -= inner_product(*hook.dyn_prev_grad, theta);
      return loss;
    }
    default:
      return base_loss;
  }
}

void local_grad_adjust(const LocalHook& hook, GradSet& grads, const LayeredParams& theta,
                       const LayeredParams& theta_g) {
  switch (hook.kind) {
    case StrategyKind::FedProx: {
      // + mu * (theta - theta_g)
      grads.add_scaled(theta, hook.prox_mu);
      grads.add_scaled(theta_g, -hook.prox_mu);
      break;
    }
    case StrategyKind::FedDyn: {
      if (hook.dyn_prev_grad) grads.add_scaled(*hook.dyn_prev_grad, -1.0);
      grads.add_scaled(theta, hook.dyn_alpha);
      grads.add_scaled(theta_g, -hook.dyn_alpha);
      const double norm = global_l2(grads);
      if (norm > hook.dyn_max_grad_norm) grads.scale(hook.dyn_max_grad_norm / norm);
      break;
    }
    case StrategyKind::Scaffold: {
      if (hook.server_control) grads.add_scaled(*hook.server_control, 1.0);
      if (hook.client_control) grads.add_scaled(*hook.client_control, -1.0);
      break;
    }
    default:
      break;
  }
}

GradSet scaffold_correct(const GradSet& grad, const GradSet& c, const GradSet& c_k) {
  grad.require_congruent(c, "scaffold_correct");
  grad.require_congruent(c_k, "scaffold_correct");
  GradSet out = grad;
  out.add_scaled(c_k, -1.0);
  out.add_scaled(c, 1.0);
  return out;
}

void scaffold_server_update(StrategyState& state, const std::vector<ClientUpdate>& updates) {
  if (state.kind != StrategyKind::Scaffold)
    throw InputError("scaffold_server_update: state kind is not scaffold");
  if (!state.server_control) throw InputError("scaffold_server_update: missing control state");
  for (const auto& u : updates) {
    if (!u.control_delta) throw InputError("scaffold_server_update: update lacks control delta");
    // c += |S|/K * mean_k(Delta c_k) == sum_k Delta c_k / K
    state.server_control->add_scaled(*u.control_delta, 1.0 / state.num_clients);
  }
}

LayeredParams server_regularizer(StrategyState& state, const LayeredParams& pre_update,
                                 const LayeredParams& post_update) {
  pre_update.require_congruent(post_update, "server_regularizer");
  LayeredParams r = LayeredParams::zeros_like(pre_update);
  switch (state.kind) {
    case StrategyKind::FedAvg:
    case StrategyKind::FedProx:
      break;
    case StrategyKind::FedAvgM: {
      if (!state.momentum_buf) throw InputError("server_regularizer: missing momentum state");
      const double m = state.hyper.server_momentum;
      // v <- m*v + (pre - post); applied update is -v, so R = -m * v_old.
      r.add_scaled(*state.momentum_buf, -m);
      state.momentum_buf->scale(m);
      state.momentum_buf->add_scaled(pre_update, 1.0);
      state.momentum_buf->add_scaled(post_update, -1.0);
      break;
    }
    case StrategyKind::Scaffold: {
      // Global step scaled by the server lr: R = (1 - lr_g) * (pre - post).
      const double f = 1.0 - state.hyper.scaffold_global_lr;
      if (f != 0.0) {
        r.add_scaled(pre_update, f);
        r.add_scaled(post_update, -f);
      }
      break;
    }
    case StrategyKind::FedDyn: {
      if (!state.drift_accum) throw InputError("server_regularizer: missing drift state");
      const double beta = state.hyper.dyn_alpha;
      r.add_scaled(post_update, beta);
      r.add_scaled(pre_update, -beta);
      state.drift_accum->add_scaled(r, 1.0);
      break;
    }
  }
  return r;
}

}  // namespace fedvg
