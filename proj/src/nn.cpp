#include "fedvg/nn.hpp"

#include <algorithm>
#include <cmath>

#include "fedvg/kernels.hpp"

namespace fedvg {

bool LayeredParams::congruent_with(const LayeredParams& o) const {
  if (layers.size() != o.layers.size()) return false;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].layer_id != o.layers[i].layer_id) return false;
    if (layers[i].tensors.size() != o.layers[i].tensors.size()) return false;
    for (size_t t = 0; t < layers[i].tensors.size(); ++t)
      if (!layers[i].tensors[t].same_shape(o.layers[i].tensors[t])) return false;
  }
  return true;
}

void LayeredParams::require_congruent(const LayeredParams& o, const std::string& context) const {
  if (layers.size() != o.layers.size())
    throw StructuralError(context + ": layer count mismatch (" + std::to_string(layers.size()) +
                          " vs " + std::to_string(o.layers.size()) + ")");
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].layer_id != o.layers[i].layer_id)
      throw StructuralError(context + ": layer id mismatch at position " + std::to_string(i) +
                            " ('" + layers[i].layer_id + "' vs '" + o.layers[i].layer_id + "')");
    if (layers[i].tensors.size() != o.layers[i].tensors.size())
      throw StructuralError(context + ": tensor count mismatch in layer '" + layers[i].layer_id + "'");
    for (size_t t = 0; t < layers[i].tensors.size(); ++t)
      if (!layers[i].tensors[t].same_shape(o.layers[i].tensors[t]))
        throw StructuralError(context + ": shape mismatch in layer '" + layers[i].layer_id +
                              "' tensor " + std::to_string(t));
  }
}

const NamedTensors* LayeredParams::find(const std::string& layer_id) const {
  for (const auto& l : layers)
    if (l.layer_id == layer_id) return &l;
  return nullptr;
}

int64_t LayeredParams::param_count() const {
  int64_t n = 0;
  for (const auto& l : layers)
    for (const auto& t : l.tensors) n += t.size();
  return n;
}

bool LayeredParams::all_finite() const {
  for (const auto& l : layers)
    for (const auto& t : l.tensors)
      if (!t.all_finite()) return false;
  return true;
}

LayeredParams LayeredParams::zeros_like(const LayeredParams& p) {
  LayeredParams out;
  out.layers.reserve(p.layers.size());
  for (const auto& l : p.layers) {
    NamedTensors nt;
    nt.layer_id = l.layer_id;
    for (const auto& t : l.tensors) nt.tensors.emplace_back(t.shape);
    out.layers.push_back(std::move(nt));
  }
  return out;
}

void LayeredParams::add_scaled(const LayeredParams& o, double factor) {
  require_congruent(o, "add_scaled");
  for (size_t i = 0; i < layers.size(); ++i)
    for (size_t t = 0; t < layers[i].tensors.size(); ++t) {
      auto& dst = layers[i].tensors[t].data;
      const auto& src = o.layers[i].tensors[t].data;
      for (size_t k = 0; k < dst.size(); ++k) dst[k] += factor * src[k];
    }
}

void LayeredParams::scale(double factor) {
  for (auto& l : layers)
    for (auto& t : l.tensors)
      for (auto& v : t.data) v *= factor;
}

std::vector<std::string> ModelTopology::param_layer_ids() const {
  std::vector<std::string> ids;
  for (const auto& l : layers)
    if (!l.id.empty()) ids.push_back(l.id);
  return ids;
}

std::vector<std::string> ModelTopology::block_ids_in_order() const {
  std::vector<std::string> out;
  for (const auto& l : layers) {
    if (l.id.empty()) continue;
    const auto it = block_map.find(l.id);
    if (it == block_map.end()) continue;
    if (std::find(out.begin(), out.end(), it->second) == out.end()) out.push_back(it->second);
  }
  return out;
}

int64_t ModelTopology::input_size() const {
  int64_t n = 1;
  for (int64_t d : input_shape) n *= d;
  return n;
}

namespace {

// One forward pass worth of intermediate activations; index i holds the input
// to layers[i]. Pool layers also stash their argmax for the backward pass.
struct Trace {
  std::vector<Tensor> inputs;
  std::vector<std::vector<int64_t>> pool_argmax;
  std::vector<std::vector<int64_t>> spatial;  // {h,w,c} entering each layer
};

void check_params_vs_topo(const LayeredParams& params, const ModelTopology& topo) {
  size_t p = 0;
  for (const auto& spec : topo.layers) {
    if (spec.id.empty()) continue;
    if (p >= params.layers.size())
      throw StructuralError("forward: params missing layer '" + spec.id + "'");
    const auto& lp = params.layers[p++];
    if (lp.layer_id != spec.id)
      throw StructuralError("forward: expected layer '" + spec.id + "', got '" + lp.layer_id + "'");
    if (spec.kind == LayerKind::Dense) {
      if (lp.tensors.size() != 2 || lp.tensors[0].shape != std::vector<int64_t>{spec.out_dim, spec.in_dim} ||
          lp.tensors[1].shape != std::vector<int64_t>{spec.out_dim})
        throw StructuralError("forward: bad tensor shapes in dense layer '" + spec.id + "'");
    } else if (spec.kind == LayerKind::Conv2d) {
      if (lp.tensors.size() != 2 ||
          lp.tensors[0].shape != std::vector<int64_t>{spec.out_c, spec.in_c, spec.kh, spec.kw} ||
          lp.tensors[1].shape != std::vector<int64_t>{spec.out_c})
        throw StructuralError("forward: bad tensor shapes in conv layer '" + spec.id + "'");
    }
  }
  if (p != params.layers.size())
    throw StructuralError("forward: params carry extra layers beyond the topology");
}

Tensor run_forward(const LayeredParams& params, const Tensor& batch_x, const ModelTopology& topo,
                   Trace* trace) {
  if (batch_x.rank() != 2 || batch_x.dim(1) != topo.input_size())
    throw StructuralError("forward: input shape " + shape_str(batch_x.shape) +
                          " does not match topology input " + shape_str(topo.input_shape));
  check_params_vs_topo(params, topo);

  const int64_t n = batch_x.dim(0);
  Tensor cur = batch_x;
  // Spatial extent tracked separately; tensors stay 2-D (batch, flat).
  std::vector<int64_t> sp = topo.input_shape.size() == 3
                                ? topo.input_shape
                                : std::vector<int64_t>{1, 1, topo.input_shape[0]};
  size_t p = 0;
  for (size_t li = 0; li < topo.layers.size(); ++li) {
    const auto& spec = topo.layers[li];
    if (trace) {
      trace->inputs.push_back(cur);
      trace->spatial.push_back(sp);
      trace->pool_argmax.emplace_back();
    }
    switch (spec.kind) {
      case LayerKind::Dense: {
        const auto& lp = params.layers[p++];
        if (cur.dim(1) != spec.in_dim)
          throw StructuralError("forward: layer '" + spec.id + "' expects input width " +
                                std::to_string(spec.in_dim) + ", got " + std::to_string(cur.dim(1)));
        Tensor out({n, spec.out_dim});
        kernels::dense_forward(cur.data.data(), lp.tensors[0].data.data(),
                               lp.tensors[1].data.data(), out.data.data(), n, spec.in_dim,
                               spec.out_dim);
        cur = std::move(out);
        sp = {1, 1, spec.out_dim};
        break;
      }
      case LayerKind::Relu: {
        Tensor out({n, cur.dim(1)});
        kernels::relu_forward(cur.data.data(), out.data.data(), cur.size());
        cur = std::move(out);
        break;
      }
      case LayerKind::Conv2d: {
        const auto& lp = params.layers[p++];
        const int64_t h = sp[0], w = sp[1], c = sp[2];
        if (c != spec.in_c || h < spec.kh || w < spec.kw)
          throw StructuralError("forward: layer '" + spec.id + "' cannot consume input " +
                                shape_str({h, w, c}));
        const int64_t oh = h - spec.kh + 1, ow = w - spec.kw + 1;
        Tensor out({n, oh * ow * spec.out_c});
        kernels::conv2d_forward(cur.data.data(), lp.tensors[0].data.data(),
                                lp.tensors[1].data.data(), out.data.data(), n, h, w, c, spec.out_c,
                                spec.kh, spec.kw);
        cur = std::move(out);
        sp = {oh, ow, spec.out_c};
        break;
      }
      case LayerKind::MaxPool2: {
        const int64_t h = sp[0], w = sp[1], c = sp[2];
        const int64_t oh = h / 2, ow = w / 2;
        if (oh < 1 || ow < 1) throw StructuralError("forward: maxpool input too small");
        Tensor out({n, oh * ow * c});
        std::vector<int64_t> argmax(static_cast<size_t>(n * oh * ow * c));
        kernels::maxpool2_forward(cur.data.data(), out.data.data(), argmax.data(), n, h, w, c);
        if (trace) trace->pool_argmax[li] = std::move(argmax);
        cur = std::move(out);
        sp = {oh, ow, c};
        break;
      }
      case LayerKind::Flatten: {
        sp = {1, 1, cur.dim(1)};
        break;
      }
    }
  }
  if (cur.dim(1) != topo.num_classes)
    throw StructuralError("forward: topology does not end in num_classes logits");
  require_finite(cur, "forward logits");
  return cur;
}

// Softmax probabilities per row via the log-sum-exp trick; returns mean NLL.
double softmax_nll(const Tensor& logits, const std::vector<int>& labels, Tensor* probs_out) {
  const int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n)
    throw InputError("cross_entropy: label count does not match batch size");
  for (int lab : labels)
    if (lab < 0 || lab >= c) throw InputError("cross_entropy: label out of range [0, num_classes)");
  double total = 0.0;
  if (probs_out) *probs_out = Tensor({n, c});
  for (int64_t s = 0; s < n; ++s) {
    const double* row = logits.data.data() + s * c;
    double mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    total += lse - row[labels[static_cast<size_t>(s)]];
    if (probs_out)
      for (int64_t j = 0; j < c; ++j) probs_out->data[static_cast<size_t>(s * c + j)] = std::exp(row[j] - lse);
  }
  return total / static_cast<double>(n);
}

}  // namespace

Tensor forward(const LayeredParams& params, const Tensor& batch_x, const ModelTopology& topo) {
  return run_forward(params, batch_x, topo, nullptr);
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const double loss = softmax_nll(logits, labels, nullptr);
  require_finite(loss, "cross_entropy");
  return loss;
}

BackwardResult backward(const LayeredParams& params, const Tensor& batch_x,
                        const std::vector<int>& labels, const ModelTopology& topo) {
  Trace trace;
  const Tensor logits = run_forward(params, batch_x, topo, &trace);
  Tensor probs;
  const double loss = softmax_nll(logits, labels, &probs);
  require_finite(loss, "backward loss");

  const int64_t n = logits.dim(0), c = logits.dim(1);
  // dL/dlogits for the batch-mean loss: (softmax - onehot) / n.
  Tensor delta({n, c});
  for (int64_t s = 0; s < n; ++s)
    for (int64_t j = 0; j < c; ++j) {
      double g = probs[s * c + j];
      if (j == labels[static_cast<size_t>(s)]) g -= 1.0;
      delta[s * c + j] = g / static_cast<double>(n);
    }

  GradSet grads = LayeredParams::zeros_like(params);
  int p = static_cast<int>(params.layers.size());
  for (int li = static_cast<int>(topo.layers.size()) - 1; li >= 0; --li) {
    const auto& spec = topo.layers[static_cast<size_t>(li)];
    const Tensor& in = trace.inputs[static_cast<size_t>(li)];
    const auto& sp = trace.spatial[static_cast<size_t>(li)];
    switch (spec.kind) {
      case LayerKind::Dense: {
        --p;
        const auto& lp = params.layers[static_cast<size_t>(p)];
        auto& gl = grads.layers[static_cast<size_t>(p)];
        kernels::dense_backward_w(in.data.data(), delta.data.data(), gl.tensors[0].data.data(), n,
                                  spec.in_dim, spec.out_dim);
        kernels::dense_backward_b(delta.data.data(), gl.tensors[1].data.data(), n, spec.out_dim);
        Tensor dx({n, spec.in_dim});
        kernels::dense_backward_x(delta.data.data(), lp.tensors[0].data.data(), dx.data.data(), n,
                                  spec.in_dim, spec.out_dim);
        delta = std::move(dx);
        break;
      }
      case LayerKind::Relu: {
        Tensor dx({n, in.dim(1)});
        kernels::relu_backward(in.data.data(), delta.data.data(), dx.data.data(), in.size());
        delta = std::move(dx);
        break;
      }
      case LayerKind::Conv2d: {
        --p;
        const auto& lp = params.layers[static_cast<size_t>(p)];
        auto& gl = grads.layers[static_cast<size_t>(p)];
        const int64_t h = sp[0], w = sp[1], ic = sp[2];
        const int64_t oh = h - spec.kh + 1, ow = w - spec.kw + 1;
        kernels::conv2d_backward_w(in.data.data(), delta.data.data(), gl.tensors[0].data.data(), n,
                                   h, w, ic, spec.out_c, spec.kh, spec.kw);
        kernels::conv2d_backward_b(delta.data.data(), gl.tensors[1].data.data(), n, oh, ow,
                                   spec.out_c);
        Tensor dx({n, h * w * ic});
        kernels::conv2d_backward_x(delta.data.data(), lp.tensors[0].data.data(), dx.data.data(), n,
                                   h, w, ic, spec.out_c, spec.kh, spec.kw);
        delta = std::move(dx);
        break;
      }
      case LayerKind::MaxPool2: {
        const int64_t h = sp[0], w = sp[1], ch = sp[2];
        Tensor dx({n, h * w * ch});
        kernels::maxpool2_backward(delta.data.data(),
                                   trace.pool_argmax[static_cast<size_t>(li)].data(),
                                   dx.data.data(), n, h / 2, w / 2, ch);
        delta = std::move(dx);
        break;
      }
      case LayerKind::Flatten:
        break;
    }
  }
  if (!grads.all_finite()) throw NumericError("backward: non-finite gradient entries");
  return {loss, std::move(grads)};
}

void sgd_step(LayeredParams& params, const GradSet& grads, double lr, double momentum,
              SgdState& state) {
  if (lr < 0.0) throw InputError("sgd_step: lr must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw InputError("sgd_step: momentum must be in [0,1)");
  params.require_congruent(grads, "sgd_step");
  if (!grads.all_finite()) throw NumericError("sgd_step: non-finite gradient entries");

  if (momentum == 0.0) {
    params.add_scaled(grads, -lr);
    return;
  }
  if (!state.velocity) state.velocity = LayeredParams::zeros_like(params);
  state.velocity->require_congruent(params, "sgd_step velocity");
  for (size_t i = 0; i < params.layers.size(); ++i)
    for (size_t t = 0; t < params.layers[i].tensors.size(); ++t) {
      auto& theta = params.layers[i].tensors[t].data;
      auto& vel = state.velocity->layers[i].tensors[t].data;
      const auto& g = grads.layers[i].tensors[t].data;
      for (size_t k = 0; k < theta.size(); ++k) {
        vel[k] = momentum * vel[k] + g[k];
        theta[k] -= lr * vel[k];
      }
    }
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
  const int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n)
    throw InputError("accuracy: label count does not match batch size");
  int64_t hits = 0;
  for (int64_t s = 0; s < n; ++s) {
    const double* row = logits.data.data() + s * c;
    int64_t best = 0;
    for (int64_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    if (best == labels[static_cast<size_t>(s)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace fedvg
