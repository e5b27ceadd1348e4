#include <doctest.h>

#include "fedvg/diagnostics.hpp"
#include "testutil.hpp"

using namespace fedvg;

TEST_CASE("grad_audit: linear softmax passes tight, MLP passes default") {
  const auto linear = build_mlp(4, {}, 3, 3);
  const auto rep = grad_audit(linear.topology, 1, 1e-6);
  CHECK(rep.pass);
  CHECK(rep.max_rel_error < 1e-6);

  const auto mlp = build_mlp(4, {8}, 3, 3);
  const auto rep2 = grad_audit(mlp.topology, 2);
  CHECK(rep2.pass);
  CHECK(rep2.params_checked == 67);
}

TEST_CASE("grad_audit: fault injection fails") {
  const auto mlp = build_mlp(4, {8}, 3, 3);
  const auto rep = grad_audit_fault_injected(mlp.topology, 2);
  CHECK_FALSE(rep.pass);
  CHECK(rep.max_rel_error > 1e-4);
}

TEST_CASE("grad_audit: deterministic reports") {
  const auto mlp = build_mlp(3, {5}, 2, 8);
  const auto a = grad_audit(mlp.topology, 4);
  const auto b = grad_audit(mlp.topology, 4);
  CHECK(a.max_rel_error == b.max_rel_error);
}

TEST_CASE("fisher_audit: identity holds across random models") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const auto model = build_mlp(5, {7}, 3, seed);
    const auto ds = make_blobs(3, 8, 5, 3.0, 1.0, seed);
    const auto rep = fisher_audit(model.topology, model.params, ds);
    CHECK(rep.trace_pass);
    CHECK(rep.trace_rel_error < 1e-9);
    CHECK(rep.zero_limit_pass);
  }
}

TEST_CASE("fisher_audit: interpolating model drives the diagonal to zero") {
  // Fit a 4-sample dataset to per-sample CE < 1e-8; scaling the fitted head
  // inflates the margins, which is what interpolation means for softmax.
  const auto ds = make_blobs(2, 2, 3, 6.0, 0.1, 5);
  auto model = build_mlp(3, {6}, 2, 5);
  SgdState opt;
  for (int it = 0; it < 300; ++it) {
    const auto bw = backward(model.params, ds.features, ds.labels, model.topology);
    sgd_step(model.params, bw.grads, 0.5, 0.0, opt);
  }
  for (auto& t : model.params.layers.back().tensors)
    for (auto& v : t.data) v *= 30.0;

  // verify the precondition per sample
  for (int64_t s = 0; s < ds.n(); ++s) {
    const auto one = ds.subset({s});
    CHECK(cross_entropy(forward(model.params, one.features, model.topology), one.labels) < 1e-8);
  }

  const auto diag = fisher_diag(model.params, model.topology, ds);
  for (const auto& l : diag.layers)
    for (const auto& t : l.tensors)
      for (double v : t.data) CHECK(v < 1e-6);
}

TEST_CASE("balanced_client_ablation: smoke run with weight bookkeeping") {
  AblationConfig cfg;
  cfg.num_heterogeneous = 3;
  cfg.samples_per_client = 30;
  cfg.num_classes = 3;
  cfg.feature_dim = 4;
  cfg.rounds = 4;
  cfg.local_epochs = 1;
  cfg.master_seed = 2;
  const auto result = balanced_client_ablation(cfg);
  CHECK(result.balanced_client == 3);
  CHECK(result.tail_means.size() == 4);  // one per norm kind

  // per (round, norm) the weights sum to 1
  for (NormKind norm : {NormKind::L1, NormKind::L2, NormKind::Spectral, NormKind::Delta}) {
    for (int t = 1; t <= cfg.rounds; ++t) {
      double sum = 0.0;
      int count = 0;
      for (const auto& row : result.trace)
        if (row.round == t && row.norm == norm) {
          sum += row.weight;
          ++count;
        }
      CHECK(count == 4);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  const auto csv = weight_trace_csv(result.trace);
  CHECK(csv.rfind("round,norm_kind,client_id,weight\n", 0) == 0);
}
