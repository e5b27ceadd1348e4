#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "fedvg/data.hpp"
#include "fedvg/rng.hpp"

using namespace fedvg;

TEST_CASE("make_blobs: zero noise collapses to class means") {
  const auto ds = make_blobs(3, 10, 4, 2.0, 0.0, 7);
  CHECK(ds.n() == 30);
  // 1-nearest-mean classification is perfect: every sample equals its mean.
  for (int c = 0; c < 3; ++c) {
    const double* first = ds.features.data.data() + (c * 10) * 4;
    for (int s = 1; s < 10; ++s) {
      const double* row = ds.features.data.data() + (c * 10 + s) * 4;
      for (int i = 0; i < 4; ++i) CHECK(row[i] == first[i]);
    }
  }
  // means respect the separation floor
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      double d2 = 0.0;
      for (int i = 0; i < 4; ++i) {
        const double diff = ds.features[a * 10 * 4 + i] - ds.features[b * 10 * 4 + i];
        d2 += diff * diff;
      }
      CHECK(std::sqrt(d2) >= 2.0);
    }
}

TEST_CASE("make_blobs: balanced labels and determinism") {
  const auto a = make_blobs(2, 50, 3, 3.0, 1.0, 11);
  CHECK(a.n() == 100);
  CHECK(a.class_counts() == std::vector<int64_t>{50, 50});
  const auto b = make_blobs(2, 50, 3, 3.0, 1.0, 11);
  CHECK(a.features.data == b.features.data);
  CHECK(a.labels == b.labels);
}

TEST_CASE("split: paper fractions 10/25/65") {
  const auto ds = make_blobs(2, 50, 3, 3.0, 1.0, 1);
  const auto split = split_train_val_test(ds, 0.10, 0.25, 5);
  CHECK(split.val.n() == 10);
  CHECK(split.test.n() == 25);
  CHECK(split.train.n() == 65);
}

TEST_CASE("split: disjoint and exhaustive for any seed") {
  const auto ds = make_blobs(3, 21, 2, 3.0, 0.5, 2);
  for (uint64_t seed : {1ULL, 9ULL, 77ULL}) {
    const auto split = split_train_val_test(ds, 0.2, 0.3, seed);
    CHECK(split.train.n() + split.val.n() + split.test.n() == ds.n());
    // feature rows are unique in blobs with noise, so multiset equality over
    // first coordinates is a cheap disjointness proxy
    std::multiset<double> all;
    for (const auto* part : {&split.train, &split.val, &split.test})
      for (int64_t i = 0; i < part->n(); ++i) all.insert(part->features[i * 2]);
    std::multiset<double> orig;
    for (int64_t i = 0; i < ds.n(); ++i) orig.insert(ds.features[i * 2]);
    CHECK(all == orig);
  }
}

TEST_CASE("split: empty-split edge cases") {
  const auto ds = make_blobs(2, 10, 2, 3.0, 0.5, 3);
  CHECK_NOTHROW(split_train_val_test(ds, 0.0, 0.25, 1));           // val_frac=0 is allowed
  CHECK_THROWS_AS(split_train_val_test(ds, 0.01, 0.25, 1), InputError);  // floors to zero
  CHECK_THROWS_AS(split_train_val_test(ds, 0.5, 0.5, 1), InputError);
}

TEST_CASE("apportionment: injected proportions") {
  CHECK(apportion_largest_remainder(10, {0.3, 0.7}) == std::vector<int64_t>{3, 7});
  CHECK(apportion_largest_remainder(10, {1.0}) == std::vector<int64_t>{10});
  CHECK(apportion_largest_remainder(7, {0.5, 0.5}) == std::vector<int64_t>{4, 3});  // tie -> low index
  const auto counts = apportion_largest_remainder(100, {0.333, 0.333, 0.334});
  CHECK(counts[0] + counts[1] + counts[2] == 100);
}

TEST_CASE("dirichlet_partition: K=1 takes everything") {
  const auto ds = make_blobs(3, 5, 2, 3.0, 0.5, 4);
  const auto spec = dirichlet_partition(ds, 1, 0.5, 9);
  CHECK(spec.client_indices.size() == 1);
  CHECK(static_cast<int64_t>(spec.client_indices[0].size()) == ds.n());
}

TEST_CASE("dirichlet_partition: disjoint, exhaustive, non-empty") {
  Rng rng(123);
  for (int rep = 0; rep < 25; ++rep) {
    const int classes = 2 + static_cast<int>(rng.uniform_below(4));
    const int K = 2 + static_cast<int>(rng.uniform_below(5));
    const double alpha = std::pow(10.0, rng.uniform(-1.0, 2.0));
    const auto ds = make_blobs(classes, 40, 2, 3.0, 0.5, rng.next_u64());
    const auto spec = dirichlet_partition(ds, K, alpha, rng.next_u64());
    std::set<int64_t> seen;
    int64_t total = 0;
    for (const auto& client : spec.client_indices) {
      CHECK(!client.empty());
      total += static_cast<int64_t>(client.size());
      for (int64_t idx : client) {
        CHECK(seen.insert(idx).second);  // disjoint
        CHECK(idx >= 0);
        CHECK(idx < ds.n());
      }
    }
    CHECK(total == ds.n());
  }
}

namespace {

// Mean over clients of the total-variation distance between the client's
// label distribution and the global one.
double mean_tv_distance(const Dataset& ds, const PartitionSpec& spec) {
  const auto global_counts = ds.class_counts();
  std::vector<double> global_frac(global_counts.size());
  for (size_t c = 0; c < global_counts.size(); ++c)
    global_frac[c] = static_cast<double>(global_counts[c]) / static_cast<double>(ds.n());
  double acc = 0.0;
  for (const auto& client : spec.client_indices) {
    std::vector<double> frac(global_counts.size(), 0.0);
    for (int64_t idx : client) frac[static_cast<size_t>(ds.labels[static_cast<size_t>(idx)])] += 1.0;
    double tv = 0.0;
    for (size_t c = 0; c < frac.size(); ++c)
      tv += std::abs(frac[c] / static_cast<double>(client.size()) - global_frac[c]);
    acc += 0.5 * tv;
  }
  return acc / static_cast<double>(spec.client_indices.size());
}

}  // namespace

TEST_CASE("dirichlet_partition: heterogeneity decreases with alpha") {
  const auto ds = make_blobs(10, 100, 2, 3.0, 0.5, 5);  // N=1000 keeps this fast
  const std::vector<double> alphas = {0.05, 0.1, 1.0, 10.0, 100.0};
  std::vector<double> mean_tv(alphas.size(), 0.0);
  const int seeds = 20;
  for (int s = 1; s <= seeds; ++s)
    for (size_t a = 0; a < alphas.size(); ++a)
      mean_tv[a] += mean_tv_distance(ds, dirichlet_partition(ds, 10, alphas[a],
                                                             static_cast<uint64_t>(s)));
  for (auto& v : mean_tv) v /= seeds;
  for (size_t a = 1; a < alphas.size(); ++a) CHECK(mean_tv[a] <= mean_tv[a - 1] + 1e-12);
}

TEST_CASE("dirichlet_partition: near-uniform at alpha=100") {
  // Statistical oracle: directly sampled Dirichlet(100) proportions over 10
  // clients concentrate near 1/10, so per-client class fractions should too.
  const auto ds = make_blobs(10, 1000, 2, 3.0, 0.5, 6);
  int cells = 0, within = 0;
  for (uint64_t s = 1; s <= 20; ++s) {
    const auto spec = dirichlet_partition(ds, 10, 100.0, s);
    for (const auto& client : spec.client_indices) {
      std::vector<int64_t> counts(10, 0);
      for (int64_t idx : client) ++counts[static_cast<size_t>(ds.labels[static_cast<size_t>(idx)])];
      for (int c = 0; c < 10; ++c) {
        const double frac =
            static_cast<double>(counts[static_cast<size_t>(c)]) / static_cast<double>(client.size());
        ++cells;
        if (std::abs(frac - 0.1) <= 0.05) ++within;
      }
    }
  }
  CHECK(static_cast<double>(within) / cells >= 0.95);
}

TEST_CASE("imbalance_counts: closed form") {
  CHECK(imbalance_counts(4, 0.5, 100) == std::vector<int64_t>{53, 26, 13, 6});
  CHECK(imbalance_counts(4, 1.0, 100) == std::vector<int64_t>{25, 25, 25, 25});
  CHECK(imbalance_counts(1, 0.7, 100) == std::vector<int64_t>{100});
}

TEST_CASE("imbalance_sample: counts, budget, and exhaustion error") {
  const auto val = make_blobs(4, 50, 2, 3.0, 0.5, 8);  // N=200, budget 100
  const auto sub = imbalance_sample(val, 0.5, 3);
  CHECK(sub.class_counts() == std::vector<int64_t>{53, 26, 13, 6});

  // rho=1 on an odd-size set: budget floor(|val|/2)
  const auto odd = val.subset([] {
    std::vector<int64_t> idx(199);
    for (int64_t i = 0; i < 199; ++i) idx[static_cast<size_t>(i)] = i;
    return idx;
  }());
  const auto sub2 = imbalance_sample(odd, 1.0, 3);
  CHECK(sub2.n() == 4 * (99 / 4));

  // class 0 demand (53) exceeds supply when class 0 is tiny
  Dataset skew = val;
  std::vector<int64_t> keep;
  int zeros = 0;
  for (int64_t i = 0; i < val.n(); ++i) {
    if (val.labels[static_cast<size_t>(i)] == 0 && ++zeros > 5) continue;
    keep.push_back(i);
  }
  skew = val.subset(keep);
  CHECK_THROWS_AS(imbalance_sample(skew, 0.5, 3), SamplingError);
}

TEST_CASE("remap_labels: identity, drop, merge") {
  const auto ds = make_blobs(3, 10, 2, 3.0, 0.5, 9);
  const auto same = remap_labels(ds, {{0, 0}, {1, 1}, {2, 2}}, 3);
  CHECK(same.n() == ds.n());
  CHECK(same.labels == ds.labels);

  CHECK_THROWS_AS(remap_labels(ds, {}, 2), InputError);  // drops everything

  const auto merged = remap_labels(ds, {{0, 1}, {1, 1}}, 2);
  CHECK(merged.n() == 20);
  for (int lab : merged.labels) CHECK(lab == 1);
  CHECK(merged.num_classes == 2);

  CHECK_THROWS_AS(remap_labels(ds, {{0, 5}}, 2), InputError);  // target out of range
}

TEST_CASE("csv loader: round trip and ragged rejection") {
  const char* path = "fedvg_test_data.csv";
  {
    std::ofstream out(path);
    out << "f0,f1,label\n1.5,-2.0,0\n0.25,3.0,1\n-1.0,0.5,1\n";
  }
  const auto ds = load_csv_dataset(path);
  CHECK(ds.n() == 3);
  CHECK(ds.feature_dim() == 2);
  CHECK(ds.num_classes == 2);
  CHECK(ds.features[0] == 1.5);
  CHECK(ds.labels == std::vector<int>{0, 1, 1});

  {
    std::ofstream out(path);
    out << "f0,f1,label\n1.0,2.0,0\n1.0,1\n";
  }
  CHECK_THROWS_AS(load_csv_dataset(path), InputError);
  {
    std::ofstream out(path);
    out << "f0,f1\n1.0,2.0\n";
  }
  CHECK_THROWS_AS(load_csv_dataset(path), InputError);  // no label column
  std::remove(path);
}
