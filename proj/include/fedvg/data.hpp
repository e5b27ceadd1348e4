#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedvg/tensor.hpp"

namespace fedvg {

struct Dataset {
  Tensor features;  // (N, feature_dim), row major
  std::vector<int> labels;
  int num_classes = 0;

  int64_t n() const { return features.size() == 0 ? 0 : features.dim(0); }
  int64_t feature_dim() const { return features.size() == 0 ? 0 : features.dim(1); }
  Dataset subset(const std::vector<int64_t>& indices) const;
  std::vector<int64_t> class_counts() const;
  void validate() const;  // labels in range, counts consistent
};

// Gaussian clusters, one mean per class, pairwise mean separation at least
// class_separation. Deterministic in the seed.
Dataset make_blobs(int num_classes, int64_t samples_per_class, int64_t feature_dim,
                   double class_separation, double noise_std, uint64_t seed);

struct SplitResult {
  Dataset train, val, test;
};

// Disjoint, exhaustive, shuffled by seed. A zero fraction yields an empty
// split; a positive fraction that floors to zero samples is an error.
SplitResult split_train_val_test(const Dataset& ds, double val_frac, double test_frac,
                                 uint64_t seed);

struct PartitionSpec {
  std::vector<std::vector<int64_t>> client_indices;  // K disjoint index lists
  double alpha = 0.0;
};

// Deterministic largest-remainder apportionment of n items to the given
// proportions; ties broken toward the lower index.
std::vector<int64_t> apportion_largest_remainder(int64_t n, const std::vector<double>& proportions);

// Per-class Dirichlet(alpha) proportions over clients, apportioned by largest
// remainder. Redraws everything (fresh sub-seed) if a client ends empty, up to
// 100 attempts, then throws PartitionError.
PartitionSpec dirichlet_partition(const Dataset& ds, int num_clients, double alpha, uint64_t seed);

// Class-i share of the imbalanced validation set: floor(rho^i / sum_j rho^j * n_prime).
std::vector<int64_t> imbalance_counts(int num_classes, double rho, int64_t n_prime);

// Draws an imbalanced validation subset of total budget floor(|val|/2),
// class counts from imbalance_counts, uniform within each class.
Dataset imbalance_sample(const Dataset& val, double rho, uint64_t seed);

// Rewrites labels through the mapping; samples whose class is absent from the
// mapping are dropped. num_classes becomes target_classes.
Dataset remap_labels(const Dataset& ds, const std::map<int, int>& mapping, int target_classes);

// Header row, float feature columns, trailing "label" integer column.
Dataset load_csv_dataset(const std::string& path);

}  // namespace fedvg
