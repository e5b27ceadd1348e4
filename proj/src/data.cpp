#include "fedvg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedvg/rng.hpp"

namespace fedvg {

Dataset Dataset::subset(const std::vector<int64_t>& indices) const {
  const int64_t d = feature_dim();
  Dataset out;
  out.num_classes = num_classes;
  out.labels.reserve(indices.size());
  std::vector<double> feat;
  feat.reserve(indices.size() * static_cast<size_t>(d));
  for (int64_t idx : indices) {
    if (idx < 0 || idx >= n()) throw InputError("subset: index out of range");
    const double* row = features.data.data() + idx * d;
    feat.insert(feat.end(), row, row + d);
    out.labels.push_back(labels[static_cast<size_t>(idx)]);
  }
  out.features = Tensor({static_cast<int64_t>(indices.size()), d}, std::move(feat));
  return out;
}

std::vector<int64_t> Dataset::class_counts() const {
  std::vector<int64_t> counts(static_cast<size_t>(num_classes), 0);
  for (int lab : labels) ++counts[static_cast<size_t>(lab)];
  return counts;
}

void Dataset::validate() const {
  if (num_classes <= 0) throw InputError("dataset: num_classes must be positive");
  if (n() != static_cast<int64_t>(labels.size()))
    throw InputError("dataset: feature rows and label count differ");
  for (int lab : labels)
    if (lab < 0 || lab >= num_classes) throw InputError("dataset: label out of range");
}

Dataset make_blobs(int num_classes, int64_t samples_per_class, int64_t feature_dim,
                   double class_separation, double noise_std, uint64_t seed) {
  if (num_classes <= 0 || samples_per_class <= 0 || feature_dim <= 0)
    throw InputError("make_blobs: counts and dims must be positive");
  if (class_separation <= 0.0) throw InputError("make_blobs: class_separation must be positive");
  if (noise_std < 0.0) throw InputError("make_blobs: noise_std must be non-negative");

  Rng rng(derive_seed(seed, 0x626c6f6273 /* "blobs" */));

  // Means drawn from a growing Gaussian ball until pairwise separation holds.
  std::vector<std::vector<double>> means;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<double> mu(static_cast<size_t>(feature_dim));
    for (int attempt = 0;; ++attempt) {
      const double radius = class_separation * (1.0 + 0.25 * attempt);
      for (auto& v : mu) v = radius * rng.normal();
      bool ok = true;
      for (const auto& other : means) {
        double d2 = 0.0;
        for (size_t i = 0; i < mu.size(); ++i) d2 += (mu[i] - other[i]) * (mu[i] - other[i]);
        if (std::sqrt(d2) < class_separation) {
          ok = false;
          break;
        }
      }
      if (ok) break;
    }
    means.push_back(std::move(mu));
  }

  const int64_t total = static_cast<int64_t>(num_classes) * samples_per_class;
  Dataset ds;
  ds.num_classes = num_classes;
  ds.features = Tensor({total, feature_dim});
  ds.labels.resize(static_cast<size_t>(total));
  int64_t row = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int64_t s = 0; s < samples_per_class; ++s, ++row) {
      double* dst = ds.features.data.data() + row * feature_dim;
      for (int64_t i = 0; i < feature_dim; ++i)
        dst[i] = means[static_cast<size_t>(c)][static_cast<size_t>(i)] + noise_std * rng.normal();
      ds.labels[static_cast<size_t>(row)] = c;
    }
  }
  return ds;
}

SplitResult split_train_val_test(const Dataset& ds, double val_frac, double test_frac,
                                 uint64_t seed) {
  ds.validate();
  if (val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac >= 1.0)
    throw InputError("split: need 0 <= val_frac, test_frac and val_frac + test_frac < 1");
  const int64_t n = ds.n();
  const int64_t n_val = static_cast<int64_t>(std::floor(val_frac * static_cast<double>(n)));
  const int64_t n_test = static_cast<int64_t>(std::floor(test_frac * static_cast<double>(n)));
  const int64_t n_train = n - n_val - n_test;
  if (val_frac > 0.0 && n_val == 0) throw InputError("split: val_frac yields an empty split");
  if (test_frac > 0.0 && n_test == 0) throw InputError("split: test_frac yields an empty split");
  if (n_train <= 0) throw InputError("split: no training samples left");

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x73706c6974 /* "split" */));
  rng.shuffle(order);

  const std::vector<int64_t> train_idx(order.begin(), order.begin() + n_train);
  const std::vector<int64_t> val_idx(order.begin() + n_train, order.begin() + n_train + n_val);
  const std::vector<int64_t> test_idx(order.begin() + n_train + n_val, order.end());
  return {ds.subset(train_idx), ds.subset(val_idx), ds.subset(test_idx)};
}

std::vector<int64_t> apportion_largest_remainder(int64_t n,
                                                 const std::vector<double>& proportions) {
  if (proportions.empty()) throw InputError("apportion: empty proportions");
  std::vector<int64_t> counts(proportions.size(), 0);
  std::vector<std::pair<double, size_t>> remainders;
  int64_t assigned = 0;
  for (size_t k = 0; k < proportions.size(); ++k) {
    const double share = static_cast<double>(n) * proportions[k];
    counts[k] = static_cast<int64_t>(std::floor(share));
    assigned += counts[k];
    remainders.emplace_back(share - std::floor(share), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int64_t i = 0; i < n - assigned; ++i) ++counts[remainders[static_cast<size_t>(i)].second];
  return counts;
}

PartitionSpec dirichlet_partition(const Dataset& ds, int num_clients, double alpha,
                                  uint64_t seed) {
  ds.validate();
  if (num_clients < 1) throw InputError("dirichlet_partition: need at least one client");
  if (alpha <= 0.0) throw InputError("dirichlet_partition: alpha must be positive");
  if (ds.n() < num_clients)
    throw InputError("dirichlet_partition: fewer samples than clients");

  // Per-class sample pools, shuffled once.
  std::vector<std::vector<int64_t>> pools(static_cast<size_t>(ds.num_classes));
  for (int64_t i = 0; i < ds.n(); ++i)
    pools[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])].push_back(i);
  Rng shuffler(derive_seed(seed, 0x706f6f6c /* "pool" */));
  for (auto& pool : pools) shuffler.shuffle(pool);

  const int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(derive_seed(seed, 0x64697269 /* "diri" */, static_cast<uint64_t>(attempt)));
    PartitionSpec spec;
    spec.alpha = alpha;
    spec.client_indices.assign(static_cast<size_t>(num_clients), {});
    for (const auto& pool : pools) {
      if (pool.empty()) continue;
      // Dirichlet via normalized Gamma(alpha, 1) draws.
      std::vector<double> p(static_cast<size_t>(num_clients));
      double sum = 0.0;
      for (auto& v : p) {
        v = rng.gamma(alpha);
        sum += v;
      }
      if (sum <= 0.0) {  // all draws underflowed; force a uniform split
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(num_clients));
      } else {
        for (auto& v : p) v /= sum;
      }
      const auto counts = apportion_largest_remainder(static_cast<int64_t>(pool.size()), p);
      size_t cursor = 0;
      for (int k = 0; k < num_clients; ++k)
        for (int64_t c = 0; c < counts[static_cast<size_t>(k)]; ++c)
          spec.client_indices[static_cast<size_t>(k)].push_back(pool[cursor++]);
    }
    const bool any_empty = std::any_of(spec.client_indices.begin(), spec.client_indices.end(),
                                       [](const auto& v) { return v.empty(); });
    if (!any_empty) {
      for (auto& v : spec.client_indices) std::sort(v.begin(), v.end());
      return spec;
    }
  }
  throw PartitionError("dirichlet_partition: no non-empty assignment after " +
                       std::to_string(kMaxAttempts) + " attempts (alpha=" + std::to_string(alpha) +
                       ", K=" + std::to_string(num_clients) + ", N=" + std::to_string(ds.n()) + ")");
}

std::vector<int64_t> imbalance_counts(int num_classes, double rho, int64_t n_prime) {
  if (num_classes <= 0) throw InputError("imbalance_counts: num_classes must be positive");
  if (rho <= 0.0 || rho > 1.0) throw InputError("imbalance_counts: rho must be in (0, 1]");
  if (n_prime < 0) throw InputError("imbalance_counts: budget must be non-negative");
  double denom = 0.0;
  for (int i = 0; i < num_classes; ++i) denom += std::pow(rho, i);
  std::vector<int64_t> counts(static_cast<size_t>(num_classes));
  for (int i = 0; i < num_classes; ++i) {
    const double p = std::pow(rho, i) / denom;
    counts[static_cast<size_t>(i)] =
        static_cast<int64_t>(std::floor(p * static_cast<double>(n_prime)));
  }
  return counts;
}

Dataset imbalance_sample(const Dataset& val, double rho, uint64_t seed) {
  val.validate();
  if (val.n() < 2 * val.num_classes)
    throw InputError("imbalance_sample: validation set needs at least 2 samples per class");
  const int64_t budget = val.n() / 2;
  const auto wanted = imbalance_counts(val.num_classes, rho, budget);
  const auto have = val.class_counts();

  std::vector<std::vector<int64_t>> pools(static_cast<size_t>(val.num_classes));
  for (int64_t i = 0; i < val.n(); ++i)
    pools[static_cast<size_t>(val.labels[static_cast<size_t>(i)])].push_back(i);

  Rng rng(derive_seed(seed, 0x696d62 /* "imb" */));
  std::vector<int64_t> chosen;
  for (int c = 0; c < val.num_classes; ++c) {
    if (wanted[static_cast<size_t>(c)] > have[static_cast<size_t>(c)])
      throw SamplingError("imbalance_sample: class " + std::to_string(c) + " needs " +
                          std::to_string(wanted[static_cast<size_t>(c)]) + " samples but only " +
                          std::to_string(have[static_cast<size_t>(c)]) + " available");
    auto& pool = pools[static_cast<size_t>(c)];
    rng.shuffle(pool);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + wanted[static_cast<size_t>(c)]);
  }
  return val.subset(chosen);
}

Dataset remap_labels(const Dataset& ds, const std::map<int, int>& mapping, int target_classes) {
  ds.validate();
  if (target_classes <= 0) throw InputError("remap_labels: target_classes must be positive");
  for (const auto& [src, dst] : mapping)
    if (dst < 0 || dst >= target_classes)
      throw InputError("remap_labels: mapping target " + std::to_string(dst) + " out of range");

  std::vector<int64_t> keep;
  std::vector<int> new_labels;
  for (int64_t i = 0; i < ds.n(); ++i) {
    const auto it = mapping.find(ds.labels[static_cast<size_t>(i)]);
    if (it == mapping.end()) continue;
    keep.push_back(i);
    new_labels.push_back(it->second);
  }
  if (keep.empty()) throw InputError("remap_labels: mapping drops every sample");
  Dataset out = ds.subset(keep);
  out.labels = std::move(new_labels);
  out.num_classes = target_classes;
  return out;
}

Dataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("load_csv_dataset: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw InputError("load_csv_dataset: empty file '" + path + "'");

  const auto split_row = [](const std::string& row) {
    std::vector<std::string> cells;
    std::stringstream ss(row);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!row.empty() && row.back() == ',') cells.push_back("");
    return cells;
  };

  const auto header = split_row(line);
  if (header.size() < 2 || header.back() != "label")
    throw InputError("load_csv_dataset: header must end in a 'label' column");
  const size_t width = header.size();

  std::vector<double> feat;
  std::vector<int> labels;
  int max_label = -1;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_row(line);
    if (cells.size() != width)
      throw InputError("load_csv_dataset: ragged row at line " + std::to_string(lineno));
    try {
      for (size_t i = 0; i + 1 < cells.size(); ++i) feat.push_back(std::stod(cells[i]));
      const int lab = std::stoi(cells.back());
      if (lab < 0) throw InputError("load_csv_dataset: negative label at line " + std::to_string(lineno));
      labels.push_back(lab);
      max_label = std::max(max_label, lab);
    } catch (const std::invalid_argument&) {
      throw InputError("load_csv_dataset: non-numeric cell at line " + std::to_string(lineno));
    }
  }
  if (labels.empty()) throw InputError("load_csv_dataset: no data rows in '" + path + "'");

  Dataset ds;
  ds.num_classes = max_label + 1;
  ds.labels = std::move(labels);
  ds.features = Tensor({static_cast<int64_t>(ds.labels.size()), static_cast<int64_t>(width - 1)},
                       std::move(feat));
  ds.validate();
  return ds;
}

}  // namespace fedvg
