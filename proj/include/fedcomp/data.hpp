#pragma once

#include "fedcomp/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace fedcomp {

struct Sample {
  Vector features;
  int label = 1;
};

/// Feature matrix (one row per sample) plus labels in {+1, -1}.
struct LabeledDataset {
  RowMatrix features;
  std::vector<int> labels;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }

  std::size_t positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  }
  std::size_t negatives() const { return size() - positives(); }

  void validate() const {
    if (labels.empty()) throw DataError("dataset '" + name + "' is empty");
    if (static_cast<std::size_t>(features.rows()) != labels.size())
      throw DataError("dataset '" + name + "': feature rows and label count disagree");
    for (int b : labels)
      if (b != 1 && b != -1) throw DataError("dataset '" + name + "': label must be +1 or -1");
    if (!features.allFinite()) throw DataError("dataset '" + name + "': non-finite feature");
  }

  Sample sample(std::size_t i) const {
    return {features.row(static_cast<Eigen::Index>(i)).transpose(), labels[i]};
  }
};

/// A stochastic sample batch. Rows are copied out of the source dataset.
struct Minibatch {
  RowMatrix features;
  std::vector<int> labels;
  std::size_t positive_count = 0;
  std::size_t negative_count = 0;

  Minibatch() = default;
  Minibatch(RowMatrix f, std::vector<int> b) : features(std::move(f)), labels(std::move(b)) {
    if (static_cast<std::size_t>(features.rows()) != labels.size())
      throw DataError("Minibatch: feature rows and label count disagree");
    for (int label : labels) {
      if (label == 1)
        ++positive_count;
      else if (label == -1)
        ++negative_count;
      else
        throw DataError("Minibatch: label must be +1 or -1");
    }
  }

  static Minibatch from_samples(std::span<const Sample> samples) {
    if (samples.empty()) return {};
    RowMatrix f(static_cast<Eigen::Index>(samples.size()), samples.front().features.size());
    std::vector<int> b;
    b.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].features.size() != f.cols()) throw DimensionError("Minibatch: ragged samples");
      f.row(static_cast<Eigen::Index>(i)) = samples[i].features.transpose();
      b.push_back(samples[i].label);
    }
    return {std::move(f), std::move(b)};
  }

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  auto row(std::size_t i) const { return features.row(static_cast<Eigen::Index>(i)).transpose(); }
};

inline Minibatch gather(const LabeledDataset& ds, std::span<const std::size_t> idx) {
  RowMatrix f(static_cast<Eigen::Index>(idx.size()), ds.features.cols());
  std::vector<int> b(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    f.row(static_cast<Eigen::Index>(i)) = ds.features.row(static_cast<Eigen::Index>(idx[i]));
    b[i] = ds.labels[idx[i]];
  }
  return {std::move(f), std::move(b)};
}

inline LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> idx,
                             std::string name) {
  Minibatch m = gather(ds, idx);
  return {std::move(m.features), std::move(m.labels), std::move(name)};
}

inline Minibatch as_batch(const LabeledDataset& ds) { return {ds.features, ds.labels}; }

/// Fisher-Yates with the project RNG (std::shuffle is implementation-defined).
template <class T>
void shuffle(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(v[i - 1], v[j]);
  }
}

/// Balanced two-class spherical Gaussians with means +-separation/sqrt(d) * 1.
/// Samples alternate +1, -1 so the first n/2 of each class come from one stream.
inline LabeledDataset gen_gaussian_mixture(std::size_t n, std::size_t d_feat, double separation,
                                           std::uint64_t seed) {
  if (n < 2) throw DataError("gen_gaussian_mixture: n must be >= 2");
  if (d_feat < 1) throw DimensionError("gen_gaussian_mixture: d_feat must be >= 1");
  RngStream rng(seed, 0);
  const std::size_t n_pos = n / 2;
  const std::size_t total = 2 * n_pos;
  const double offset = separation / std::sqrt(static_cast<double>(d_feat));
  LabeledDataset ds;
  ds.name = "gaussian";
  ds.features.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(d_feat));
  ds.labels.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    const int b = (i % 2 == 0) ? 1 : -1;
    ds.labels[i] = b;
    for (std::size_t j = 0; j < d_feat; ++j)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = b * offset + rng.normal();
  }
  return ds;
}

/// Largest k with k / (k + negatives) <= ratio.
inline std::size_t max_positives_for_ratio(std::size_t negatives, double ratio) {
  // k <= ratio * neg / (1 - ratio); step down past rounding error.
  auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(negatives) / (1.0 - ratio)));
  auto ok = [&](std::size_t c) {
    // Relative slack so a ratio computed as pos / total round-trips to pos.
    return static_cast<double>(c) <= ratio * static_cast<double>(c + negatives) * (1.0 + 1e-12);
  };
  while (k > 0 && !ok(k)) --k;
  while (ok(k + 1)) ++k;
  return k;
}

/// Keeps every negative and a uniform subset of positives so the positive
/// fraction is the largest achievable value not above `target_ratio`.
inline LabeledDataset imbalance_subsample(const LabeledDataset& ds, double target_ratio,
                                          std::uint64_t seed) {
  if (!(target_ratio > 0.0 && target_ratio < 1.0))
    throw DataError("imbalance_subsample: ratio must lie in (0, 1)");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds.labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw DataError("imbalance_subsample: dataset needs both classes");
  const std::size_t keep = max_positives_for_ratio(neg.size(), target_ratio);
  if (keep > pos.size())
    throw DataError("imbalance_subsample: ratio " + std::to_string(target_ratio) +
                    " is not achievable (positive fraction already below it)");
  if (keep == 0) throw DataError("imbalance_subsample: ratio leaves no positive samples");
  if (keep == pos.size()) return ds;

  RngStream rng(seed, 1);
  shuffle(pos, rng);
  pos.resize(keep);
  std::sort(pos.begin(), pos.end());
  std::vector<std::size_t> idx;
  idx.reserve(keep + neg.size());
  std::merge(pos.begin(), pos.end(), neg.begin(), neg.end(), std::back_inserter(idx));
  return subset(ds, idx, ds.name);
}

/// Stratified split; returns (train, test).
inline std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& ds,
                                                                  double test_fraction,
                                                                  std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw DataError("train_test_split: test_fraction must lie in (0, 1)");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds.labels[i] == 1 ? pos : neg).push_back(i);
  RngStream rng(seed, 2);
  shuffle(pos, rng);
  shuffle(neg, rng);
  std::vector<std::size_t> train, test;
  for (auto* cls : {&pos, &neg}) {
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(cls->size())));
    test.insert(test.end(), cls->begin(), cls->begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), cls->begin() + static_cast<std::ptrdiff_t>(n_test), cls->end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {subset(ds, train, ds.name + "-train"), subset(ds, test, ds.name + "-test")};
}

/// CSV: label first (+1/-1, or 1/0 with 0 mapped to -1), then features.
inline LabeledDataset load_csv(const std::string& path, bool skip_header = false) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open '" + path + "'");
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skip_header && line_no == 1) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(field, &used);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) + ": cannot parse '" + field + "'");
      }
      if (field.find_first_not_of(" \t", used) != std::string::npos)
        throw DataError(path + ":" + std::to_string(line_no) + ": cannot parse '" + field + "'");
      row.push_back(value);
    }
    if (!line.empty() && line.back() == ',') row.push_back(std::nan(""));
    if (row.size() < 2)
      throw DataError(path + ":" + std::to_string(line_no) + ": need a label and at least one feature");
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                      " columns, found " + std::to_string(row.size()));
    int label = 0;
    if (row[0] == 1.0)
      label = 1;
    else if (row[0] == -1.0 || row[0] == 0.0)
      label = -1;
    else
      throw DataError(path + ":" + std::to_string(line_no) + ": invalid label");
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (!std::isfinite(row[j]))
        throw DataError(path + ":" + std::to_string(line_no) + ": non-finite feature");
      values.push_back(row[j]);
    }
    labels.push_back(label);
  }
  if (labels.empty()) throw DataError("load_csv: '" + path + "' has no samples");
  LabeledDataset ds;
  ds.name = path;
  ds.features = Eigen::Map<RowMatrix>(values.data(), static_cast<Eigen::Index>(labels.size()),
                                      static_cast<Eigen::Index>(width - 1));
  ds.labels = std::move(labels);
  return ds;
}

}  // namespace fedcomp
