#pragma once

#include "fedcomp/core.hpp"
#include "fedcomp/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fedcomp {

/// Mann-Whitney AUC with ties counted 1/2, by sorting and sweeping tie groups.
/// The numerator is accumulated as an integer (twice the U statistic) so the
/// result is bit-identical to pairwise counting.
inline double auc_score(std::span<const double> scores_pos, std::span<const double> scores_neg) {
  if (scores_pos.empty() || scores_neg.empty()) throw DataError("auc_score: both classes must be nonempty");
  std::vector<std::pair<double, bool>> all;
  all.reserve(scores_pos.size() + scores_neg.size());
  for (double s : scores_pos) all.emplace_back(s, true);
  for (double s : scores_neg) all.emplace_back(s, false);
  for (const auto& [s, _] : all)
    if (std::isnan(s)) throw DataError("auc_score: NaN score");
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::uint64_t twice_u = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::uint64_t pos_g = 0, neg_g = 0;
    while (j < all.size() && all[j].first == all[i].first) {
      (all[j].second ? pos_g : neg_g) += 1;
      ++j;
    }
    twice_u += pos_g * (2 * neg_below + neg_g);
    neg_below += neg_g;
    i = j;
  }
  const double denom = 2.0 * static_cast<double>(scores_pos.size()) * static_cast<double>(scores_neg.size());
  return static_cast<double>(twice_u) / denom;
}

/// Splits scores by label and scores them.
inline double auc_score(std::span<const double> scores, std::span<const int> labels) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(scores[i]);
  return auc_score(pos, neg);
}

/// Max over fields and devices of the infinity-norm deviation from the
/// cross-device mean. Fields already in exact agreement contribute 0.
template <FieldState S>
double consensus_gap(std::span<const S> states) {
  detail::check_layouts(states);
  std::vector<std::vector<std::pair<const Vector*, const double*>>> refs;
  for (const S& s : states) {
    auto& r = refs.emplace_back();
    s.for_each_field([&](const auto& field, FieldKind) {
      if constexpr (std::is_same_v<std::decay_t<decltype(field)>, double>)
        r.emplace_back(nullptr, &field);
      else
        r.emplace_back(&field, nullptr);
    });
  }
  const double k = static_cast<double>(states.size());
  double gap = 0.0;
  for (std::size_t f = 0; f < refs.front().size(); ++f) {
    const auto [v0, s0] = refs.front()[f];
    if (s0) {
      bool same = true;
      double sum = 0.0;
      for (const auto& r : refs) {
        same = same && *r[f].second == *s0;
        sum += *r[f].second;
      }
      if (same) continue;
      const double mean = sum / k;
      for (const auto& r : refs) gap = std::max(gap, std::abs(*r[f].second - mean));
    } else {
      bool same = true;
      Vector sum = Vector::Zero(v0->size());
      for (const auto& r : refs) {
        same = same && *r[f].first == *v0;
        sum += *r[f].first;
      }
      if (same) continue;
      const Vector mean = sum / k;
      for (const auto& r : refs)
        if (mean.size() > 0) gap = std::max(gap, (*r[f].first - mean).template lpNorm<Eigen::Infinity>());
    }
  }
  return gap;
}

template <FieldState S>
double consensus_gap(const std::vector<S>& states) {
  return consensus_gap(std::span<const S>(states));
}

/// One evaluation row of a run trace.
struct MetricsRecord {
  std::int64_t iteration = 0;
  std::int64_t round = 0;
  std::string algo;
  std::uint64_t seed = 0;
  double train_ce = 0.0;
  double train_auc_loss = 0.0;
  double test_auc = 0.0;
  double test_auc_mean_devices = 0.0;
  double consensus_gap = 0.0;
  std::optional<double> grad_norm_sq;
  double eta_t = 0.0;
  std::int64_t wall_ms = 0;
};

}  // namespace fedcomp
