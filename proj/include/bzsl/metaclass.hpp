#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include "bzsl/common.hpp"
#include "bzsl/dataset.hpp"
#include "bzsl/stats.hpp"

namespace bzsl {

// For every class, the ordered list of its K supporting seen classes
// (nearest attribute-space neighbors first) and the matching distances.
struct MetaClassMap {
  int K = 0;
  std::map<int, std::vector<int>> support;
  std::map<int, std::vector<double>> distances;
};

using Ranking = std::vector<std::pair<int, double>>;  // (class id, L2 distance)

// Full ranking of candidate seen classes by Euclidean attribute distance.
// Ties are ordered by ascending class id.
inline Ranking l2_rank(const Eigen::Ref<const Vector>& query_attr,
                       const Eigen::Ref<const Matrix>& seen_attrs,
                       const std::vector<int>& seen_ids,
                       std::optional<int> exclude = std::nullopt) {
  if (seen_attrs.rows() != static_cast<Eigen::Index>(seen_ids.size())) {
    throw ValidationError("l2_rank: attribute rows and id list disagree");
  }
  if (query_attr.size() != seen_attrs.cols()) {
    throw ValidationError("l2_rank: attribute dimension mismatch");
  }
  Ranking ranking;
  ranking.reserve(seen_ids.size());
  for (std::size_t i = 0; i < seen_ids.size(); ++i) {
    if (exclude && seen_ids[i] == *exclude) continue;
    const double dist = (seen_attrs.row(static_cast<Eigen::Index>(i)).transpose() - query_attr).norm();
    ranking.emplace_back(seen_ids[i], dist);
  }
  if (ranking.empty()) throw ValidationError("l2_rank: empty seen pool after exclusion");
  std::sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  return ranking;
}

// First K entries of the ranking, except that while the K-th entry ties the
// (K+1)-th on distance, the K-th slot advances to the next strictly larger
// distance. A tie running to the end of the ranking falls back to
// ascending-class-id order within the tied group. The input is canonicalized
// by (distance, id) first, so permuting tied entries cannot change the result.
inline Ranking select_support(Ranking ranking, int k) {
  if (k < 1) throw ValidationError("select_support: K must be positive");
  if (static_cast<int>(ranking.size()) < k) {
    std::ostringstream msg;
    msg << "select_support: ranking has " << ranking.size() << " entries, need K=" << k;
    throw ValidationError(msg.str());
  }
  std::sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  Ranking out(ranking.begin(), ranking.begin() + k);
  const std::size_t n = ranking.size();
  std::size_t idx = static_cast<std::size_t>(k) - 1;
  while (idx + 1 < n && ranking[idx + 1].second == ranking[idx].second) {
    std::size_t j = idx + 1;
    while (j < n && ranking[j].second == ranking[idx].second) ++j;
    if (j == n) break;  // tie reaches the end: keep the smallest-id member
    idx = j;
  }
  out[static_cast<std::size_t>(k) - 1] = ranking[idx];
  return out;
}

// Support lists for every seen-pool and unseen class. Seen classes exclude
// themselves from their own candidates; each unseen class gets its own list.
inline MetaClassMap build_meta_classes(const Dataset& ds, const SplitSpec& splits, int k,
                                       bool attr_norm_l2 = false) {
  const std::vector<int> pool = splits.seen_pool();
  if (static_cast<int>(pool.size()) < k + 1) {
    std::ostringstream msg;
    msg << "build_meta_classes: need at least K+1=" << (k + 1) << " seen classes, have "
        << pool.size();
    throw ValidationError(msg.str());
  }
  Matrix attrs(static_cast<Eigen::Index>(pool.size()), ds.attributes.cols());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    attrs.row(static_cast<Eigen::Index>(i)) = ds.attributes.row(pool[i]);
  }
  auto normalize = [&](Vector v) {
    if (attr_norm_l2) {
      const double n = v.norm();
      if (n > 0.0) v /= n;
    }
    return v;
  };
  if (attr_norm_l2) {
    for (Eigen::Index r = 0; r < attrs.rows(); ++r) {
      attrs.row(r) = normalize(attrs.row(r).transpose()).transpose();
    }
  }

  MetaClassMap map;
  map.K = k;
  auto add = [&](int class_id, std::optional<int> exclude) {
    const Vector query = normalize(ds.attributes.row(class_id).transpose());
    const Ranking selected = select_support(l2_rank(query, attrs, pool, exclude), k);
    auto& sup = map.support[class_id];
    auto& dist = map.distances[class_id];
    for (const auto& [id, d] : selected) {
      sup.push_back(id);
      dist.push_back(d);
    }
  };
  for (int id : pool) add(id, id);
  for (int id : splits.unseen) add(id, std::nullopt);
  return map;
}

}  // namespace bzsl
