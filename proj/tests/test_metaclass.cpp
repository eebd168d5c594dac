#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "bzsl/metaclass.hpp"

using namespace bzsl;

namespace {

std::set<int> id_set(const Ranking& r) {
  std::set<int> out;
  for (const auto& [id, d] : r) out.insert(id);
  return out;
}

Dataset line_dataset(const std::vector<double>& attrs) {
  Dataset ds;
  const int c = static_cast<int>(attrs.size());
  ds.features = Matrix::Ones(c, 1);
  ds.attributes.resize(c, 1);
  for (int i = 0; i < c; ++i) {
    ds.attributes(i, 0) = attrs[static_cast<std::size_t>(i)];
    ds.labels.push_back(i);
  }
  return ds;
}

}  // namespace

TEST_CASE("l2_rank on orthonormal attributes") {
  Matrix attrs(2, 2);
  attrs << 1, 0, 0, 1;
  Vector query(2);
  query << 1, 0;
  const Ranking r = l2_rank(query, attrs, {0, 1});
  REQUIRE(r[0].first == 0);
  REQUIRE(r[0].second == Catch::Approx(0.0));
  REQUIRE(r[1].first == 1);
  REQUIRE(r[1].second == Catch::Approx(std::sqrt(2.0)));
}

TEST_CASE("l2_rank excludes the requested class") {
  Matrix attrs(3, 2);
  attrs << 1, 0, 0, 1, 1, 1;
  Vector query(2);
  query << 1, 0;
  const Ranking r = l2_rank(query, attrs, {0, 1, 2}, 0);
  REQUIRE(r.size() == 2);
  REQUIRE(!id_set(r).count(0));
}

TEST_CASE("l2_rank with empty pool after exclusion errors") {
  Matrix attrs(1, 2);
  attrs << 1, 0;
  Vector query(2);
  query << 1, 0;
  REQUIRE_THROWS_AS(l2_rank(query, attrs, {0}, 0), ValidationError);
}

TEST_CASE("l2_rank matches a brute-force distance sort") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int s = 50, a = 7;
  Matrix attrs(s, a);
  std::vector<int> ids;
  for (int i = 0; i < s; ++i) {
    ids.push_back(i);
    for (int j = 0; j < a; ++j) attrs(i, j) = noise(gen);
  }
  Vector query(a);
  for (int j = 0; j < a; ++j) query(j) = noise(gen);

  const Ranking r = l2_rank(query, attrs, ids);
  std::vector<std::pair<double, int>> brute;
  for (int i = 0; i < s; ++i) {
    brute.emplace_back((attrs.row(i).transpose() - query).norm(), i);
  }
  std::sort(brute.begin(), brute.end());
  for (int i = 0; i < s; ++i) {
    REQUIRE(r[static_cast<std::size_t>(i)].first == brute[static_cast<std::size_t>(i)].second);
  }
}

TEST_CASE("select_support takes the nearest K without ties") {
  Ranking r = {{10, 1.0}, {11, 2.0}, {12, 3.0}, {13, 4.0}};
  const Ranking sel = select_support(r, 2);
  REQUIRE(id_set(sel) == std::set<int>{10, 11});
}

TEST_CASE("select_support skips a boundary tie") {
  Ranking r = {{10, 1.0}, {11, 2.0}, {12, 2.0}, {13, 3.0}};
  const Ranking sel = select_support(r, 2);
  REQUIRE(id_set(sel) == std::set<int>{10, 13});
}

TEST_CASE("select_support advances through consecutive tied groups") {
  Ranking r = {{1, 1.0}, {2, 2.0}, {3, 2.0}, {4, 3.0}, {5, 3.0}, {6, 4.0}};
  const Ranking sel = select_support(r, 2);
  REQUIRE(id_set(sel) == std::set<int>{1, 6});
}

TEST_CASE("select_support falls back to the lower id when the tie reaches the end") {
  Ranking r = {{7, 1.0}, {9, 2.0}, {8, 2.0}};
  const Ranking sel = select_support(r, 2);
  REQUIRE(id_set(sel) == std::set<int>{7, 8});
}

TEST_CASE("select_support rejects short rankings") {
  Ranking r = {{1, 1.0}};
  REQUIRE_THROWS_AS(select_support(r, 2), ValidationError);
}

TEST_CASE("select_support is invariant to permutations of tied entries") {
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> len_dist(3, 12);
  std::uniform_int_distribution<int> dist_dist(0, 4);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len_dist(gen);
    Ranking r;
    for (int i = 0; i < n; ++i) {
      r.emplace_back(i, static_cast<double>(dist_dist(gen)));  // heavy ties
    }
    std::uniform_int_distribution<int> k_dist(1, n);
    const int k = k_dist(gen);
    const std::set<int> base = id_set(select_support(r, k));
    for (int p = 0; p < 5; ++p) {
      std::shuffle(r.begin(), r.end(), gen);
      REQUIRE(id_set(select_support(r, k)) == base);
    }
  }
}

TEST_CASE("build_meta_classes on collinear attributes") {
  Dataset ds = line_dataset({0.0, 1.0, 2.0, 1.1});
  SplitSpec splits;
  splits.seen_train = {0, 1, 2};
  splits.unseen = {3};
  const MetaClassMap map = build_meta_classes(ds, splits, 2);
  REQUIRE(map.support.at(3) == std::vector<int>{1, 2});
  for (int id : {0, 1, 2}) {
    const auto& sup = map.support.at(id);
    REQUIRE(std::find(sup.begin(), sup.end(), id) == sup.end());  // never self
    REQUIRE(sup.size() == 2);
  }
}

TEST_CASE("unseen support picks the two semantically nearest seen classes") {
  // Attribute geometry with one unseen class close to two of four seen ones.
  Dataset ds;
  ds.features = Matrix::Ones(5, 1);
  ds.attributes.resize(5, 3);
  ds.attributes << 5.0, 5.1, 4.9,   // seen 0, near the unseen class
      5.2, 4.8, 5.0,                // seen 1, near the unseen class
      0.0, 0.2, 0.1,                // seen 2, far
      9.5, 0.3, 2.0,                // seen 3, far
      5.1, 5.0, 5.0;                // unseen 4
  ds.labels = {0, 1, 2, 3, 4};
  SplitSpec splits;
  splits.seen_train = {0, 1, 2, 3};
  splits.unseen = {4};
  const MetaClassMap map = build_meta_classes(ds, splits, 2);
  REQUIRE(std::set<int>(map.support.at(4).begin(), map.support.at(4).end()) ==
          std::set<int>{0, 1});
}

TEST_CASE("build_meta_classes needs K+1 seen classes") {
  Dataset ds = line_dataset({0.0, 1.0, 2.0});
  SplitSpec splits;
  splits.seen_train = {0, 1};
  splits.unseen = {2};
  REQUIRE_THROWS_AS(build_meta_classes(ds, splits, 2), ValidationError);
}

TEST_CASE("support distances are non-decreasing and support size is exactly K") {
  std::mt19937_64 gen(23);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Dataset ds;
    const int c = 8;
    ds.features = Matrix::Ones(c, 1);
    ds.attributes.resize(c, 4);
    for (int i = 0; i < c; ++i) {
      ds.labels.push_back(i);
      for (int j = 0; j < 4; ++j) ds.attributes(i, j) = noise(gen);
    }
    SplitSpec splits;
    splits.seen_train = {0, 1, 2, 3, 4, 5};
    splits.unseen = {6, 7};
    const int k = 1 + static_cast<int>(trial % 5);
    const MetaClassMap map = build_meta_classes(ds, splits, k);
    for (const auto& [id, sup] : map.support) {
      REQUIRE(static_cast<int>(sup.size()) == k);
      const auto& dist = map.distances.at(id);
      for (std::size_t i = 1; i < dist.size(); ++i) REQUIRE(dist[i] >= dist[i - 1]);
    }
  }
}

TEST_CASE("support is stable under sub-gap query perturbations") {
  std::mt19937_64 gen(29);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int s = 6, a = 3;
    Matrix attrs(s, a);
    std::vector<int> ids;
    for (int i = 0; i < s; ++i) {
      ids.push_back(i);
      for (int j = 0; j < a; ++j) attrs(i, j) = noise(gen);
    }
    Vector query(a);
    for (int j = 0; j < a; ++j) query(j) = noise(gen);
    const Ranking ranked = l2_rank(query, attrs, ids);
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < ranked.size(); ++i) {
      const double gap = ranked[i].second - ranked[i - 1].second;
      if (gap > 0.0) min_gap = std::min(min_gap, gap);
    }
    if (!std::isfinite(min_gap)) continue;
    const std::set<int> base = id_set(select_support(ranked, 3));
    Vector eps(a);
    for (int j = 0; j < a; ++j) eps(j) = noise(gen);
    eps *= (0.49 * min_gap) / eps.norm();
    const std::set<int> perturbed = id_set(select_support(l2_rank(query + eps, attrs, ids), 3));
    REQUIRE(perturbed == base);
  }
}
