#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here reuses the library's incremental statistics or batched scoring.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cobweb/retrieval.hpp"
#include "cobweb/tree.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline Vec batch_mean(const std::vector<Vec>& xs) {
  Vec m(xs.front().size(), 0.0);
  for (const auto& x : xs)
    for (std::size_t d = 0; d < m.size(); ++d) m[d] += x[d];
  for (auto& v : m) v /= static_cast<double>(xs.size());
  return m;
}

// Two-pass population variance.
inline Vec batch_variance(const std::vector<Vec>& xs) {
  const Vec m = batch_mean(xs);
  Vec v(m.size(), 0.0);
  for (const auto& x : xs)
    for (std::size_t d = 0; d < m.size(); ++d) v[d] += (x[d] - m[d]) * (x[d] - m[d]);
  for (auto& s : v) s /= static_cast<double>(xs.size());
  return v;
}

inline double entropy_of(const std::vector<Vec>& xs, double floor) {
  const Vec v = batch_variance(xs);
  double h = 0.0;
  for (double s : v) h += 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * (s + floor));
  return h;
}

// Mean over children of P(c) * (U(parent) - U(c)).
inline double partition_score(const std::vector<std::vector<Vec>>& children, const std::vector<Vec>& parent,
                              double floor) {
  const double up = entropy_of(parent, floor);
  double sum = 0.0;
  for (const auto& c : children)
    sum += static_cast<double>(c.size()) / static_cast<double>(parent.size()) * (up - entropy_of(c, floor));
  return sum / static_cast<double>(children.size());
}

// Vectors of all documents below `id`.
inline void collect_leaves(const cobweb::CobwebTree& tree, cobweb::NodeId id, std::vector<Vec>& out) {
  const auto& n = tree.node(id);
  if (n.is_leaf()) {
    const auto v = tree.doc_vector(*n.leaf_doc);
    out.emplace_back(v.begin(), v.end());
    return;
  }
  for (auto c : n.children) collect_leaves(tree, c, out);
}

inline std::vector<Vec> leaves_below(const cobweb::CobwebTree& tree, cobweb::NodeId id) {
  std::vector<Vec> out;
  collect_leaves(tree, id, out);
  return out;
}

// Snapshot of a subtree as nested leaf sets.
struct Model {
  std::vector<Vec> leaves;
  std::vector<Model> kids;
};

inline Model snapshot(const cobweb::CobwebTree& tree, cobweb::NodeId id) {
  Model m;
  m.leaves = leaves_below(tree, id);
  for (auto c : tree.node(id).children) m.kids.push_back(snapshot(tree, c));
  return m;
}

struct Candidates {
  double add = 0.0;
  double create = 0.0;
  std::optional<double> merge;
  std::optional<double> split;
  std::size_t best1 = 0;
  double best() const {
    double b = std::max(add, create);
    if (merge) b = std::max(b, *merge);
    if (split) b = std::max(b, *split);
    return b;
  }
};

// Scores the four insertion operators for x at `node` by re-partitioning raw
// leaf sets. Merge needs more than two children; split needs an internal best
// child and does not place x.
inline Candidates score_operators(const Model& node, const Vec& x, double floor) {
  std::vector<Vec> parent = node.leaves;
  parent.push_back(x);
  std::vector<std::vector<Vec>> base;
  for (const auto& k : node.kids) base.push_back(k.leaves);
  const std::size_t K = base.size();

  Candidates c;
  std::vector<double> adds(K);
  for (std::size_t i = 0; i < K; ++i) {
    auto parts = base;
    parts[i].push_back(x);
    adds[i] = partition_score(parts, parent, floor);
  }
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return adds[a] > adds[b]; });
  c.best1 = order[0];
  c.add = adds[order[0]];

  auto with_new = base;
  with_new.push_back({x});
  c.create = partition_score(with_new, parent, floor);

  if (K > 2) {
    std::vector<std::vector<Vec>> parts;
    std::vector<Vec> merged = base[order[0]];
    merged.insert(merged.end(), base[order[1]].begin(), base[order[1]].end());
    merged.push_back(x);
    for (std::size_t i = 0; i < K; ++i)
      if (i != order[0] && i != order[1]) parts.push_back(base[i]);
    parts.push_back(merged);
    c.merge = partition_score(parts, parent, floor);
  }
  const Model& b1 = node.kids[order[0]];
  if (!b1.kids.empty()) {
    std::vector<std::vector<Vec>> parts;
    for (std::size_t i = 0; i < K; ++i)
      if (i != order[0]) parts.push_back(base[i]);
    for (const auto& g : b1.kids) parts.push_back(g.leaves);
    c.split = partition_score(parts, parent, floor);
  }
  return c;
}

// Applies a split of child `index` in the model.
inline void split_child(Model& node, std::size_t index) {
  Model gone = std::move(node.kids[index]);
  node.kids.erase(node.kids.begin() + static_cast<std::ptrdiff_t>(index));
  for (auto& g : gone.kids) node.kids.push_back(std::move(g));
}

// Path-sum ranking by explicit enumeration of root-to-leaf paths, scoring each
// internal node on the path with the per-node direct formula.
struct PathScore {
  cobweb::NodeId leaf;
  double score;
};

inline void enumerate_paths(const cobweb::FrozenTree& t, cobweb::NodeId id, std::vector<cobweb::NodeId>& path,
                            std::vector<std::vector<cobweb::NodeId>>& out) {
  path.push_back(id);
  if (t.is_leaf(id)) {
    out.push_back(path);
  } else {
    for (auto c : t.children(id)) enumerate_paths(t, c, path, out);
  }
  path.pop_back();
}

inline std::vector<PathScore> pathsum_ranking(const cobweb::FrozenTree& t, const Vec& x, std::size_t k) {
  std::vector<std::vector<cobweb::NodeId>> paths;
  std::vector<cobweb::NodeId> scratch;
  enumerate_paths(t, 0, scratch, paths);
  std::vector<PathScore> all;
  for (const auto& p : paths) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) s += cobweb::collocation_logscore(t, p[i], x);
    all.push_back({p.back(), s});
  }
  std::sort(all.begin(), all.end(), [](const PathScore& a, const PathScore& b) {
    return a.score != b.score ? a.score > b.score : a.leaf < b.leaf;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

// Exact dot products and a full sort (score desc, row asc).
inline std::vector<std::pair<std::size_t, double>> dot_ranking(const cobweb::EmbeddingMatrix& m,
                                                                const std::vector<float>& q, std::size_t k) {
  std::vector<std::pair<std::size_t, double>> all;
  for (std::size_t i = 0; i < m.count(); ++i) {
    const auto row = m.row(i);
    double s = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) s += static_cast<double>(row[d]) * static_cast<double>(q[d]);
    all.emplace_back(i, s);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

// Metrics recomputed from a plain list of doc ids.
inline double recall(const std::vector<std::string>& ranked, const std::map<std::string, int>& grades,
                     std::size_t k) {
  std::size_t relevant = 0, found = 0;
  for (const auto& [doc, g] : grades) {
    if (g <= 0) continue;
    ++relevant;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i)
      if (ranked[i] == doc) ++found;
  }
  return static_cast<double>(found) / static_cast<double>(relevant);
}

inline double mrr(const std::vector<std::string>& ranked, const std::map<std::string, int>& grades, std::size_t k) {
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
    auto it = grades.find(ranked[i]);
    if (it != grades.end() && it->second > 0) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

inline double ndcg(const std::vector<std::string>& ranked, const std::map<std::string, int>& grades, std::size_t k) {
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
    auto it = grades.find(ranked[i]);
    if (it != grades.end()) dcg += it->second / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> ideal;
  for (const auto& [doc, g] : grades) ideal.push_back(g);
  std::sort(ideal.rbegin(), ideal.rend());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

}  // namespace oracle
