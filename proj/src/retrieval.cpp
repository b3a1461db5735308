#include "cobweb/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <queue>

#include "cobweb/errors.hpp"

namespace cobweb {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_dim(std::size_t expected, std::size_t got) {
  if (expected != got)
    throw ShapeError("query has dimension " + std::to_string(got) + ", index has " + std::to_string(expected));
}

// Higher score first; ties to the lower id.
template <typename Score, typename Id>
bool ranks_before(Score sa, Id ia, Score sb, Id ib) {
  return sa > sb || (sa == sb && ia < ib);
}

}  // namespace

const char* to_string(Method method) {
  switch (method) {
    case Method::bfs: return "bfs";
    case Method::pathsum: return "pathsum";
    case Method::dot: return "dot";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "bfs") return Method::bfs;
  if (name == "pathsum") return Method::pathsum;
  if (name == "dot") return Method::dot;
  throw ValidationError("unknown method '" + name + "' (expected bfs, pathsum or dot)");
}

double log_likelihood(std::span<const double> mean, std::span<const double> variance, std::span<const double> x) {
  check_dim(mean.size(), x.size());
  double sum = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double diff = x[d] - mean[d];
    sum += std::log(variance[d]) + kLog2Pi + diff * diff / variance[d];
  }
  return -0.5 * sum;
}

double log_likelihood(const ConceptNode& node, double variance_floor, std::span<const double> x) {
  check_dim(node.stats.dim(), x.size());
  double sum = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double var = node.stats.variance(d, variance_floor);
    const double diff = x[d] - node.stats.mean[d];
    sum += std::log(var) + kLog2Pi + diff * diff / var;
  }
  return -0.5 * sum;
}

double log_likelihood(const FrozenTree& tree, NodeId node, std::span<const double> x) {
  return log_likelihood(tree.mean(node), tree.variance(node), x);
}

double collocation_logscore(const ConceptNode& node, double variance_floor, std::span<const double> x) {
  return 2.0 * log_likelihood(node, variance_floor, x);
}

double collocation_logscore(const FrozenTree& tree, NodeId node, std::span<const double> x) {
  return 2.0 * log_likelihood(tree, node, x);
}

namespace {

// Batched node scores; leaves are left at 0 unless `leaves` is set.
std::vector<double> score_nodes(const FrozenTree& tree, std::span<const double> x, bool leaves) {
  check_dim(tree.dim(), x.size());
  const std::size_t n = tree.size();
  const std::size_t dim = tree.dim();
  std::vector<double> scores(n, 0.0);
  const double* mean = tree.means().data();
  const double* inv = tree.inverse_variances().data();
  const double* norm = tree.log_normalizers().data();
  const double* q = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (!leaves && tree.is_leaf(static_cast<NodeId>(i))) continue;
    const double* mu = mean + i * dim;
    const double* iv = inv + i * dim;
    double mahalanobis = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = q[d] - mu[d];
      mahalanobis += diff * diff * iv[d];
    }
    scores[i] = 2.0 * (norm[i] - 0.5 * mahalanobis);
  }
  return scores;
}

}  // namespace

std::vector<double> score_all_nodes(const FrozenTree& tree, std::span<const double> x) {
  return score_nodes(tree, x, true);
}

std::size_t default_n_max(std::size_t k, std::size_t node_count) {
  const auto levels = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(node_count) + 1.0)));
  return 4 * k * std::max<std::size_t>(levels, 1);
}

RankedResult retrieve_bfs(const FrozenTree& tree, std::span<const double> x, const BfsOptions& options) {
  if (options.k == 0) throw ValidationError("k must be at least 1");
  RankedResult result;
  result.method = Method::bfs;
  if (tree.empty()) return result;
  check_dim(tree.dim(), x.size());
  const std::size_t n_max = options.n_max ? options.n_max : default_n_max(options.k, tree.size());

  struct Item {
    double score;
    NodeId node;
  };
  auto worse = [](const Item& a, const Item& b) { return ranks_before(b.score, b.node, a.score, a.node); };
  std::priority_queue<Item, std::vector<Item>, decltype(worse)> frontier(worse);
  frontier.push({collocation_logscore(tree, 0, x), 0});

  while (!frontier.empty() && result.entries.size() < options.k && result.expansions < n_max) {
    const Item top = frontier.top();
    frontier.pop();
    ++result.expansions;
    if (tree.is_leaf(top.node)) {
      result.entries.push_back({tree.leaf_doc(top.node), top.score, top.node});
      result.paths.push_back(tree.path(top.node));
      continue;
    }
    for (NodeId c : tree.children(top.node)) frontier.push({collocation_logscore(tree, c, x), c});
  }
  return result;
}

RankedResult retrieve_pathsum(const FrozenTree& tree, std::span<const double> x, const PathSumOptions& options) {
  if (options.k == 0) throw ValidationError("k must be at least 1");
  RankedResult result;
  result.method = Method::pathsum;
  if (tree.empty()) return result;

  const std::vector<double> node_scores = score_nodes(tree, x, options.include_leaf_score);
  // ancestor_sum[i]: sum of node scores over the strict ancestors of i.
  // Preorder guarantees a parent is finished before its children.
  std::vector<double> ancestor_sum(tree.size(), 0.0);
  for (NodeId i = 1; i < tree.size(); ++i) {
    const auto p = static_cast<NodeId>(tree.parent(i));
    ancestor_sum[i] = ancestor_sum[p] + node_scores[p];
  }

  const auto& leaves = tree.leaves();
  std::vector<double> leaf_score(leaves.size());
  for (std::size_t j = 0; j < leaves.size(); ++j) {
    const NodeId leaf = leaves[j];
    double s = ancestor_sum[leaf];
    std::size_t terms = tree.depth(leaf);
    if (options.include_leaf_score) {
      s += node_scores[leaf];
      ++terms;
    }
    if (options.depth_normalize) s = terms ? s / static_cast<double>(terms) : 0.0;
    leaf_score[j] = s;
  }

  std::vector<std::size_t> order(leaves.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = std::min(options.k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return ranks_before(leaf_score[a], leaves[a], leaf_score[b], leaves[b]);
                    });
  for (std::size_t r = 0; r < k; ++r) {
    const NodeId leaf = leaves[order[r]];
    result.entries.push_back({tree.leaf_doc(leaf), leaf_score[order[r]], leaf});
    result.paths.push_back(tree.path(leaf));
  }
  return result;
}

RankedResult retrieve_dot(const EmbeddingMatrix& corpus, std::span<const float> x, std::size_t k) {
  if (k == 0) throw ValidationError("k must be at least 1");
  RankedResult result;
  result.method = Method::dot;
  if (corpus.empty()) return result;
  check_dim(corpus.dim(), x.size());

  const std::size_t n = corpus.count();
  const std::size_t dim = corpus.dim();
  const float* data = corpus.data().data();
  std::vector<double> scores(n);
  // Rows are scored in blocks so several independent accumulation chains are
  // in flight; each row is still summed in dimension order.
  constexpr std::size_t kBlock = 8;
  std::size_t i = 0;
  for (; i + kBlock <= n; i += kBlock) {
    double s[kBlock] = {};
    for (std::size_t d = 0; d < dim; ++d) {
      const double xd = x[d];
      for (std::size_t r = 0; r < kBlock; ++r) s[r] += static_cast<double>(data[(i + r) * dim + d]) * xd;
    }
    for (std::size_t r = 0; r < kBlock; ++r) scores[i + r] = s[r];
  }
  for (; i < n; ++i) {
    const float* row = data + i * dim;
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) s += static_cast<double>(row[d]) * static_cast<double>(x[d]);
    scores[i] = s;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return ranks_before(scores[a], a, scores[b], b); });
  for (std::size_t r = 0; r < k; ++r)
    result.entries.push_back({corpus.id(order[r]), scores[order[r]], static_cast<NodeId>(order[r])});
  return result;
}

}  // namespace cobweb
