#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cobweb/embedding_io.hpp"
#include "cobweb/tree.hpp"

namespace cobweb {

enum class Method { bfs, pathsum, dot };
const char* to_string(Method method);
Method parse_method(const std::string& name);

struct RankedEntry {
  std::string doc_id;
  double score = 0.0;
  NodeId node = 0;  // leaf index in the frozen tree, or corpus row for dot
};

struct RankedResult {
  Method method = Method::dot;
  std::vector<RankedEntry> entries;
  // Root-to-leaf frozen node indices, aligned with entries. Empty for dot.
  std::vector<std::vector<NodeId>> paths;
  std::size_t expansions = 0;  // nodes popped by bfs
};

// log p(x | c) for a diagonal Gaussian, natural log.
double log_likelihood(std::span<const double> mean, std::span<const double> variance, std::span<const double> x);
double log_likelihood(const ConceptNode& node, double variance_floor, std::span<const double> x);
double log_likelihood(const FrozenTree& tree, NodeId node, std::span<const double> x);

// log s(c) with the constant log N dropped: 2 * log p(x | c) under a uniform
// concept prior.
double collocation_logscore(const ConceptNode& node, double variance_floor, std::span<const double> x);
double collocation_logscore(const FrozenTree& tree, NodeId node, std::span<const double> x);

// collocation_logscore for every node in one pass over the precomputed
// node-statistics arrays.
std::vector<double> score_all_nodes(const FrozenTree& tree, std::span<const double> x);

std::size_t default_n_max(std::size_t k, std::size_t node_count);

struct BfsOptions {
  std::size_t k = 10;
  std::size_t n_max = 0;  // 0 selects default_n_max(k, tree.size())
};

struct PathSumOptions {
  std::size_t k = 10;
  bool include_leaf_score = false;
  bool depth_normalize = false;
};

RankedResult retrieve_bfs(const FrozenTree& tree, std::span<const double> x, const BfsOptions& options);
RankedResult retrieve_pathsum(const FrozenTree& tree, std::span<const double> x, const PathSumOptions& options);
RankedResult retrieve_dot(const EmbeddingMatrix& corpus, std::span<const float> x, std::size_t k);

}  // namespace cobweb
