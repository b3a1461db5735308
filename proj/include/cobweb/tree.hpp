#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cobweb/embedding_io.hpp"

namespace cobweb {

using NodeId = std::uint32_t;

inline constexpr double kDefaultVarianceFloor = 1e-3;

// Running diagonal-Gaussian sufficient statistics (Welford form).
struct GaussianStats {
  std::size_t count = 0;
  std::vector<double> mean;
  std::vector<double> m2;  // sum of squared deviations per dimension

  GaussianStats() = default;
  explicit GaussianStats(std::size_t dim) : mean(dim, 0.0), m2(dim, 0.0) {}
  static GaussianStats singleton(std::span<const double> x);
  // Chan et al. pairwise combination.
  static GaussianStats combine(const GaussianStats& a, const GaussianStats& b);

  std::size_t dim() const noexcept { return mean.size(); }
  void add(std::span<const double> x);
  double variance(std::size_t d, double floor) const { return m2[d] / static_cast<double>(count) + floor; }
};

// Differential entropy of the diagonal Gaussian, natural log:
// sum_d 0.5 * ln(2 pi e sigma^2_d).
double gaussian_entropy(std::span<const double> variances);
double node_entropy(const GaussianStats& stats, double variance_floor);
// P(child | parent) * (U(parent) - U(child)).
double category_utility(const GaussianStats& parent, const GaussianStats& child, double variance_floor);

struct ConceptNode {
  NodeId id = 0;
  GaussianStats stats;
  std::vector<NodeId> children;
  std::optional<NodeId> parent;
  std::optional<std::string> leaf_doc;  // present iff children is empty

  bool is_leaf() const noexcept { return children.empty(); }
  std::size_t count() const noexcept { return stats.count; }
};

// Welford update of a node on the insertion path.
void update_stats(ConceptNode& node, std::span<const double> x);

enum class Operator { add_to_best, create_new, merge, split };
const char* to_string(Operator op);

// One operator choice made while descending during an insert.
struct Decision {
  NodeId node = 0;
  Operator op = Operator::add_to_best;
  NodeId best1 = 0;
  std::optional<NodeId> best2;
  double add_score = 0.0;
  double new_score = 0.0;
  std::optional<double> merge_score;
  std::optional<double> split_score;

  double chosen_score() const;
};

struct InsertTrace {
  std::vector<Decision> decisions;
  NodeId leaf = 0;
};

// Incrementally built Cobweb hierarchy over D-dimensional vectors. Leaves hold
// exactly one document; internal nodes hold only summary statistics.
class CobwebTree {
 public:
  explicit CobwebTree(std::size_t dim, double variance_floor = kDefaultVarianceFloor);

  NodeId insert(const std::string& doc_id, std::span<const double> x, InsertTrace* trace = nullptr);
  NodeId insert(const std::string& doc_id, std::span<const float> x, InsertTrace* trace = nullptr);

  std::size_t dim() const noexcept { return dim_; }
  double variance_floor() const noexcept { return variance_floor_; }
  bool empty() const noexcept { return !root_.has_value(); }
  std::optional<NodeId> root() const noexcept { return root_; }

  const ConceptNode& node(NodeId id) const;
  bool is_live(NodeId id) const { return id < live_.size() && live_[id]; }
  // Slots in the arena, including nodes removed by split.
  std::size_t capacity() const noexcept { return nodes_.size(); }
  std::size_t node_count() const noexcept { return live_count_; }
  std::size_t leaf_count() const noexcept { return leaf_of_.size(); }

  std::optional<NodeId> leaf_of(const std::string& doc_id) const;
  // The raw vector stored at a document's leaf.
  std::span<const double> doc_vector(const std::string& doc_id) const;

  std::vector<NodeId> preorder() const;
  std::size_t depth(NodeId id) const;
  // Copy with ids renumbered in preorder and removed slots dropped.
  CobwebTree compacted() const;

  // Rebuilds a tree from preorder node records (ids must be 0..n-1, root 0).
  static CobwebTree from_nodes(std::size_t dim, double variance_floor, std::vector<ConceptNode> nodes);

  // Throws ValidationError on any structural or statistical inconsistency.
  void check_invariants(double relative_tolerance = 1e-6) const;

 private:
  NodeId new_node(GaussianStats stats, std::optional<NodeId> parent);
  NodeId new_leaf(const std::string& doc_id, std::span<const double> x, std::optional<NodeId> parent);
  void replace_child(NodeId parent, NodeId old_child, std::span<const NodeId> replacement);
  void set_stats_changed(NodeId id);
  double entropy(NodeId id) const { return entropy_[id]; }

  std::size_t dim_;
  double variance_floor_;
  std::vector<ConceptNode> nodes_;
  std::vector<double> entropy_;
  std::vector<bool> live_;
  std::size_t live_count_ = 0;
  std::optional<NodeId> root_;
  std::unordered_map<std::string, NodeId> leaf_of_;
};

// Immutable, contiguous snapshot of a tree for querying. Nodes are indexed in
// preorder, so the root is 0 and every parent index precedes its children.
class FrozenTree {
 public:
  FrozenTree() = default;
  explicit FrozenTree(const CobwebTree& tree);

  std::size_t size() const noexcept { return counts_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  double variance_floor() const noexcept { return variance_floor_; }
  bool empty() const noexcept { return counts_.empty(); }
  std::size_t leaf_count() const noexcept { return leaves_.size(); }

  std::size_t count(NodeId i) const { return counts_[i]; }
  std::int64_t parent(NodeId i) const { return parent_[i]; }
  std::uint32_t depth(NodeId i) const { return depth_[i]; }
  bool is_leaf(NodeId i) const { return child_begin_[i] == child_begin_[i + 1]; }
  std::span<const NodeId> children(NodeId i) const {
    return {child_list_.data() + child_begin_[i], child_begin_[i + 1] - child_begin_[i]};
  }
  const std::string& leaf_doc(NodeId i) const { return docs_[static_cast<std::size_t>(leaf_doc_[i])]; }
  const std::vector<NodeId>& leaves() const noexcept { return leaves_; }

  std::span<const double> mean(NodeId i) const { return {means_.data() + std::size_t{i} * dim_, dim_}; }
  std::span<const double> variance(NodeId i) const { return {variances_.data() + std::size_t{i} * dim_, dim_}; }
  // Precomputed for batched scoring: 1/sigma^2 and -0.5 * sum_d ln(2 pi sigma^2_d).
  std::span<const double> inverse_variance(NodeId i) const {
    return {inverse_variances_.data() + std::size_t{i} * dim_, dim_};
  }
  double log_normalizer(NodeId i) const { return log_normalizers_[i]; }
  const std::vector<double>& means() const noexcept { return means_; }
  const std::vector<double>& inverse_variances() const noexcept { return inverse_variances_; }
  const std::vector<double>& log_normalizers() const noexcept { return log_normalizers_; }

  // Root-to-node list of indices, inclusive.
  std::vector<NodeId> path(NodeId i) const;

 private:
  std::size_t dim_ = 0;
  double variance_floor_ = kDefaultVarianceFloor;
  std::vector<std::size_t> counts_;
  std::vector<std::int64_t> parent_;
  std::vector<std::uint32_t> depth_;
  std::vector<std::size_t> child_begin_;
  std::vector<NodeId> child_list_;
  std::vector<std::int64_t> leaf_doc_;
  std::vector<std::string> docs_;
  std::vector<NodeId> leaves_;
  std::vector<double> means_;
  std::vector<double> variances_;
  std::vector<double> inverse_variances_;
  std::vector<double> log_normalizers_;
};

inline FrozenTree freeze(const CobwebTree& tree) { return FrozenTree(tree); }

struct BuildOptions {
  double variance_floor = kDefaultVarianceFloor;
  std::optional<std::uint64_t> shuffle_seed;  // insertion order = file order when unset
};

CobwebTree build_tree(const EmbeddingMatrix& corpus, const BuildOptions& options = {});

// Persistence: ".json" selects the JSON form, anything else the CWTR binary.
void save_tree(const CobwebTree& tree, const std::filesystem::path& path);
CobwebTree load_tree(const std::filesystem::path& path);
std::string tree_to_binary(const CobwebTree& tree);
CobwebTree tree_from_binary(const std::string& bytes);
std::string tree_to_json(const CobwebTree& tree);
CobwebTree tree_from_json(const std::string& text);

enum class ExportFormat { json, dot };

struct ExportOptions {
  ExportFormat format = ExportFormat::json;
  std::optional<std::size_t> max_depth;
  const DocStore* docs = nullptr;
  std::size_t text_limit = 80;
};

std::string export_tree(const CobwebTree& tree, const ExportOptions& options = {});

}  // namespace cobweb
