#include "cobweb/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "cobweb/errors.hpp"

namespace cobweb {

namespace {

const double kLog2PiE = std::log(2.0 * std::numbers::pi * std::numbers::e);
constexpr double kTieEpsilon = 1e-12;

double entropy_from_log_sum(std::size_t dim, double log_variance_sum) {
  return 0.5 * (static_cast<double>(dim) * kLog2PiE + log_variance_sum);
}

// Entropy of `s` after adding x, without materializing the updated stats.
double entropy_with(const GaussianStats& s, std::span<const double> x, double floor) {
  const double n1 = static_cast<double>(s.count + 1);
  double sum = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double delta = x[d] - s.mean[d];
    const double mean = s.mean[d] + delta / n1;
    const double m2 = s.m2[d] + delta * (x[d] - mean);
    sum += std::log(m2 / n1 + floor);
  }
  return entropy_from_log_sum(x.size(), sum);
}

// Entropy of a ∪ b ∪ {x}.
double entropy_merged_with(const GaussianStats& a, const GaussianStats& b, std::span<const double> x,
                           double floor) {
  const double na = static_cast<double>(a.count);
  const double nb = static_cast<double>(b.count);
  const double n = na + nb;
  const double n1 = n + 1.0;
  double sum = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double gap = b.mean[d] - a.mean[d];
    const double mean_ab = a.mean[d] + gap * nb / n;
    const double m2_ab = a.m2[d] + b.m2[d] + gap * gap * na * nb / n;
    const double delta = x[d] - mean_ab;
    const double mean = mean_ab + delta / n1;
    const double m2 = m2_ab + delta * (x[d] - mean);
    sum += std::log(m2 / n1 + floor);
  }
  return entropy_from_log_sum(x.size(), sum);
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

}  // namespace

GaussianStats GaussianStats::singleton(std::span<const double> x) {
  GaussianStats s;
  s.count = 1;
  s.mean.assign(x.begin(), x.end());
  s.m2.assign(x.size(), 0.0);
  return s;
}

GaussianStats GaussianStats::combine(const GaussianStats& a, const GaussianStats& b) {
  if (a.count == 0) return b;
  if (b.count == 0) return a;
  GaussianStats out(a.dim());
  out.count = a.count + b.count;
  const double na = static_cast<double>(a.count);
  const double nb = static_cast<double>(b.count);
  const double n = na + nb;
  for (std::size_t d = 0; d < a.dim(); ++d) {
    const double gap = b.mean[d] - a.mean[d];
    out.mean[d] = a.mean[d] + gap * nb / n;
    out.m2[d] = a.m2[d] + b.m2[d] + gap * gap * na * nb / n;
  }
  return out;
}

void GaussianStats::add(std::span<const double> x) {
  ++count;
  const double n = static_cast<double>(count);
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double delta = x[d] - mean[d];
    mean[d] += delta / n;
    m2[d] += delta * (x[d] - mean[d]);
  }
}

double gaussian_entropy(std::span<const double> variances) {
  double sum = 0.0;
  for (double v : variances) sum += std::log(v);
  return entropy_from_log_sum(variances.size(), sum);
}

double node_entropy(const GaussianStats& stats, double variance_floor) {
  double sum = 0.0;
  for (std::size_t d = 0; d < stats.dim(); ++d) sum += std::log(stats.variance(d, variance_floor));
  return entropy_from_log_sum(stats.dim(), sum);
}

double category_utility(const GaussianStats& parent, const GaussianStats& child, double variance_floor) {
  const double p = static_cast<double>(child.count) / static_cast<double>(parent.count);
  return p * (node_entropy(parent, variance_floor) - node_entropy(child, variance_floor));
}

void update_stats(ConceptNode& node, std::span<const double> x) { node.stats.add(x); }

const char* to_string(Operator op) {
  switch (op) {
    case Operator::add_to_best: return "add";
    case Operator::create_new: return "new";
    case Operator::merge: return "merge";
    case Operator::split: return "split";
  }
  return "?";
}

double Decision::chosen_score() const {
  switch (op) {
    case Operator::add_to_best: return add_score;
    case Operator::create_new: return new_score;
    case Operator::merge: return merge_score.value();
    case Operator::split: return split_score.value();
  }
  return add_score;
}

CobwebTree::CobwebTree(std::size_t dim, double variance_floor) : dim_(dim), variance_floor_(variance_floor) {
  if (dim == 0) throw ShapeError("tree dimension must be positive");
  if (!(variance_floor > 0.0) || !std::isfinite(variance_floor))
    throw ValidationError("variance floor must be positive and finite");
}

const ConceptNode& CobwebTree::node(NodeId id) const {
  if (!is_live(id)) throw ValidationError("no live node with id " + std::to_string(id));
  return nodes_[id];
}

NodeId CobwebTree::new_node(GaussianStats stats, std::optional<NodeId> parent) {
  const auto id = static_cast<NodeId>(nodes_.size());
  ConceptNode n;
  n.id = id;
  n.stats = std::move(stats);
  n.parent = parent;
  nodes_.push_back(std::move(n));
  live_.push_back(true);
  entropy_.push_back(node_entropy(nodes_.back().stats, variance_floor_));
  ++live_count_;
  return id;
}

NodeId CobwebTree::new_leaf(const std::string& doc_id, std::span<const double> x, std::optional<NodeId> parent) {
  const NodeId id = new_node(GaussianStats::singleton(x), parent);
  nodes_[id].leaf_doc = doc_id;
  leaf_of_.emplace(doc_id, id);
  return id;
}

void CobwebTree::set_stats_changed(NodeId id) { entropy_[id] = node_entropy(nodes_[id].stats, variance_floor_); }

void CobwebTree::replace_child(NodeId parent, NodeId old_child, std::span<const NodeId> replacement) {
  auto& kids = nodes_[parent].children;
  auto it = std::find(kids.begin(), kids.end(), old_child);
  const auto pos = it - kids.begin();
  kids.erase(it);
  kids.insert(kids.begin() + pos, replacement.begin(), replacement.end());
  for (NodeId r : replacement) nodes_[r].parent = parent;
}

NodeId CobwebTree::insert(const std::string& doc_id, std::span<const float> x, InsertTrace* trace) {
  std::vector<double> v(x.begin(), x.end());
  return insert(doc_id, std::span<const double>(v), trace);
}

NodeId CobwebTree::insert(const std::string& doc_id, std::span<const double> x, InsertTrace* trace) {
  if (x.size() != dim_)
    throw ShapeError("vector has dimension " + std::to_string(x.size()) + ", tree has " + std::to_string(dim_));
  for (double v : x)
    if (!std::isfinite(v)) throw ValidationError("non-finite value in vector for '" + doc_id + "'");
  if (leaf_of_.count(doc_id)) throw ValidationError("document '" + doc_id + "' already in tree");
  if (trace) trace->decisions.clear();

  auto finish = [&](NodeId leaf) {
    if (trace) trace->leaf = leaf;
    return leaf;
  };

  if (!root_) {
    root_ = new_leaf(doc_id, x, std::nullopt);
    return finish(*root_);
  }

  const double singleton_entropy = entropy_from_log_sum(dim_, static_cast<double>(dim_) * std::log(variance_floor_));
  NodeId current = *root_;
  for (;;) {
    if (nodes_[current].is_leaf()) {
      // Fringe split: the leaf's slot becomes an internal node over the old
      // leaf and a new leaf for x.
      const auto parent = nodes_[current].parent;
      const NodeId internal = new_node(nodes_[current].stats, parent);
      if (parent) {
        const NodeId repl[] = {internal};
        replace_child(*parent, current, repl);
      } else {
        root_ = internal;
      }
      nodes_[internal].children.push_back(current);
      nodes_[current].parent = internal;
      update_stats(nodes_[internal], x);
      set_stats_changed(internal);
      const NodeId leaf = new_leaf(doc_id, x, internal);
      nodes_[internal].children.push_back(leaf);
      return finish(leaf);
    }

    update_stats(nodes_[current], x);
    set_stats_changed(current);

    for (;;) {
      const ConceptNode& cur = nodes_[current];
      const double parent_entropy = entropy_[current];
      const double total = static_cast<double>(cur.count());
      auto term = [&](std::size_t count, double entropy) {
        return static_cast<double>(count) / total * (parent_entropy - entropy);
      };

      const std::size_t k = cur.children.size();
      std::vector<double> terms(k);
      double base = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const NodeId c = cur.children[i];
        terms[i] = term(nodes_[c].count(), entropy_[c]);
        base += terms[i];
      }

      std::size_t i1 = 0, i2 = k;
      double s1 = -std::numeric_limits<double>::infinity();
      double s2 = s1;
      for (std::size_t i = 0; i < k; ++i) {
        const auto& child = nodes_[cur.children[i]];
        const double s = (base - terms[i] + term(child.count() + 1, entropy_with(child.stats, x, variance_floor_))) /
                         static_cast<double>(k);
        if (s > s1) {
          i2 = i1; s2 = s1;
          i1 = i; s1 = s;
        } else if (s > s2) {
          i2 = i; s2 = s;
        }
      }
      if (i2 == i1) i2 = k;

      Decision decision;
      decision.node = current;
      decision.best1 = cur.children[i1];
      if (i2 < k) decision.best2 = cur.children[i2];
      decision.add_score = s1;
      decision.new_score = (base + term(1, singleton_entropy)) / static_cast<double>(k + 1);
      if (k > 2 && i2 < k) {
        const auto& a = nodes_[cur.children[i1]];
        const auto& b = nodes_[cur.children[i2]];
        const double merged = entropy_merged_with(a.stats, b.stats, x, variance_floor_);
        decision.merge_score =
            (base - terms[i1] - terms[i2] + term(a.count() + b.count() + 1, merged)) / static_cast<double>(k - 1);
      }
      const auto& best = nodes_[cur.children[i1]];
      if (!best.is_leaf()) {
        double sum = base - terms[i1];
        for (NodeId g : best.children) sum += term(nodes_[g].count(), entropy_[g]);
        decision.split_score = sum / static_cast<double>(k - 1 + best.children.size());
      }

      // Precedence add > new > merge > split; a later operator must win by more
      // than kTieEpsilon.
      double chosen = decision.add_score;
      decision.op = Operator::add_to_best;
      if (decision.new_score > chosen + kTieEpsilon) {
        decision.op = Operator::create_new;
        chosen = decision.new_score;
      }
      if (decision.merge_score && *decision.merge_score > chosen + kTieEpsilon) {
        decision.op = Operator::merge;
        chosen = *decision.merge_score;
      }
      if (decision.split_score && *decision.split_score > chosen + kTieEpsilon) {
        decision.op = Operator::split;
        chosen = *decision.split_score;
      }
      if (trace) trace->decisions.push_back(decision);

      switch (decision.op) {
        case Operator::add_to_best:
          current = decision.best1;
          break;
        case Operator::create_new: {
          const NodeId leaf = new_leaf(doc_id, x, current);
          nodes_[current].children.push_back(leaf);
          return finish(leaf);
        }
        case Operator::merge: {
          const NodeId a = decision.best1;
          const NodeId b = *decision.best2;
          const NodeId merged = new_node(GaussianStats::combine(nodes_[a].stats, nodes_[b].stats), current);
          auto& kids = nodes_[current].children;
          kids.erase(std::find(kids.begin(), kids.end(), b));
          const NodeId repl[] = {merged};
          replace_child(current, a, repl);
          nodes_[merged].children = {a, b};
          nodes_[a].parent = merged;
          nodes_[b].parent = merged;
          current = merged;
          break;
        }
        case Operator::split: {
          const NodeId gone = decision.best1;
          const std::vector<NodeId> grandchildren = nodes_[gone].children;
          replace_child(current, gone, grandchildren);
          nodes_[gone].children.clear();
          nodes_[gone].parent.reset();
          live_[gone] = false;
          --live_count_;
          continue;  // re-evaluate at the same node; x is already counted
        }
      }
      break;
    }
  }
}

std::optional<NodeId> CobwebTree::leaf_of(const std::string& doc_id) const {
  auto it = leaf_of_.find(doc_id);
  if (it == leaf_of_.end()) return std::nullopt;
  return it->second;
}

std::span<const double> CobwebTree::doc_vector(const std::string& doc_id) const {
  auto leaf = leaf_of(doc_id);
  if (!leaf) throw ValidationError("unknown document '" + doc_id + "'");
  return nodes_[*leaf].stats.mean;
}

std::vector<NodeId> CobwebTree::preorder() const {
  std::vector<NodeId> order;
  if (!root_) return order;
  order.reserve(live_count_);
  std::vector<NodeId> stack{*root_};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    order.push_back(id);
    const auto& kids = nodes_[id].children;
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  return order;
}

std::size_t CobwebTree::depth(NodeId id) const {
  std::size_t d = 0;
  for (auto p = node(id).parent; p; p = nodes_[*p].parent) ++d;
  return d;
}

CobwebTree CobwebTree::compacted() const {
  const auto order = preorder();
  std::vector<NodeId> remap(nodes_.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) remap[order[i]] = static_cast<NodeId>(i);
  std::vector<ConceptNode> out;
  out.reserve(order.size());
  for (NodeId old : order) {
    ConceptNode n = nodes_[old];
    n.id = remap[old];
    if (n.parent) n.parent = remap[*n.parent];
    for (auto& c : n.children) c = remap[c];
    out.push_back(std::move(n));
  }
  return from_nodes(dim_, variance_floor_, std::move(out));
}

CobwebTree CobwebTree::from_nodes(std::size_t dim, double variance_floor, std::vector<ConceptNode> nodes) {
  CobwebTree tree(dim, variance_floor);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto& n = nodes[i];
    if (n.id != i) throw ValidationError("node ids must be 0..n-1 in order");
    if (n.stats.dim() != dim || n.stats.m2.size() != dim) throw ShapeError("node " + std::to_string(i) + " has wrong dimension");
    for (NodeId c : n.children)
      if (c >= nodes.size()) throw ValidationError("node " + std::to_string(i) + " has out-of-range child");
    if (n.parent && *n.parent >= nodes.size()) throw ValidationError("node " + std::to_string(i) + " has out-of-range parent");
    if (n.leaf_doc && !tree.leaf_of_.emplace(*n.leaf_doc, n.id).second)
      throw ValidationError("document '" + *n.leaf_doc + "' appears in more than one leaf");
    tree.entropy_.push_back(node_entropy(n.stats, variance_floor));
  }
  tree.live_.assign(nodes.size(), true);
  tree.live_count_ = nodes.size();
  tree.nodes_ = std::move(nodes);
  if (!tree.nodes_.empty()) tree.root_ = 0;
  tree.check_invariants();
  return tree;
}

void CobwebTree::check_invariants(double tol) const {
  if (!root_) {
    if (live_count_ != 0 || !leaf_of_.empty()) throw ValidationError("empty tree has nodes");
    return;
  }
  if (nodes_[*root_].parent) throw ValidationError("root has a parent");
  std::vector<int> seen(nodes_.size(), 0);
  std::size_t leaves = 0;
  for (NodeId id : preorder()) {
    if (!live_[id]) throw ValidationError("dead node " + std::to_string(id) + " is reachable");
    if (++seen[id] > 1) throw ValidationError("node " + std::to_string(id) + " reachable twice");
    const auto& n = nodes_[id];
    const auto where = "node " + std::to_string(id) + ": ";
    if (n.count() == 0) throw ValidationError(where + "zero count");
    if (n.is_leaf()) {
      ++leaves;
      if (n.count() != 1) throw ValidationError(where + "leaf count != 1");
      if (!n.leaf_doc) throw ValidationError(where + "leaf without document");
      auto it = leaf_of_.find(*n.leaf_doc);
      if (it == leaf_of_.end() || it->second != id) throw ValidationError(where + "leaf index out of sync");
      for (double v : n.stats.m2)
        if (v != 0.0) throw ValidationError(where + "leaf m2 != 0");
      continue;
    }
    if (n.leaf_doc) throw ValidationError(where + "internal node holds a document");
    std::size_t sum = 0;
    for (NodeId c : n.children) {
      if (!nodes_[c].parent || *nodes_[c].parent != id) throw ValidationError(where + "child parent link broken");
      sum += nodes_[c].count();
    }
    if (sum != n.count()) throw ValidationError(where + "count != sum of child counts");
    for (std::size_t d = 0; d < dim_; ++d) {
      double weighted = 0.0;
      for (NodeId c : n.children) weighted += static_cast<double>(nodes_[c].count()) * nodes_[c].stats.mean[d];
      weighted /= static_cast<double>(n.count());
      if (!close(n.stats.mean[d], weighted, tol)) throw ValidationError(where + "mean != weighted child mean");
      if (n.stats.m2[d] < -tol) throw ValidationError(where + "negative m2");
    }
  }
  if (leaves != leaf_of_.size()) throw ValidationError("leaf count does not match document count");
  std::size_t reachable = 0;
  for (int s : seen) reachable += static_cast<std::size_t>(s);
  if (reachable != live_count_) throw ValidationError("unreachable live nodes");
}

FrozenTree::FrozenTree(const CobwebTree& tree) : dim_(tree.dim()), variance_floor_(tree.variance_floor()) {
  const auto order = tree.preorder();
  const std::size_t n = order.size();
  std::vector<NodeId> remap(tree.capacity(), 0);
  for (std::size_t i = 0; i < n; ++i) remap[order[i]] = static_cast<NodeId>(i);

  counts_.resize(n);
  parent_.resize(n);
  depth_.resize(n);
  leaf_doc_.assign(n, -1);
  child_begin_.assign(n + 1, 0);
  means_.resize(n * dim_);
  variances_.resize(n * dim_);
  inverse_variances_.resize(n * dim_);
  log_normalizers_.resize(n);

  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = tree.node(order[i]);
    counts_[i] = node.count();
    parent_[i] = node.parent ? static_cast<std::int64_t>(remap[*node.parent]) : -1;
    depth_[i] = parent_[i] < 0 ? 0 : depth_[static_cast<std::size_t>(parent_[i])] + 1;
    child_begin_[i] = child_list_.size();
    for (NodeId c : node.children) child_list_.push_back(remap[c]);
    if (node.leaf_doc) {
      leaf_doc_[i] = static_cast<std::int64_t>(docs_.size());
      docs_.push_back(*node.leaf_doc);
      leaves_.push_back(static_cast<NodeId>(i));
    }
    double log_sum = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double var = node.stats.variance(d, variance_floor_);
      means_[i * dim_ + d] = node.stats.mean[d];
      variances_[i * dim_ + d] = var;
      inverse_variances_[i * dim_ + d] = 1.0 / var;
      log_sum += log2pi + std::log(var);
    }
    log_normalizers_[i] = -0.5 * log_sum;
  }
  child_begin_[n] = child_list_.size();
}

std::vector<NodeId> FrozenTree::path(NodeId i) const {
  std::vector<NodeId> out;
  for (std::int64_t p = i; p >= 0; p = parent_[static_cast<std::size_t>(p)]) out.push_back(static_cast<NodeId>(p));
  std::reverse(out.begin(), out.end());
  return out;
}

CobwebTree build_tree(const EmbeddingMatrix& corpus, const BuildOptions& options) {
  CobwebTree tree(corpus.dim(), options.variance_floor);
  std::vector<std::size_t> order(corpus.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (options.shuffle_seed) {
    std::mt19937_64 rng(*options.shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  for (std::size_t i : order) tree.insert(corpus.id(i), corpus.row(i));
  return tree;
}

}  // namespace cobweb
