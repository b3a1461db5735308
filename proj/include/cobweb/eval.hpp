#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cobweb/embedding_io.hpp"
#include "cobweb/retrieval.hpp"
#include "cobweb/tree.hpp"

namespace cobweb {

using Grades = std::map<std::string, int>;

enum class Gain { linear, exponential };

// All metrics look only at the first k entries of the result.
double recall_at_k(const RankedResult& result, const std::set<std::string>& relevant, std::size_t k);
double mrr_at_k(const RankedResult& result, const std::set<std::string>& relevant, std::size_t k);
double ndcg_at_k(const RankedResult& result, const Grades& grades, std::size_t k, Gain gain = Gain::linear);

std::set<std::string> relevant_set(const Grades& grades);

struct CutoffMetrics {
  double recall = 0.0;
  double mrr = 0.0;
  double ndcg = 0.0;
};

struct LatencyStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t samples = 0;
};

LatencyStats summarize_latency(std::vector<double> samples_ms);

struct EvalReport {
  Method method = Method::dot;
  std::map<std::size_t, CutoffMetrics> per_cutoff;
  std::size_t query_count = 0;
  LatencyStats latency;
};

std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

using Retriever = std::function<RankedResult(std::span<const float> query, std::size_t k)>;

struct RetrieverConfig {
  std::optional<std::size_t> n_max;
  bool include_leaf_score = false;
  bool depth_normalize = false;
};

// Tree methods need `tree`; dot needs `corpus`.
Retriever make_retriever(Method method, const FrozenTree* tree, const EmbeddingMatrix* corpus,
                         const RetrieverConfig& config = {});

struct EvalOptions {
  std::vector<std::size_t> cutoffs{5, 10};
  std::size_t warmup = 10;
  Gain gain = Gain::linear;
  bool measure_latency = true;
};

struct QueryRanking {
  std::string query_id;
  RankedResult result;
};

struct EvalRun {
  EvalReport report;
  std::vector<QueryRanking> rankings;
};

// Evaluates every qrels query (in query-matrix order) with k = max cutoff.
// Throws ValidationError listing qrels queries missing from `queries`.
EvalRun run_eval(const EmbeddingMatrix& queries, const Qrels& qrels, Method method, const Retriever& retriever,
                 const EvalOptions& options = {});

// query_id<TAB>rank<TAB>doc_id<TAB>score, rank starting at 1.
std::string rankings_to_tsv(const std::vector<QueryRanking>& rankings);

struct BenchOptions {
  std::vector<std::size_t> sizes{1000};
  std::vector<Method> methods{Method::dot, Method::pathsum, Method::bfs};
  std::size_t dim = 256;
  std::size_t docs_per_cluster = 50;
  double sigma = 0.3;
  std::size_t queries = 50;
  std::size_t trials = 1;
  std::size_t k = 10;
  std::optional<std::size_t> n_max;  // bfs budget; unset means the node count
  double variance_floor = kDefaultVarianceFloor;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::size_t size = 0;
  Method method = Method::dot;
  std::size_t node_count = 0;
  double build_seconds = 0.0;
  LatencyStats latency;
};

// Rows sorted by ascending size, then by the order of options.methods.
std::vector<BenchRow> bench_scaling(const BenchOptions& options);
std::string bench_to_tsv(const std::vector<BenchRow>& rows);

}  // namespace cobweb
