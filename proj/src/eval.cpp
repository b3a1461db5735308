#include "cobweb/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "cobweb/errors.hpp"
#include "cobweb/synthetic.hpp"

namespace cobweb {

namespace {

using Clock = std::chrono::steady_clock;

void require_nonempty(const std::set<std::string>& relevant) {
  if (relevant.empty()) throw ValidationError("relevant set is empty");
}

double gain_of(int grade, Gain gain) {
  return gain == Gain::linear ? static_cast<double>(grade) : std::exp2(static_cast<double>(grade)) - 1.0;
}

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::string fmt(double v, const char* spec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::set<std::string> relevant_set(const Grades& grades) {
  std::set<std::string> out;
  for (const auto& [doc, grade] : grades)
    if (grade >= 1) out.insert(doc);
  return out;
}

double recall_at_k(const RankedResult& result, const std::set<std::string>& relevant, std::size_t k) {
  require_nonempty(relevant);
  const std::size_t n = std::min(k, result.entries.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += relevant.count(result.entries[i].doc_id);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double mrr_at_k(const RankedResult& result, const std::set<std::string>& relevant, std::size_t k) {
  require_nonempty(relevant);
  const std::size_t n = std::min(k, result.entries.size());
  for (std::size_t i = 0; i < n; ++i)
    if (relevant.count(result.entries[i].doc_id)) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

double ndcg_at_k(const RankedResult& result, const Grades& grades, std::size_t k, Gain gain) {
  std::vector<int> ideal;
  for (const auto& [doc, grade] : grades)
    if (grade > 0) ideal.push_back(grade);
  if (ideal.empty()) throw ValidationError("nDCG needs at least one positive grade");
  std::sort(ideal.begin(), ideal.end(), std::greater<>());

  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i)
    idcg += gain_of(ideal[i], gain) / std::log2(static_cast<double>(i) + 2.0);

  double dcg = 0.0;
  const std::size_t n = std::min(k, result.entries.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto it = grades.find(result.entries[i].doc_id);
    if (it != grades.end() && it->second > 0) dcg += gain_of(it->second, gain) / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

LatencyStats summarize_latency(std::vector<double> samples) {
  LatencyStats s;
  s.samples = samples.size();
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean_ms = sum / static_cast<double>(samples.size());
  s.p50_ms = percentile(samples, 0.50);
  s.p95_ms = percentile(samples, 0.95);
  return s;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["method"] = to_string(report.method);
  j["query_count"] = report.query_count;
  nlohmann::ordered_json cutoffs = nlohmann::ordered_json::object();
  for (const auto& [k, m] : report.per_cutoff)
    cutoffs[std::to_string(k)] = {{"recall", m.recall}, {"mrr", m.mrr}, {"ndcg", m.ndcg}};
  j["cutoffs"] = std::move(cutoffs);
  j["latency"] = {{"mean_ms", report.latency.mean_ms},
                  {"p50_ms", report.latency.p50_ms},
                  {"p95_ms", report.latency.p95_ms},
                  {"samples", report.latency.samples}};
  return j.dump(2) + "\n";
}

std::string report_to_table(const EvalReport& report) {
  std::ostringstream out;
  out << "method    @k   Recall     MRR    nDCG   (percent, " << report.query_count << " queries)\n";
  for (const auto& [k, m] : report.per_cutoff) {
    std::string name = to_string(report.method);
    name.resize(9, ' ');
    out << name << ' ' << fmt(static_cast<double>(k), "%3.0f") << ' ' << fmt(100.0 * m.recall, "%8.2f")
        << fmt(100.0 * m.mrr, "%8.2f") << fmt(100.0 * m.ndcg, "%8.2f") << '\n';
  }
  out << "latency ms: mean " << fmt(report.latency.mean_ms, "%.3f") << "  p50 "
      << fmt(report.latency.p50_ms, "%.3f") << "  p95 " << fmt(report.latency.p95_ms, "%.3f") << '\n';
  return out.str();
}

Retriever make_retriever(Method method, const FrozenTree* tree, const EmbeddingMatrix* corpus,
                         const RetrieverConfig& config) {
  switch (method) {
    case Method::dot:
      if (!corpus) throw ValidationError("dot retrieval needs a corpus");
      return [corpus](std::span<const float> q, std::size_t k) { return retrieve_dot(*corpus, q, k); };
    case Method::pathsum:
      if (!tree) throw ValidationError("pathsum retrieval needs a tree");
      return [tree, config](std::span<const float> q, std::size_t k) {
        std::vector<double> x(q.begin(), q.end());
        return retrieve_pathsum(*tree, x, {k, config.include_leaf_score, config.depth_normalize});
      };
    case Method::bfs:
      if (!tree) throw ValidationError("bfs retrieval needs a tree");
      return [tree, config](std::span<const float> q, std::size_t k) {
        std::vector<double> x(q.begin(), q.end());
        return retrieve_bfs(*tree, x, {k, config.n_max.value_or(0)});
      };
  }
  throw ValidationError("unknown method");
}

EvalRun run_eval(const EmbeddingMatrix& queries, const Qrels& qrels, Method method, const Retriever& retriever,
                 const EvalOptions& options) {
  if (options.cutoffs.empty()) throw ValidationError("at least one cutoff is required");
  for (std::size_t k : options.cutoffs)
    if (k == 0) throw ValidationError("cutoffs must be positive");
  const std::size_t k_max = *std::max_element(options.cutoffs.begin(), options.cutoffs.end());

  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < queries.count(); ++i) row_of.emplace(queries.id(i), i);
  std::vector<std::string> missing;
  for (const auto& [query, grades] : qrels.queries())
    if (!row_of.count(query)) missing.push_back(query);
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ...";
    throw ValidationError(std::to_string(missing.size()) + " qrels queries missing from query embeddings: " + list);
  }

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < queries.count(); ++i)
    if (qrels.contains(queries.id(i))) rows.push_back(i);

  if (options.measure_latency) {
    for (std::size_t w = 0; w < std::min(options.warmup, rows.size()); ++w) (void)retriever(queries.row(rows[w]), k_max);
  }

  EvalRun run;
  run.report.method = method;
  run.report.query_count = rows.size();
  std::vector<double> latencies;
  std::map<std::size_t, CutoffMetrics> sums;
  for (std::size_t k : options.cutoffs) sums[k] = {};

  for (std::size_t row : rows) {
    const auto start = Clock::now();
    RankedResult result = retriever(queries.row(row), k_max);
    const auto stop = Clock::now();
    if (options.measure_latency) latencies.push_back(std::chrono::duration<double, std::milli>(stop - start).count());

    const auto& grades = qrels.grades(queries.id(row));
    const auto relevant = relevant_set(grades);
    for (auto& [k, m] : sums) {
      m.recall += recall_at_k(result, relevant, k);
      m.mrr += mrr_at_k(result, relevant, k);
      m.ndcg += ndcg_at_k(result, grades, k, options.gain);
    }
    run.rankings.push_back({queries.id(row), std::move(result)});
  }

  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  for (auto& [k, m] : sums) run.report.per_cutoff[k] = {m.recall / n, m.mrr / n, m.ndcg / n};
  run.report.latency = summarize_latency(std::move(latencies));
  return run;
}

std::string rankings_to_tsv(const std::vector<QueryRanking>& rankings) {
  std::ostringstream out;
  for (const auto& r : rankings) {
    for (std::size_t i = 0; i < r.result.entries.size(); ++i) {
      const auto& e = r.result.entries[i];
      out << r.query_id << '\t' << (i + 1) << '\t' << e.doc_id << '\t' << fmt(e.score, "%.17g") << '\n';
    }
  }
  return out.str();
}

std::vector<BenchRow> bench_scaling(const BenchOptions& options) {
  std::vector<std::size_t> sizes = options.sizes;
  std::sort(sizes.begin(), sizes.end());
  std::vector<BenchRow> rows;
  for (std::size_t size : sizes) {
    SyntheticSpec spec;
    spec.docs_per_cluster = std::max<std::size_t>(1, std::min(options.docs_per_cluster, size));
    spec.clusters = std::max<std::size_t>(1, size / spec.docs_per_cluster);
    spec.docs_per_cluster = size / spec.clusters;
    spec.dim = options.dim;
    spec.sigma = options.sigma;
    spec.queries = options.queries;
    spec.seed = options.seed;
    const SyntheticDataset data = make_clustered_dataset(spec);

    std::optional<FrozenTree> frozen;
    double build_seconds = 0.0;
    auto ensure_tree = [&] {
      if (frozen) return;
      BuildOptions build;
      build.variance_floor = options.variance_floor;
      const auto start = Clock::now();
      const CobwebTree tree = build_tree(data.corpus, build);
      build_seconds = std::chrono::duration<double>(Clock::now() - start).count();
      frozen.emplace(tree);
    };

    for (Method method : options.methods) {
      if (method != Method::dot) ensure_tree();
      RetrieverConfig config;
      config.n_max = options.n_max ? options.n_max : (frozen ? std::optional(frozen->size()) : std::nullopt);
      const Retriever retrieve = make_retriever(method, frozen ? &*frozen : nullptr, &data.corpus, config);

      for (std::size_t w = 0; w < std::min<std::size_t>(10, data.queries.count()); ++w)
        (void)retrieve(data.queries.row(w), options.k);
      std::vector<double> samples;
      for (std::size_t t = 0; t < options.trials; ++t) {
        for (std::size_t q = 0; q < data.queries.count(); ++q) {
          const auto start = Clock::now();
          const RankedResult r = retrieve(data.queries.row(q), options.k);
          samples.push_back(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
          if (r.entries.empty()) throw Error("benchmark query returned no results");
        }
      }
      BenchRow row;
      row.size = data.corpus.count();
      row.method = method;
      row.node_count = method == Method::dot ? data.corpus.count() : frozen->size();
      row.build_seconds = method == Method::dot ? 0.0 : build_seconds;
      row.latency = summarize_latency(std::move(samples));
      rows.push_back(row);
    }
  }
  return rows;
}

std::string bench_to_tsv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "size\tmethod\tnodes\tbuild_s\tmean_ms\tp50_ms\tp95_ms\n";
  for (const auto& r : rows) {
    out << r.size << '\t' << to_string(r.method) << '\t' << r.node_count << '\t' << fmt(r.build_seconds, "%.3f") << '\t'
        << fmt(r.latency.mean_ms, "%.4f") << '\t' << fmt(r.latency.p50_ms, "%.4f") << '\t'
        << fmt(r.latency.p95_ms, "%.4f") << '\n';
  }
  return out.str();
}

}  // namespace cobweb
