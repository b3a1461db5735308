#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "../support/oracles.hpp"
#include "cobweb/errors.hpp"
#include "cobweb/eval.hpp"
#include "cobweb/synthetic.hpp"

using namespace cobweb;

namespace {

RankedResult ranked(const std::vector<std::string>& docs) {
  RankedResult r;
  for (const auto& d : docs) r.entries.push_back({d, 0.0, 0});
  return r;
}

// A retriever that replays fixed rankings keyed by the first query coordinate.
Retriever replay(std::vector<std::vector<std::string>> lists) {
  return [lists](std::span<const float> q, std::size_t k) {
    auto r = ranked(lists.at(static_cast<std::size_t>(q[0])));
    if (r.entries.size() > k) r.entries.resize(k);
    return r;
  };
}

}  // namespace

TEST_CASE("recall") {
  CHECK(recall_at_k(ranked({"d3", "x"}), {"d3"}, 5) == 1.0);
  CHECK(recall_at_k(ranked({"d3", "x", "y"}), {"d3", "d4"}, 5) == 0.5);
  CHECK(recall_at_k(ranked({"a", "b", "c", "d", "e", "d3"}), {"d3"}, 5) == 0.0);
  CHECK_THROWS_AS(recall_at_k(ranked({"a"}), {}, 5), ValidationError);
}

TEST_CASE("reciprocal rank") {
  CHECK(mrr_at_k(ranked({"a", "b", "c", "d3"}), {"d3"}, 5) == 0.25);
  CHECK(mrr_at_k(ranked({"d3"}), {"d3"}, 5) == 1.0);
  CHECK(mrr_at_k(ranked({"a", "b"}), {"d3"}, 5) == 0.0);
  CHECK(mrr_at_k(ranked({"a", "b", "d3"}), {"d3"}, 2) == 0.0);
}

TEST_CASE("nDCG") {
  CHECK(ndcg_at_k(ranked({"d1", "x"}), {{"d1", 1}}, 5) == 1.0);
  CHECK(ndcg_at_k(ranked({"x", "d1"}), {{"d1", 1}}, 5) == doctest::Approx(0.63093).epsilon(1e-5));
  CHECK(std::abs(ndcg_at_k(ranked({"x", "d1"}), {{"d1", 1}}, 5) - 1.0 / std::log2(3.0)) < 1e-12);
  const double graded = ndcg_at_k(ranked({"d2", "d1"}), {{"d1", 2}, {"d2", 1}}, 2);
  CHECK(graded == doctest::Approx(0.85972).epsilon(1e-5));
  CHECK(std::abs(graded - (1.0 + 2.0 / std::log2(3.0)) / (2.0 + 1.0 / std::log2(3.0))) < 1e-12);
  CHECK(ndcg_at_k(ranked({"d1", "d2", "d3"}), {{"d1", 3}, {"d2", 2}, {"d3", 1}}, 3) == 1.0);
  const double exp_gain = ndcg_at_k(ranked({"d2", "d1"}), {{"d1", 2}, {"d2", 1}}, 2, Gain::exponential);
  CHECK(std::abs(exp_gain - (1.0 + 3.0 / std::log2(3.0)) / (3.0 + 1.0 / std::log2(3.0))) < 1e-12);
  CHECK_THROWS_AS(ndcg_at_k(ranked({"d1"}), {{"d1", 0}}, 2), ValidationError);
}

TEST_CASE("metrics agree with the brute-force oracle and their invariants") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t pool = 1 + rng() % 25;
    std::vector<std::string> docs;
    for (std::size_t d = 0; d < pool; ++d) docs.push_back("d" + std::to_string(d));
    std::shuffle(docs.begin(), docs.end(), rng);
    std::map<std::string, int> grades;
    for (const auto& d : docs)
      if (rng() % 2) grades[d] = static_cast<int>(rng() % 4);
    grades[docs[rng() % pool]] = 1 + static_cast<int>(rng() % 3);
    std::vector<std::string> list(docs.begin(), docs.begin() + static_cast<std::ptrdiff_t>(rng() % (pool + 1)));
    const auto r = ranked(list);
    const auto rel = relevant_set(grades);
    double previous_recall = 0.0;
    for (std::size_t k = 1; k <= 12; ++k) {
      const double rc = recall_at_k(r, rel, k), m = mrr_at_k(r, rel, k), n = ndcg_at_k(r, grades, k);
      CHECK(std::abs(rc - oracle::recall(list, grades, k)) < 1e-12);
      CHECK(std::abs(m - oracle::mrr(list, grades, k)) < 1e-12);
      CHECK(std::abs(n - oracle::ndcg(list, grades, k)) < 1e-12);
      CHECK(rc >= previous_recall);
      CHECK((m >= 0.0 && m <= 1.0 && n >= 0.0 && n <= 1.0 + 1e-12));
      previous_recall = rc;
    }
    std::vector<std::pair<int, std::string>> ideal;
    for (const auto& [d, g] : grades) ideal.emplace_back(-g, d);
    std::sort(ideal.begin(), ideal.end());
    std::vector<std::string> ideal_list;
    for (const auto& [g, d] : ideal) ideal_list.push_back(d);
    CHECK(ndcg_at_k(ranked(ideal_list), grades, 1 + rng() % 10) == 1.0);
  }
}

TEST_CASE("latency summary") {
  const auto s = summarize_latency({4.0, 1.0, 3.0, 2.0});
  CHECK(s.mean_ms == 2.5);
  CHECK(s.p50_ms == 2.5);
  CHECK(s.p95_ms == doctest::Approx(3.85));
  CHECK(s.samples == 4);
  CHECK(summarize_latency({}).samples == 0);
}

TEST_CASE("run_eval aggregates per query") {
  EmbeddingMatrix queries(1, {0.0f, 1.0f}, {"q1", "q2"});
  Qrels qrels;
  qrels.add("q1", "a", 1);
  qrels.add("q2", "b", 1);
  const auto run = run_eval(queries, qrels, Method::dot, replay({{"a", "x"}, {"x", "b"}}), {.cutoffs = {1, 5}});
  CHECK(run.report.query_count == 2);
  CHECK(run.report.per_cutoff.at(5).mrr == 0.75);
  CHECK(run.report.per_cutoff.at(5).recall == 1.0);
  CHECK(run.report.per_cutoff.at(1).recall == 0.5);
  CHECK(run.report.latency.samples == 2);
  REQUIRE(run.rankings.size() == 2);
  CHECK(rankings_to_tsv(run.rankings).rfind("q1\t1\ta\t0\n", 0) == 0);

  const auto perfect = run_eval(queries, qrels, Method::dot, replay({{"a"}, {"b"}}));
  for (const auto& [k, m] : perfect.report.per_cutoff) CHECK((m.recall == 1.0 && m.mrr == 1.0 && m.ndcg == 1.0));

  Qrels missing = qrels;
  missing.add("q9", "z", 1);
  missing.add("q8", "z", 1);
  try {
    run_eval(queries, missing, Method::dot, replay({{"a"}, {"b"}}));
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("q8") != std::string::npos);
    CHECK(std::string(e.what()).find("q9") != std::string::npos);
  }

  const auto json = nlohmann::json::parse(report_to_json(run.report));
  CHECK(json["method"] == "dot");
  CHECK(json["cutoffs"]["5"]["mrr"] == 0.75);
  CHECK(report_to_table(run.report).find("MRR") != std::string::npos);
}

TEST_CASE("synthetic report matches metrics recomputed from the rankings") {
  SyntheticSpec spec;
  spec.clusters = 5;
  spec.docs_per_cluster = 10;
  spec.dim = 8;
  spec.queries = 20;
  const auto data = make_clustered_dataset(spec);
  const FrozenTree tree(build_tree(data.corpus));
  for (Method m : {Method::dot, Method::pathsum, Method::bfs}) {
    const auto run = run_eval(data.queries, data.qrels, m, make_retriever(m, &tree, &data.corpus),
                              {.cutoffs = {5, 10}, .measure_latency = false});
    for (std::size_t k : {5ul, 10ul}) {
      double r = 0, mr = 0, nd = 0;
      for (const auto& q : run.rankings) {
        std::vector<std::string> list;
        for (const auto& e : q.result.entries) list.push_back(e.doc_id);
        const auto& g = data.qrels.grades(q.query_id);
        r += oracle::recall(list, g, k);
        mr += oracle::mrr(list, g, k);
        nd += oracle::ndcg(list, g, k);
      }
      const double n = static_cast<double>(run.rankings.size());
      CHECK(run.report.per_cutoff.at(k).recall == doctest::Approx(r / n).epsilon(1e-12));
      CHECK(run.report.per_cutoff.at(k).mrr == doctest::Approx(mr / n).epsilon(1e-12));
      CHECK(run.report.per_cutoff.at(k).ndcg == doctest::Approx(nd / n).epsilon(1e-12));
    }
  }
}

TEST_CASE("bench produces one row per size and method in ascending size order") {
  BenchOptions opts;
  opts.sizes = {400, 100};
  opts.methods = {Method::dot, Method::pathsum};
  opts.dim = 8;
  opts.queries = 5;
  const auto rows = bench_scaling(opts);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].size == 100);
  CHECK(rows[3].size == 400);
  for (const auto& r : rows) CHECK(r.latency.mean_ms > 0.0);
  CHECK(bench_to_tsv(rows).rfind("size\tmethod", 0) == 0);

  BenchOptions single;
  single.sizes = {1000};
  single.methods = {Method::dot};
  single.dim = 16;
  single.queries = 5;
  const auto one = bench_scaling(single);
  REQUIRE(one.size() == 1);
  CHECK(one[0].latency.mean_ms > 0.0);
}
