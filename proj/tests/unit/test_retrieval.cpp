#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "../support/oracles.hpp"
#include "cobweb/errors.hpp"
#include "cobweb/retrieval.hpp"
#include "cobweb/synthetic.hpp"

using namespace cobweb;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2 * std::numbers::pi);

std::vector<double> normal_vec(std::mt19937_64& rng, std::size_t dim, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(dim);
  for (auto& x : v) x = n(rng);
  return v;
}

CobwebTree four_point_tree() {
  CobwebTree t(2);
  t.insert("a1", std::vector<double>{0.0, 0.0});
  t.insert("a2", std::vector<double>{0.1, 0.0});
  t.insert("b1", std::vector<double>{10.0, 10.0});
  t.insert("b2", std::vector<double>{10.1, 10.0});
  return t;
}

std::vector<std::string> doc_ids(const RankedResult& r) {
  std::vector<std::string> out;
  for (const auto& e : r.entries) out.push_back(e.doc_id);
  return out;
}

}  // namespace

TEST_CASE("log likelihood closed forms") {
  const std::vector<double> mu{0.0, 0.0}, var{1.0, 1.0};
  CHECK(log_likelihood(mu, var, mu) == doctest::Approx(-1.837877).epsilon(1e-6));
  CHECK(log_likelihood(mu, var, mu) == doctest::Approx(-2 * kHalfLog2Pi).epsilon(1e-15));
  CHECK(log_likelihood(mu, var, std::vector<double>{1.0, 0.0}) == doctest::Approx(-2.337877).epsilon(1e-6));
  const std::vector<double> shifted_mu{3.0, -2.0}, shifted_x{4.0, -2.0};
  CHECK(log_likelihood(shifted_mu, var, shifted_x) ==
        doctest::Approx(log_likelihood(mu, var, std::vector<double>{1.0, 0.0})).epsilon(1e-15));
  CHECK_THROWS_AS(log_likelihood(mu, var, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("collocation score is twice the log likelihood") {
  ConceptNode n;
  n.stats = GaussianStats(1);
  n.stats.count = 1;
  CHECK(collocation_logscore(n, 1.0, std::vector<double>{0.0}) == doctest::Approx(-1.837877).epsilon(1e-6));

  std::mt19937_64 rng(1);
  const auto t = [&] {
    CobwebTree tree(3);
    for (int i = 0; i < 50; ++i) tree.insert("d" + std::to_string(i), normal_vec(rng, 3));
    return tree;
  }();
  const FrozenTree f(t);
  for (int q = 0; q < 20; ++q) {
    const auto x = normal_vec(rng, 3);
    const auto batched = score_all_nodes(f, x);
    for (NodeId i = 0; i < f.size(); ++i) {
      const double ll = log_likelihood(f, i, x);
      CHECK(collocation_logscore(f, i, x) == 2.0 * ll);
      CHECK(batched[i] == doctest::Approx(2.0 * ll).epsilon(1e-12));
    }
  }
}

TEST_CASE("common variance scaling preserves likelihood order") {
  std::mt19937_64 rng(2);
  const std::vector<double> x = normal_vec(rng, 4);
  std::vector<std::vector<double>> means;
  for (int i = 0; i < 30; ++i) means.push_back(normal_vec(rng, 4));
  auto order = [&](double v) {
    std::vector<double> var(4, v);
    std::vector<std::pair<double, int>> s;
    for (int i = 0; i < 30; ++i) s.emplace_back(-log_likelihood(means[i], var, x), i);
    std::sort(s.begin(), s.end());
    std::vector<int> out;
    for (auto& p : s) out.push_back(p.second);
    return out;
  };
  CHECK(order(0.5) == order(3.0));
}

TEST_CASE("best-first search") {
  CobwebTree one(2);
  one.insert("solo", std::vector<double>{1.0, 1.0});
  const FrozenTree single(one);
  const auto r1 = retrieve_bfs(single, std::vector<double>{0.0, 0.0}, {.k = 1});
  REQUIRE(r1.entries.size() == 1);
  CHECK(r1.entries[0].doc_id == "solo");

  const FrozenTree f(four_point_tree());
  CHECK(retrieve_bfs(f, std::vector<double>{0.0, 0.0}, {.k = 4, .n_max = 1}).entries.empty());

  const auto near_a = retrieve_bfs(f, std::vector<double>{0.05, 0.1}, {.k = 2, .n_max = f.size()});
  const auto near_ids = doc_ids(near_a);
  const std::set<std::string> top(near_ids.begin(), near_ids.end());
  CHECK(top == std::set<std::string>{"a1", "a2"});
  for (std::size_t r = 0; r < near_a.entries.size(); ++r) {
    CHECK(near_a.paths[r].back() == near_a.entries[r].node);
    CHECK(near_a.entries[r].score == collocation_logscore(f, near_a.entries[r].node, std::vector<double>{0.05, 0.1}));
  }
  const auto all = retrieve_bfs(f, std::vector<double>{0.05, 0.1}, {.k = 4, .n_max = f.size()});
  CHECK(doc_ids(all).size() == 4);
  CHECK((doc_ids(all)[2][0] == 'b' && doc_ids(all)[3][0] == 'b'));

  CHECK(retrieve_bfs(FrozenTree(CobwebTree(2)), std::vector<double>{0.0, 0.0}, {}).entries.empty());
  CHECK_THROWS_AS(retrieve_bfs(f, std::vector<double>{0.0, 0.0}, {.k = 0}), ValidationError);
}

TEST_CASE("best-first budget law") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    CobwebTree tree(3);
    const std::size_t n = 2 + rng() % 40;
    for (std::size_t i = 0; i < n; ++i) tree.insert("d" + std::to_string(i), normal_vec(rng, 3));
    const FrozenTree f(tree);
    const auto x = normal_vec(rng, 3);
    for (std::size_t budget : {1ul, 2ul, 5ul, 17ul, f.size()}) {
      const auto r = retrieve_bfs(f, x, {.k = n, .n_max = budget});
      CHECK(r.expansions <= budget);
      CHECK(r.entries.size() <= std::min(n, budget));
    }
    const auto d = retrieve_bfs(f, x, {.k = 3});
    CHECK(d.expansions <= default_n_max(3, f.size()));
  }
  CHECK(default_n_max(10, 1500) == 4 * 10 * 11);
}

TEST_CASE("path-sum prediction") {
  CobwebTree one(2);
  one.insert("solo", std::vector<double>{1.0, 1.0});
  const auto r1 = retrieve_pathsum(FrozenTree(one), std::vector<double>{5.0, 5.0}, {.k = 3});
  REQUIRE(r1.entries.size() == 1);
  CHECK(r1.entries[0].score == 0.0);

  CobwebTree two(1);
  two.insert("a", std::vector<double>{0.0});
  two.insert("b", std::vector<double>{1.0});
  const FrozenTree f2(two);
  const std::vector<double> x{0.9};
  const auto r2 = retrieve_pathsum(f2, x, {.k = 2});
  REQUIRE(r2.entries.size() == 2);
  CHECK(r2.entries[0].score == r2.entries[1].score);
  CHECK(r2.entries[0].score == doctest::Approx(collocation_logscore(f2, 0, x)).epsilon(1e-12));
  CHECK(r2.entries[0].node < r2.entries[1].node);

  const auto with_leaf = retrieve_pathsum(f2, x, {.k = 1, .include_leaf_score = true});
  CHECK(with_leaf.entries[0].doc_id == "b");
  const auto normalized = retrieve_pathsum(f2, x, {.k = 2, .depth_normalize = true});
  CHECK(normalized.entries[0].score == doctest::Approx(r2.entries[0].score).epsilon(1e-12));

  CHECK(retrieve_pathsum(FrozenTree(CobwebTree(2)), std::vector<double>{0.0, 0.0}, {}).entries.empty());
  CHECK_THROWS_AS(retrieve_pathsum(f2, x, {.k = 0}), ValidationError);
}

TEST_CASE("path-sum on an eight-leaf tree matches path enumeration") {
  std::mt19937_64 rng(4);
  CobwebTree t(2);
  for (int c = 0; c < 2; ++c)
    for (int s = 0; s < 2; ++s)
      for (int l = 0; l < 2; ++l) {
        const std::vector<double> x{10.0 * c + 2.0 * s + 0.3 * l, 5.0 * c - 1.0 * s + 0.2 * l};
        t.insert("c" + std::to_string(c) + std::to_string(s) + std::to_string(l), x);
      }
  const FrozenTree f(t);
  CHECK(f.leaf_count() == 8);
  for (int q = 0; q < 50; ++q) {
    const auto x = normal_vec(rng, 2, 6.0);
    const auto got = retrieve_pathsum(f, x, {.k = 8});
    const auto want = oracle::pathsum_ranking(f, x, 8);
    REQUIRE(got.entries.size() == want.size());
    for (std::size_t r = 0; r < want.size(); ++r) {
      CHECK(got.entries[r].node == want[r].leaf);
      CHECK(got.entries[r].score == doctest::Approx(want[r].score).epsilon(1e-12));
    }
  }
}

TEST_CASE("dot-product baseline") {
  EmbeddingMatrix basis(4);
  for (int i = 0; i < 4; ++i) {
    std::vector<float> e(4, 0.0f);
    e[i] = 1.0f;
    basis.append("e" + std::to_string(i + 1), e);
  }
  const auto r = retrieve_dot(basis, std::vector<float>{0, 1, 0, 0}, 1);
  REQUIRE(r.entries.size() == 1);
  CHECK(r.entries[0].doc_id == "e2");
  CHECK(r.entries[0].score == 1.0);

  const auto zero = retrieve_dot(basis, std::vector<float>{0, 0, 0, 0}, 3);
  CHECK(doc_ids(zero) == std::vector<std::string>{"e1", "e2", "e3"});
  CHECK(retrieve_dot(basis, std::vector<float>{1, 1, 1, 1}, 10).entries.size() == 4);
  CHECK(retrieve_dot(EmbeddingMatrix(4), std::vector<float>{1, 1, 1, 1}, 10).entries.empty());
  CHECK_THROWS_AS(retrieve_dot(basis, std::vector<float>{1, 1}, 1), ShapeError);
  CHECK_THROWS_AS(retrieve_dot(basis, std::vector<float>{1, 1, 1, 1}, 0), ValidationError);

  std::mt19937_64 rng(5);
  std::normal_distribution<float> n;
  EmbeddingMatrix m(8);
  for (int i = 0; i < 50; ++i) {
    std::vector<float> row(8);
    for (auto& v : row) v = n(rng);
    m.append("r" + std::to_string(i), row);
  }
  for (int q = 0; q < 20; ++q) {
    std::vector<float> x(8);
    for (auto& v : x) v = n(rng);
    const auto got = retrieve_dot(m, x, 50);
    const auto want = oracle::dot_ranking(m, x, 50);
    for (std::size_t i = 0; i < 50; ++i) CHECK(got.entries[i].doc_id == m.id(want[i].first));
  }
}

TEST_CASE("self-retrieval on the clustered benchmark") {
  SyntheticSpec spec;
  spec.queries = 1;
  const auto data = make_clustered_dataset(spec);
  const FrozenTree f(build_tree(data.corpus));
  std::size_t hits_bfs = 0, hits_leaf = 0, total = 0;
  for (std::size_t i = 0; i < data.corpus.count(); i += 5) {
    const auto row = data.corpus.row(i);
    const std::vector<double> x(row.begin(), row.end());
    const std::string& id = data.corpus.id(i);
    auto has = [&](const RankedResult& r) {
      for (const auto& e : r.entries)
        if (e.doc_id == id) return true;
      return false;
    };
    hits_bfs += has(retrieve_bfs(f, x, {.k = 10, .n_max = f.size()}));
    hits_leaf += has(retrieve_pathsum(f, x, {.k = 10, .include_leaf_score = true}));
    ++total;
  }
  CHECK(hits_bfs >= 0.95 * total);
  CHECK(hits_leaf >= 0.95 * total);
}

TEST_CASE("dot self-retrieval is rank 1 when rows share a norm") {
  std::mt19937_64 rng(6);
  EmbeddingMatrix m(16);
  for (int i = 0; i < 200; ++i) {
    auto v = normal_vec(rng, 16);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    std::vector<float> row;
    for (double x : v) row.push_back(static_cast<float>(x / std::sqrt(norm)));
    m.append("u" + std::to_string(i), row);
  }
  for (std::size_t i = 0; i < m.count(); ++i) CHECK(retrieve_dot(m, m.row(i), 1).entries[0].doc_id == m.id(i));
}
