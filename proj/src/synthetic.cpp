#include "cobweb/synthetic.hpp"

#include <cstdio>
#include <random>

namespace cobweb {

namespace {

std::string numbered(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%06zu", prefix, i);
  return buf;
}

}  // namespace

SyntheticDataset make_clustered_dataset(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> centers(spec.clusters * spec.dim);
  for (auto& c : centers) c = normal(rng);

  auto sample = [&](std::size_t cluster) {
    std::vector<float> row(spec.dim);
    for (std::size_t d = 0; d < spec.dim; ++d)
      row[d] = static_cast<float>(centers[cluster * spec.dim + d] + spec.sigma * normal(rng));
    return row;
  };

  SyntheticDataset out{EmbeddingMatrix(spec.dim), EmbeddingMatrix(spec.dim), {}, {}, {}, {}};
  std::vector<std::vector<std::string>> members(spec.clusters);
  const std::size_t n_docs = spec.clusters * spec.docs_per_cluster;
  std::vector<float> data;
  std::vector<std::string> ids;
  data.reserve(n_docs * spec.dim);
  for (std::size_t i = 0; i < n_docs; ++i) {
    const std::size_t cluster = i % spec.clusters;
    auto row = sample(cluster);
    data.insert(data.end(), row.begin(), row.end());
    ids.push_back(numbered('d', i));
    members[cluster].push_back(ids.back());
    out.doc_cluster.push_back(cluster);
    out.docs[ids.back()] = "synthetic document " + std::to_string(i) + " from topic " + std::to_string(cluster);
  }
  out.corpus = EmbeddingMatrix(spec.dim, std::move(data), std::move(ids));

  data.clear();
  ids.clear();
  for (std::size_t q = 0; q < spec.queries; ++q) {
    const std::size_t cluster = q % spec.clusters;
    auto row = sample(cluster);
    data.insert(data.end(), row.begin(), row.end());
    ids.push_back(numbered('q', q));
    out.query_cluster.push_back(cluster);
    for (const auto& doc : members[cluster]) out.qrels.add(ids.back(), doc, 1);
  }
  out.queries = EmbeddingMatrix(spec.dim, std::move(data), std::move(ids));
  return out;
}

}  // namespace cobweb
