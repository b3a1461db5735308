#pragma once

#include <cstdint>
#include <vector>

#include "cobweb/embedding_io.hpp"

namespace cobweb {

// Isotropic Gaussian clusters with centers drawn from N(0, I).
struct SyntheticSpec {
  std::size_t clusters = 20;
  std::size_t docs_per_cluster = 50;
  std::size_t dim = 32;
  double sigma = 0.3;
  std::size_t queries = 200;
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  EmbeddingMatrix corpus;
  EmbeddingMatrix queries;
  Qrels qrels;  // each query: every doc of its cluster at grade 1
  DocStore docs;
  std::vector<std::size_t> doc_cluster;
  std::vector<std::size_t> query_cluster;
};

SyntheticDataset make_clustered_dataset(const SyntheticSpec& spec);

}  // namespace cobweb
