#pragma once

#include <cstdint>
#include <filesystem>

#include <Eigen/Dense>

#include "cobweb/embedding_io.hpp"

namespace cobweb {

struct WhiteningOptions {
  double threshold = 0.96;  // cumulative explained-variance target in (0, 1]
  bool use_ica = true;
  std::uint64_t seed = 0;
  int ica_max_iterations = 200;
  double ica_tolerance = 1e-4;
};

// y = ica_unmixing * diag(pca_scales) * pca_components * (x - mean)
struct WhiteningTransform {
  Eigen::VectorXd mean;              // D
  Eigen::MatrixXd pca_components;    // D' x D, orthonormal rows
  Eigen::VectorXd pca_scales;        // D'
  Eigen::MatrixXd ica_unmixing;      // D' x D' (identity without ICA)
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  double explained_variance_ratio = 1.0;
  bool use_ica = false;

  // Fit metadata, not persisted.
  bool ica_converged = true;
  int ica_iterations = 0;

  // Full linear map, output_dim x input_dim.
  Eigen::MatrixXd projection() const;
};

WhiteningTransform fit_whitening(const EmbeddingMatrix& corpus, const WhiteningOptions& options = {});
EmbeddingMatrix apply_whitening(const WhiteningTransform& transform, const EmbeddingMatrix& x);
Eigen::VectorXd apply_whitening(const WhiteningTransform& transform, const Eigen::VectorXd& x);

void write_transform(const WhiteningTransform& transform, const std::filesystem::path& path);
WhiteningTransform read_transform(const std::filesystem::path& path);

// Row-major float rows -> count x dim double matrix.
Eigen::MatrixXd to_eigen(const EmbeddingMatrix& m);

}  // namespace cobweb
