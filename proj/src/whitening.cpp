#include "cobweb/whitening.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

#include "binary_io.hpp"
#include "cobweb/errors.hpp"

namespace cobweb {

namespace {

constexpr char kMagic[5] = "CWWT";
constexpr std::uint32_t kVersion = 1;
constexpr double kSingularFloor = 1e-8;

// Deflationary FastICA with the logcosh contrast on already-whitened rows.
// Returns the D' x D' unmixing matrix with orthonormal rows.
Eigen::MatrixXd fast_ica(const Eigen::MatrixXd& z, const WhiteningOptions& options, bool& converged,
                         int& iterations) {
  const auto n = z.rows();
  const auto d = z.cols();
  Eigen::MatrixXd w_all = Eigen::MatrixXd::Zero(d, d);
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  converged = true;
  iterations = 0;
  auto decorrelate = [&](Eigen::VectorXd& w, Eigen::Index p) {
    for (Eigen::Index j = 0; j < p; ++j) w -= w.dot(w_all.row(j).transpose()) * w_all.row(j).transpose();
    w.normalize();
  };

  for (Eigen::Index p = 0; p < d; ++p) {
    Eigen::VectorXd w(d);
    for (Eigen::Index i = 0; i < d; ++i) w[i] = normal(rng);
    decorrelate(w, p);

    bool done = false;
    int it = 0;
    for (; it < options.ica_max_iterations && !done; ++it) {
      Eigen::ArrayXd u = (z * w).array().tanh();
      const double mean_derivative = (1.0 - u.square()).mean();
      Eigen::VectorXd next = (z.transpose() * u.matrix()) / static_cast<double>(n) - mean_derivative * w;
      decorrelate(next, p);
      done = std::abs(std::abs(next.dot(w)) - 1.0) < options.ica_tolerance;
      w = next;
    }
    iterations = std::max(iterations, it);
    if (!done) converged = false;
    w_all.row(p) = w.transpose();
  }
  return w_all;
}

}  // namespace

Eigen::MatrixXd WhiteningTransform::projection() const {
  return ica_unmixing * pca_scales.asDiagonal() * pca_components;
}

Eigen::MatrixXd to_eigen(const EmbeddingMatrix& m) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.count()), static_cast<Eigen::Index>(m.dim()));
  for (std::size_t i = 0; i < m.count(); ++i) {
    auto row = m.row(i);
    for (std::size_t j = 0; j < m.dim(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  return out;
}

WhiteningTransform fit_whitening(const EmbeddingMatrix& corpus, const WhiteningOptions& options) {
  if (corpus.count() < 2) throw FitError("whitening needs at least 2 rows, got " + std::to_string(corpus.count()));
  if (!(options.threshold > 0.0 && options.threshold <= 1.0))
    throw ValidationError("whitening threshold must be in (0, 1], got " + std::to_string(options.threshold));

  const auto n = static_cast<double>(corpus.count());
  Eigen::MatrixXd x = to_eigen(corpus);
  WhiteningTransform t;
  t.input_dim = corpus.dim();
  t.use_ica = options.use_ica;
  t.mean = x.colwise().mean().transpose();
  x.rowwise() -= t.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s[0] <= 0.0) throw FitError("corpus has zero variance");

  Eigen::Index usable = 0;
  while (usable < s.size() && s[usable] >= kSingularFloor * s[0]) ++usable;

  const double total = s.squaredNorm();
  double cumulative = 0.0;
  Eigen::Index keep = 0;
  while (keep < usable) {
    cumulative += s[keep] * s[keep];
    ++keep;
    if (cumulative / total >= options.threshold - 1e-12) break;
  }
  if (keep == 0) throw FitError("no principal component survives the singular value floor");

  t.output_dim = static_cast<std::size_t>(keep);
  t.explained_variance_ratio = std::min(1.0, cumulative / total);
  t.pca_components = svd.matrixV().leftCols(keep).transpose();
  for (Eigen::Index r = 0; r < keep; ++r) {
    Eigen::Index arg = 0;
    t.pca_components.row(r).cwiseAbs().maxCoeff(&arg);
    if (t.pca_components(r, arg) < 0) t.pca_components.row(r) *= -1.0;
  }
  // Population convention: variance_i = s_i^2 / n.
  t.pca_scales = (std::sqrt(n) / s.head(keep).array()).matrix();

  t.ica_unmixing = Eigen::MatrixXd::Identity(keep, keep);
  if (options.use_ica) {
    Eigen::MatrixXd z = x * t.pca_components.transpose() * t.pca_scales.asDiagonal();
    Eigen::MatrixXd w = fast_ica(z, options, t.ica_converged, t.ica_iterations);
    if (!t.ica_converged) {
      std::clog << "warning: FastICA did not converge within " << options.ica_max_iterations
                << " iterations; using the last iterate\n";
    }
    // Rescale each recovered component to unit variance on the fitting data.
    Eigen::MatrixXd y = z * w.transpose();
    Eigen::ArrayXd sd = (y.array().square().colwise().sum() / n).sqrt().transpose();
    for (Eigen::Index r = 0; r < keep; ++r)
      if (sd[r] > 0) w.row(r) /= sd[r];
    t.ica_unmixing = w;
  }
  return t;
}

Eigen::VectorXd apply_whitening(const WhiteningTransform& transform, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != transform.input_dim)
    throw ShapeError("whitening expects dimension " + std::to_string(transform.input_dim) + ", got " +
                     std::to_string(x.size()));
  return transform.ica_unmixing *
         (transform.pca_scales.asDiagonal() * (transform.pca_components * (x - transform.mean)));
}

EmbeddingMatrix apply_whitening(const WhiteningTransform& transform, const EmbeddingMatrix& x) {
  if (x.dim() != transform.input_dim)
    throw ShapeError("whitening expects dimension " + std::to_string(transform.input_dim) + ", got " +
                     std::to_string(x.dim()));
  EmbeddingMatrix out(transform.output_dim);
  if (x.empty()) return out;

  Eigen::MatrixXd centered = to_eigen(x);
  centered.rowwise() -= transform.mean.transpose();
  Eigen::MatrixXd y = centered * transform.pca_components.transpose();
  y = y * transform.pca_scales.asDiagonal();
  y = y * transform.ica_unmixing.transpose();

  std::vector<float> data(x.count() * transform.output_dim);
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < y.cols(); ++j)
      data[static_cast<std::size_t>(i) * transform.output_dim + static_cast<std::size_t>(j)] =
          static_cast<float>(y(i, j));
  return EmbeddingMatrix(transform.output_dim, std::move(data), x.ids());
}

void write_transform(const WhiteningTransform& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  detail::put_magic(out, kMagic);
  detail::put<std::uint32_t>(out, kVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.input_dim));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.output_dim));
  detail::put<std::uint8_t>(out, t.use_ica ? 1 : 0);
  for (Eigen::Index i = 0; i < t.mean.size(); ++i) detail::put<double>(out, t.mean[i]);
  for (Eigen::Index r = 0; r < t.pca_components.rows(); ++r)
    for (Eigen::Index c = 0; c < t.pca_components.cols(); ++c) detail::put<double>(out, t.pca_components(r, c));
  for (Eigen::Index i = 0; i < t.pca_scales.size(); ++i) detail::put<double>(out, t.pca_scales[i]);
  for (Eigen::Index r = 0; r < t.ica_unmixing.rows(); ++r)
    for (Eigen::Index c = 0; c < t.ica_unmixing.cols(); ++c) detail::put<double>(out, t.ica_unmixing(r, c));
  if (!out) throw IoError("write failed: " + path.string());
}

WhiteningTransform read_transform(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  detail::expect_magic(in, kMagic);
  auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kVersion) throw FormatError("unsupported transform version " + std::to_string(version));
  WhiteningTransform t;
  t.input_dim = detail::get<std::uint32_t>(in, "input_dim");
  t.output_dim = detail::get<std::uint32_t>(in, "output_dim");
  t.use_ica = detail::get<std::uint8_t>(in, "use_ica") != 0;
  if (t.input_dim == 0 || t.output_dim == 0 || t.output_dim > t.input_dim)
    throw FormatError("invalid transform dimensions");
  const auto d = static_cast<Eigen::Index>(t.input_dim);
  const auto k = static_cast<Eigen::Index>(t.output_dim);
  t.mean.resize(d);
  t.pca_components.resize(k, d);
  t.pca_scales.resize(k);
  t.ica_unmixing.resize(k, k);
  for (Eigen::Index i = 0; i < d; ++i) t.mean[i] = detail::get<double>(in, "mean");
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < d; ++c) t.pca_components(r, c) = detail::get<double>(in, "pca_components");
  for (Eigen::Index i = 0; i < k; ++i) t.pca_scales[i] = detail::get<double>(in, "pca_scales");
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < k; ++c) t.ica_unmixing(r, c) = detail::get<double>(in, "ica_unmixing");
  if (in.peek() != std::char_traits<char>::eof()) throw ConsistencyError("trailing bytes in " + path.string());
  t.explained_variance_ratio = 0.0;  // not persisted
  return t;
}

}  // namespace cobweb
