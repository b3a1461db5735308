#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cobweb {

// Dense row-major float32 matrix with one string id per row.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(std::size_t dim) : dim_(dim) {}
  // Validates: data.size() == ids.size() * dim, ids unique, values finite.
  EmbeddingMatrix(std::size_t dim, std::vector<float> data, std::vector<std::string> ids);

  std::size_t count() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return ids_.empty(); }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  const std::vector<float>& data() const noexcept { return data_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t i) const { return ids_[i]; }

  // Row index of `id`, or count() if absent. Linear scan.
  std::size_t find(const std::string& id) const;

  void append(const std::string& id, std::span<const float> values);

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

 private:
  std::size_t dim_ = 0;
  std::vector<float> data_;
  std::vector<std::string> ids_;
};

inline constexpr std::size_t kEmbeddingHeaderBytes = 4 + 4 + 8 + 4 + 1;

void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
std::filesystem::path ids_path(const std::filesystem::path& path);

// query_id -> (doc_id -> relevance). Every query has at least one doc with
// relevance >= 1.
class Qrels {
 public:
  using Grades = std::map<std::string, int>;

  void add(const std::string& query_id, const std::string& doc_id, int relevance);
  // Throws ValidationError naming the first query with no positive judgment.
  void validate() const;

  const std::map<std::string, Grades>& queries() const noexcept { return by_query_; }
  const Grades& grades(const std::string& query_id) const;
  bool contains(const std::string& query_id) const { return by_query_.count(query_id) != 0; }
  std::size_t size() const noexcept { return by_query_.size(); }
  std::size_t entry_count() const;

 private:
  std::map<std::string, Grades> by_query_;
};

Qrels read_qrels(const std::filesystem::path& path);
Qrels parse_qrels(const std::string& text);
void write_qrels(const Qrels& qrels, const std::filesystem::path& path);

using DocStore = std::map<std::string, std::string>;

DocStore read_docstore(const std::filesystem::path& path);
DocStore parse_docstore(const std::string& text);
void write_docstore(const DocStore& docs, const std::filesystem::path& path);

std::string escape_field(const std::string& text);
std::string unescape_field(const std::string& text);

}  // namespace cobweb
