#include "cobweb/embedding_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "binary_io.hpp"
#include "cobweb/errors.hpp"

namespace cobweb {

namespace {

constexpr char kMagic[5] = "CWEB";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

void check_finite(std::span<const float> values, std::size_t dim) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValidationError("non-finite value at row " + std::to_string(i / dim) + ", column " +
                            std::to_string(i % dim));
    }
  }
}

void check_unique(const std::vector<std::string>& ids) {
  std::unordered_set<std::string> seen;
  seen.reserve(ids.size());
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw ValidationError("duplicate id '" + id + "'");
  }
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int parse_relevance(const std::string& field, std::size_t line) {
  if (field.empty()) throw ParseError("empty relevance", line);
  int value = 0;
  for (char c : field) {
    if (c < '0' || c > '9') throw ParseError("relevance must be a non-negative integer: '" + field + "'", line);
    value = value * 10 + (c - '0');
    if (value > 1'000'000) throw ParseError("relevance out of range", line);
  }
  return value;
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t dim, std::vector<float> data, std::vector<std::string> ids)
    : dim_(dim), data_(std::move(data)), ids_(std::move(ids)) {
  if (dim_ == 0) throw ShapeError("embedding dimension must be positive");
  if (data_.size() != ids_.size() * dim_) {
    throw ConsistencyError("payload has " + std::to_string(data_.size()) + " values, expected " +
                           std::to_string(ids_.size()) + " x " + std::to_string(dim_));
  }
  check_unique(ids_);
  check_finite(data_, dim_);
}

std::size_t EmbeddingMatrix::find(const std::string& id) const {
  for (std::size_t i = 0; i < ids_.size(); ++i)
    if (ids_[i] == id) return i;
  return ids_.size();
}

void EmbeddingMatrix::append(const std::string& id, std::span<const float> values) {
  if (values.size() != dim_) throw ShapeError("row has dimension " + std::to_string(values.size()) +
                                              ", matrix has " + std::to_string(dim_));
  check_finite(values, dim_);
  if (find(id) != ids_.size()) throw ValidationError("duplicate id '" + id + "'");
  ids_.push_back(id);
  data_.insert(data_.end(), values.begin(), values.end());
}

bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.dim_ != b.dim_ || a.ids_ != b.ids_ || a.data_.size() != b.data_.size()) return false;
  // Bitwise comparison so that -0.0f and 0.0f are distinguished.
  return a.data_.empty() ||
         std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
}

std::filesystem::path ids_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".ids";
  return p;
}

void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  if (matrix.dim() == 0) throw ShapeError("embedding dimension must be positive");
  check_finite(matrix.data(), matrix.dim());
  check_unique(matrix.ids());
  for (const auto& id : matrix.ids()) {
    if (id.find('\n') != std::string::npos) throw ValidationError("id contains a newline: '" + id + "'");
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  detail::put_magic(out, kMagic);
  detail::put<std::uint32_t>(out, kVersion);
  detail::put<std::uint64_t>(out, matrix.count());
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(matrix.dim()));
  detail::put<std::uint8_t>(out, kDtypeF32);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(matrix.data().data()),
              static_cast<std::streamsize>(matrix.data().size() * sizeof(float)));
  } else {
    for (float v : matrix.data()) detail::put<float>(out, v);
  }
  if (!out) throw IoError("write failed: " + path.string());

  std::ofstream ids(ids_path(path), std::ios::binary | std::ios::trunc);
  if (!ids) throw IoError("cannot open " + ids_path(path).string() + " for writing");
  for (const auto& id : matrix.ids()) ids << id << '\n';
  if (!ids) throw IoError("write failed: " + ids_path(path).string());
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  detail::expect_magic(in, kMagic);
  auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kVersion) throw FormatError("unsupported embedding file version " + std::to_string(version));
  auto count = detail::get<std::uint64_t>(in, "count");
  auto dim = detail::get<std::uint32_t>(in, "dim");
  auto dtype = detail::get<std::uint8_t>(in, "dtype");
  if (dtype != kDtypeF32) throw FormatError("unsupported dtype " + std::to_string(dtype));
  if (dim == 0) throw FormatError("dimension must be positive");

  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  if (file_size < kEmbeddingHeaderBytes) throw ConsistencyError("truncated header in " + path.string());
  const std::uint64_t payload = file_size - kEmbeddingHeaderBytes;
  if (count > payload / (4ull * dim) + 1 || payload != count * dim * 4ull) {
    throw ConsistencyError("payload is " + std::to_string(payload) + " bytes, header implies " +
                           std::to_string(count) + " x " + std::to_string(dim) + " x 4");
  }
  in.seekg(static_cast<std::streamoff>(kEmbeddingHeaderBytes));
  std::vector<float> data(count * dim);
  if (!data.empty()) {
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(payload));
    if (!in) throw ConsistencyError("truncated payload in " + path.string());
    if constexpr (std::endian::native == std::endian::big) {
      for (auto& v : data) v = detail::byteswap_if_big(v);
    }
  }

  std::vector<std::string> ids;
  ids.reserve(count);
  const std::string text = slurp(ids_path(path));
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ids.emplace_back(text, start, end - start);
    start = end + 1;
  }
  if (ids.size() != count) {
    throw ConsistencyError("ids file has " + std::to_string(ids.size()) + " entries, matrix has " +
                           std::to_string(count) + " rows");
  }
  return EmbeddingMatrix(dim, std::move(data), std::move(ids));
}

void Qrels::add(const std::string& query_id, const std::string& doc_id, int relevance) {
  if (relevance < 0) throw ValidationError("negative relevance for " + query_id + "/" + doc_id);
  auto& grades = by_query_[query_id];
  auto [it, inserted] = grades.emplace(doc_id, relevance);
  if (!inserted) it->second = std::max(it->second, relevance);
}

void Qrels::validate() const {
  for (const auto& [query, grades] : by_query_) {
    bool positive = false;
    for (const auto& [doc, grade] : grades) positive |= grade >= 1;
    if (!positive) throw ValidationError("query '" + query + "' has no document with relevance >= 1");
  }
}

const Qrels::Grades& Qrels::grades(const std::string& query_id) const {
  auto it = by_query_.find(query_id);
  if (it == by_query_.end()) throw ValidationError("unknown query id '" + query_id + "'");
  return it->second;
}

std::size_t Qrels::entry_count() const {
  std::size_t n = 0;
  for (const auto& [q, grades] : by_query_) n += grades.size();
  return n;
}

Qrels parse_qrels(const std::string& text) {
  Qrels qrels;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;

    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw ParseError("expected 3 tab-separated fields", line_no);
    std::string query = line.substr(0, t1);
    std::string doc = line.substr(t1 + 1, t2 - t1 - 1);
    if (query.empty() || doc.empty()) throw ParseError("empty query or doc id", line_no);
    qrels.add(query, doc, parse_relevance(line.substr(t2 + 1), line_no));
  }
  qrels.validate();
  return qrels;
}

Qrels read_qrels(const std::filesystem::path& path) { return parse_qrels(slurp(path)); }

void write_qrels(const Qrels& qrels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& [query, grades] : qrels.queries())
    for (const auto& [doc, grade] : grades) out << query << '\t' << doc << '\t' << grade << '\n';
}

std::string escape_field(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_field(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\' && i + 1 < text.size()) {
      char n = text[i + 1];
      if (n == 't') { out += '\t'; ++i; continue; }
      if (n == 'n') { out += '\n'; ++i; continue; }
      if (n == '\\') { out += '\\'; ++i; continue; }
    }
    out += text[i];
  }
  return out;
}

DocStore parse_docstore(const std::string& text) {
  DocStore docs;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw ParseError("expected doc_id<TAB>text", line_no);
    auto id = line.substr(0, tab);
    if (!docs.emplace(id, unescape_field(line.substr(tab + 1))).second)
      throw ValidationError("duplicate doc id '" + id + "' at line " + std::to_string(line_no));
  }
  return docs;
}

DocStore read_docstore(const std::filesystem::path& path) { return parse_docstore(slurp(path)); }

void write_docstore(const DocStore& docs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& [id, text] : docs) out << id << '\t' << escape_field(text) << '\n';
}

}  // namespace cobweb
