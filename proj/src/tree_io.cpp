#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "cobweb/errors.hpp"
#include "cobweb/tree.hpp"

namespace cobweb {

namespace {

constexpr char kMagic[5] = "CWTR";
constexpr std::uint32_t kVersion = 1;

using nlohmann::json;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string truncate_utf8(const std::string& text, std::size_t limit) {
  // Count code points, never cutting inside a multi-byte sequence.
  std::size_t chars = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
      if (chars == limit) return text.substr(0, i);
      ++chars;
    }
  }
  return text;
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out;
}

}  // namespace

std::string tree_to_binary(const CobwebTree& input) {
  const CobwebTree tree = input.compacted();
  std::ostringstream out(std::ios::binary);
  detail::put_magic(out, kMagic);
  detail::put<std::uint32_t>(out, kVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tree.dim()));
  detail::put<double>(out, tree.variance_floor());
  detail::put<std::uint64_t>(out, tree.node_count());
  for (NodeId id = 0; id < tree.node_count(); ++id) {
    const auto& n = tree.node(id);
    detail::put<std::uint64_t>(out, n.count());
    detail::put<std::int64_t>(out, n.parent ? static_cast<std::int64_t>(*n.parent) : -1);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(n.children.size()));
    for (NodeId c : n.children) detail::put<std::uint32_t>(out, c);
    detail::put<std::uint8_t>(out, n.leaf_doc ? 1 : 0);
    if (n.leaf_doc) detail::put_string(out, *n.leaf_doc);
    for (double v : n.stats.mean) detail::put<double>(out, v);
    for (double v : n.stats.m2) detail::put<double>(out, v);
  }
  return std::move(out).str();
}

CobwebTree tree_from_binary(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  detail::expect_magic(in, kMagic);
  const auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kVersion) throw FormatError("unsupported tree version " + std::to_string(version));
  const std::size_t dim = detail::get<std::uint32_t>(in, "dim");
  const double floor = detail::get<double>(in, "variance_floor");
  const auto count = detail::get<std::uint64_t>(in, "node count");
  if (dim == 0) throw FormatError("tree dimension must be positive");
  if (count > bytes.size()) throw ConsistencyError("node count exceeds file size");

  std::vector<ConceptNode> nodes;
  nodes.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    ConceptNode n;
    n.id = static_cast<NodeId>(i);
    n.stats = GaussianStats(dim);
    n.stats.count = detail::get<std::uint64_t>(in, "count");
    const auto parent = detail::get<std::int64_t>(in, "parent");
    if (parent >= 0) n.parent = static_cast<NodeId>(parent);
    const auto kids = detail::get<std::uint32_t>(in, "child count");
    if (kids > count) throw ConsistencyError("child count exceeds node count");
    n.children.resize(kids);
    for (auto& c : n.children) c = detail::get<std::uint32_t>(in, "child");
    if (detail::get<std::uint8_t>(in, "leaf flag")) n.leaf_doc = detail::get_string(in, "leaf doc");
    for (auto& v : n.stats.mean) v = detail::get<double>(in, "mean");
    for (auto& v : n.stats.m2) v = detail::get<double>(in, "m2");
    nodes.push_back(std::move(n));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ConsistencyError("trailing bytes after tree");
  return CobwebTree::from_nodes(dim, floor, std::move(nodes));
}

std::string tree_to_json(const CobwebTree& input) {
  const CobwebTree tree = input.compacted();
  json doc;
  doc["format"] = "cobweb-tree";
  doc["version"] = kVersion;
  doc["dim"] = tree.dim();
  doc["variance_floor"] = tree.variance_floor();
  json nodes = json::array();
  json vectors = json::object();
  for (NodeId id = 0; id < tree.node_count(); ++id) {
    const auto& n = tree.node(id);
    json j;
    j["id"] = id;
    j["count"] = n.count();
    j["depth"] = tree.depth(id);
    j["parent"] = n.parent ? json(*n.parent) : json(nullptr);
    j["children"] = n.children;
    if (n.leaf_doc) {
      j["doc_id"] = *n.leaf_doc;
      vectors[*n.leaf_doc] = n.stats.mean;
    }
    j["mean"] = n.stats.mean;
    j["m2"] = n.stats.m2;
    nodes.push_back(std::move(j));
  }
  doc["nodes"] = std::move(nodes);
  doc["doc_vectors"] = std::move(vectors);
  return doc.dump();
}

CobwebTree tree_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid tree JSON: ") + e.what());
  }
  try {
    if (doc.at("format") != "cobweb-tree") throw FormatError("not a cobweb tree document");
    if (doc.at("version").get<std::uint32_t>() != kVersion) throw FormatError("unsupported tree version");
    const auto dim = doc.at("dim").get<std::size_t>();
    const auto floor = doc.at("variance_floor").get<double>();
    std::vector<ConceptNode> nodes;
    for (const auto& j : doc.at("nodes")) {
      ConceptNode n;
      n.id = j.at("id").get<NodeId>();
      n.stats.count = j.at("count").get<std::size_t>();
      if (!j.at("parent").is_null()) n.parent = j.at("parent").get<NodeId>();
      n.children = j.at("children").get<std::vector<NodeId>>();
      if (j.contains("doc_id")) n.leaf_doc = j.at("doc_id").get<std::string>();
      n.stats.mean = j.at("mean").get<std::vector<double>>();
      n.stats.m2 = j.at("m2").get<std::vector<double>>();
      nodes.push_back(std::move(n));
    }
    return CobwebTree::from_nodes(dim, floor, std::move(nodes));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed tree JSON: ") + e.what());
  }
}

void save_tree(const CobwebTree& tree, const std::filesystem::path& path) {
  const std::string bytes = path.extension() == ".json" ? tree_to_json(tree) : tree_to_binary(tree);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

CobwebTree load_tree(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  if (bytes.size() >= 4 && bytes.compare(0, 4, "CWTR") == 0) return tree_from_binary(bytes);
  return tree_from_json(bytes);
}

std::string export_tree(const CobwebTree& input, const ExportOptions& options) {
  const CobwebTree tree = input.compacted();
  const auto visible = [&](NodeId id) { return !options.max_depth || tree.depth(id) <= *options.max_depth; };
  const auto text_of = [&](const ConceptNode& n) -> std::optional<std::string> {
    if (!options.docs || !n.leaf_doc) return std::nullopt;
    auto it = options.docs->find(*n.leaf_doc);
    if (it == options.docs->end()) return std::nullopt;
    return truncate_utf8(it->second, options.text_limit);
  };

  if (options.format == ExportFormat::json) {
    json nodes = json::array();
    for (NodeId id = 0; id < tree.node_count(); ++id) {
      if (!visible(id)) continue;
      const auto& n = tree.node(id);
      json j;
      j["id"] = id;
      j["count"] = n.count();
      j["depth"] = tree.depth(id);
      std::vector<NodeId> kids;
      for (NodeId c : n.children)
        if (visible(c)) kids.push_back(c);
      j["children"] = kids;
      if (n.leaf_doc) j["doc_id"] = *n.leaf_doc;
      if (auto text = text_of(n)) j["text"] = *text;
      nodes.push_back(std::move(j));
    }
    json doc;
    doc["dim"] = tree.dim();
    doc["nodes"] = std::move(nodes);
    return doc.dump(2) + "\n";
  }

  std::ostringstream out;
  out << "digraph cobweb {\n";
  for (NodeId id = 0; id < tree.node_count(); ++id) {
    if (!visible(id)) continue;
    const auto& n = tree.node(id);
    std::string label = "#" + std::to_string(id) + " n=" + std::to_string(n.count());
    if (n.leaf_doc) {
      label += "\\n" + dot_escape(*n.leaf_doc);
      if (auto text = text_of(n)) label += "\\n" + dot_escape(*text);
    }
    out << "  n" << id << " [label=\"" << label << "\"" << (n.leaf_doc ? ", shape=box" : "") << "];\n";
  }
  for (NodeId id = 0; id < tree.node_count(); ++id) {
    if (!visible(id)) continue;
    for (NodeId c : tree.node(id).children)
      if (visible(c)) out << "  n" << id << " -> n" << c << ";\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace cobweb
