#include "cobweb/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cobweb/embedding_io.hpp"
#include "cobweb/errors.hpp"
#include "cobweb/eval.hpp"
#include "cobweb/retrieval.hpp"
#include "cobweb/synthetic.hpp"
#include "cobweb/tree.hpp"
#include "cobweb/whitening.hpp"

namespace cobweb {

namespace {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to `path`, or to `fallback` when path is empty.
void emit(const std::string& path, std::ostream& fallback, const std::string& text) {
  if (path.empty()) {
    fallback << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool truthy(const std::string& v) { return v == "1" || v == "true" || v == "yes" || v == "on"; }

EmbeddingMatrix load_queries(const RunConfig& cfg) {
  EmbeddingMatrix q = read_embeddings(cfg.queries);
  if (!cfg.transform.empty()) q = apply_whitening(read_transform(cfg.transform), q);
  return q;
}

// Dot retrieval over the leaf vectors of a tree, used when no corpus file is given.
EmbeddingMatrix corpus_from_tree(const FrozenTree& tree) {
  std::vector<float> data;
  std::vector<std::string> ids;
  for (NodeId leaf : tree.leaves()) {
    for (double v : tree.mean(leaf)) data.push_back(static_cast<float>(v));
    ids.push_back(tree.leaf_doc(leaf));
  }
  return EmbeddingMatrix(tree.dim(), std::move(data), std::move(ids));
}

struct Index {
  std::optional<FrozenTree> tree;
  std::optional<EmbeddingMatrix> corpus;
};

Index load_index(const RunConfig& cfg, Method method) {
  Index index;
  if (method == Method::dot) {
    if (!cfg.corpus.empty()) {
      index.corpus = read_embeddings(cfg.corpus);
    } else if (!cfg.tree.empty()) {
      index.tree.emplace(load_tree(cfg.tree));
      index.corpus = corpus_from_tree(*index.tree);
    } else {
      throw ValidationError("dot retrieval needs --corpus or --tree");
    }
  } else {
    if (cfg.tree.empty()) throw ValidationError(std::string(to_string(method)) + " retrieval needs --tree");
    index.tree.emplace(load_tree(cfg.tree));
  }
  return index;
}

RetrieverConfig retriever_config(const RunConfig& cfg) {
  RetrieverConfig rc;
  rc.n_max = cfg.n_max;
  rc.include_leaf_score = cfg.include_leaf_score;
  rc.depth_normalize = cfg.depth_normalize;
  return rc;
}

void cmd_whiten(const RunConfig& cfg, std::ostream& err) {
  if (!cfg.input.empty()) {
    if (cfg.transform.empty()) throw ValidationError("--in requires --transform");
    const auto t = read_transform(cfg.transform);
    write_embeddings(apply_whitening(t, read_embeddings(cfg.input)), cfg.out);
    return;
  }
  if (cfg.corpus.empty()) throw ValidationError("whiten needs --corpus (fit) or --in with --transform (apply)");
  const EmbeddingMatrix corpus = read_embeddings(cfg.corpus);
  WhiteningOptions opts;
  opts.threshold = cfg.whiten_threshold;
  opts.use_ica = cfg.use_ica;
  opts.seed = cfg.ica_seed.value_or(cfg.seed);
  const WhiteningTransform t = fit_whitening(corpus, opts);
  write_embeddings(apply_whitening(t, corpus), cfg.out);
  if (!cfg.transform.empty()) write_transform(t, cfg.transform);
  err << "whitened " << corpus.count() << " rows: " << t.input_dim << " -> " << t.output_dim
      << " dims, explained variance " << t.explained_variance_ratio
      << (t.use_ica ? (t.ica_converged ? ", ICA converged" : ", ICA did not converge") : "") << '\n';
}

void cmd_build(const RunConfig& cfg, std::ostream& err) {
  EmbeddingMatrix corpus = read_embeddings(cfg.corpus);
  if (!cfg.transform.empty()) corpus = apply_whitening(read_transform(cfg.transform), corpus);
  BuildOptions opts;
  opts.variance_floor = cfg.variance_floor;
  opts.shuffle_seed = cfg.shuffle_seed;
  const auto start = std::chrono::steady_clock::now();
  const CobwebTree tree = build_tree(corpus, opts);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  save_tree(tree, cfg.out);
  err << "built tree: " << tree.leaf_count() << " leaves, " << tree.node_count() << " nodes in " << seconds
      << " s\n";
}

void cmd_query(const RunConfig& cfg, std::ostream& out) {
  const Method method = parse_method(cfg.method);
  const Index index = load_index(cfg, method);
  const EmbeddingMatrix queries = load_queries(cfg);
  const Retriever retrieve = make_retriever(method, index.tree ? &*index.tree : nullptr,
                                            index.corpus ? &*index.corpus : nullptr, retriever_config(cfg));

  std::ostringstream text;
  text.precision(17);
  for (std::size_t q = 0; q < queries.count(); ++q) {
    const RankedResult result = retrieve(queries.row(q), cfg.k);
    for (std::size_t r = 0; r < result.entries.size(); ++r) {
      const auto& e = result.entries[r];
      text << queries.id(q) << '\t' << (r + 1) << '\t' << e.doc_id << '\t' << e.score << '\n';
    }
    if (!cfg.explain || !index.tree || result.paths.empty()) continue;
    const auto row = queries.row(q);
    const std::vector<double> x(row.begin(), row.end());
    for (std::size_t r = 0; r < result.entries.size(); ++r) {
      text << "# " << queries.id(q) << '\t' << (r + 1) << '\t' << result.entries[r].doc_id << "\tpath:";
      for (NodeId n : result.paths[r]) {
        text << " n" << n << "(count=" << index.tree->count(n)
             << ",score=" << collocation_logscore(*index.tree, n, x) << ")";
      }
      text << '\n';
    }
  }
  emit(cfg.out, out, text.str());
}

void cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Method method = parse_method(cfg.method);
  const Index index = load_index(cfg, method);
  const EmbeddingMatrix queries = load_queries(cfg);
  const Qrels qrels = read_qrels(cfg.qrels);
  const Retriever retrieve = make_retriever(method, index.tree ? &*index.tree : nullptr,
                                            index.corpus ? &*index.corpus : nullptr, retriever_config(cfg));
  EvalOptions opts;
  opts.cutoffs = cfg.cutoffs;
  opts.gain = cfg.gain == "exponential" ? Gain::exponential : Gain::linear;
  opts.measure_latency = cfg.timing;
  const EvalRun run = run_eval(queries, qrels, method, retrieve, opts);

  const std::string json = report_to_json(run.report);
  out << json;
  if (!cfg.report.empty()) emit(cfg.report, out, json);
  if (!cfg.rankings.empty()) emit(cfg.rankings, out, rankings_to_tsv(run.rankings));
  err << report_to_table(run.report);
}

void cmd_bench(const RunConfig& cfg, std::ostream& out) {
  BenchOptions opts;
  opts.sizes = cfg.sizes;
  opts.methods.clear();
  for (const auto& m : cfg.methods) opts.methods.push_back(parse_method(m));
  opts.dim = cfg.dim;
  opts.queries = cfg.query_count;
  opts.trials = cfg.trials;
  opts.k = cfg.k;
  opts.n_max = cfg.n_max;
  opts.variance_floor = cfg.variance_floor;
  opts.seed = cfg.seed;
  opts.docs_per_cluster = cfg.docs_per_cluster;
  opts.sigma = cfg.sigma;
  emit(cfg.out, out, bench_to_tsv(bench_scaling(opts)));
}

void cmd_export(const RunConfig& cfg, std::ostream& out) {
  const CobwebTree tree = load_tree(cfg.tree);
  DocStore docs;
  ExportOptions opts;
  opts.format = cfg.format == "dot" ? ExportFormat::dot : ExportFormat::json;
  opts.max_depth = cfg.max_depth;
  if (!cfg.docs.empty()) {
    docs = read_docstore(cfg.docs);
    opts.docs = &docs;
  }
  emit(cfg.out, out, export_tree(tree, opts));
}

void cmd_synth(const RunConfig& cfg, std::ostream& err) {
  SyntheticSpec spec;
  spec.clusters = cfg.clusters;
  spec.docs_per_cluster = cfg.docs_per_cluster;
  spec.dim = cfg.dim;
  spec.sigma = cfg.sigma;
  spec.queries = cfg.query_count;
  spec.seed = cfg.seed;
  const SyntheticDataset data = make_clustered_dataset(spec);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  write_embeddings(data.corpus, dir / "corpus.cweb");
  write_embeddings(data.queries, dir / "queries.cweb");
  write_qrels(data.qrels, dir / "qrels.tsv");
  write_docstore(data.docs, dir / "docs.tsv");
  err << "wrote " << data.corpus.count() << " docs and " << data.queries.count() << " queries to " << dir.string()
      << '\n';
}

std::optional<std::string> find_config_path(const std::vector<std::string>& argv) {
  for (std::size_t i = 1; i < argv.size(); ++i) {
    if (argv[i] == "--config" && i + 1 < argv.size()) return argv[i + 1];
    if (argv[i].rfind("--config=", 0) == 0) return argv[i].substr(9);
  }
  return std::nullopt;
}

bool on_command_line(const std::vector<std::string>& args, const std::string& key) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == key || a.rfind(key + "=", 0) == 0; });
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", line_no);
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", line_no);
    for (auto& c : key)
      if (c == '_') c = '-';
    entries.emplace_back("--" + key, trim(line.substr(eq + 1)));
  }
  return entries;
}

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  nlohmann::ordered_json paths = nlohmann::ordered_json::object();
  const std::pair<const char*, const std::string*> named[] = {
      {"config", &config_file}, {"corpus", &corpus}, {"queries", &queries}, {"qrels", &qrels},
      {"tree", &tree},          {"out", &out},       {"transform", &transform}, {"docs", &docs},
      {"report", &report},      {"rankings", &rankings}, {"in", &input}};
  for (const auto& [name, value] : named)
    if (!value->empty()) paths[name] = *value;
  j["paths"] = std::move(paths);
  j["whiten_threshold"] = whiten_threshold;
  j["use_ica"] = use_ica;
  j["ica_seed"] = ica_seed ? nlohmann::ordered_json(*ica_seed) : nlohmann::ordered_json(nullptr);
  j["variance_floor"] = variance_floor;
  j["n_max"] = n_max ? nlohmann::ordered_json(*n_max) : nlohmann::ordered_json(nullptr);
  j["k"] = k;
  j["seed"] = seed;
  j["cutoffs"] = cutoffs;
  j["shuffle_seed"] = shuffle_seed ? nlohmann::ordered_json(*shuffle_seed) : nlohmann::ordered_json(nullptr);
  j["method"] = method;
  return j.dump();
}

int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Hierarchical prototype-tree retrieval over dense embeddings", "cobweb"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", cfg.config_file, "Flat key=value config file; command-line flags win");
    sub->add_option("--seed", cfg.seed, "Seed for every randomized step");
  };
  const auto threshold_check = CLI::Validator(
      [](std::string& v) -> std::string {
        double t = 0;
        try {
          t = std::stod(v);
        } catch (...) {
          return "not a number";
        }
        return t > 0.0 && t <= 1.0 ? "" : "must be in (0, 1]";
      },
      "(0,1]");
  const auto method_check = CLI::IsMember({"bfs", "pathsum", "dot"});

  auto* whiten = app.add_subcommand("whiten", "Fit PCA(+ICA) whitening on a corpus, or apply a saved transform");
  common(whiten);
  auto* w_corpus = whiten->add_option("--corpus", cfg.corpus, "Corpus embeddings to fit on (and transform)");
  auto* w_in = whiten->add_option("--in", cfg.input, "Embeddings to transform with an existing --transform");
  w_corpus->excludes(w_in);
  whiten->add_option("--out", cfg.out, "Output embedding file")->required();
  whiten->add_option("--transform", cfg.transform, "Transform file (written when fitting, read with --in)");
  whiten->add_option("--whiten-threshold", cfg.whiten_threshold, "Explained-variance threshold")
      ->check(threshold_check);
  auto* no_ica = whiten->add_flag("--no-ica", "Skip the ICA rotation");
  auto* ica_seed = whiten->add_option("--ica-seed", cfg.ica_seed, "Seed for FastICA (defaults to --seed)");
  no_ica->excludes(ica_seed);

  auto* build = app.add_subcommand("build", "Build a tree by inserting corpus rows in file order");
  common(build);
  build->add_option("--corpus", cfg.corpus, "Corpus embeddings")->required();
  build->add_option("--out", cfg.out, "Tree file (.json for JSON, otherwise binary)")->required();
  build->add_option("--variance-floor", cfg.variance_floor, "Additive variance floor")->check(CLI::PositiveNumber);
  build->add_option("--shuffle-seed", cfg.shuffle_seed, "Shuffle insertion order with this seed");
  build->add_option("--transform", cfg.transform, "Whitening transform applied before insertion");

  auto add_retrieval = [&](CLI::App* sub) {
    sub->add_option("--tree", cfg.tree, "Tree file");
    sub->add_option("--corpus", cfg.corpus, "Corpus embeddings (dot method)");
    sub->add_option("--queries", cfg.queries, "Query embeddings")->required();
    sub->add_option("--method", cfg.method, "bfs, pathsum or dot")->check(method_check);
    sub->add_option("--n-max", cfg.n_max, "Node expansion budget for bfs")->check(CLI::PositiveNumber);
    sub->add_option("--transform", cfg.transform, "Whitening transform applied to queries (not to the index)");
    sub->add_flag("--include-leaf-score", cfg.include_leaf_score, "Path-sum: add the leaf's own score");
    sub->add_flag("--depth-normalize", cfg.depth_normalize, "Path-sum: divide by path length");
  };

  auto* query = app.add_subcommand("query", "Rank documents for each query; TSV output");
  common(query);
  add_retrieval(query);
  query->add_option("--k", cfg.k, "Results per query")->check(CLI::PositiveNumber);
  query->add_flag("--explain", cfg.explain, "Print root-to-leaf paths with node counts and scores");
  query->add_option("--out", cfg.out, "Output TSV (default stdout)");

  auto* eval = app.add_subcommand("eval", "Recall/MRR/nDCG and latency against qrels");
  common(eval);
  add_retrieval(eval);
  eval->add_option("--qrels", cfg.qrels, "Qrels TSV")->required();
  eval->add_option("--cutoffs", cfg.cutoffs, "Comma-separated cutoffs")->delimiter(',')->check(CLI::PositiveNumber);
  eval->add_option("--report", cfg.report, "Also write the JSON report here");
  eval->add_option("--rankings", cfg.rankings, "Dump ranked lists as TSV");
  eval->add_option("--gain", cfg.gain, "nDCG gain: linear or exponential")
      ->check(CLI::IsMember({"linear", "exponential"}));
  auto* no_timing = eval->add_flag("--no-timing", "Skip latency measurement (byte-reproducible reports)");

  auto* bench = app.add_subcommand("bench", "Per-query latency across synthetic corpus sizes");
  common(bench);
  bench->add_option("--sizes", cfg.sizes, "Comma-separated corpus sizes")->delimiter(',')->check(CLI::PositiveNumber);
  bench->add_option("--methods", cfg.methods, "Comma-separated methods")->delimiter(',')->check(method_check);
  bench->add_option("--dim", cfg.dim, "Embedding dimension")->check(CLI::PositiveNumber);
  bench->add_option("--queries", cfg.query_count, "Queries per size")->check(CLI::PositiveNumber);
  bench->add_option("--trials", cfg.trials, "Passes over the queries")->check(CLI::PositiveNumber);
  bench->add_option("--k", cfg.k, "Results per query")->check(CLI::PositiveNumber);
  bench->add_option("--n-max", cfg.n_max, "bfs budget (default: node count)")->check(CLI::PositiveNumber);
  bench->add_option("--variance-floor", cfg.variance_floor, "Additive variance floor")->check(CLI::PositiveNumber);
  bench->add_option("--docs-per-cluster", cfg.docs_per_cluster, "Cluster size")->check(CLI::PositiveNumber);
  bench->add_option("--sigma", cfg.sigma, "Within-cluster standard deviation")->check(CLI::NonNegativeNumber);
  bench->add_option("--out", cfg.out, "Output TSV (default stdout)");

  auto* exp = app.add_subcommand("export", "Render a tree as JSON or Graphviz DOT");
  common(exp);
  exp->add_option("--tree", cfg.tree, "Tree file")->required();
  exp->add_option("--format", cfg.format, "json or dot")->check(CLI::IsMember({"json", "dot"}));
  exp->add_option("--docs", cfg.docs, "doc_id<TAB>text file for leaf labels");
  exp->add_option("--max-depth", cfg.max_depth, "Omit nodes deeper than this");
  exp->add_option("--out", cfg.out, "Output file (default stdout)");

  auto* synth = app.add_subcommand("synth", "Write a synthetic clustered dataset (corpus, queries, qrels, docs)");
  common(synth);
  synth->add_option("--out", cfg.out, "Output directory")->required();
  synth->add_option("--clusters", cfg.clusters, "Number of clusters")->check(CLI::PositiveNumber);
  synth->add_option("--docs-per-cluster", cfg.docs_per_cluster, "Docs per cluster")->check(CLI::PositiveNumber);
  synth->add_option("--dim", cfg.dim, "Dimension")->check(CLI::PositiveNumber);
  synth->add_option("--sigma", cfg.sigma, "Within-cluster standard deviation")->check(CLI::NonNegativeNumber);
  synth->add_option("--queries", cfg.query_count, "Number of queries")->check(CLI::PositiveNumber);

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  try {
    // Config-file values are spliced in right after the subcommand name so
    // that later command-line occurrences take precedence.
    if (auto path = find_config_path(argv); path && !args.empty()) {
      CLI::App* sub = app.get_subcommand_no_throw(args[0]);
      if (!sub) throw CLI::ExtrasError({args[0]});
      std::vector<std::string> injected;
      for (const auto& [key, value] : parse_config_text(read_text(*path))) {
        if (key == "--config" || on_command_line(args, key)) continue;
        const CLI::Option* opt = sub->get_option_no_throw(key);
        if (!opt) throw CLI::ExtrasError("unknown config key '" + key.substr(2) + "'", CLI::ExitCodes::ExtrasError);
        if (opt->get_expected_max() == 0) {
          if (truthy(value)) injected.push_back(key);
        } else {
          injected.push_back(key);
          injected.push_back(value);
        }
      }
      args.insert(args.begin() + 1, injected.begin(), injected.end());
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  cfg.use_ica = no_ica->count() == 0;
  cfg.timing = no_timing->count() == 0;
  for (CLI::App* sub : app.get_subcommands()) cfg.subcommand = sub->get_name();
  err << cfg.to_json() << '\n';

  try {
    if (cfg.subcommand == "whiten") cmd_whiten(cfg, err);
    else if (cfg.subcommand == "build") cmd_build(cfg, err);
    else if (cfg.subcommand == "query") cmd_query(cfg, out);
    else if (cfg.subcommand == "eval") cmd_eval(cfg, out, err);
    else if (cfg.subcommand == "bench") cmd_bench(cfg, out);
    else if (cfg.subcommand == "export") cmd_export(cfg, out);
    else if (cfg.subcommand == "synth") cmd_synth(cfg, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace cobweb
