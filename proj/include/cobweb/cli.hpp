#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cobweb {

// Resolved settings for one CLI invocation, logged as a JSON line to stderr.
struct RunConfig {
  std::string subcommand;
  std::string config_file;
  std::string corpus, queries, qrels, tree, out, transform, docs, report, rankings, input;
  double whiten_threshold = 0.96;
  bool use_ica = true;
  std::optional<std::uint64_t> ica_seed;
  double variance_floor = 1e-3;
  std::optional<std::size_t> n_max;
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::vector<std::size_t> cutoffs{5, 10};
  std::optional<std::uint64_t> shuffle_seed;
  std::string method = "pathsum";
  bool explain = false;
  bool include_leaf_score = false;
  bool depth_normalize = false;
  bool timing = true;
  std::string gain = "linear";
  std::string format = "json";
  std::optional<std::size_t> max_depth;
  // bench / synth
  std::vector<std::size_t> sizes{1000};
  std::vector<std::string> methods{"dot", "pathsum", "bfs"};
  std::size_t dim = 256;
  std::size_t query_count = 50;
  std::size_t trials = 1;
  std::size_t clusters = 20;
  std::size_t docs_per_cluster = 50;
  double sigma = 0.3;

  std::string to_json() const;
};

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitUsage = 2 };

// Parses argv (argv[0] is the program name) and dispatches to a subcommand.
// Tabular and report output goes to `out`; logs and diagnostics to `err`.
int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

// Flat key=value config text -> ("--key", value) pairs; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);

}  // namespace cobweb
