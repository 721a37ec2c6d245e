#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tokentiming/engine.hpp"

namespace tokentiming {

// ---- synthetic corpus ------------------------------------------------------------------------

struct CorpusOptions {
  std::size_t lines = 1000;
  std::size_t lexicon = 80;   // distinct words
  std::size_t successors = 4; // each word is followed by one of this many words
  std::size_t min_words = 4;
  std::size_t max_words = 12;
  std::uint64_t seed = 0;
};

// Lines of space-separated pseudo-words from a seeded lexicon and bigram grammar.
std::vector<std::string> synthetic_corpus(const CorpusOptions& options);

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, std::span<const std::string> lines);

// ---- metrics ------------------------------------------------------------------------------------

struct CostModel {
  double c_draft = 1.0;
  double c_target = 20.0;
  double c_align = 0.1;
  void validate() const;
};

// Cost of one iteration: one draft step per drafted token, one target pass, and
// one alignment when the iteration ran DTW.
double iteration_cost(const IterationTrace& trace, const CostModel& cm);
double simulated_cost(std::span<const IterationTrace> traces, const CostModel& cm);

// sum(accepted) / sum(proxy_len); 0 when nothing was proposed. Throws on empty input.
double accept_rate(std::span<const IterationTrace> traces);
// (total_tokens * c_target) / simulated_cost.
double simulated_speedup(std::span<const IterationTrace> traces, std::size_t total_tokens, const CostModel& cm);
// Cost until the first emitted token.
double ttft_analog(std::span<const IterationTrace> traces, const CostModel& cm);
// Mean cost between consecutive emitted tokens; 0 with fewer than two tokens.
double itl_analog(std::span<const IterationTrace> traces, const CostModel& cm);

// Percentage of distinct whitespace n-grams that occur more than once.
double rep_n(std::string_view text, std::size_t n);
std::map<std::size_t, double> rep_n_all(std::string_view text, std::size_t max_n);

struct RepetitionFilter {
  std::map<std::size_t, double> cutoffs = {{3, 60.0}, {5, 60.0}, {8, 60.0}};
  bool flags(const std::map<std::size_t, double>& rep) const;
};

// ---- reports ------------------------------------------------------------------------------------

struct RunReport {
  std::string strategy;
  std::string pair;
  std::string band = "-";  // "-" for strategies without alignment
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t prompt = 0;
  std::size_t tokens = 0;
  std::size_t iterations = 0;
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  double accept_rate = 0.0;
  double simulated_cost = 0.0;
  double speedup = 0.0;
  double ttft = 0.0;
  double itl = 0.0;
  std::optional<double> wall_ms;
  std::map<std::size_t, double> rep;
  std::map<std::size_t, std::size_t> delta_id;  // |i-j| -> count
  std::size_t band_infeasible = 0;
  std::string termination;
  bool filtered = false;
  std::string error;  // set when the run threw; metrics are then meaningless

  std::string cell() const;  // strategy/pair/band/k
};

// One JSON object per line, fields in a fixed order.
std::string to_json_line(const RunReport& r);
RunReport run_report_from_json(const std::string& line);

RunReport make_report(const GenerationResult& g, const std::string& text, const CostModel& cm,
                      const RepetitionFilter& filter);

struct CellAggregate {
  std::string strategy, pair, band;
  std::size_t k = 0;
  std::size_t runs = 0;
  std::size_t filtered = 0;
  std::size_t errors = 0;
  double mean_accept_rate = 0.0;
  double mean_speedup = 0.0;
  double mean_ttft = 0.0;
  double mean_itl = 0.0;
  std::map<std::size_t, std::size_t> delta_id;
  std::size_t max_delta_id = 0;
  std::vector<std::pair<std::size_t, double>> delta_id_cdf() const;
};

// Flagged and failed runs are counted but left out of the means. The result does
// not depend on the order of `runs`.
std::vector<CellAggregate> aggregate(std::vector<RunReport> runs);
std::string to_json_line(const CellAggregate& a);

// ---- suite --------------------------------------------------------------------------------------

struct ModelPairSpec {
  std::string name;
  std::string draft_path;
  std::string target_path;
};

struct SuiteConfig {
  std::vector<ModelPairSpec> pairs;
  std::string prompts_path;
  std::size_t prompt_count = 1;
  std::vector<Strategy> strategies = {Strategy::ar};
  std::vector<BandConfig> bands = {BandConfig::bounded(8)};
  std::vector<std::size_t> ks = {4};
  std::vector<std::uint64_t> seeds = {0};
  GenConfig base;
  CostModel costs;
  RepetitionFilter filter;
  std::size_t threads = 1;
  bool wall_clock = true;
};

// INI with sections [models], [grid], [costs], [filters], [run]. Relative paths
// resolve against the config file's directory. Throws ConfigError.
SuiteConfig load_suite_config(const std::string& path);

// Per band: summed DTW cost over the alignment inputs seen in the suite that are
// feasible at every band of the grid, plus how many inputs each band rejects.
struct BandProbe {
  std::string band;
  std::size_t inputs = 0;
  std::size_t infeasible = 0;
  long long total_cost = 0;
};

struct SuiteResult {
  std::vector<RunReport> runs;
  std::vector<CellAggregate> cells;
  std::vector<BandProbe> probe;
};

// Runs the grid, appends one line per run, then the aggregate and probe lines, to `out_path`.
SuiteResult run_suite(const SuiteConfig& config, const std::string& out_path);

std::string to_json_line(const BandProbe& p);

// Reads a report file and renders aggregate tables (text) and a JSON summary.
struct ReportSummary {
  std::vector<CellAggregate> cells;
  std::string table;
  std::string json;
};
ReportSummary summarize_report(const std::string& path);

}  // namespace tokentiming
