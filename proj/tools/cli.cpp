#include "cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <sstream>

#include "tokentiming/bench.hpp"
#include "tokentiming/verify.hpp"

namespace tokentiming::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> split(const std::string& text, const std::string& sep) {
  std::vector<std::string> out;
  if (sep.empty()) throw InputError("separator must not be empty");
  std::size_t start = 0;
  while (true) {
    const std::size_t at = text.find(sep, start);
    std::string piece = text.substr(start, at == std::string::npos ? std::string::npos : at - start);
    if (!piece.empty()) out.push_back(std::move(piece));
    if (at == std::string::npos) break;
    start = at + sep.size();
  }
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

ordered_json trace_json(std::size_t index, const IterationTrace& t) {
  ordered_json j;
  j["iteration"] = index;
  j["drafted"] = t.drafted;
  j["candidates"] = t.candidates;
  j["proxy_len"] = t.proxy_len;
  j["accepted"] = t.accepted;
  j["bonus_token"] = t.bonus_token ? ordered_json(*t.bonus_token) : ordered_json(nullptr);
  j["corrected"] = t.corrected;
  j["band_infeasible"] = t.band_infeasible;
  j["ar_fallback"] = t.ar_fallback;
  j["empty_retries"] = t.empty_retries;
  j["draft_ids"] = t.draft_ids;
  j["proxy_ids"] = t.proxy_ids;
  j["emitted"] = t.emitted;
  if (t.path) {
    ordered_json pairs = ordered_json::array();
    for (const auto& [i, k] : t.path->pairs) pairs.push_back({i, k});
    j["path"] = pairs;
    j["path_cost"] = t.path->total_cost;
  } else {
    j["path"] = nullptr;
  }
  ordered_json checks = ordered_json::array();
  for (const auto& c : t.checks) {
    checks.push_back(ordered_json{{"id", c.proposed}, {"p", c.p}, {"q", c.q}, {"r", c.r}, {"accepted", c.accepted}});
  }
  j["checks"] = checks;
  return j;
}

struct TrainArgs {
  std::string corpus, out, kind = "bpe", model = "ngram", marker = std::string(kDefaultBoundaryMarker);
  std::size_t size = 256;
  std::uint64_t seed = 0;
  int order = 2;
  double smoothing = 0.1;
  double sample = 1.0;
  bool no_byte_fallback = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto lines = read_lines(a.corpus);
  TokenizerOptions base;
  base.boundary_marker = a.marker == "none" ? std::nullopt : std::optional<std::string>(a.marker);
  base.byte_fallback = !a.no_byte_fallback;
  Tokenizer tok;
  if (a.kind == "bpe") {
    BpeTrainOptions o;
    static_cast<TokenizerOptions&>(o) = base;
    o.target_size = a.size;
    o.seed = a.seed;
    o.sample_fraction = a.sample;
    tok = train_bpe(lines, o);
  } else if (a.kind == "char") {
    tok = make_character_tokenizer(lines, base);
  } else {
    throw InputError("--kind must be bpe or char");
  }
  auto shared = std::make_shared<const Tokenizer>(std::move(tok));
  const std::string vocab = a.out + ".vocab", merges = a.out + ".merges", model_path = a.out + ".model";
  save_tokenizer(*shared, vocab, merges);
  const TokenModel model = parse_model_kind(a.model) == ModelKind::uniform
                               ? TokenModel::uniform(shared)
                               : TokenModel::ngram(shared, a.order, a.smoothing, lines);
  save_model(model, model_path, vocab, merges);
  out << fmt::format("vocab_size {}\nmerges {}\nmodel {}\n", shared->vocabulary().size(), shared->merges().size(),
                     model_path);
  return 0;
}

struct AlignArgs {
  std::string x, y, sep = " ", w = "inf";
};

int cmd_align(const AlignArgs& a, std::ostream& out) {
  const auto xs = split(a.x, a.sep), ys = split(a.y, a.sep);
  const DtwResult r = dtw_with_matrix(xs, ys, BandConfig::parse(a.w));
  for (const auto& [i, j] : r.path.pairs) out << fmt::format("pair {} {} {} {}\n", i, j, xs[i - 1], ys[j - 1]);
  out << "cost " << r.path.total_cost << '\n';
  out << "evaluated_cells " << r.matrix.evaluated_cells() << '\n';
  const DeltaIdStats s = delta_id_stats(r.path);
  for (const auto& [d, c] : s.histogram) out << fmt::format("delta_id {} {}\n", d, c);
  return 0;
}

struct GenerateArgs {
  std::string strategy = "tokentiming", target, draft, prompt, prompt_file, trace, w = "8";
  std::string mapping_rule = "product_split", placement = "uniform", proposal = "mapped", candidate_rule = "prefix";
  GenConfig cfg;
};

int cmd_generate(GenerateArgs a, std::ostream& out) {
  a.cfg.band = BandConfig::parse(a.w);
  a.cfg.mapping_rule = parse_mapping_rule(a.mapping_rule);
  a.cfg.placement = parse_mass_placement(a.placement);
  a.cfg.proposal = parse_proposal_mode(a.proposal);
  a.cfg.candidate_rule = parse_candidate_rule(a.candidate_rule);
  const Strategy strategy = parse_strategy(a.strategy);
  const TokenModel target = load_model(a.target);
  std::optional<TokenModel> draft;
  if (strategy != Strategy::ar) {
    if (a.draft.empty()) throw InputError("--draft is required for " + a.strategy);
    draft = load_model(a.draft);
  }
  const std::string prompt = a.prompt_file.empty() ? a.prompt : slurp(a.prompt_file);
  const Decoder decoder(strategy, target, draft ? &*draft : nullptr, a.cfg);
  Rng rng(a.cfg.seed);
  const GenerationResult g = decoder.generate(prompt, rng);
  if (!a.trace.empty()) {
    std::ofstream t(a.trace);
    if (!t) throw InputError("cannot write " + a.trace);
    for (std::size_t i = 0; i < g.traces.size(); ++i) t << trace_json(i, g.traces[i]).dump() << '\n';
  }
  const std::string text = target.tokenizer().decode(g.generated());
  const RunReport rep = make_report(g, text, CostModel{}, RepetitionFilter{});
  out << "text " << text << '\n';
  out << fmt::format("tokens {} iterations {} accept_rate {:.6f} speedup {:.6f} termination {}\n", rep.tokens,
                     rep.iterations, rep.accept_rate, rep.speedup, rep.termination);
  return 0;
}

struct OracleArgs {
  std::size_t pairs = 12, horizon = 3;
  std::uint64_t seed = 2024;
  std::string proposal = "mapped";
  std::vector<std::string> strategies = {"sd", "tli", "tokentiming"};
  bool broken = false;
};

int cmd_oracle(const OracleArgs& a, std::ostream& out) {
  GenConfig cfg;
  cfg.proposal = parse_proposal_mode(a.proposal);
  if (a.broken) cfg.correction = CorrectionRule::target_resample;
  const auto grid = toy_grid(a.pairs, a.seed);
  std::size_t pass = 0, total = 0;
  for (const auto& name : a.strategies) {
    const Strategy s = parse_strategy(name);
    for (const auto& pair : grid) {
      for (std::size_t h = 1; h <= a.horizon; ++h) {
        const LosslessnessCheck c = check_losslessness(pair, s, h, cfg);
        ++total;
        pass += c.equal;
        out << fmt::format("oracle strategy={} pair={} horizon={} result={} max_abs_error={:.3g} outcomes={} branches={}\n",
                           c.strategy, c.pair, c.horizon, c.equal ? "PASS" : "FAIL", c.max_abs_error, c.outcomes,
                           c.branches);
      }
    }
  }
  out << fmt::format("summary pass={} total={}\n", pass, total);
  return pass == total ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"tokentiming: speculative decoding across heterogeneous vocabularies"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train a tokenizer and n-gram model from a corpus");
  c_train->add_option("--corpus", train.corpus, "one text per line")->required();
  c_train->add_option("--out", train.out, "output prefix for .vocab/.merges/.model")->required();
  c_train->add_option("--kind", train.kind, "bpe or char")->capture_default_str();
  c_train->add_option("--model", train.model, "ngram or uniform")->capture_default_str();
  c_train->add_option("--size", train.size, "text tokens for bpe")->capture_default_str();
  c_train->add_option("--seed", train.seed)->capture_default_str();
  c_train->add_option("--sample", train.sample, "fraction of lines used for bpe")->capture_default_str();
  c_train->add_option("--order", train.order)->capture_default_str();
  c_train->add_option("--smoothing", train.smoothing, "add-k constant")->capture_default_str();
  c_train->add_option("--marker", train.marker, "word boundary marker, or 'none'");
  c_train->add_flag("--no-byte-fallback", train.no_byte_fallback);

  CorpusOptions corpus;
  std::string corpus_out;
  auto* c_corpus = app.add_subcommand("corpus", "write a seeded synthetic corpus");
  c_corpus->add_option("--out", corpus_out)->required();
  c_corpus->add_option("--lines", corpus.lines)->capture_default_str();
  c_corpus->add_option("--lexicon", corpus.lexicon)->capture_default_str();
  c_corpus->add_option("--successors", corpus.successors)->capture_default_str();
  c_corpus->add_option("--min-words", corpus.min_words)->capture_default_str();
  c_corpus->add_option("--max-words", corpus.max_words)->capture_default_str();
  c_corpus->add_option("--seed", corpus.seed)->capture_default_str();

  std::string stats_a, stats_b;
  auto* c_stats = app.add_subcommand("vocab-stats", "intersection and jaccard of two vocabulary files");
  c_stats->add_option("a", stats_a)->required();
  c_stats->add_option("b", stats_b)->required();

  AlignArgs align;
  auto* c_align = app.add_subcommand("align", "DTW alignment of two token-surface sequences");
  c_align->add_option("--x", align.x, "draft surfaces")->required();
  c_align->add_option("--y", align.y, "proxy surfaces")->required();
  c_align->add_option("--sep", align.sep, "surface separator")->capture_default_str();
  c_align->add_option("--w", align.w, "band half-width or 'inf'")->capture_default_str();

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "decode with one strategy");
  c_gen->add_option("--strategy", gen.strategy, "ar, sd, tli or tokentiming")->capture_default_str();
  c_gen->add_option("--target", gen.target, "target model file")->required();
  c_gen->add_option("--draft", gen.draft, "draft model file");
  auto* prompt_opt = c_gen->add_option("--prompt", gen.prompt);
  c_gen->add_option("--prompt-file", gen.prompt_file)->excludes(prompt_opt);
  c_gen->add_option("--k", gen.cfg.k)->capture_default_str();
  c_gen->add_option("--w", gen.w, "band half-width or 'inf'")->capture_default_str();
  c_gen->add_option("--alpha", gen.cfg.alpha)->capture_default_str();
  c_gen->add_option("--cfg-max", gen.cfg.cfg_max)->capture_default_str();
  c_gen->add_option("--cfg-min", gen.cfg.cfg_min)->capture_default_str();
  c_gen->add_option("--max-tokens", gen.cfg.max_total_tokens)->capture_default_str();
  c_gen->add_option("--seed", gen.cfg.seed)->capture_default_str();
  c_gen->add_option("--mapping-rule", gen.mapping_rule)->capture_default_str();
  c_gen->add_option("--placement", gen.placement)->capture_default_str();
  c_gen->add_option("--proposal", gen.proposal, "mapped or induced")->capture_default_str();
  c_gen->add_option("--candidate-rule", gen.candidate_rule, "prefix or count")->capture_default_str();
  c_gen->add_option("--temperature", gen.cfg.target_sampling.temperature);
  c_gen->add_option("--draft-temperature", gen.cfg.draft_sampling.temperature);
  c_gen->add_option("--trace", gen.trace, "one JSON line per iteration");

  OracleArgs oracle;
  auto* c_oracle = app.add_subcommand("oracle", "exact losslessness check on the toy grid");
  c_oracle->add_option("--pairs", oracle.pairs)->capture_default_str();
  c_oracle->add_option("--seed", oracle.seed)->capture_default_str();
  c_oracle->add_option("--horizon", oracle.horizon)->capture_default_str()->check(CLI::Range(1, 3));
  c_oracle->add_option("--strategies", oracle.strategies)->delimiter(',');
  c_oracle->add_option("--proposal", oracle.proposal, "mapped or induced")->capture_default_str();
  c_oracle->add_flag("--broken", oracle.broken, "resample from the target after a rejection instead of the residual");

  auto* c_bench = app.add_subcommand("bench", "benchmark suite");
  c_bench->require_subcommand(1);
  std::string bench_config, bench_out, report_path;
  bool no_wall = false;
  auto* c_run = c_bench->add_subcommand("run", "run a suite config");
  c_run->add_option("config", bench_config)->required();
  c_run->add_option("--out", bench_out, "report file (appended)")->required();
  c_run->add_flag("--no-wall-clock", no_wall);
  auto* c_report = c_bench->add_subcommand("report", "aggregate a report file");
  c_report->add_option("file", report_path)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (c_train->parsed()) return cmd_train(train, out);
    if (c_corpus->parsed()) {
      write_lines(corpus_out, synthetic_corpus(corpus));
      out << "lines " << corpus.lines << '\n';
      return 0;
    }
    if (c_stats->parsed()) {
      std::ifstream fa(stats_a), fb(stats_b);
      if (!fa) throw InputError("cannot open " + stats_a);
      if (!fb) throw InputError("cannot open " + stats_b);
      const VocabStats s = vocab_stats(read_vocabulary(fa), read_vocabulary(fb));
      out << fmt::format("intersection {}\nunion {}\njaccard {:.6f}\n", s.intersection_size, s.union_size, s.jaccard);
      return 0;
    }
    if (c_align->parsed()) return cmd_align(align, out);
    if (c_gen->parsed()) return cmd_generate(gen, out);
    if (c_oracle->parsed()) return cmd_oracle(oracle, out);
    if (c_run->parsed()) {
      SuiteConfig cfg = load_suite_config(bench_config);
      if (no_wall) cfg.wall_clock = false;
      const SuiteResult r = run_suite(cfg, bench_out);
      std::size_t errors = 0;
      for (const auto& run : r.runs) errors += !run.error.empty();
      out << fmt::format("runs {} cells {} errors {}\n", r.runs.size(), r.cells.size(), errors);
      return 0;
    }
    if (c_report->parsed()) {
      const ReportSummary s = summarize_report(report_path);
      out << s.table << s.json << '\n';
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace tokentiming::cli
