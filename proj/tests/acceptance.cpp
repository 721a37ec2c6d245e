// One line per acceptance criterion. Exit status is non-zero when any criterion fails.
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <random>

#include "support.hpp"
#include "tokentiming/bench.hpp"
#include "tokentiming/verify.hpp"

using namespace tokentiming;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, double limit_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > limit_s) {
    v.pass = false;
    v.detail += fmt::format("; over time limit {:.0f}s", limit_s);
  }
  if (!v.pass) ++failures;
  fmt::print("criterion {:>2} {} {} ({:.2f}s): {}\n", id, v.pass ? "PASS" : "FAIL", title, secs, v.detail);
  std::fflush(stdout);
}

void info(const std::string& text) {
  fmt::print("   info: {}\n", text);
  std::fflush(stdout);
}

const std::vector<Strategy> kLossless = {Strategy::sd, Strategy::tli, Strategy::tokentiming};

struct GridTally {
  std::size_t cells = 0, equal = 0;
  double max_err = 0.0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_strategy;  // equal, cells
};

GridTally run_grid(const std::vector<ToyPair>& grid, const std::vector<Strategy>& strategies, const GenConfig& cfg) {
  GridTally t;
  for (Strategy s : strategies) {
    for (const auto& pair : grid) {
      for (std::size_t h = 1; h <= 3; ++h) {
        const LosslessnessCheck c = check_losslessness(pair, s, h, cfg);
        ++t.cells;
        t.equal += c.equal;
        t.max_err = std::max(t.max_err, c.max_abs_error);
        auto& ps = t.per_strategy[c.strategy];
        ps.first += c.equal;
        ++ps.second;
      }
    }
  }
  return t;
}

std::string per_strategy_text(const GridTally& t) {
  std::string out;
  for (const auto& [name, v] : t.per_strategy) {
    if (!out.empty()) out += ", ";
    out += fmt::format("{} {}/{}", name, v.first, v.second);
  }
  return out;
}

// ---- 1, 2 ----------------------------------------------------------------------------------------

Verdict losslessness(const std::vector<ToyPair>& grid) {
  std::size_t min_v = 99, max_v = 0;
  for (const auto& p : grid) {
    for (const auto* m : {&p.draft, &p.target, &p.same_vocab_draft}) {
      min_v = std::min(min_v, m->vocab_size());
      max_v = std::max(max_v, m->vocab_size());
    }
  }
  const GridTally t = run_grid(grid, kLossless, GenConfig{});
  return {t.equal == t.cells && grid.size() >= 12 && min_v >= 3 && max_v <= 5,
          fmt::format("{} pairs, vocab sizes {}-{}, horizons 1-3; exact cells {}/{} ({}); max |error| {:.4g}",
                      grid.size(), min_v, max_v, t.equal, t.cells, per_strategy_text(t), t.max_err)};
}

Verdict mutation(const std::vector<ToyPair>& grid) {
  GenConfig broken;
  broken.correction = CorrectionRule::target_resample;
  const GridTally t = run_grid(grid, kLossless, broken);
  const double rate = double(t.cells - t.equal) / double(t.cells);
  return {rate >= 0.90, fmt::format("broken variant differs from the target law on {}/{} cells ({:.1f}%; need >= 90%)",
                                    t.cells - t.equal, t.cells, 100.0 * rate)};
}

// ---- 3 -------------------------------------------------------------------------------------------

Verdict dtw_optimality() {
  std::mt19937_64 g(2025);
  const std::string letters = "abcSL";
  auto surface = [&] {
    std::string s;
    const std::size_t len = 1 + g() % 4;
    for (std::size_t i = 0; i < len; ++i) s.push_back(letters[g() % letters.size()]);
    return s;
  };
  std::size_t agree = 0;
  const std::size_t n = 500;
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<std::string> x(1 + g() % 6), y(1 + g() % 6);
    for (auto& s : x) s = surface();
    for (auto& s : y) s = surface();
    agree += dtw(x, y, BandConfig::unbounded()).total_cost == brute_force_dtw(x, y);
  }
  const std::vector<std::string> x = {"S", "cal", "ing", "Law"}, y = {"Scale", "ing", "L", "aw"};
  const AlignmentPath p = dtw(x, y, BandConfig::unbounded());
  const std::vector<std::pair<std::size_t, std::size_t>> want = {{1, 1}, {2, 1}, {3, 2}, {4, 3}, {4, 4}};
  std::string shown;
  for (const auto& [i, j] : p.pairs) shown += fmt::format("({},{})", x[i - 1], y[j - 1]);
  return {agree == n && p.pairs == want,
          fmt::format("{}/{} random pairs equal brute force; worked example path {} cost {}", agree, n, shown,
                      p.total_cost)};
}

// ---- 4 -------------------------------------------------------------------------------------------

Verdict band_complexity() {
  const std::size_t w = 8;
  std::mt19937_64 g(4);
  const std::vector<std::string> pool = {"a", "b", "ab", "ba", "abc", "c", "ca", "bca"};
  std::vector<double> xs, ys;
  bool bounded = true;
  for (std::size_t len = 16; len <= 512; len += 16) {
    const std::size_t m = len, n = len + g() % (w + 1);
    std::vector<std::string> a(m), b(n);
    for (auto& s : a) s = pool[g() % pool.size()];
    for (auto& s : b) s = pool[g() % pool.size()];
    const DtwResult r = dtw_with_matrix(a, b, BandConfig::bounded(w));
    const double cells = double(r.matrix.evaluated_cells());
    bounded = bounded && r.matrix.evaluated_cells() <= (2 * w + 1) * std::max(m, n);
    xs.push_back(double(std::max(m, n)));
    ys.push_back(cells);
  }
  const double k = double(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  const double icept = (sy - slope * sx) / k;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double fit = icept + slope * xs[i];
    ss_res += (ys[i] - fit) * (ys[i] - fit);
    ss_tot += (ys[i] - sy / k) * (ys[i] - sy / k);
  }
  const double r2 = 1.0 - ss_res / ss_tot;
  return {r2 > 0.99 && bounded,
          fmt::format("w=8, lengths 16-512 ({} sizes): cells ~ {:.2f}*max(m,n) {:+.1f}, R^2 = {:.6f}; "
                      "all within (2w+1)*max(m,n): {}",
                      xs.size(), slope, icept, r2, bounded ? "yes" : "no")};
}

// ---- 5 -------------------------------------------------------------------------------------------

Verdict acceptance_calibration() {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  double worst = 0.0;
  const int trials = 100000;
  for (int c = 0; c < 20; ++c) {
    const double p = u(g), q = u(g);
    ProposalDistribution<double> prop{Distribution<double>({p, 1 - p}), 0};
    Distribution<double> target({q, 1 - q});
    Rng rng(1000 + c);
    int acc = 0;
    for (int i = 0; i < trials; ++i) acc += verify_position(prop, target, rng).accepted;
    worst = std::max(worst, std::abs(acc / double(trials) - std::min(1.0, q / p)));
  }
  return {worst <= 0.01, fmt::format("20 (p,q) pairs x 1e5 trials; worst |freq - min(1,q/p)| = {:.5f} (limit 0.01)",
                                     worst)};
}

// ---- 6 -------------------------------------------------------------------------------------------

Verdict directional() {
  CorpusOptions co;
  co.lines = 3000;
  co.min_words = 40;
  co.max_words = 60;
  co.seed = 606;
  const auto lines = synthetic_corpus(co);
  TokenizerOptions base;
  base.byte_fallback = false;
  BpeTrainOptions bo;
  static_cast<TokenizerOptions&>(bo) = base;
  bo.target_size = 400;
  auto bpe = std::make_shared<const Tokenizer>(train_bpe(lines, bo));
  auto chr = std::make_shared<const Tokenizer>(make_character_tokenizer(lines, base));
  const VocabStats vs = vocab_stats(chr->vocabulary(), bpe->vocabulary());
  const TokenModel target = TokenModel::ngram(bpe, 3, 0.01, lines);
  const TokenModel draft = TokenModel::ngram(chr, 4, 0.01, lines);

  GenConfig cfg;
  cfg.k = 4;
  cfg.max_total_tokens = 64;
  const Decoder tt(Strategy::tokentiming, target, &draft, cfg);
  const Decoder tli(Strategy::tli, target, &draft, cfg);
  double sum_tt = 0, sum_tli = 0;
  std::size_t tokens_tt = 0, tokens_tli = 0, wins = 0;
  const std::size_t runs = 200;
  for (std::size_t s = 0; s < runs; ++s) {
    const std::string& line = lines[s];
    const std::string prompt = line.substr(0, line.find(' ', line.find(' ') + 1));
    Rng r1(s), r2(s);
    const GenerationResult a = tt.generate(prompt, r1);
    const GenerationResult b = tli.generate(prompt, r2);
    const double ra = accept_rate(a.traces), rb = accept_rate(b.traces);
    sum_tt += ra;
    sum_tli += rb;
    wins += ra > rb;
    tokens_tt += a.generated().size();
    tokens_tli += b.generated().size();
  }
  const double m_tt = sum_tt / runs, m_tli = sum_tli / runs;
  return {vs.jaccard < 0.1 && m_tt > m_tli,
          fmt::format("jaccard {:.4f} ({} shared of {}); 200 seeded runs, 64-token cap (mean length tt {:.1f}, tli {:.1f}); "
                      "mean accept rate tokentiming {:.4f} vs tli {:.4f}, margin {:+.4f}; tokentiming higher in {}/{} runs",
                      vs.jaccard, vs.intersection_size, vs.union_size, double(tokens_tt) / runs,
                      double(tokens_tli) / runs, m_tt, m_tli, m_tt - m_tli, wins, runs)};
}

// ---- 7 -------------------------------------------------------------------------------------------

struct LengthCase {
  std::size_t prefix_len, l_cur, cfg_max, cfg_min;
  std::vector<double> p;
  double alpha;
  CandidateRule rule;
  std::size_t max_new, min_new, f, length;
};

Verdict candidate_lengths() {
  const auto P = CandidateRule::prefix;
  const auto C = CandidateRule::count;
  const std::vector<double> nine(10, 0.9), mixed = {0.9, 0.9, 0.1, 0.9}, ramp = {0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2};
  // Every row evaluated by hand:
  //   max = min(|P|, cfg_max - l_cur - 1); min = max(0, min(max, cfg_min - l_cur)); clamp f into [min, max].
  const std::vector<LengthCase> cases = {
      {10, 50, 100, 0, nine, 0.5, P, 10, 0, 10, 10},
      {10, 95, 100, 0, nine, 0.5, P, 4, 0, 10, 4},
      {4, 10, 100, 0, mixed, 0.5, P, 4, 0, 2, 2},
      {4, 10, 100, 0, mixed, 0.5, C, 4, 0, 3, 3},
      {4, 10, 100, 13, mixed, 0.5, P, 4, 3, 2, 3},
      {4, 10, 100, 20, mixed, 0.5, P, 4, 4, 2, 4},
      {4, 10, 12, 0, {0.9, 0.9, 0.9, 0.9}, 0.5, P, 1, 0, 4, 1},
      {4, 10, 11, 0, {0.9, 0.9, 0.9, 0.9}, 0.5, P, 0, 0, 4, 0},
      {5, 0, 1024, 0, {0.2, 0.9, 0.9, 0.9, 0.9}, 0.5, P, 5, 0, 0, 0},
      {5, 0, 1024, 0, {0.2, 0.9, 0.9, 0.9, 0.9}, 0.5, C, 5, 0, 4, 4},
      {5, 0, 1024, 0, {0.01, 0.01, 0.01, 0.01, 0.01}, 0.0, P, 5, 0, 5, 5},
      {3, 7, 20, 9, {0.6, 0.4, 0.7}, 0.5, P, 3, 2, 1, 2},
      {3, 7, 20, 9, {0.6, 0.6, 0.7}, 0.5, P, 3, 2, 3, 3},
      {3, 7, 9, 9, {0.6, 0.6, 0.7}, 0.5, P, 1, 1, 3, 1},
      {6, 100, 200, 50, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5}, 0.5, P, 6, 0, 6, 6},
      {2, 0, 10, 0, {0.5, 0.49999}, 0.5, P, 2, 0, 1, 1},
      {8, 30, 40, 35, ramp, 0.55, P, 8, 5, 4, 5},
      {8, 30, 40, 35, ramp, 0.35, P, 8, 5, 6, 6},
      {8, 30, 40, 35, ramp, 0.1, P, 8, 5, 8, 8},
      {8, 30, 35, 35, ramp, 0.35, P, 4, 4, 6, 4},
      {1, 0, 2, 0, {0.3}, 0.5, P, 1, 0, 0, 0},
      {1, 0, 2, 5, {0.3}, 0.5, P, 1, 1, 0, 1},
      {0, 5, 50, 10, {}, 0.0, P, 0, 0, 0, 0},
      {7, 63, 64, 0, {1, 1, 1, 1, 1, 1, 1}, 0.9, P, 0, 0, 7, 0},
      {6, 20, 64, 0, {0.95, 0.3, 0.95, 0.95, 0.95, 0.95}, 0.9, C, 6, 0, 5, 5},
  };
  std::size_t ok = 0;
  std::string bad;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const LengthCase& c = cases[i];
    GenConfig cfg;
    cfg.cfg_max = c.cfg_max;
    cfg.cfg_min = c.cfg_min;
    cfg.alpha = c.alpha;
    cfg.candidate_rule = c.rule;
    const CandidateLength got = candidate_length_detail<double>(c.p, c.prefix_len, c.l_cur, cfg);
    if (got.max_new == c.max_new && got.min_new == c.min_new && got.f == c.f && got.length == c.length) {
      ++ok;
    } else {
      bad += fmt::format(" #{}: got ({},{},{},{})", i + 1, got.max_new, got.min_new, got.f, got.length);
    }
  }
  return {ok == cases.size(), fmt::format("{}/{} hand-evaluated cases match (max, min, f, length){}", ok, cases.size(), bad)};
}

// ---- 8 -------------------------------------------------------------------------------------------

struct RepCase {
  std::string text;
  std::map<std::size_t, double> want;
  bool flagged;
};

Verdict rep_n_cases() {
  const std::vector<RepCase> cases = {
      {"a b a b a b", {{2, 100.0}, {3, 100.0}, {5, 0.0}, {8, 0.0}}, true},
      {"a b c d", {{2, 0.0}, {3, 0.0}, {5, 0.0}, {8, 0.0}}, false},
      {"  word \t ", {{2, 0.0}, {3, 0.0}, {5, 0.0}, {8, 0.0}}, false},
      {"", {{2, 0.0}, {3, 0.0}, {5, 0.0}, {8, 0.0}}, false},
      {"x x x x x x x x x x", {{2, 100.0}, {3, 100.0}, {5, 100.0}, {8, 100.0}}, true},
      {"the cat sat on the mat the cat sat", {{2, 100.0 * 2 / 6}, {3, 100.0 / 6}, {5, 0.0}, {8, 0.0}}, false},
      {"1 2 3 1 2 3 1 2 3 1 2 3", {{2, 100.0}, {3, 100.0}, {5, 100.0}, {8, 100.0 * 2 / 3}}, true},
      {"a b c d e f g h i j", {{2, 0.0}, {3, 0.0}, {5, 0.0}, {8, 0.0}}, false},
      // exactly at the cutoff: not above it
      {"a b c a b c a b d e", {{2, 60.0}, {3, 60.0}, {5, 20.0}, {8, 0.0}}, false},
      {"to be  or not to be that is\tthe question to be or not",
       {{2, 100.0 * 3 / 9}, {3, 100.0 * 2 / 10}, {5, 0.0}, {8, 0.0}},
       false},
  };
  RepetitionFilter filter;
  std::size_t ok = 0;
  std::string bad;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const RepCase& c = cases[i];
    bool match = true;
    for (const auto& [n, v] : c.want) match = match && std::abs(rep_n(c.text, n) - v) < 1e-9;
    const auto rep = rep_n_all(c.text, 8);
    match = match && filter.flags(rep) == c.flagged;
    if (match) {
      ++ok;
    } else {
      bad += fmt::format(" text#{} got rep3={:.3f} rep5={:.3f} rep8={:.3f}", i + 1, rep.at(3), rep.at(5), rep.at(8));
    }
  }
  const bool red = filter.flags({{3, 67.6}, {5, 64.9}, {8, 61.8}});
  const bool clean = filter.flags({{3, 16.7}, {5, 7.4}, {8, 0.0}});
  return {ok == cases.size() && red && !clean,
          fmt::format("{}/{} texts match hand counts and flags; red row (67.6, 64.9, 61.8) flagged: {}, "
                      "clean row (16.7, 7.4, 0.0) flagged: {}{}",
                      ok, cases.size(), red ? "yes" : "no", clean ? "yes" : "no", bad)};
}

// ---- 9, 10 ---------------------------------------------------------------------------------------

std::vector<std::string> strip_wall_clock(const std::vector<std::string>& lines) {
  std::vector<std::string> out;
  for (const auto& l : lines) {
    auto j = nlohmann::ordered_json::parse(l);
    j.erase("wall_ms");
    out.push_back(j.dump());
  }
  return out;
}

Verdict determinism(const tt_test::Workspace& w) {
  const std::string ini = tt_test::write_file(
      w.dir / "det.ini", "[models]\nhetero = " + w.char_model + ", " + w.bpe_model + "\nprompts = " + w.prompts +
                             "\nprompt_count = 3\n[grid]\nstrategies = ar, tli, tokentiming\nw = 4, inf\nk = 2, 4\n"
                             "seeds = 0-2\nmax_tokens = 32\n[run]\nthreads = 4\n");
  SuiteConfig cfg = load_suite_config(ini);
  const std::string a = (w.dir / "det_a.jsonl").string(), b = (w.dir / "det_b.jsonl").string();
  fs::remove(a);
  fs::remove(b);
  run_suite(cfg, a);
  cfg.threads = 1;
  run_suite(cfg, b);
  const auto la = strip_wall_clock(read_lines(a)), lb = strip_wall_clock(read_lines(b));
  const bool same = la == lb;

  CorpusOptions co;
  co.lines = 10000;
  co.seed = 99;
  const auto lines = synthetic_corpus(co);
  BpeTrainOptions bo;
  bo.target_size = 500;
  bo.sample_fraction = 0.3;
  const Tokenizer bpe = train_bpe(lines, bo);
  const Tokenizer chr = make_character_tokenizer(lines);
  std::size_t ok_bpe = 0, ok_chr = 0;
  for (const auto& l : lines) {
    ok_bpe += bpe.decode(bpe.encode(l)) == l;
    ok_chr += chr.decode(chr.encode(l)) == l;
  }
  return {same && ok_bpe == lines.size() && ok_chr == lines.size(),
          fmt::format("two suite runs (4 threads vs 1): report lines {} ({} vs {} lines, wall_ms excluded); "
                      "round trip on {} lines: bpe {} ok, char {} ok",
                      same ? "byte-identical" : "DIFFER", la.size(), lb.size(), lines.size(), ok_bpe, ok_chr)};
}

Verdict w_ablation(const tt_test::Workspace& w) {
  const std::string ini = tt_test::write_file(
      w.dir / "wab.ini", "[models]\nhetero = " + w.char_model + ", " + w.bpe_model + "\nprompts = " + w.prompts +
                             "\nprompt_count = 4\n[grid]\nstrategies = tokentiming\nw = 4, 8, 16, inf\nk = 8\n"
                             "seeds = 0-4\nmax_tokens = 48\n[run]\nthreads = 4\nwall_clock = false\n");
  const std::string out = (w.dir / "wab.jsonl").string();
  fs::remove(out);
  const SuiteResult r = run_suite(load_suite_config(ini), out);
  bool ok = r.cells.size() == 4;
  std::string text;
  for (const auto& c : r.cells) {
    const bool finite = c.band != "inf";
    const bool within = !finite || c.max_delta_id <= std::stoul(c.band);
    ok = ok && within && !c.delta_id_cdf().empty() && c.errors == 0;
    std::size_t pairs = 0;
    for (const auto& [d, n] : c.delta_id) pairs += n;
    text += fmt::format(" w={}: {} pairs, max delta {}{};", c.band, pairs, c.max_delta_id, within ? "" : " (OUT OF BAND)");
  }
  bool monotone = true;
  for (std::size_t i = 1; i < r.probe.size(); ++i) monotone = monotone && r.probe[i].total_cost <= r.probe[i - 1].total_cost;
  std::string probe;
  for (const auto& p : r.probe) probe += fmt::format(" {}:{}", p.band, p.total_cost);
  return {ok && monotone && r.probe.size() == 4,
          fmt::format("{} runs;{} DTW cost over shared inputs{} (non-increasing: {})", r.runs.size(), text, probe,
                      monotone ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "tokentiming_acceptance";
  fs::create_directories(work);
  setenv("TT_TEST_TMP", work.c_str(), 1);

  const auto grid = toy_grid(12);
  report(1, "exact losslessness of sd, tli and tokentiming on the toy grid", 60, [&] { return losslessness(grid); });
  {
    // The same check with the proposal taken as the exact law of the proxy token.
    GenConfig induced;
    induced.proposal = ProposalMode::induced;
    const GridTally t = run_grid(grid, {Strategy::tokentiming}, induced);
    info(fmt::format("tokentiming with the induced proposal: exact cells {}/{}, max |error| {:.3g}", t.equal, t.cells,
                     t.max_err));
  }
  report(2, "mutation sensitivity of the oracle", 60, [&] { return mutation(grid); });
  report(3, "DTW optimality and the worked example", 10, dtw_optimality);
  report(4, "banded DTW evaluates O(w * max(m,n)) cells", 10, band_complexity);
  report(5, "acceptance rule calibration", 10, acceptance_calibration);
  report(6, "tokentiming accepts more than tli on a low-jaccard pair", 300, directional);
  report(7, "candidate-length policy on hand-evaluated cases", 10, candidate_lengths);
  report(8, "Rep-N on hand-counted texts", 10, rep_n_cases);
  const tt_test::Workspace ws = tt_test::make_workspace("suite", 300, 4);
  report(9, "determinism and tokenizer round trips", 120, [&] { return determinism(ws); });
  report(10, "w-ablation grid with bounded delta-id support", 120, [&] { return w_ablation(ws); });

  fmt::print("acceptance: {} of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
