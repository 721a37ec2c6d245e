#include <atomic>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include "tokentiming/bench.hpp"

namespace tokentiming {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    auto b = item.find_first_not_of(" \t");
    auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::uint64_t to_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + what + ": " + s);
  }
}

double to_double_cfg(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + what + ": " + s);
  }
}

// "0,3,7" or "0-199" or a mix.
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(to_u64(item, "seeds"));
      continue;
    }
    const auto lo = to_u64(item.substr(0, dash), "seeds");
    const auto hi = to_u64(item.substr(dash + 1), "seeds");
    if (hi < lo) throw ConfigError("empty seed range: " + item);
    for (auto v = lo; v <= hi; ++v) out.push_back(v);
  }
  if (out.empty()) throw ConfigError("no seeds");
  return out;
}

std::string resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? p : (base / path).string();
}

// get_child's default argument would dangle inside a range-for.
const pt::ptree& section(const pt::ptree& tree, const char* name) {
  static const pt::ptree kEmpty;
  auto it = tree.find(name);
  return it == tree.not_found() ? kEmpty : it->second;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw ConfigError(what + " not found: " + path);
}

}  // namespace

SuiteConfig load_suite_config(const std::string& path) {
  require_file(path, "suite config");
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("cannot parse suite config: ") + e.what());
  }
  const fs::path base = fs::path(path).parent_path();
  SuiteConfig cfg;
  static const std::set<std::string> kSections = {"models", "grid", "costs", "filters", "run"};
  for (const auto& [section, body] : tree) {
    if (!kSections.count(section)) throw ConfigError("unknown section [" + section + "]");
  }

  for (const auto& [key, node] : section(tree, "models")) {
    const std::string value = node.get_value<std::string>();
    if (key == "prompts") {
      cfg.prompts_path = resolve(base, value);
    } else if (key == "prompt_count") {
      cfg.prompt_count = to_u64(value, key);
    } else {
      auto paths = split_list(value);
      if (paths.size() != 2) throw ConfigError("model pair '" + key + "' needs 'draft_path, target_path'");
      cfg.pairs.push_back({key, resolve(base, paths[0]), resolve(base, paths[1])});
    }
  }
  if (cfg.pairs.empty()) throw ConfigError("[models] lists no model pair");
  if (cfg.prompts_path.empty()) throw ConfigError("[models] needs prompts = <file>");

  for (const auto& [key, node] : section(tree, "grid")) {
    const std::string value = node.get_value<std::string>();
    if (key == "strategies") {
      cfg.strategies.clear();
      for (const auto& s : split_list(value)) cfg.strategies.push_back(parse_strategy(s));
    } else if (key == "w") {
      cfg.bands.clear();
      for (const auto& s : split_list(value)) {
        try {
          cfg.bands.push_back(BandConfig::parse(s));
        } catch (const InputError& e) {
          throw ConfigError(e.what());
        }
      }
    } else if (key == "k") {
      cfg.ks.clear();
      for (const auto& s : split_list(value)) cfg.ks.push_back(to_u64(s, key));
    } else if (key == "seeds") {
      cfg.seeds = parse_seeds(value);
    } else if (key == "max_tokens") {
      cfg.base.max_total_tokens = to_u64(value, key);
    } else if (key == "cfg_max") {
      cfg.base.cfg_max = to_u64(value, key);
    } else if (key == "cfg_min") {
      cfg.base.cfg_min = to_u64(value, key);
    } else if (key == "alpha") {
      cfg.base.alpha = to_double_cfg(value, key);
    } else if (key == "mapping_rule") {
      cfg.base.mapping_rule = parse_mapping_rule(value);
    } else if (key == "placement") {
      cfg.base.placement = parse_mass_placement(value);
    } else if (key == "proposal") {
      cfg.base.proposal = parse_proposal_mode(value);
    } else if (key == "candidate_rule") {
      cfg.base.candidate_rule = parse_candidate_rule(value);
    } else {
      throw ConfigError("unknown [grid] key: " + key);
    }
  }
  if (cfg.strategies.empty() || cfg.bands.empty() || cfg.ks.empty()) throw ConfigError("[grid] has an empty axis");

  for (const auto& [key, node] : section(tree, "costs")) {
    const double v = to_double_cfg(node.get_value<std::string>(), key);
    if (key == "c_draft") {
      cfg.costs.c_draft = v;
    } else if (key == "c_target") {
      cfg.costs.c_target = v;
    } else if (key == "c_align") {
      cfg.costs.c_align = v;
    } else {
      throw ConfigError("unknown [costs] key: " + key);
    }
  }
  cfg.costs.validate();

  for (const auto& [key, node] : section(tree, "filters")) {
    if (key.rfind("rep", 0) != 0) throw ConfigError("unknown [filters] key: " + key);
    cfg.filter.cutoffs[to_u64(key.substr(3), key)] = to_double_cfg(node.get_value<std::string>(), key);
  }

  for (const auto& [key, node] : section(tree, "run")) {
    const std::string value = node.get_value<std::string>();
    if (key == "threads") {
      cfg.threads = std::max<std::uint64_t>(1, to_u64(value, key));
    } else if (key == "wall_clock") {
      cfg.wall_clock = value == "true" || value == "1" || value == "yes";
    } else {
      throw ConfigError("unknown [run] key: " + key);
    }
  }
  cfg.base.validate();
  return cfg;
}

namespace {

struct Job {
  std::size_t pair;
  Strategy strategy;
  std::optional<BandConfig> band;
  std::size_t k;
  std::uint64_t seed;
  std::size_t prompt;
};

using AlignInput = std::pair<std::vector<std::string>, std::vector<std::string>>;

struct JobOutput {
  RunReport report;
  std::vector<AlignInput> inputs;
};

JobOutput run_job(const Job& job, const SuiteConfig& cfg, const TokenModel& draft, const TokenModel& target,
                  const std::string& prompt) {
  JobOutput out;
  RunReport& r = out.report;
  try {
    GenConfig gc = cfg.base;
    gc.k = job.k;
    if (job.band) gc.band = *job.band;
    gc.seed = job.seed;
    const auto t0 = std::chrono::steady_clock::now();
    Decoder dec(job.strategy, target, job.strategy == Strategy::ar ? nullptr : &draft, gc);
    Rng rng = Rng(job.seed).split(job.prompt);
    GenerationResult g = dec.generate(prompt, rng);
    const auto t1 = std::chrono::steady_clock::now();
    r = make_report(g, target.tokenizer().decode(g.generated()), cfg.costs, cfg.filter);
    if (cfg.wall_clock) r.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (job.strategy == Strategy::tokentiming) {
      const Vocabulary& dv = draft.vocabulary();
      const Vocabulary& tv = target.vocabulary();
      for (const auto& t : g.traces) {
        if (t.draft_ids.empty() || t.aligned_ids.empty()) continue;
        AlignInput in;
        for (TokenId id : t.draft_ids) in.first.push_back(normalize_surface(dv.surface(id), dv));
        for (TokenId id : t.aligned_ids) in.second.push_back(normalize_surface(tv.surface(id), tv));
        out.inputs.push_back(std::move(in));
      }
    }
  } catch (const std::exception& e) {
    r = RunReport{};
    r.error = e.what();
  }
  r.strategy = to_string(job.strategy);
  r.pair = cfg.pairs[job.pair].name;
  r.band = job.band ? job.band->to_string() : "-";
  r.k = job.k;
  r.seed = job.seed;
  r.prompt = job.prompt;
  return out;
}

}  // namespace

SuiteResult run_suite(const SuiteConfig& cfg, const std::string& out_path) {
  require_file(cfg.prompts_path, "prompt file");
  std::vector<std::string> prompts;
  for (auto& line : read_lines(cfg.prompts_path)) {
    if (!line.empty()) prompts.push_back(std::move(line));
  }
  if (prompts.size() < cfg.prompt_count) throw ConfigError("prompt file has fewer lines than prompt_count");
  prompts.resize(cfg.prompt_count);

  std::map<std::string, std::unique_ptr<TokenModel>> models;
  auto model = [&](const std::string& path) -> const TokenModel& {
    auto it = models.find(path);
    if (it != models.end()) return *it->second;
    require_file(path, "model file");
    try {
      return *models.emplace(path, std::make_unique<TokenModel>(load_model(path))).first->second;
    } catch (const InputError& e) {
      throw ConfigError(std::string("cannot load model: ") + e.what());
    }
  };
  for (const auto& p : cfg.pairs) {
    model(p.draft_path);
    model(p.target_path);
  }

  std::vector<Job> jobs;
  for (std::size_t p = 0; p < cfg.pairs.size(); ++p) {
    for (Strategy s : cfg.strategies) {
      std::vector<std::optional<BandConfig>> bands;
      if (s == Strategy::tokentiming) {
        for (const auto& b : cfg.bands) bands.emplace_back(b);
      } else {
        bands.emplace_back(std::nullopt);
      }
      for (const auto& band : bands) {
        for (std::size_t k : cfg.ks) {
          for (std::uint64_t seed : cfg.seeds) {
            for (std::size_t pr = 0; pr < prompts.size(); ++pr) jobs.push_back({p, s, band, k, seed, pr});
          }
        }
      }
    }
  }

  std::vector<JobOutput> outputs(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& j = jobs[i];
      outputs[i] = run_job(j, cfg, *models.at(cfg.pairs[j.pair].draft_path), *models.at(cfg.pairs[j.pair].target_path),
                           prompts[j.prompt]);
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(cfg.threads, std::max<std::size_t>(1, jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SuiteResult result;
  std::vector<const AlignInput*> inputs;
  for (const auto& o : outputs) {
    result.runs.push_back(o.report);
    for (const auto& in : o.inputs) inputs.push_back(&in);
  }
  result.cells = aggregate(result.runs);

  bool any_tt = false;
  for (Strategy s : cfg.strategies) any_tt = any_tt || s == Strategy::tokentiming;
  if (any_tt) {
    auto feasible = [](const BandConfig& b, const AlignInput& in) {
      const std::size_t m = in.first.size(), n = in.second.size();
      return !b.is_bounded() || b.width() >= (m > n ? m - n : n - m);
    };
    for (const auto& b : cfg.bands) {
      BandProbe probe;
      probe.band = b.to_string();
      probe.inputs = inputs.size();
      for (const AlignInput* in : inputs) {
        if (!feasible(b, *in)) {
          ++probe.infeasible;
          continue;
        }
        const bool everywhere = std::all_of(cfg.bands.begin(), cfg.bands.end(),
                                            [&](const BandConfig& other) { return feasible(other, *in); });
        if (everywhere) probe.total_cost += dtw(in->first, in->second, b).total_cost;
      }
      result.probe.push_back(probe);
    }
  }

  std::ofstream out(out_path, std::ios::app);
  if (!out) throw ConfigError("cannot open report file " + out_path);
  for (const auto& r : result.runs) out << to_json_line(r) << '\n';
  for (const auto& c : result.cells) out << to_json_line(c) << '\n';
  for (const auto& p : result.probe) out << to_json_line(p) << '\n';
  return result;
}

ReportSummary summarize_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<RunReport> runs;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw InputError(fmt::format("{}:{}: not a JSON line", path, lineno));
    }
    if (j.value("type", "") == "run") runs.push_back(run_report_from_json(line));
  }
  ReportSummary s;
  s.cells = aggregate(std::move(runs));
  s.table = fmt::format("{:<12} {:<14} {:>5} {:>3} {:>5} {:>5} {:>5} {:>9} {:>9} {:>9} {:>9} {:>6}\n", "strategy",
                        "pair", "w", "k", "runs", "filt", "err", "accept", "speedup", "ttft", "itl", "maxΔid");
  std::ostringstream json;
  json << "[";
  for (std::size_t i = 0; i < s.cells.size(); ++i) {
    const auto& c = s.cells[i];
    s.table += fmt::format("{:<12} {:<14} {:>5} {:>3} {:>5} {:>5} {:>5} {:>9.4f} {:>9.4f} {:>9.2f} {:>9.3f} {:>6}\n",
                           c.strategy, c.pair, c.band, c.k, c.runs, c.filtered, c.errors, c.mean_accept_rate,
                           c.mean_speedup, c.mean_ttft, c.mean_itl, c.max_delta_id);
    json << (i ? "," : "") << to_json_line(c);
  }
  json << "]";
  s.json = json.str();
  return s;
}

}  // namespace tokentiming
