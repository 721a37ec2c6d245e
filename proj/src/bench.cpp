#include <algorithm>
#include <json.hpp>
#include <sstream>
#include <unordered_map>

#include "tokentiming/bench.hpp"

namespace tokentiming {

using ojson = nlohmann::ordered_json;

void CostModel::validate() const {
  if (!(c_draft >= 0.0) || !(c_target >= 0.0) || !(c_align >= 0.0)) throw ConfigError("costs must be >= 0");
}

double iteration_cost(const IterationTrace& t, const CostModel& cm) {
  return static_cast<double>(t.drafted) * cm.c_draft + cm.c_target + (t.path ? cm.c_align : 0.0);
}

double simulated_cost(std::span<const IterationTrace> traces, const CostModel& cm) {
  double total = 0.0;
  for (const auto& t : traces) total += iteration_cost(t, cm);
  return total;
}

double accept_rate(std::span<const IterationTrace> traces) {
  if (traces.empty()) throw InputError("accept_rate: no iterations");
  std::size_t proposed = 0, accepted = 0;
  for (const auto& t : traces) {
    proposed += t.proxy_len;
    accepted += t.accepted;
  }
  return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
}

double simulated_speedup(std::span<const IterationTrace> traces, std::size_t total_tokens, const CostModel& cm) {
  if (total_tokens == 0) throw InputError("simulated_speedup: no tokens");
  const double sd = simulated_cost(traces, cm);
  if (!(sd > 0.0)) throw InputError("simulated_speedup: speculative cost is zero");
  return static_cast<double>(total_tokens) * cm.c_target / sd;
}

double ttft_analog(std::span<const IterationTrace> traces, const CostModel& cm) {
  for (const auto& t : traces) {
    // An iteration always emits at least one token, so this is the first one.
    if (!t.emitted.empty()) return iteration_cost(t, cm);
  }
  return 0.0;
}

double itl_analog(std::span<const IterationTrace> traces, const CostModel& cm) {
  std::size_t tokens = 0;
  for (const auto& t : traces) tokens += t.emitted.size();
  if (tokens < 2) return 0.0;
  return (simulated_cost(traces, cm) - ttft_analog(traces, cm)) / static_cast<double>(tokens - 1);
}

double rep_n(std::string_view text, std::size_t n) {
  if (n == 0) throw InputError("rep_n: n must be >= 1");
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) words.push_back(std::move(w));
  if (words.size() < n) return 0.0;
  std::unordered_map<std::string, std::size_t> freq;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    std::string key = words[i];
    for (std::size_t j = 1; j < n; ++j) {
      key.push_back('\x1f');
      key += words[i + j];
    }
    ++freq[key];
  }
  std::size_t repeated = 0;
  for (const auto& [k, c] : freq) repeated += c > 1 ? 1 : 0;
  return 100.0 * static_cast<double>(repeated) / static_cast<double>(freq.size());
}

std::map<std::size_t, double> rep_n_all(std::string_view text, std::size_t max_n) {
  std::map<std::size_t, double> out;
  for (std::size_t n = 1; n <= max_n; ++n) out[n] = rep_n(text, n);
  return out;
}

bool RepetitionFilter::flags(const std::map<std::size_t, double>& rep) const {
  for (const auto& [n, cutoff] : cutoffs) {
    auto it = rep.find(n);
    if (it != rep.end() && it->second > cutoff) return true;
  }
  return false;
}

// ---- reports --------------------------------------------------------------------------------------

std::string RunReport::cell() const { return strategy + "/" + pair + "/" + band + "/" + std::to_string(k); }

namespace {

template <class M>
ojson map_to_json(const M& m) {
  ojson j = ojson::object();
  for (const auto& [key, v] : m) j[std::to_string(key)] = v;
  return j;
}

template <class V>
std::map<std::size_t, V> map_from_json(const ojson& j) {
  std::map<std::size_t, V> out;
  for (auto it = j.begin(); it != j.end(); ++it) out[std::stoul(it.key())] = it.value().template get<V>();
  return out;
}

}  // namespace

std::string to_json_line(const RunReport& r) {
  ojson j;
  j["type"] = "run";
  j["strategy"] = r.strategy;
  j["pair"] = r.pair;
  j["band"] = r.band;
  j["k"] = r.k;
  j["seed"] = r.seed;
  j["prompt"] = r.prompt;
  j["tokens"] = r.tokens;
  j["iterations"] = r.iterations;
  j["proposed"] = r.proposed;
  j["accepted"] = r.accepted;
  j["accept_rate"] = r.accept_rate;
  j["simulated_cost"] = r.simulated_cost;
  j["speedup"] = r.speedup;
  j["ttft"] = r.ttft;
  j["itl"] = r.itl;
  if (r.wall_ms) j["wall_ms"] = *r.wall_ms;
  j["rep"] = map_to_json(r.rep);
  j["delta_id"] = map_to_json(r.delta_id);
  j["band_infeasible"] = r.band_infeasible;
  j["termination"] = r.termination;
  j["filtered"] = r.filtered;
  j["error"] = r.error;
  return j.dump();
}

RunReport run_report_from_json(const std::string& line) {
  const ojson j = ojson::parse(line);
  if (j.value("type", "") != "run") throw InputError("not a run line");
  RunReport r;
  r.strategy = j.at("strategy");
  r.pair = j.at("pair");
  r.band = j.at("band");
  r.k = j.at("k");
  r.seed = j.at("seed");
  r.prompt = j.at("prompt");
  r.tokens = j.at("tokens");
  r.iterations = j.at("iterations");
  r.proposed = j.at("proposed");
  r.accepted = j.at("accepted");
  r.accept_rate = j.at("accept_rate");
  r.simulated_cost = j.at("simulated_cost");
  r.speedup = j.at("speedup");
  r.ttft = j.at("ttft");
  r.itl = j.at("itl");
  if (j.contains("wall_ms")) r.wall_ms = j.at("wall_ms").get<double>();
  r.rep = map_from_json<double>(j.at("rep"));
  r.delta_id = map_from_json<std::size_t>(j.at("delta_id"));
  r.band_infeasible = j.at("band_infeasible");
  r.termination = j.at("termination");
  r.filtered = j.at("filtered");
  r.error = j.at("error");
  return r;
}

RunReport make_report(const GenerationResult& g, const std::string& text, const CostModel& cm,
                      const RepetitionFilter& filter) {
  RunReport r;
  r.tokens = g.generated().size();
  r.iterations = g.traces.size();
  for (const auto& t : g.traces) {
    r.proposed += t.proxy_len;
    r.accepted += t.accepted;
    r.band_infeasible += t.band_infeasible ? 1 : 0;
    if (t.path) {
      for (const auto& [d, c] : delta_id_stats(*t.path).histogram) r.delta_id[d] += c;
    }
  }
  r.accept_rate = g.traces.empty() ? 0.0 : accept_rate(g.traces);
  r.simulated_cost = simulated_cost(g.traces, cm);
  r.speedup = r.tokens == 0 ? 0.0 : simulated_speedup(g.traces, r.tokens, cm);
  r.ttft = ttft_analog(g.traces, cm);
  r.itl = itl_analog(g.traces, cm);
  for (std::size_t n : {3, 5, 8}) r.rep[n] = rep_n(text, n);
  for (const auto& [n, c] : filter.cutoffs) r.rep[n] = rep_n(text, n);
  r.termination = to_string(g.terminated_by);
  r.filtered = filter.flags(r.rep);
  return r;
}

std::vector<std::pair<std::size_t, double>> CellAggregate::delta_id_cdf() const {
  DeltaIdStats s;
  s.histogram = delta_id;
  for (const auto& [d, c] : delta_id) s.total += c;
  return s.cdf();
}

std::vector<CellAggregate> aggregate(std::vector<RunReport> runs) {
  auto key = [](const RunReport& r) { return std::make_tuple(r.strategy, r.pair, r.band, r.k, r.seed, r.prompt); };
  std::sort(runs.begin(), runs.end(), [&](const RunReport& a, const RunReport& b) { return key(a) < key(b); });
  std::vector<CellAggregate> out;
  for (const auto& r : runs) {
    if (out.empty() || out.back().strategy != r.strategy || out.back().pair != r.pair || out.back().band != r.band ||
        out.back().k != r.k) {
      CellAggregate a;
      a.strategy = r.strategy;
      a.pair = r.pair;
      a.band = r.band;
      a.k = r.k;
      out.push_back(std::move(a));
    }
    CellAggregate& a = out.back();
    ++a.runs;
    if (!r.error.empty()) {
      ++a.errors;
      continue;
    }
    if (r.filtered) {
      ++a.filtered;
      continue;
    }
    a.mean_accept_rate += r.accept_rate;
    a.mean_speedup += r.speedup;
    a.mean_ttft += r.ttft;
    a.mean_itl += r.itl;
    for (const auto& [d, c] : r.delta_id) {
      a.delta_id[d] += c;
      a.max_delta_id = std::max(a.max_delta_id, d);
    }
  }
  for (auto& a : out) {
    const std::size_t kept = a.runs - a.errors - a.filtered;
    if (kept == 0) continue;
    const double n = static_cast<double>(kept);
    a.mean_accept_rate /= n;
    a.mean_speedup /= n;
    a.mean_ttft /= n;
    a.mean_itl /= n;
  }
  return out;
}

std::string to_json_line(const CellAggregate& a) {
  ojson j;
  j["type"] = "aggregate";
  j["strategy"] = a.strategy;
  j["pair"] = a.pair;
  j["band"] = a.band;
  j["k"] = a.k;
  j["runs"] = a.runs;
  j["filtered"] = a.filtered;
  j["errors"] = a.errors;
  j["mean_accept_rate"] = a.mean_accept_rate;
  j["mean_speedup"] = a.mean_speedup;
  j["mean_ttft"] = a.mean_ttft;
  j["mean_itl"] = a.mean_itl;
  j["delta_id"] = map_to_json(a.delta_id);
  j["max_delta_id"] = a.max_delta_id;
  ojson cdf = ojson::array();
  for (const auto& [d, f] : a.delta_id_cdf()) cdf.push_back(ojson::array({d, f}));
  j["delta_id_cdf"] = cdf;
  return j.dump();
}

std::string to_json_line(const BandProbe& p) {
  ojson j;
  j["type"] = "w_probe";
  j["band"] = p.band;
  j["inputs"] = p.inputs;
  j["infeasible"] = p.infeasible;
  j["total_cost"] = p.total_cost;
  return j.dump();
}

}  // namespace tokentiming
