#include "tokentiming/engine.hpp"

#include <algorithm>

namespace tokentiming {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::ar: return "ar";
    case Strategy::sd: return "sd";
    case Strategy::tli: return "tli";
    case Strategy::tokentiming: return "tokentiming";
  }
  return "?";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "ar") return Strategy::ar;
  if (s == "sd") return Strategy::sd;
  if (s == "tli") return Strategy::tli;
  if (s == "tokentiming" || s == "tt") return Strategy::tokentiming;
  throw ConfigError("unknown strategy: " + s);
}

std::string to_string(ProposalMode m) { return m == ProposalMode::mapped ? "mapped" : "induced"; }

ProposalMode parse_proposal_mode(const std::string& s) {
  if (s == "mapped") return ProposalMode::mapped;
  if (s == "induced") return ProposalMode::induced;
  throw ConfigError("unknown proposal mode: " + s);
}

std::string to_string(CandidateRule r) { return r == CandidateRule::prefix ? "prefix" : "count"; }

CandidateRule parse_candidate_rule(const std::string& s) {
  if (s == "prefix") return CandidateRule::prefix;
  if (s == "count") return CandidateRule::count;
  throw ConfigError("unknown candidate rule: " + s);
}

std::string to_string(CorrectionRule r) { return r == CorrectionRule::residual ? "residual" : "target_resample"; }

CorrectionRule parse_correction_rule(const std::string& s) {
  if (s == "residual") return CorrectionRule::residual;
  if (s == "target_resample") return CorrectionRule::target_resample;
  throw ConfigError("unknown correction rule: " + s);
}

std::string to_string(Termination t) { return t == Termination::eos ? "eos" : "cap"; }

void GenConfig::validate() const {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (cfg_max < 1) throw ConfigError("cfg_max must be >= 1");
  if (cfg_min > cfg_max) throw ConfigError("cfg_min must not exceed cfg_max");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (induced_budget == 0) throw ConfigError("induced_budget must be positive");
}

// ---- verification ---------------------------------------------------------------------

template <class S>
std::optional<Distribution<S>> residual_distribution(const Distribution<S>& q, const Distribution<S>& p) {
  if (q.size() != p.size()) throw InputError("residual: size mismatch");
  Distribution<S> out = Distribution<S>::zeros(q.size());
  if constexpr (std::is_same_v<S, double>) {
    const double total = kernels::residual(q.probs, p.probs, out.probs);
    if (!(total > 0.0)) return std::nullopt;
    kernels::scale(out.probs, 1.0 / total);
  } else {
    S total(0);
    for (std::size_t t = 0; t < q.size(); ++t) {
      if (q.probs[t] > p.probs[t]) {
        out.probs[t] = q.probs[t] - p.probs[t];
        total += out.probs[t];
      }
    }
    if (total == 0) return std::nullopt;
    for (auto& x : out.probs) x /= total;
  }
  return out;
}

template <class S>
VerifyOutcome<S> verify_position(const ProposalDistribution<S>& p, const Distribution<S>& q, Chooser<S>& chooser,
                                 CorrectionRule rule) {
  const TokenId t = p.proposed_id;
  if (p.full.size() != q.size() || t >= q.size()) throw InputError("verify_position: vocabulary mismatch");
  const S& pt = p.full[t];
  if (!(pt > S(0))) throw InputError("verify_position: proposal gives the proposed token zero probability");
  VerifyOutcome<S> out;
  out.accept_prob = q[t] >= pt ? S(1) : S(q[t] / pt);
  out.accepted = chooser.accept(out.accept_prob, &out.r);
  if (out.accepted) {
    out.token = t;
    return out;
  }
  if (rule == CorrectionRule::target_resample) {
    out.token = chooser.pick(q);
    return out;
  }
  auto res = residual_distribution(q, p.full);
  if (!res) {
    out.residual_empty = true;
    out.token = chooser.pick(q);
  } else {
    out.token = chooser.pick(*res);
  }
  return out;
}

template <class S>
Distribution<S> conditional_proposal(const ProxyLaw<S>& law, std::span<const TokenId> prefix, std::size_t v) {
  const std::size_t j = prefix.size();
  Distribution<S> out = Distribution<S>::zeros(v);
  S total(0);
  for (const auto& [seq, w] : law) {
    if (seq.size() <= j || !std::equal(prefix.begin(), prefix.end(), seq.begin())) continue;
    if (seq[j] >= v) throw InputError("conditional_proposal: token id out of range");
    out.probs[seq[j]] += w;
    total += w;
  }
  if (!(total > S(0))) throw InputError("conditional_proposal: prefix has no mass under the proxy law");
  for (auto& x : out.probs) x /= total;
  return out;
}

// ---- Decoder ------------------------------------------------------------------------------

template <class S>
struct Decoder::Proposal {
  std::size_t drafted = 0;
  std::size_t candidates = 0;
  std::vector<TokenId> draft_ids;
  std::vector<TokenId> aligned;  // full re-encoded proxy
  std::vector<TokenId> proxy;    // positions that go to verification
  std::vector<S> mapped;       // mapped scalar for each of them
  std::optional<AlignmentPath> path;
  bool band_infeasible = false;
  bool empty = false;  // candidates decoded to nothing the target tokenizer keeps
};

Decoder::Decoder(Strategy strategy, const TokenModel& target, const TokenModel* draft, GenConfig cfg)
    : strategy_(strategy), target_(&target), draft_(draft), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (strategy_ == Strategy::ar) return;
  if (draft_ == nullptr) throw InputError(to_string(strategy_) + " needs a draft model");
  if (strategy_ == Strategy::sd && !(draft_->vocabulary() == target_->vocabulary())) {
    throw InterfaceError("standard speculative decoding needs draft and target to share one vocabulary; use tli or tokentiming");
  }
  if (strategy_ == Strategy::tli) {
    inter_.emplace(draft_->vocabulary(), target_->vocabulary());
    if (inter_->empty()) throw ProjectionError("tli: draft and target vocabularies share no surface");
  }
}

std::size_t Decoder::room(const std::vector<TokenId>& x, std::size_t generated) const {
  const std::size_t by_total = cfg_.max_total_tokens > generated ? cfg_.max_total_tokens - generated : 0;
  const std::size_t by_len = cfg_.cfg_max > x.size() ? cfg_.cfg_max - x.size() : 0;
  return std::min(by_total, by_len);
}

bool Decoder::finished(const std::vector<TokenId>& x, std::size_t generated) const {
  if (room(x, generated) == 0) return true;
  const auto eos = target_->vocabulary().eos();
  return generated > 0 && eos && x.back() == *eos;
}

template <class S>
Distribution<S> Decoder::target_dist(const std::vector<TokenId>& x) const {
  return apply_sampling(target_->next_distribution<S>(x), cfg_.target_sampling);
}

template <class S>
void Decoder::verify_chain(std::vector<TokenId>& x, const std::vector<TokenId>& proxy,
                           const std::function<ProposalDistribution<S>(std::size_t, const Distribution<S>&)>& proposal_at,
                           Chooser<S>& chooser, IterationTrace& trace) const {
  const auto eos = target_->vocabulary().eos();
  trace.proxy_len = proxy.size();
  trace.proxy_ids = proxy;
  for (std::size_t j = 0; j < proxy.size(); ++j) {
    Distribution<S> q = target_dist<S>(x);
    ProposalDistribution<S> p = proposal_at(j, q);
    VerifyOutcome<S> v = verify_position<S>(p, q, chooser, cfg_.correction);
    trace.checks.push_back({proxy[j], to_double(p.full[proxy[j]]), to_double(q[proxy[j]]), v.r, v.accepted});
    x.push_back(v.token);
    trace.emitted.push_back(v.token);
    if (!v.accepted) {
      trace.corrected = true;
      trace.bonus_token = v.token;
      return;
    }
    ++trace.accepted;
    if (eos && v.token == *eos) return;
  }
  Distribution<S> q = target_dist<S>(x);
  const TokenId t = chooser.pick(q);
  x.push_back(t);
  trace.emitted.push_back(t);
  trace.bonus_token = t;
}

template <class S>
Decoder::Proposal<S> Decoder::build_proposal(const DraftResult<S>& draft, std::size_t l_cur, std::size_t limit) const {
  Proposal<S> out;
  out.drafted = draft.ids.size();
  const CandidateLength cl = candidate_length_detail<S>(draft.probs, draft.ids.size(), l_cur, cfg_);
  out.candidates = cl.length;
  out.draft_ids.assign(draft.ids.begin(), draft.ids.begin() + static_cast<std::ptrdiff_t>(cl.length));
  if (cl.length == 0) return out;

  const Vocabulary& dv = draft_->vocabulary();
  const Vocabulary& tv = target_->vocabulary();
  std::vector<TokenId> t = target_->tokenizer().encode(draft_->tokenizer().decode(out.draft_ids));
  // EOS has no surface text, so it would vanish in the string round trip.
  if (dv.eos() && tv.eos() && out.draft_ids.back() == *dv.eos()) t.push_back(*tv.eos());
  if (t.empty()) {
    out.empty = true;
    return out;
  }
  out.aligned = t;

  std::vector<std::string> xs, ys;
  xs.reserve(out.draft_ids.size());
  ys.reserve(t.size());
  for (TokenId id : out.draft_ids) xs.push_back(normalize_surface(dv.surface(id), dv));
  for (TokenId id : t) ys.push_back(normalize_surface(tv.surface(id), tv));
  try {
    out.path = dtw(xs, ys, cfg_.band);
  } catch (const BandError&) {
    out.band_infeasible = true;
    return out;
  }
  const MappedProposal<S> mp = map_probabilities<S>(std::span<const S>(draft.probs.data(), cl.length), *out.path,
                                                    t.size(), cfg_.mapping_rule);
  const std::size_t n = std::min(t.size(), limit);
  out.proxy.assign(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t j = 0; j < n; ++j) out.mapped.push_back(mp.prob(j));
  return out;
}

template <class S>
ProxyLaw<S> Decoder::proxy_law(const std::vector<TokenId>& x, std::size_t generated) const {
  if (strategy_ != Strategy::tokentiming) throw InputError("proxy_law is defined for tokentiming only");
  ProxyLaw<S> law;
  const std::size_t r = room(x, generated);
  if (r <= 1) {
    law[{}] = S(1);
    return law;
  }
  const std::size_t limit = r - 1;
  const auto dctx0 = draft_->tokenizer().encode(target_->tokenizer().decode(x));
  const auto deos = draft_->vocabulary().eos();

  std::vector<std::pair<Proposal<S>, S>> leaves;
  DraftResult<S> cur;
  std::vector<TokenId> ctx = dctx0;
  std::function<void(const S&)> walk = [&](const S& weight) {
    const bool stop = cur.ids.size() == cfg_.k || (!cur.ids.empty() && deos && cur.ids.back() == *deos);
    if (stop) {
      if (leaves.size() >= cfg_.induced_budget) {
        throw BudgetError("induced proposal: more than " + std::to_string(cfg_.induced_budget) + " draft sequences");
      }
      leaves.emplace_back(build_proposal(cur, x.size(), limit), weight);
      return;
    }
    const Distribution<S> d = apply_sampling(draft_->next_distribution<S>(ctx), cfg_.draft_sampling);
    for (TokenId t = 0; t < d.size(); ++t) {
      if (!(d[t] > S(0))) continue;
      cur.ids.push_back(t);
      cur.probs.push_back(d[t]);
      ctx.push_back(t);
      walk(weight * d[t]);
      ctx.pop_back();
      cur.probs.pop_back();
      cur.ids.pop_back();
    }
  };
  walk(S(1));

  // An empty proxy is redrafted once; a second empty one becomes a plain target step.
  S p_empty(0);
  for (const auto& [prop, w] : leaves) {
    if (prop.empty) p_empty += w;
  }
  for (const auto& [prop, w] : leaves) {
    if (!prop.empty) law[prop.proxy] += w * (S(1) + p_empty);
  }
  if (p_empty > S(0)) law[{}] += p_empty * p_empty;
  return law;
}

template <class S>
const ProxyLaw<S>& Decoder::cached_law(const std::vector<TokenId>& x, std::size_t generated) const {
  auto& cache = [&]() -> auto& {
    if constexpr (std::is_same_v<S, double>) {
      return law_cache_d_;
    } else {
      return law_cache_r_;
    }
  }();
  auto key = std::make_pair(x, generated);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  if (cache.size() >= 4096) cache.clear();
  return cache.emplace(std::move(key), proxy_law<S>(x, generated)).first->second;
}

template <class S>
IterationTrace Decoder::step_sd(std::vector<TokenId>& x, std::size_t generated, Chooser<S>& chooser) const {
  IterationTrace tr;
  const std::size_t k_eff = std::min(cfg_.k, room(x, generated) - 1);
  DraftResult<S> d;
  std::vector<TokenId> proxy;
  if (k_eff > 0) {
    d = generate_draft<S>(*draft_, x, k_eff, chooser, cfg_.draft_sampling);
    tr.drafted = d.ids.size();
    tr.candidates = candidate_length_detail<S>(d.probs, d.ids.size(), x.size(), cfg_).length;
    proxy.assign(d.ids.begin(), d.ids.begin() + static_cast<std::ptrdiff_t>(tr.candidates));
    tr.draft_ids = proxy;
  }
  verify_chain<S>(
      x, proxy, [&](std::size_t j, const Distribution<S>&) { return ProposalDistribution<S>{d.dists[j], proxy[j]}; },
      chooser, tr);
  return tr;
}

template <class S>
IterationTrace Decoder::step_tli(std::vector<TokenId>& x, std::size_t generated, Chooser<S>& chooser) const {
  IterationTrace tr;
  const std::size_t k_eff = std::min(cfg_.k, room(x, generated) - 1);
  const auto teos = target_->vocabulary().eos();
  std::vector<TokenId> ids;
  std::vector<S> probs;
  std::vector<Distribution<S>> dists;
  if (k_eff > 0) {
    auto ctx = draft_->tokenizer().encode(target_->tokenizer().decode(x));
    for (std::size_t i = 0; i < k_eff; ++i) {
      Distribution<S> proj;
      try {
        proj = tli_project(apply_sampling(draft_->next_distribution<S>(ctx), cfg_.draft_sampling), *inter_);
      } catch (const ProjectionError&) {
        break;  // no draft mass on shared surfaces in this context
      }
      const TokenId t = chooser.pick(proj);
      ids.push_back(t);
      probs.push_back(proj[t]);
      dists.push_back(std::move(proj));
      ctx.push_back(*inter_->to_draft(t));
      if (teos && t == *teos) break;
    }
  }
  tr.drafted = ids.size();
  tr.candidates = candidate_length_detail<S>(probs, ids.size(), x.size(), cfg_).length;
  std::vector<TokenId> proxy(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(tr.candidates));
  tr.draft_ids = proxy;
  verify_chain<S>(
      x, proxy, [&](std::size_t j, const Distribution<S>&) { return ProposalDistribution<S>{dists[j], proxy[j]}; },
      chooser, tr);
  return tr;
}

template <class S>
IterationTrace Decoder::step_tokentiming(std::vector<TokenId>& x, std::size_t generated, Chooser<S>& chooser) const {
  IterationTrace tr;
  const std::size_t limit = room(x, generated) - 1;
  const std::vector<TokenId> x0 = x;
  Proposal<S> prop;
  if (limit > 0) {
    const auto dctx = draft_->tokenizer().encode(target_->tokenizer().decode(x));
    for (int attempt = 0; attempt < 2; ++attempt) {
      DraftResult<S> d = generate_draft<S>(*draft_, dctx, cfg_.k, chooser, cfg_.draft_sampling);
      prop = build_proposal(d, x.size(), limit);
      tr.drafted += prop.drafted;
      if (!prop.empty) break;
      if (attempt == 0) ++tr.empty_retries;
    }
    tr.ar_fallback = prop.empty;
  }
  tr.candidates = prop.candidates;
  tr.draft_ids = prop.draft_ids;
  tr.path = prop.path;
  tr.aligned_ids = prop.aligned;
  tr.band_infeasible = prop.band_infeasible;

  const std::size_t v = target_->vocab_size();
  std::function<ProposalDistribution<S>(std::size_t, const Distribution<S>&)> proposal_at;
  if (cfg_.proposal == ProposalMode::mapped) {
    proposal_at = [&](std::size_t j, const Distribution<S>& q) {
      return widen_to_distribution<S>(prop.mapped[j], prop.proxy[j], q, cfg_.placement);
    };
  } else {
    proposal_at = [&](std::size_t j, const Distribution<S>&) {
      const ProxyLaw<S>& law = cached_law<S>(x0, generated);
      return ProposalDistribution<S>{
          conditional_proposal<S>(law, std::span<const TokenId>(prop.proxy.data(), j), v), prop.proxy[j]};
    };
  }
  verify_chain<S>(x, prop.proxy, proposal_at, chooser, tr);
  return tr;
}

template <class S>
IterationTrace Decoder::step(std::vector<TokenId>& x, std::size_t generated, Chooser<S>& chooser) const {
  if (finished(x, generated)) throw InputError("step called on a finished sequence");
  switch (strategy_) {
    case Strategy::ar: {
      IterationTrace tr;
      verify_chain<S>(
          x, {}, [](std::size_t, const Distribution<S>&) -> ProposalDistribution<S> { throw InputError("unreachable"); },
          chooser, tr);
      return tr;
    }
    case Strategy::sd: return step_sd<S>(x, generated, chooser);
    case Strategy::tli: return step_tli<S>(x, generated, chooser);
    case Strategy::tokentiming: return step_tokentiming<S>(x, generated, chooser);
  }
  throw InputError("unknown strategy");
}

template <class S>
GenerationResult Decoder::run(std::vector<TokenId> prompt, Chooser<S>& chooser) const {
  if (prompt.size() >= cfg_.cfg_max) throw InputError("prompt already reaches cfg_max");
  GenerationResult res;
  res.prompt_len = prompt.size();
  res.ids = std::move(prompt);
  std::size_t generated = 0;
  while (!finished(res.ids, generated)) {
    IterationTrace tr = step<S>(res.ids, generated, chooser);
    generated += tr.emitted.size();
    res.traces.push_back(std::move(tr));
  }
  const auto eos = target_->vocabulary().eos();
  res.terminated_by = (generated > 0 && eos && res.ids.back() == *eos) ? Termination::eos : Termination::cap;
  return res;
}

GenerationResult Decoder::generate_ids(std::vector<TokenId> prompt, Rng& rng) const {
  RngChooser chooser(rng);
  return run<double>(std::move(prompt), chooser);
}

GenerationResult Decoder::generate(std::string_view prompt, Rng& rng) const {
  return generate_ids(encode_prompt(prompt), rng);
}

template VerifyOutcome<double> verify_position<double>(const ProposalDistribution<double>&, const Distribution<double>&,
                                                       Chooser<double>&, CorrectionRule);
template VerifyOutcome<Rational> verify_position<Rational>(const ProposalDistribution<Rational>&,
                                                           const Distribution<Rational>&, Chooser<Rational>&,
                                                           CorrectionRule);
template std::optional<Distribution<double>> residual_distribution<double>(const Distribution<double>&,
                                                                          const Distribution<double>&);
template std::optional<Distribution<Rational>> residual_distribution<Rational>(const Distribution<Rational>&,
                                                                              const Distribution<Rational>&);
template Distribution<double> conditional_proposal<double>(const ProxyLaw<double>&, std::span<const TokenId>,
                                                           std::size_t);
template Distribution<Rational> conditional_proposal<Rational>(const ProxyLaw<Rational>&, std::span<const TokenId>,
                                                               std::size_t);
template IterationTrace Decoder::step<double>(std::vector<TokenId>&, std::size_t, Chooser<double>&) const;
template IterationTrace Decoder::step<Rational>(std::vector<TokenId>&, std::size_t, Chooser<Rational>&) const;
template GenerationResult Decoder::run<double>(std::vector<TokenId>, Chooser<double>&) const;
template GenerationResult Decoder::run<Rational>(std::vector<TokenId>, Chooser<Rational>&) const;
template ProxyLaw<double> Decoder::proxy_law<double>(const std::vector<TokenId>&, std::size_t) const;
template ProxyLaw<Rational> Decoder::proxy_law<Rational>(const std::vector<TokenId>&, std::size_t) const;

// ---- wrappers ---------------------------------------------------------------------------------

GenerationResult autoregress(const TokenModel& target, std::vector<TokenId> prefix, const GenConfig& cfg, Rng& rng) {
  return Decoder(Strategy::ar, target, nullptr, cfg).generate_ids(std::move(prefix), rng);
}

GenerationResult standard_sd_generate(const TokenModel& draft, const TokenModel& target, std::vector<TokenId> prefix,
                                      const GenConfig& cfg, Rng& rng) {
  return Decoder(Strategy::sd, target, &draft, cfg).generate_ids(std::move(prefix), rng);
}

GenerationResult tli_generate(const TokenModel& draft, const TokenModel& target, std::string_view prefix_text,
                              const GenConfig& cfg, Rng& rng) {
  return Decoder(Strategy::tli, target, &draft, cfg).generate(prefix_text, rng);
}

GenerationResult tokentiming_generate(const TokenModel& draft, const TokenModel& target, std::string_view prefix_text,
                                      const GenConfig& cfg, Rng& rng) {
  return Decoder(Strategy::tokentiming, target, &draft, cfg).generate(prefix_text, rng);
}

}  // namespace tokentiming
