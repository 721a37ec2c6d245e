#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "tokentiming/align.hpp"
#include "tokentiming/error.hpp"
#include "tokentiming/kernels.hpp"
#include "tokentiming/lm.hpp"

namespace tokentiming {

// How draft-token probabilities are carried onto proxy positions along the path.
//   product_split  p(t_j) = prod_i p(d_i)^(1/a_i), a_i = number of proxy positions d_i touches
//   min            smallest contributing p(d_i)
//   mean           arithmetic mean of contributing p(d_i)
//   duplicate      prod_i p(d_i), no split
enum class MappingRule { product_split, min, mean, duplicate };

std::string to_string(MappingRule rule);
MappingRule parse_mapping_rule(const std::string& s);

template <class S>
struct MappedPosition {
  S prob;
  std::vector<std::size_t> contributors;  // 1-indexed draft positions
  std::vector<unsigned> arity;            // split arity of each contributor
};

template <class S>
struct MappedProposal {
  std::vector<MappedPosition<S>> positions;  // index j-1 for proxy position j
  std::size_t size() const { return positions.size(); }
  const S& prob(std::size_t j) const { return positions[j].prob; }
};

namespace detail {

// Throws InputError unless `path` runs (1,1)..(m,n) in unit monotone steps.
void check_path(const AlignmentPath& path, std::size_t m, std::size_t n);

}  // namespace detail

template <class S>
MappedProposal<S> map_probabilities(std::span<const S> draft_probs, const AlignmentPath& path, std::size_t n,
                                    MappingRule rule = MappingRule::product_split) {
  const std::size_t m = draft_probs.size();
  detail::check_path(path, m, n);
  for (const S& p : draft_probs) {
    if (!(p > S(0)) || p > S(1)) throw InputError("map_probabilities: draft probabilities must lie in (0, 1]");
  }
  std::vector<unsigned> arity(m, 0);
  MappedProposal<S> out;
  out.positions.resize(n);
  for (const auto& [i, j] : path.pairs) {
    auto& pos = out.positions[j - 1];
    if (pos.contributors.empty() || pos.contributors.back() != i) {
      pos.contributors.push_back(i);
      ++arity[i - 1];
    }
  }
  for (auto& pos : out.positions) {
    pos.arity.reserve(pos.contributors.size());
    for (std::size_t i : pos.contributors) pos.arity.push_back(arity[i - 1]);
    switch (rule) {
      case MappingRule::product_split: {
        S acc(1);
        for (std::size_t c = 0; c < pos.contributors.size(); ++c) {
          acc *= nth_root(draft_probs[pos.contributors[c] - 1], pos.arity[c]);
        }
        pos.prob = acc;
        break;
      }
      case MappingRule::duplicate: {
        S acc(1);
        for (std::size_t i : pos.contributors) acc *= draft_probs[i - 1];
        pos.prob = acc;
        break;
      }
      case MappingRule::min: {
        S best = draft_probs[pos.contributors.front() - 1];
        for (std::size_t i : pos.contributors) best = std::min<S>(best, draft_probs[i - 1]);
        pos.prob = best;
        break;
      }
      case MappingRule::mean: {
        S acc(0);
        for (std::size_t i : pos.contributors) acc += draft_probs[i - 1];
        pos.prob = acc / S(static_cast<long>(pos.contributors.size()));
        break;
      }
    }
  }
  return out;
}

inline constexpr double kProposalFloor = 1e-9;

enum class MassPlacement { uniform, proportional };

std::string to_string(MassPlacement placement);
MassPlacement parse_mass_placement(const std::string& s);

template <class S>
struct ProposalDistribution {
  Distribution<S> full;
  TokenId proposed_id = 0;
};

// Full proposal over the target vocabulary whose value at `proposed` is the
// clamped scalar; the rest of the mass is spread uniformly or in proportion to q.
template <class S>
ProposalDistribution<S> widen_to_distribution(const S& p, TokenId proposed, const Distribution<S>& q,
                                              MassPlacement placement = MassPlacement::uniform) {
  const std::size_t v = q.size();
  if (proposed >= v) throw InputError("widen_to_distribution: proposed id out of range");
  const S floor = from_double<S>(kProposalFloor);
  S head = p < floor ? floor : (p > S(1) ? S(1) : p);
  ProposalDistribution<S> out;
  out.proposed_id = proposed;
  out.full = Distribution<S>::zeros(v);
  if (v == 1) {
    if (head < S(1)) throw DegenerateVocabularyError("widen_to_distribution: vocabulary of size 1 cannot hold p < 1");
    out.full[proposed] = S(1);
    return out;
  }
  const S rest = S(1) - head;
  S q_rest(0);
  if (placement == MassPlacement::proportional) {
    for (std::size_t t = 0; t < v; ++t) {
      if (t != proposed) q_rest += q.probs[t];
    }
  }
  if (placement == MassPlacement::proportional && q_rest > S(0)) {
    const S factor = rest / q_rest;
    for (std::size_t t = 0; t < v; ++t) {
      if (t != proposed) out.full.probs[t] = q.probs[t] * factor;
    }
  } else {
    const S each = rest / S(static_cast<long>(v - 1));
    for (std::size_t t = 0; t < v; ++t) out.full.probs[t] = each;
  }
  out.full[proposed] = head;
  if constexpr (std::is_same_v<S, double>) {
    // Pull the rounding error back into the proposed slot so the sum is 1 to the last ulp or so.
    double s = kernels::sum(out.full.probs);
    out.full[proposed] = std::max(0.0, head + (1.0 - s));
  }
  return out;
}

// Draft-id -> target-id for surfaces present in both vocabularies.
class VocabIntersection {
 public:
  VocabIntersection(const Vocabulary& draft, const Vocabulary& target);
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const std::vector<std::pair<TokenId, TokenId>>& pairs() const { return pairs_; }
  std::optional<TokenId> to_target(TokenId draft_id) const;
  std::optional<TokenId> to_draft(TokenId target_id) const;
  std::size_t draft_size() const { return draft_to_target_.size(); }
  std::size_t target_size() const { return target_to_draft_.size(); }

 private:
  std::vector<std::pair<TokenId, TokenId>> pairs_;
  std::vector<std::optional<TokenId>> draft_to_target_;
  std::vector<std::optional<TokenId>> target_to_draft_;
};

// Renormalizes draft mass on shared surfaces onto the target vocabulary.
// Throws ProjectionError when the intersection is empty or carries no mass.
template <class S>
Distribution<S> tli_project(const Distribution<S>& q_draft, const VocabIntersection& inter) {
  if (inter.empty()) throw ProjectionError("tli_project: draft and target vocabularies share no surface");
  if (q_draft.size() != inter.draft_size()) throw InputError("tli_project: distribution size does not match vocabulary");
  Distribution<S> out = Distribution<S>::zeros(inter.target_size());
  S mass(0);
  for (const auto& [d, t] : inter.pairs()) {
    out.probs[t] = q_draft.probs[d];
    mass += q_draft.probs[d];
  }
  if (!(mass > S(0))) throw ProjectionError("tli_project: draft distribution puts no mass on the intersection");
  for (auto& p : out.probs) p /= mass;
  return out;
}

template <class S>
Distribution<S> tli_project(const Distribution<S>& q_draft, const Vocabulary& draft, const Vocabulary& target) {
  return tli_project(q_draft, VocabIntersection(draft, target));
}

}  // namespace tokentiming
