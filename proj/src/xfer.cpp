#include "tokentiming/xfer.hpp"

namespace tokentiming {

std::string to_string(MappingRule rule) {
  switch (rule) {
    case MappingRule::product_split: return "product_split";
    case MappingRule::min: return "min";
    case MappingRule::mean: return "mean";
    case MappingRule::duplicate: return "duplicate";
  }
  return "?";
}

MappingRule parse_mapping_rule(const std::string& s) {
  if (s == "product_split") return MappingRule::product_split;
  if (s == "min") return MappingRule::min;
  if (s == "mean") return MappingRule::mean;
  if (s == "duplicate") return MappingRule::duplicate;
  throw ConfigError("unknown mapping_rule: " + s);
}

std::string to_string(MassPlacement placement) {
  return placement == MassPlacement::uniform ? "uniform" : "proportional";
}

MassPlacement parse_mass_placement(const std::string& s) {
  if (s == "uniform") return MassPlacement::uniform;
  if (s == "proportional") return MassPlacement::proportional;
  throw ConfigError("unknown mass placement: " + s);
}

namespace detail {

void check_path(const AlignmentPath& path, std::size_t m, std::size_t n) {
  if (path.pairs.empty() || m == 0 || n == 0) throw InputError("alignment path or sequences are empty");
  if (path.pairs.front() != std::pair<std::size_t, std::size_t>{1, 1}) throw InputError("path must start at (1,1)");
  if (path.pairs.back() != std::pair<std::size_t, std::size_t>{m, n}) {
    throw InputError("path must end at (m,n) = (" + std::to_string(m) + "," + std::to_string(n) + ")");
  }
  for (std::size_t s = 1; s < path.pairs.size(); ++s) {
    auto [i0, j0] = path.pairs[s - 1];
    auto [i1, j1] = path.pairs[s];
    const bool ok = (i1 == i0 + 1 && j1 == j0) || (i1 == i0 && j1 == j0 + 1) || (i1 == i0 + 1 && j1 == j0 + 1);
    if (!ok) throw InputError("path steps must be (1,0), (0,1) or (1,1)");
  }
}

}  // namespace detail

VocabIntersection::VocabIntersection(const Vocabulary& draft, const Vocabulary& target)
    : draft_to_target_(draft.size()), target_to_draft_(target.size()) {
  for (TokenId d = 0; d < draft.size(); ++d) {
    if (auto t = target.find(draft.surface(d))) {
      pairs_.emplace_back(d, *t);
      draft_to_target_[d] = *t;
      target_to_draft_[*t] = d;
    }
  }
}

std::optional<TokenId> VocabIntersection::to_target(TokenId draft_id) const {
  return draft_id < draft_to_target_.size() ? draft_to_target_[draft_id] : std::nullopt;
}

std::optional<TokenId> VocabIntersection::to_draft(TokenId target_id) const {
  return target_id < target_to_draft_.size() ? target_to_draft_[target_id] : std::nullopt;
}

}  // namespace tokentiming
