#include <cmath>
#include <set>

#include "tokentiming/verify.hpp"

namespace tokentiming {

namespace {

struct Layout {
  std::vector<std::string> letters;
  std::vector<MergeRule> draft_merges;
  std::vector<MergeRule> target_merges;
};

// Draft and target always differ in at least one merge, so proxy sequences
// regularly have a different length from the draft they came from.
const std::vector<Layout>& layouts() {
  static const std::vector<Layout> kLayouts = {
      {{"a", "b"}, {}, {{"a", "b"}}},
      {{"a", "b"}, {}, {{"b", "a"}}},
      {{"a", "b"}, {{"a", "a"}}, {{"a", "b"}}},
      {{"a", "b", "c"}, {}, {{"a", "b"}}},
      {{"a", "b"}, {{"a", "b"}}, {{"a", "b"}, {"b", "a"}}},
      {{"a", "b", "c"}, {}, {{"b", "c"}}},
  };
  return kLayouts;
}

std::shared_ptr<const Tokenizer> make_tokenizer(const std::vector<std::string>& letters,
                                                const std::vector<MergeRule>& merges) {
  std::vector<std::string> tokens = {std::string(kDefaultEos)};
  tokens.insert(tokens.end(), letters.begin(), letters.end());
  for (const auto& [l, r] : merges) tokens.push_back(l + r);
  Vocabulary v(std::move(tokens), std::nullopt, {0}, TokenId{0});
  return std::make_shared<const Tokenizer>(std::move(v), merges);
}

}  // namespace

TokenModel random_table_model(std::shared_ptr<const Tokenizer> tok, Rng& rng) {
  const std::size_t v = tok->vocabulary().size();
  std::map<TokenModel::Context, std::vector<Rational>> rows;
  auto row = [&] {
    std::vector<long> w(v);
    long total = 0;
    for (auto& x : w) {
      x = 1 + static_cast<long>(rng.uniform() * 4.0);
      total += x;
    }
    std::vector<Rational> probs(v);
    for (std::size_t t = 0; t < v; ++t) probs[t] = from_ratio<Rational>(w[t], total);
    return probs;
  };
  rows.emplace(TokenModel::Context{}, row());
  for (TokenId t = 0; t < v; ++t) rows.emplace(TokenModel::Context{t}, row());
  return TokenModel::table(std::move(tok), 2, std::move(rows));
}

std::vector<ToyPair> toy_grid(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ToyPair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Layout& l = layouts()[i % layouts().size()];
    auto dtok = make_tokenizer(l.letters, l.draft_merges);
    auto ttok = make_tokenizer(l.letters, l.target_merges);
    TokenModel draft = random_table_model(dtok, rng);
    TokenModel target = random_table_model(ttok, rng);
    TokenModel same = random_table_model(ttok, rng);
    std::string name = (i < 10 ? "toy0" : "toy") + std::to_string(i);
    out.push_back(ToyPair{name, dtok, ttok, std::move(draft), std::move(target), std::move(same), 1 + i % 3});
  }
  return out;
}

LosslessnessCheck check_losslessness(const ToyPair& pair, Strategy strategy, std::size_t horizon, GenConfig cfg) {
  cfg.k = pair.k;
  const TokenModel* draft = strategy == Strategy::sd ? &pair.same_vocab_draft : &pair.draft;
  if (strategy == Strategy::ar) draft = nullptr;
  const OracleResult got = exact_output_distribution(strategy, draft, pair.target, {}, horizon, cfg);
  const OutcomeDistribution want = target_ar_distribution(pair.target, {}, horizon);
  LosslessnessCheck c;
  c.strategy = to_string(strategy);
  c.pair = pair.name;
  c.horizon = horizon;
  c.equal = got.dist == want;
  c.branches = got.branches;
  std::set<Sequence> keys;
  for (const auto& [s, p] : got.dist.probs) keys.insert(s);
  for (const auto& [s, p] : want.probs) keys.insert(s);
  c.outcomes = keys.size();
  for (const auto& s : keys) {
    Rational d = got.dist[s] - want[s];
    c.max_abs_error = std::max(c.max_abs_error, std::abs(d.get_d()));
  }
  return c;
}

}  // namespace tokentiming
