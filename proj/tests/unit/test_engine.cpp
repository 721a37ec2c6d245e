#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tokentiming/bench.hpp"
#include "tokentiming/verify.hpp"

using namespace tokentiming;
using tt_test::plain_tokenizer;
using tt_test::row;

namespace {

// Accept decisions use a fixed r; picks use a fixed inverse-CDF point.
class FixedChooser final : public Chooser<double> {
 public:
  FixedChooser(double r, double pick_at) : r_(r), pick_at_(pick_at) {}
  TokenId pick(const Distribution<double>& d) override { return sample_at(d, pick_at_); }
  bool accept(const double& prob, double* r) override {
    if (r != nullptr) *r = r_;
    return r_ < prob;
  }

 private:
  double r_, pick_at_;
};

GenConfig with_k(std::size_t k, std::size_t cap = 64) {
  GenConfig c;
  c.k = k;
  c.max_total_tokens = cap;
  return c;
}

std::size_t emitted_by_traces(const GenerationResult& g) {
  std::size_t n = 0;
  for (const auto& t : g.traces) n += t.accepted + (t.bonus_token ? 1 : 0);
  return n;
}

}  // namespace

TEST_CASE("candidate length policy") {
  GenConfig cfg;
  cfg.cfg_max = 100;
  std::vector<double> none;
  CHECK(candidate_length_detail<double>(none, 10, 50, cfg).max_new == 10);

  cfg.alpha = 0.5;
  std::vector<double> p = {0.9, 0.9, 0.1, 0.9};
  auto c = candidate_length_detail<double>(p, 4, 10, cfg);
  CHECK(c.f == 2);
  CHECK(c.length == 2);
  cfg.candidate_rule = CandidateRule::count;
  CHECK(candidate_length_detail<double>(p, 4, 10, cfg).f == 3);

  cfg.candidate_rule = CandidateRule::prefix;
  cfg.cfg_min = 13;
  CHECK(candidate_length(p, 4, 10, cfg) == 3);  // f = 2 lifted to min_new = 3
  cfg.cfg_max = 12;
  cfg.cfg_min = 0;
  CHECK(candidate_length(p, 4, 10, cfg) == 1);  // max_new = 12 - 10 - 1
  CHECK_THROWS_AS(candidate_length(p, 4, 12, cfg), InputError);
}

TEST_CASE("verify position: rejection draws from the residual") {
  Distribution<double> q({0.5, 0.5});
  ProposalDistribution<double> p{Distribution<double>({0.9, 0.1}), 0};
  FixedChooser ch(0.9, 0.5);
  auto out = verify_position<double>(p, q, ch);
  CHECK_FALSE(out.accepted);
  CHECK(out.accept_prob == doctest::Approx(5.0 / 9.0));
  CHECK(out.token == 1);
  auto res = residual_distribution(q, p.full);
  REQUIRE(res);
  CHECK(res->probs == std::vector<double>{0.0, 1.0});
}

TEST_CASE("verify position: q above p always accepts") {
  Distribution<double> q({0.2, 0.8});
  ProposalDistribution<double> p{Distribution<double>({0.5, 0.5}), 1};
  FixedChooser ch(0.999999, 0.5);
  auto out = verify_position<double>(p, q, ch);
  CHECK(out.accepted);
  CHECK(out.accept_prob == 1.0);
  CHECK(out.token == 1);
}

TEST_CASE("verify position: equal distributions fall back to q") {
  Distribution<double> q({0.4, 0.6});
  ProposalDistribution<double> p{q, 0};
  CHECK_FALSE(residual_distribution(q, p.full).has_value());
}

TEST_CASE("acceptance frequency for q = 0.2, p = 0.8") {
  Distribution<double> q({0.2, 0.8});
  ProposalDistribution<double> p{Distribution<double>({0.8, 0.2}), 0};
  Rng rng(99);
  int acc = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) acc += verify_position(p, q, rng).accepted;
  CHECK(std::abs(acc / double(n) - 0.25) <= 0.01);
}

TEST_CASE("autoregressive decoding") {
  auto tok = plain_tokenizer({"a", "b"});
  TokenModel chain = TokenModel::table(tok, 2,
                                       {{{}, row({"0", "1", "0"})}, {{1}, row({"0", "0", "1"})},
                                        {{2}, row({"1", "0", "0"})}});
  Rng rng(0);
  auto g = autoregress(chain, {}, with_k(4), rng);
  CHECK(std::vector<TokenId>(g.generated().begin(), g.generated().end()) == std::vector<TokenId>{1, 2, 0});
  CHECK(g.terminated_by == Termination::eos);

  auto no_eos = std::make_shared<const Tokenizer>(Vocabulary({"a", "b", "c", "d"}), std::vector<MergeRule>{});
  Rng rng2(1);
  auto capped = autoregress(TokenModel::uniform(no_eos), {}, with_k(4, 5), rng2);
  CHECK(capped.generated().size() == 5);
  CHECK(capped.terminated_by == Termination::cap);

  Rng rng3(3);
  auto golden = autoregress(tt_test::toy_bigram(), {}, with_k(4, 8), rng3);
  CHECK(std::vector<TokenId>(golden.generated().begin(), golden.generated().end()) ==
        std::vector<TokenId>{2, 1, 2, 1, 2, 1, 2, 1});
}

TEST_CASE("self-draft accepts everything") {
  TokenModel m = tt_test::toy_bigram();
  for (Strategy s : {Strategy::sd, Strategy::tli, Strategy::tokentiming}) {
    Decoder d(s, m, &m, with_k(3, 40));
    Rng rng(5);
    auto g = d.generate_ids({}, rng);
    for (const auto& t : g.traces) CHECK(t.accepted == t.proxy_len);
    CHECK(accept_rate(g.traces) == 1.0);
    CHECK(emitted_by_traces(g) == g.generated().size());
  }
}

TEST_CASE("standard sd across vocabularies is an interface error") {
  auto grid = toy_grid(1);
  CHECK_THROWS_AS(Decoder(Strategy::sd, grid[0].target, &grid[0].draft, GenConfig{}), InterfaceError);
  auto other = std::make_shared<const Tokenizer>(Vocabulary({"q", "r"}), std::vector<MergeRule>{});
  TokenModel disjoint = TokenModel::uniform(other);
  CHECK_THROWS_AS(Decoder(Strategy::tli, grid[0].target, &disjoint, GenConfig{}), ProjectionError);
}

TEST_CASE("sd with a wrong one-hot drafter always corrects to the target token") {
  auto tok = plain_tokenizer({"a", "b"});
  TokenModel draft = TokenModel::table(tok, 1, {{{}, row({"0", "1", "0"})}});
  TokenModel target = TokenModel::table(tok, 1, {{{}, row({"0", "0", "1"})}});
  Rng rng(2);
  auto g = standard_sd_generate(draft, target, {}, with_k(2, 12), rng);
  for (const auto& t : g.traces) {
    if (t.proxy_len == 0) continue;  // last step has no room to draft
    CHECK(t.accepted == 0);
    CHECK(t.corrected);
    CHECK(t.bonus_token == TokenId{2});
  }
  CHECK(accept_rate(g.traces) == 0.0);
}

TEST_CASE("tli with one shared surface accepts at the target's mass on it") {
  auto dtok = std::make_shared<const Tokenizer>(Vocabulary({"x", "p"}), std::vector<MergeRule>{});
  auto ttok = plain_tokenizer({"x", "xx"}, {{"x", "x"}});  // <EOS>, x, xx
  TokenModel draft = TokenModel::uniform(dtok);
  TokenModel target = TokenModel::table(ttok, 1, {{{}, row({"0", "3/10", "7/10"})}});
  Rng rng(8);
  auto g = tli_generate(draft, target, "", with_k(1, 20000), rng);
  for (const auto& t : g.traces) CHECK(t.draft_ids == std::vector<TokenId>{1});
  CHECK(std::abs(accept_rate(g.traces) - 0.3) < 0.015);
}

TEST_CASE("tokentiming iteration on the worked example") {
  // Draft pieces S|cal|ing|Law re-tokenize on the target side as Scal|ing|L|aw.
  auto dvocab = std::vector<std::string>{"S", "c", "a", "l", "i", "n", "g", "L", "w", "ca", "cal", "in", "ing", "La", "Law"};
  auto dtok = plain_tokenizer(dvocab, {{"c", "a"}, {"ca", "l"}, {"i", "n"}, {"in", "g"}, {"L", "a"}, {"La", "w"}});
  auto tvocab = std::vector<std::string>{"S", "c", "a", "l", "i", "n", "g", "L", "w", "Sc", "Sca", "Scal", "in", "ing", "aw"};
  auto ttok = plain_tokenizer(tvocab, {{"S", "c"}, {"Sc", "a"}, {"Sca", "l"}, {"i", "n"}, {"in", "g"}, {"a", "w"}});
  auto did = [&](const std::string& s) { return *dtok->vocabulary().find(s); };
  auto tid = [&](const std::string& s) { return *ttok->vocabulary().find(s); };

  auto one_hot = [](std::size_t v, TokenId at) {
    std::vector<Rational> r(v, Rational(0));
    r[at] = 1;
    return r;
  };
  const std::size_t dv = dtok->vocabulary().size(), tv = ttok->vocabulary().size();
  TokenModel draft = TokenModel::table(dtok, 2,
                                       {{{}, one_hot(dv, did("S"))},
                                        {{did("S")}, one_hot(dv, did("cal"))},
                                        {{did("cal")}, one_hot(dv, did("ing"))},
                                        {{did("ing")}, one_hot(dv, did("Law"))}});
  TokenModel target = TokenModel::table(ttok, 2,
                                        {{{}, one_hot(tv, tid("Scal"))},
                                         {{tid("Scal")}, one_hot(tv, tid("ing"))},
                                         {{tid("ing")}, one_hot(tv, tid("L"))},
                                         {{tid("L")}, one_hot(tv, tid("aw"))},
                                         {{tid("aw")}, one_hot(tv, 0)}});
  GenConfig cfg = with_k(4, 5);
  Decoder dec(Strategy::tokentiming, target, &draft, cfg);
  Rng rng(0);
  RngChooser chooser(rng);
  std::vector<TokenId> x;
  IterationTrace t = dec.step<double>(x, 0, chooser);
  CHECK(t.drafted == 4);
  CHECK(t.proxy_len == 4);
  CHECK(t.checks.size() == 4);
  CHECK(t.accepted == 4);
  CHECK(t.proxy_ids == std::vector<TokenId>{tid("Scal"), tid("ing"), tid("L"), tid("aw")});
  REQUIRE(t.path);
  CHECK(t.path->pairs ==
        std::vector<std::pair<std::size_t, std::size_t>>{{1, 1}, {2, 1}, {3, 2}, {4, 3}, {4, 4}});
  CHECK(t.bonus_token == TokenId{0});
}

TEST_CASE("trace consistency and determinism on a heterogeneous pair") {
  auto grid = toy_grid(6);
  for (const auto& pair : grid) {
    for (Strategy s : {Strategy::tli, Strategy::tokentiming}) {
      Decoder d(s, pair.target, &pair.draft, with_k(pair.k + 1, 30));
      Rng a(11), b(11);
      auto g1 = d.generate_ids({}, a);
      auto g2 = d.generate_ids({}, b);
      CHECK(g1.ids == g2.ids);
      CHECK(g1.traces.size() == g2.traces.size());
      CHECK(emitted_by_traces(g1) == g1.generated().size());
      CHECK(g1.generated().size() <= 30);
      for (const auto& t : g1.traces) {
        CHECK(t.accepted <= t.proxy_len);
        CHECK(t.emitted.size() == t.accepted + (t.bonus_token ? 1 : 0));
      }
    }
  }
}

TEST_CASE("config validation and enum parsing") {
  GenConfig c;
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_strategy("tt") == Strategy::tokentiming);
  CHECK(parse_strategy(to_string(Strategy::tli)) == Strategy::tli);
  CHECK_THROWS(parse_strategy("eagle"));
  CHECK(parse_proposal_mode("induced") == ProposalMode::induced);
  CHECK(parse_candidate_rule("count") == CandidateRule::count);
  CHECK(parse_correction_rule("residual") == CorrectionRule::residual);
}
