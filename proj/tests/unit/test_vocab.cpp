#include <doctest.h>

#include <sstream>

#include "support.hpp"
#include "tokentiming/bench.hpp"
#include "tokentiming/error.hpp"
#include "tokentiming/vocab.hpp"

using namespace tokentiming;

namespace {

BpeTrainOptions bare(std::size_t size) {
  BpeTrainOptions o;
  o.boundary_marker = std::nullopt;
  o.reserved = {};
  o.byte_fallback = false;
  o.target_size = size;
  return o;
}

}  // namespace

TEST_CASE("bpe learns the single possible merge") {
  std::vector<std::string> corpus = {"ab"};
  Tokenizer tok = train_bpe(corpus, bare(3));
  const auto& v = tok.vocabulary();
  REQUIRE(v.find("a"));
  REQUIRE(v.find("b"));
  REQUIRE(v.find("ab"));
  CHECK(tok.encode("ab") == std::vector<TokenId>{*v.find("ab")});
  CHECK(tok.decode(std::vector<TokenId>{*v.find("a"), *v.find("b")}) == "ab");
}

TEST_CASE("bpe with target size equal to the alphabet learns nothing") {
  std::vector<std::string> corpus = {"aa aa"};
  BpeTrainOptions o = bare(2);
  o.boundary_marker = std::string(kDefaultBoundaryMarker);
  Tokenizer tok = train_bpe(corpus, o);
  CHECK(tok.merges().empty());
  CHECK(tok.vocabulary().size() == 2);
}

TEST_CASE("bpe rejects bad input") {
  std::vector<std::string> empty;
  CHECK_THROWS_AS(train_bpe(empty, bare(8)), InputError);
  std::vector<std::string> corpus = {"abc"};
  CHECK_THROWS_AS(train_bpe(corpus, bare(2)), InputError);
}

TEST_CASE("tokenizers of different sizes have jaccard below one") {
  CorpusOptions co;
  co.seed = 5;
  auto lines = synthetic_corpus(co);
  BpeTrainOptions small, large;
  small.target_size = 64;
  large.target_size = 256;
  Tokenizer a = train_bpe(lines, small), b = train_bpe(lines, large);
  VocabStats s = vocab_stats(a.vocabulary(), b.vocabulary());
  CHECK(s.jaccard < 1.0);
  CHECK(s.jaccard > 0.0);
}

TEST_CASE("encode and decode") {
  auto tok = tt_test::plain_tokenizer({"a", "b", "c"});
  CHECK(tok->encode("").empty());
  CHECK(tok->encode("abc") == std::vector<TokenId>{1, 2, 3});
  CHECK(tok->decode(std::vector<TokenId>{}) == "");
  CHECK(tok->decode(std::vector<TokenId>{0, 1}) == "a");
  CHECK_THROWS_AS(tok->decode(std::vector<TokenId>{9}), InputError);
}

TEST_CASE("round trip on corpus lines, with and without byte fallback") {
  CorpusOptions co;
  co.lines = 100;
  co.seed = 9;
  auto lines = synthetic_corpus(co);
  BpeTrainOptions o;
  o.target_size = 120;
  Tokenizer tok = train_bpe(lines, o);
  for (const auto& l : lines) CHECK(tok.decode(tok.encode(l)) == l);
  // Unseen characters go through byte tokens.
  const std::string odd = "zebra QX \xC3\xA9t\xC3\xA9";
  CHECK(tok.decode(tok.encode(odd)) == odd);
  Tokenizer ch = make_character_tokenizer(lines);
  for (const auto& l : lines) CHECK(ch.decode(ch.encode(l)) == l);
}

TEST_CASE("surface normalization") {
  Vocabulary v({"<EOS>", "\xC4\xA0" "cal", "cal"}, std::string(kDefaultBoundaryMarker), {0}, TokenId{0});
  NormalizedSurface n = normalize_surface_detailed("\xC4\xA0" "cal", v);
  CHECK(n.text == "cal");
  CHECK(n.leading_boundary);
  CHECK(normalize_surface("cal", v) == "cal");
  CHECK(normalize_surface("<EOS>", v) == "");
}

TEST_CASE("vocabulary statistics") {
  Vocabulary abc({"a", "b", "c"}), bcd({"b", "c", "d"}), xyzuv({"x", "y", "z", "u", "v"});
  CHECK(vocab_stats(abc, abc).jaccard == 1.0);
  VocabStats d = vocab_stats(abc, xyzuv);
  CHECK(d.intersection_size == 0);
  CHECK(d.union_size == 8);
  CHECK(d.jaccard == 0.0);
  CHECK(vocab_stats(abc, bcd).jaccard == doctest::Approx(0.5));
}

TEST_CASE("vocabulary invariants") {
  CHECK_THROWS_AS(Vocabulary({"a", "a"}), InputError);
  CHECK_THROWS_AS(Vocabulary({"a", ""}), InputError);
  CHECK_THROWS_AS(Vocabulary({"a"}, std::nullopt, {3}), InputError);
  CHECK_THROWS_AS(Vocabulary({"a", "b"}, std::nullopt, {}, TokenId{1}), InputError);
}

TEST_CASE("vocabulary and merge files round trip") {
  CorpusOptions co;
  co.lines = 200;
  auto lines = synthetic_corpus(co);
  BpeTrainOptions o;
  o.target_size = 80;
  Tokenizer tok = train_bpe(lines, o);
  std::stringstream vs, ms;
  write_vocabulary(vs, tok.vocabulary());
  write_merges(ms, tok.merges());
  CHECK(vs.str().rfind("#", 0) == 0);
  Vocabulary v2 = read_vocabulary(vs);
  auto m2 = read_merges(ms);
  CHECK(v2 == tok.vocabulary());
  CHECK(m2 == tok.merges());
  const std::string tricky = "a\tb\nc\\d";
  CHECK(unescape_surface(escape_surface(tricky)) == tricky);
  CHECK(escape_surface(tricky).find('\t') == std::string::npos);
}
