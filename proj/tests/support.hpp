#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "tokentiming/bench.hpp"
#include "tokentiming/lm.hpp"

namespace tt_test {

using namespace tokentiming;

// EOS at id 0, then the given surfaces; no marker, no byte tokens.
inline std::shared_ptr<const Tokenizer> plain_tokenizer(const std::vector<std::string>& surfaces,
                                                        const std::vector<MergeRule>& merges = {}) {
  std::vector<std::string> tokens = {std::string(kDefaultEos)};
  tokens.insert(tokens.end(), surfaces.begin(), surfaces.end());
  return std::make_shared<const Tokenizer>(Vocabulary(std::move(tokens), std::nullopt, {0}, TokenId{0}), merges);
}

inline std::vector<Rational> row(std::initializer_list<const char*> ps) {
  std::vector<Rational> out;
  for (const char* p : ps) out.push_back(parse_rational(p));
  return out;
}

// Bigram table over {a, b, c}; EOS is only reachable after "b".
inline TokenModel toy_bigram() {
  auto tok = plain_tokenizer({"a", "b", "c"});
  return TokenModel::table(tok, 2,
                           {{{}, row({"0", "1/2", "1/4", "1/4"})},
                            {{1}, row({"0", "1/4", "1/2", "1/4"})},
                            {{2}, row({"1/6", "1/3", "1/6", "1/3"})},
                            {{3}, row({"0", "1/2", "0", "1/2"})}});
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* base = std::getenv("TT_TEST_TMP");
  std::filesystem::path p = base ? std::filesystem::path(base) : std::filesystem::temp_directory_path() / "tt_test";
  p /= name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

struct Workspace {
  std::filesystem::path dir;
  std::string bpe_model, char_model, prompts;
};

// Synthetic corpus, a BPE target and a character-level draft (both n-gram), and a prompt file.
inline Workspace make_workspace(const std::string& name, std::size_t bpe_size = 300, std::size_t prompts = 4) {
  Workspace w;
  w.dir = scratch_dir(name);
  CorpusOptions co;
  co.lines = 1500;
  co.min_words = 20;
  co.max_words = 40;
  co.seed = 21;
  auto lines = synthetic_corpus(co);
  TokenizerOptions base;
  base.byte_fallback = false;
  BpeTrainOptions bo;
  static_cast<TokenizerOptions&>(bo) = base;
  bo.target_size = bpe_size;
  auto bpe = std::make_shared<const Tokenizer>(train_bpe(lines, bo));
  auto chr = std::make_shared<const Tokenizer>(make_character_tokenizer(lines, base));
  auto save = [&](const std::shared_ptr<const Tokenizer>& tok, int order, const std::string& stem) {
    const std::string v = (w.dir / (stem + ".vocab")).string(), m = (w.dir / (stem + ".merges")).string();
    const std::string path = (w.dir / (stem + ".model")).string();
    save_tokenizer(*tok, v, m);
    save_model(TokenModel::ngram(tok, order, 0.01, lines), path, v, m);
    return path;
  };
  w.bpe_model = save(bpe, 3, "bpe");
  w.char_model = save(chr, 4, "char");
  std::vector<std::string> ps;
  for (std::size_t i = 0; i < prompts; ++i) {
    const std::string& l = lines[i * 7];
    ps.push_back(l.substr(0, l.find(' ', l.find(' ') + 1)));  // first two words
  }
  w.prompts = (w.dir / "prompts.txt").string();
  write_lines(w.prompts, ps);
  return w;
}

inline std::string write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
  return p.string();
}

}  // namespace tt_test
