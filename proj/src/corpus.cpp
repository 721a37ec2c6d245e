#include <algorithm>
#include <fstream>

#include "tokentiming/bench.hpp"

namespace tokentiming {

namespace {

std::size_t below(Rng& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)));
}

}  // namespace

std::vector<std::string> synthetic_corpus(const CorpusOptions& o) {
  if (o.lexicon < 2 || o.successors < 1 || o.min_words < 1 || o.max_words < o.min_words) {
    throw InputError("synthetic_corpus: bad options");
  }
  Rng rng(o.seed);
  // Letter frequencies loosely follow English so that BPE finds common pairs.
  static constexpr std::string_view kLetters = "eeeeeeettttaaaooiinnsshhrrddllcumwfgypbvk";
  std::vector<std::string> words;
  while (words.size() < o.lexicon) {
    std::string w;
    const std::size_t len = 2 + below(rng, 6);
    for (std::size_t i = 0; i < len; ++i) w.push_back(kLetters[below(rng, kLetters.size())]);
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(std::move(w));
  }
  std::vector<std::vector<std::size_t>> next(words.size());
  for (auto& succ : next) {
    for (std::size_t s = 0; s < o.successors; ++s) succ.push_back(below(rng, words.size()));
  }
  std::vector<std::string> lines;
  lines.reserve(o.lines);
  for (std::size_t l = 0; l < o.lines; ++l) {
    const std::size_t n = o.min_words + below(rng, o.max_words - o.min_words + 1);
    std::size_t cur = below(rng, words.size());
    std::string line = words[cur];
    for (std::size_t i = 1; i < n; ++i) {
      cur = next[cur][below(rng, next[cur].size())];
      line.push_back(' ');
      line += words[cur];
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
  }
  return out;
}

void write_lines(const std::string& path, std::span<const std::string> lines) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace tokentiming
