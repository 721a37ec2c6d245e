#include "tokentiming/vocab.hpp"

#include <algorithm>
#include <climits>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <unordered_set>

#include "tokentiming/error.hpp"

namespace tokentiming {

// ---- Vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::optional<std::string> boundary_marker,
                       std::vector<TokenId> reserved, std::optional<TokenId> eos,
                       std::optional<TokenId> byte_fallback_base)
    : tokens_(std::move(tokens)),
      boundary_marker_(std::move(boundary_marker)),
      reserved_(std::move(reserved)),
      eos_(eos),
      byte_base_(byte_fallback_base) {
  id_of_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw InputError("vocabulary surface " + std::to_string(i) + " is empty");
    if (!id_of_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw InputError("duplicate vocabulary surface: " + tokens_[i]);
    }
  }
  std::sort(reserved_.begin(), reserved_.end());
  reserved_.erase(std::unique(reserved_.begin(), reserved_.end()), reserved_.end());
  for (TokenId r : reserved_) {
    if (r >= tokens_.size()) throw InputError("reserved id out of range: " + std::to_string(r));
  }
  if (eos_ && !is_reserved(*eos_)) throw InputError("eos id must be reserved");
  if (boundary_marker_) {
    if (boundary_marker_->empty()) throw InputError("boundary marker must be non-empty");
    bool prefixes = std::any_of(tokens_.begin(), tokens_.end(),
                                [&](const std::string& t) { return t.starts_with(*boundary_marker_); });
    if (!prefixes) throw InputError("boundary marker does not prefix any surface");
  }
  if (byte_base_) {
    if (static_cast<std::size_t>(*byte_base_) + 256 > tokens_.size()) {
      throw InputError("byte fallback block exceeds vocabulary");
    }
    for (int b = 0; b < 256; ++b) {
      if (tokens_[*byte_base_ + b] != byte_token_surface(static_cast<std::uint8_t>(b))) {
        throw InputError("byte fallback block is not contiguous <0x00>..<0xFF>");
      }
    }
  }
}

const std::string& Vocabulary::surface(TokenId id) const {
  if (id >= tokens_.size()) throw InputError("token id out of range: " + std::to_string(id));
  return tokens_[id];
}

std::optional<TokenId> Vocabulary::find(std::string_view surface) const {
  auto it = id_of_.find(std::string(surface));
  if (it == id_of_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::is_reserved(TokenId id) const {
  return std::binary_search(reserved_.begin(), reserved_.end(), id);
}

std::optional<std::uint8_t> Vocabulary::byte_value(TokenId id) const {
  if (!byte_base_ || id < *byte_base_ || id >= *byte_base_ + 256) return std::nullopt;
  return static_cast<std::uint8_t>(id - *byte_base_);
}

std::string byte_token_surface(std::uint8_t b) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "<0x%02X>", static_cast<unsigned>(b));
  return buf;
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = lead < 0xF0 ? 3 : 1;
    } else if (lead >= 0xC2) {
      len = 2;
    }
    if (len > 1) {
      bool valid = i + len <= text.size();
      for (std::size_t k = 1; valid && k < len; ++k) {
        valid = (static_cast<unsigned char>(text[i + k]) & 0xC0) == 0x80;
      }
      if (!valid) len = 1;
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

// ---- Tokenizer ----------------------------------------------------------------

Tokenizer::Tokenizer(Vocabulary vocabulary, std::vector<MergeRule> merges)
    : vocab_(std::move(vocabulary)), merges_(std::move(merges)) {
  for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
    const auto& [left, right] = merges_[rank];
    auto l = vocab_.find(left);
    auto r = vocab_.find(right);
    auto m = vocab_.find(left + right);
    if (!l || !r || !m) throw InputError("merge rule references unknown surface: " + left + " + " + right);
    merge_rank_.try_emplace({*l, *r}, rank, *m);
  }
}

namespace {

bool is_separator(const std::string& symbol, const Vocabulary& v) {
  return v.boundary_marker() ? symbol == *v.boundary_marker() : symbol == " ";
}

}  // namespace

void Tokenizer::encode_word(std::vector<TokenId>& symbols) const {
  while (symbols.size() > 1) {
    std::size_t best_rank = SIZE_MAX;
    std::pair<TokenId, TokenId> best_pair{};
    TokenId best_merged = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_rank_.find({symbols[i], symbols[i + 1]});
      if (it != merge_rank_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best_pair = it->first;
        best_merged = it->second.second;
      }
    }
    if (best_rank == SIZE_MAX) break;
    std::vector<TokenId> next;
    next.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      if (i + 1 < symbols.size() && symbols[i] == best_pair.first && symbols[i + 1] == best_pair.second) {
        next.push_back(best_merged);
        ++i;
      } else {
        next.push_back(symbols[i]);
      }
    }
    symbols = std::move(next);
  }
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> out;
  std::vector<TokenId> word;
  auto flush = [&] {
    encode_word(word);
    out.insert(out.end(), word.begin(), word.end());
    word.clear();
  };
  const auto& marker = vocab_.boundary_marker();
  for (const std::string& ch : utf8_chars(text)) {
    std::string symbol = ch;
    bool literal_marker = marker && ch == *marker;
    if (marker && ch == " ") symbol = *marker;
    if (!literal_marker && is_separator(symbol, vocab_)) flush();
    std::optional<TokenId> id = literal_marker ? std::nullopt : vocab_.find(symbol);
    // Base symbols are single code points, so a hit on a reserved surface cannot happen
    // unless a reserved surface is one character long; keep those out of text.
    if (id && vocab_.is_reserved(*id)) id.reset();
    if (id) {
      word.push_back(*id);
      continue;
    }
    if (!vocab_.byte_fallback_base()) {
      throw InputError("character '" + ch + "' is not in the vocabulary and byte fallback is disabled");
    }
    // Byte tokens never take part in merges; they split the word around them.
    flush();
    for (unsigned char b : ch) out.push_back(*vocab_.byte_fallback_base() + b);
  }
  flush();
  return out;
}

std::string Tokenizer::decode_token(TokenId id) const {
  const std::string& s = vocab_.surface(id);
  if (vocab_.is_reserved(id)) return {};
  if (auto b = vocab_.byte_value(id)) return std::string(1, static_cast<char>(*b));
  const auto& marker = vocab_.boundary_marker();
  if (!marker) return s;
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s.compare(i, marker->size(), *marker) == 0) {
      out.push_back(' ');
      i += marker->size();
    } else {
      out.push_back(s[i++]);
    }
  }
  return out;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += decode_token(id);
  return out;
}

// ---- training -------------------------------------------------------------------

namespace {

struct WordTable {
  std::vector<std::string> symbols;  // symbol id -> surface
  std::map<std::string, int> symbol_id;
  std::vector<std::pair<std::vector<int>, std::uint64_t>> words;  // symbol ids, count
};

int intern(WordTable& t, const std::string& s) {
  auto [it, inserted] = t.symbol_id.emplace(s, static_cast<int>(t.symbols.size()));
  if (inserted) t.symbols.push_back(s);
  return it->second;
}

std::vector<std::string> select_lines(std::span<const std::string> corpus, double fraction, std::uint64_t seed) {
  if (fraction >= 1.0) return {corpus.begin(), corpus.end()};
  if (fraction <= 0.0) throw InputError("sample_fraction must be in (0, 1]");
  std::mt19937_64 gen(seed);
  std::vector<std::string> kept;
  for (const auto& line : corpus) {
    double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    if (u < fraction) kept.push_back(line);
  }
  if (kept.empty()) kept.push_back(corpus.front());
  return kept;
}

// Splits lines into words of base symbols, spaces rendered as the separator.
WordTable collect_words(std::span<const std::string> lines, const std::optional<std::string>& marker) {
  std::map<std::vector<std::string>, std::uint64_t> counts;
  const std::string separator = marker ? *marker : std::string(" ");
  for (const auto& line : lines) {
    std::vector<std::string> word;
    auto flush = [&] {
      if (!word.empty()) ++counts[word];
      word.clear();
    };
    for (const std::string& ch : utf8_chars(line)) {
      if (marker && ch == *marker) {
        flush();  // literal marker characters are byte-encoded later
        continue;
      }
      std::string symbol = ch == " " ? separator : ch;
      if (symbol == separator) flush();
      word.push_back(symbol);
    }
    flush();
  }
  WordTable table;
  // Intern the alphabet in sorted order so symbol ids follow surface order.
  std::set<std::string> alphabet;
  for (const auto& [w, c] : counts) alphabet.insert(w.begin(), w.end());
  for (const auto& s : alphabet) intern(table, s);
  for (const auto& [w, c] : counts) {
    std::vector<int> ids;
    ids.reserve(w.size());
    for (const auto& s : w) ids.push_back(table.symbol_id.at(s));
    table.words.emplace_back(std::move(ids), c);
  }
  return table;
}

Tokenizer assemble(const std::vector<std::string>& text_tokens, const std::vector<MergeRule>& merges,
                   const TokenizerOptions& options) {
  std::vector<std::string> tokens;
  std::vector<TokenId> reserved;
  for (const auto& r : options.reserved) {
    reserved.push_back(static_cast<TokenId>(tokens.size()));
    tokens.push_back(r);
  }
  std::optional<TokenId> eos;
  if (options.first_reserved_is_eos && !reserved.empty()) eos = reserved.front();
  tokens.insert(tokens.end(), text_tokens.begin(), text_tokens.end());
  std::optional<TokenId> byte_base;
  if (options.byte_fallback) {
    byte_base = static_cast<TokenId>(tokens.size());
    for (int b = 0; b < 256; ++b) tokens.push_back(byte_token_surface(static_cast<std::uint8_t>(b)));
  }
  std::optional<std::string> marker = options.boundary_marker;
  if (marker && std::none_of(tokens.begin(), tokens.end(),
                             [&](const std::string& t) { return t.starts_with(*marker); })) {
    // Corpus without spaces never produces the marker symbol.
    marker.reset();
  }
  Vocabulary vocab(std::move(tokens), marker, std::move(reserved), eos, byte_base);
  return Tokenizer(std::move(vocab), merges);
}

}  // namespace

Tokenizer train_bpe(std::span<const std::string> corpus, const BpeTrainOptions& options) {
  if (corpus.empty()) throw InputError("train_bpe: corpus is empty");
  std::vector<std::string> lines = select_lines(corpus, options.sample_fraction, options.seed);
  WordTable table = collect_words(lines, options.boundary_marker);
  const std::size_t alphabet_size = table.symbols.size();
  if (alphabet_size == 0) throw InputError("train_bpe: corpus contains no characters");
  if (options.target_size < alphabet_size) {
    throw InputError("train_bpe: target_size " + std::to_string(options.target_size) + " is below alphabet size " +
                     std::to_string(alphabet_size));
  }

  std::vector<std::string> text_tokens = table.symbols;
  std::vector<MergeRule> merges;
  while (text_tokens.size() < options.target_size) {
    std::map<std::pair<int, int>, std::uint64_t> pair_counts;
    for (const auto& [ids, count] : table.words) {
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) pair_counts[{ids[i], ids[i + 1]}] += count;
    }
    if (pair_counts.empty()) break;
    const std::pair<int, int>* best = nullptr;
    std::uint64_t best_count = 0;
    for (const auto& [pair, count] : pair_counts) {
      if (best == nullptr || count > best_count) {
        best = &pair;
        best_count = count;
        continue;
      }
      if (count == best_count) {
        const auto& a = table.symbols;
        auto key = std::tie(a[pair.first], a[pair.second]);
        auto best_key = std::tie(a[best->first], a[best->second]);
        if (key < best_key) best = &pair;
      }
    }
    const auto [left, right] = *best;
    std::string merged = table.symbols[left] + table.symbols[right];
    bool is_new = !table.symbol_id.contains(merged);
    int merged_id = intern(table, merged);
    if (is_new) text_tokens.push_back(merged);
    merges.emplace_back(table.symbols[left], table.symbols[right]);
    for (auto& [ids, count] : table.words) {
      std::vector<int> next;
      next.reserve(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i + 1 < ids.size() && ids[i] == left && ids[i + 1] == right) {
          next.push_back(merged_id);
          ++i;
        } else {
          next.push_back(ids[i]);
        }
      }
      ids = std::move(next);
    }
  }
  return assemble(text_tokens, merges, options);
}

Tokenizer make_character_tokenizer(std::span<const std::string> corpus, const TokenizerOptions& options) {
  if (corpus.empty()) throw InputError("make_character_tokenizer: corpus is empty");
  WordTable table = collect_words(corpus, options.boundary_marker);
  if (table.symbols.empty()) throw InputError("make_character_tokenizer: corpus contains no characters");
  return assemble(table.symbols, {}, options);
}

// ---- normalization / stats ------------------------------------------------------------

namespace {

NormalizedSurface normalize_once(std::string_view surface, const Vocabulary& vocab) {
  std::string s(surface);
  if (vocab.byte_fallback_base() && s.size() == 6 && s.starts_with("<0x") && s.back() == '>') {
    unsigned value = 0;
    if (std::sscanf(s.c_str(), "<0x%2X>", &value) == 1 && byte_token_surface(static_cast<std::uint8_t>(value)) == s) {
      s.assign(1, static_cast<char>(value));
    }
  }
  for (TokenId r : vocab.reserved()) {
    const std::string& meta = vocab.surface(r);
    for (auto pos = s.find(meta); pos != std::string::npos; pos = s.find(meta)) s.erase(pos, meta.size());
  }
  if (const auto& marker = vocab.boundary_marker()) {
    std::string replaced;
    for (std::size_t i = 0; i < s.size();) {
      if (s.compare(i, marker->size(), *marker) == 0) {
        replaced.push_back(' ');
        i += marker->size();
      } else {
        replaced.push_back(s[i++]);
      }
    }
    s = std::move(replaced);
  }
  std::string collapsed;
  for (char c : s) {
    if (c == ' ' && !collapsed.empty() && collapsed.back() == ' ') continue;
    collapsed.push_back(c);
  }
  NormalizedSurface out;
  if (!collapsed.empty() && collapsed.front() == ' ') {
    out.leading_boundary = true;
    collapsed.erase(0, 1);
  }
  out.text = std::move(collapsed);
  return out;
}

}  // namespace

NormalizedSurface normalize_surface_detailed(std::string_view surface, const Vocabulary& vocab) {
  NormalizedSurface cur = normalize_once(surface, vocab);
  // Stripping can expose a new reserved occurrence or leading space; run to a fixpoint.
  for (;;) {
    NormalizedSurface next = normalize_once(cur.text, vocab);
    if (next.text == cur.text) break;
    cur.text = std::move(next.text);
    cur.leading_boundary = cur.leading_boundary || next.leading_boundary;
  }
  return cur;
}

std::string normalize_surface(std::string_view surface, const Vocabulary& vocab) {
  return normalize_surface_detailed(surface, vocab).text;
}

VocabStats vocab_stats(const Vocabulary& a, const Vocabulary& b) {
  std::unordered_set<std::string_view> in_a(a.tokens().begin(), a.tokens().end());
  VocabStats st;
  for (const auto& s : b.tokens()) {
    if (in_a.contains(s)) ++st.intersection_size;
  }
  st.union_size = a.size() + b.size() - st.intersection_size;
  st.jaccard = st.union_size == 0 ? 1.0
                                  : static_cast<double>(st.intersection_size) / static_cast<double>(st.union_size);
  return st;
}

}  // namespace tokentiming
