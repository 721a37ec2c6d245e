#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tokentiming {

using TokenId = std::uint32_t;

inline constexpr std::string_view kDefaultBoundaryMarker = "\xC4\xA0";  // U+0120 'Ġ'
inline constexpr std::string_view kDefaultEos = "<EOS>";

// Bijection between surface strings and dense ids [0, size).
class Vocabulary {
 public:
  Vocabulary() = default;
  // Throws InputError if surfaces are empty/duplicated, reserved ids are out of
  // range, eos is not reserved, or the marker prefixes no surface.
  Vocabulary(std::vector<std::string> tokens, std::optional<std::string> boundary_marker = std::nullopt,
             std::vector<TokenId> reserved = {}, std::optional<TokenId> eos = std::nullopt,
             std::optional<TokenId> byte_fallback_base = std::nullopt);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& surface(TokenId id) const;
  std::optional<TokenId> find(std::string_view surface) const;
  bool contains(TokenId id) const { return id < tokens_.size(); }

  const std::optional<std::string>& boundary_marker() const { return boundary_marker_; }
  const std::vector<TokenId>& reserved() const { return reserved_; }
  bool is_reserved(TokenId id) const;
  std::optional<TokenId> eos() const { return eos_; }

  // First id of the 256 "<0xNN>" byte tokens, when the vocabulary carries them.
  std::optional<TokenId> byte_fallback_base() const { return byte_base_; }
  std::optional<std::uint8_t> byte_value(TokenId id) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.boundary_marker_ == b.boundary_marker_ && a.reserved_ == b.reserved_ &&
           a.eos_ == b.eos_ && a.byte_base_ == b.byte_base_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> id_of_;
  std::optional<std::string> boundary_marker_;
  std::vector<TokenId> reserved_;
  std::optional<TokenId> eos_;
  std::optional<TokenId> byte_base_;
};

std::string byte_token_surface(std::uint8_t b);

using MergeRule = std::pair<std::string, std::string>;

// Byte-pair (or, with no merges, character-level) tokenizer. Spaces are
// rendered as the boundary marker when the vocabulary has one, and each
// space starts a new word; merges never cross word starts.
class Tokenizer {
 public:
  Tokenizer() = default;
  Tokenizer(Vocabulary vocabulary, std::vector<MergeRule> merges);

  const Vocabulary& vocabulary() const { return vocab_; }
  const std::vector<MergeRule>& merges() const { return merges_; }
  bool is_character_level() const { return merges_.empty(); }

  std::vector<TokenId> encode(std::string_view text) const;
  // Throws InputError on an out-of-range id. Reserved ids decode to "".
  std::string decode(std::span<const TokenId> ids) const;
  std::string decode_token(TokenId id) const;

 private:
  struct PairHash {
    std::size_t operator()(const std::pair<TokenId, TokenId>& p) const noexcept {
      return (static_cast<std::size_t>(p.first) << 32) ^ p.second;
    }
  };

  void encode_word(std::vector<TokenId>& symbols) const;

  Vocabulary vocab_;
  std::vector<MergeRule> merges_;
  // (left id, right id) -> (rank, merged id)
  std::unordered_map<std::pair<TokenId, TokenId>, std::pair<std::size_t, TokenId>, PairHash> merge_rank_;
};

struct TokenizerOptions {
  std::optional<std::string> boundary_marker = std::string(kDefaultBoundaryMarker);
  std::vector<std::string> reserved = {std::string(kDefaultEos)};
  // First reserved surface is the EOS token when set.
  bool first_reserved_is_eos = true;
  bool byte_fallback = true;
};

struct BpeTrainOptions : TokenizerOptions {
  // Bound on text tokens (alphabet + merges); reserved and byte tokens are extra.
  std::size_t target_size = 256;
  std::uint64_t seed = 0;
  // Fraction of corpus lines used for training, drawn with `seed`.
  double sample_fraction = 1.0;
};

Tokenizer train_bpe(std::span<const std::string> corpus, const BpeTrainOptions& options);
Tokenizer make_character_tokenizer(std::span<const std::string> corpus, const TokenizerOptions& options = {});

struct NormalizedSurface {
  std::string text;
  bool leading_boundary = false;
};

// Canonical form used only for token distance: byte tokens become their byte,
// reserved surfaces are stripped, markers become spaces, space runs collapse and
// a leading space is removed (reported as leading_boundary).
NormalizedSurface normalize_surface_detailed(std::string_view surface, const Vocabulary& vocab);
std::string normalize_surface(std::string_view surface, const Vocabulary& vocab);

struct VocabStats {
  std::size_t intersection_size = 0;
  std::size_t union_size = 0;
  double jaccard = 0.0;
};

VocabStats vocab_stats(const Vocabulary& a, const Vocabulary& b);

// Split UTF-8 into code points; invalid bytes come back as single-byte strings.
std::vector<std::string> utf8_chars(std::string_view text);

// ---- file formats ---------------------------------------------------------

void write_vocabulary(std::ostream& out, const Vocabulary& vocab);
Vocabulary read_vocabulary(std::istream& in);
void write_merges(std::ostream& out, std::span<const MergeRule> merges);
std::vector<MergeRule> read_merges(std::istream& in);

void save_tokenizer(const Tokenizer& tok, const std::string& vocab_path, const std::string& merges_path);
Tokenizer load_tokenizer(const std::string& vocab_path, const std::string& merges_path);

std::string escape_surface(std::string_view s);
std::string unescape_surface(std::string_view s);

}  // namespace tokentiming
