#include <cstdio>
#include <fstream>
#include <sstream>

#include "tokentiming/error.hpp"
#include "tokentiming/vocab.hpp"

namespace tokentiming {

namespace {

constexpr std::string_view kVocabMagic = "# tokentiming-vocab v1";
constexpr std::string_view kMergesMagic = "# tokentiming-merges v1";

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

TokenId parse_id(const std::string& s) {
  std::size_t used = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(s, &used);
  } catch (const std::exception&) {
    throw InputError("bad token id: " + s);
  }
  if (used != s.size()) throw InputError("bad token id: " + s);
  return static_cast<TokenId>(v);
}

}  // namespace

std::string escape_surface(std::string_view s) {
  std::string out;
  for (char c : s) {
    auto u = static_cast<unsigned char>(c);
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default:
        if (u < 0x20 || u == 0x7F) {
          char buf[5];
          std::snprintf(buf, sizeof buf, "\\x%02X", u);
          out += buf;
        } else {
          out.push_back(c);
        }
    }
  }
  return out;
}

std::string unescape_surface(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    if (i + 1 >= s.size()) throw InputError("dangling escape in surface");
    char e = s[++i];
    switch (e) {
      case '\\': out.push_back('\\'); break;
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      case 'x': {
        if (i + 2 >= s.size()) throw InputError("truncated \\x escape");
        unsigned v = 0;
        std::string hex(s.substr(i + 1, 2));
        if (hex.size() != 2 || std::sscanf(hex.c_str(), "%2X", &v) != 1) throw InputError("bad \\x escape");
        out.push_back(static_cast<char>(v));
        i += 2;
        break;
      }
      default: throw InputError(std::string("unknown escape \\") + e);
    }
  }
  return out;
}

void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  out << kVocabMagic << '\n';
  if (vocab.boundary_marker()) out << "# marker " << escape_surface(*vocab.boundary_marker()) << '\n';
  if (!vocab.reserved().empty()) {
    out << "# reserved";
    for (TokenId r : vocab.reserved()) out << ' ' << r;
    out << '\n';
  }
  if (vocab.eos()) out << "# eos " << *vocab.eos() << '\n';
  if (vocab.byte_fallback_base()) out << "# byte_fallback " << *vocab.byte_fallback_base() << '\n';
  for (std::size_t i = 0; i < vocab.size(); ++i) out << i << '\t' << escape_surface(vocab.tokens()[i]) << '\n';
}

Vocabulary read_vocabulary(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kVocabMagic) throw InputError("not a tokentiming vocabulary file");
  std::optional<std::string> marker;
  std::vector<TokenId> reserved;
  std::optional<TokenId> eos;
  std::optional<TokenId> byte_base;
  std::vector<std::string> tokens;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto fields = split_ws(line.substr(1));
      if (fields.empty()) continue;
      const std::string& key = fields[0];
      if (key == "marker" && fields.size() == 2) {
        marker = unescape_surface(fields[1]);
      } else if (key == "reserved") {
        for (std::size_t i = 1; i < fields.size(); ++i) reserved.push_back(parse_id(fields[i]));
      } else if (key == "eos" && fields.size() == 2) {
        eos = parse_id(fields[1]);
      } else if (key == "byte_fallback" && fields.size() == 2) {
        byte_base = parse_id(fields[1]);
      } else {
        throw InputError("unknown vocabulary header: " + line);
      }
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw InputError("vocabulary line missing TAB: " + line);
    TokenId id = parse_id(line.substr(0, tab));
    if (id != tokens.size()) throw InputError("vocabulary ids must be dense and ascending");
    tokens.push_back(unescape_surface(std::string_view(line).substr(tab + 1)));
  }
  return Vocabulary(std::move(tokens), std::move(marker), std::move(reserved), eos, byte_base);
}

void write_merges(std::ostream& out, std::span<const MergeRule> merges) {
  out << kMergesMagic << '\n';
  for (const auto& [l, r] : merges) out << escape_surface(l) << '\t' << escape_surface(r) << '\n';
}

std::vector<MergeRule> read_merges(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMergesMagic) throw InputError("not a tokentiming merges file");
  std::vector<MergeRule> merges;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw InputError("merge line missing TAB: " + line);
    std::string_view v(line);
    merges.emplace_back(unescape_surface(v.substr(0, tab)), unescape_surface(v.substr(tab + 1)));
  }
  return merges;
}

void save_tokenizer(const Tokenizer& tok, const std::string& vocab_path, const std::string& merges_path) {
  std::ofstream v(vocab_path);
  if (!v) throw InputError("cannot write " + vocab_path);
  write_vocabulary(v, tok.vocabulary());
  std::ofstream m(merges_path);
  if (!m) throw InputError("cannot write " + merges_path);
  write_merges(m, tok.merges());
}

Tokenizer load_tokenizer(const std::string& vocab_path, const std::string& merges_path) {
  std::ifstream v(vocab_path);
  if (!v) throw InputError("cannot open " + vocab_path);
  Vocabulary vocab = read_vocabulary(v);
  std::vector<MergeRule> merges;
  if (!merges_path.empty()) {
    std::ifstream m(merges_path);
    if (!m) throw InputError("cannot open " + merges_path);
    merges = read_merges(m);
  }
  return Tokenizer(std::move(vocab), std::move(merges));
}

}  // namespace tokentiming
