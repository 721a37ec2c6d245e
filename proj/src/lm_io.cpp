#include <filesystem>
#include <fstream>
#include <sstream>

#include "tokentiming/lm.hpp"

namespace tokentiming {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kModelMagic = "# tokentiming-model v1";

std::string format_context(const TokenModel::Context& ctx) {
  if (ctx.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(ctx[i]);
  }
  return out;
}

TokenModel::Context parse_context(const std::string& s) {
  TokenModel::Context ctx;
  if (s == "-") return ctx;
  std::stringstream in(s);
  for (std::string part; std::getline(in, part, ',');) {
    try {
      ctx.push_back(static_cast<TokenId>(std::stoul(part)));
    } catch (const std::exception&) {
      throw InputError("bad context in model file: " + s);
    }
  }
  return ctx;
}

std::string relative_to(const std::string& target, const std::string& model_path) {
  fs::path base = fs::absolute(fs::path(model_path)).parent_path();
  return fs::relative(fs::absolute(target), base).generic_string();
}

}  // namespace

Rational parse_rational(const std::string& text) {
  if (text.empty()) throw InputError("empty rational");
  auto dot = text.find('.');
  try {
    if (dot == std::string::npos) {
      Rational r(text, 10);
      r.canonicalize();
      return r;
    }
    std::string digits = text.substr(0, dot) + text.substr(dot + 1);
    std::string den = "1" + std::string(text.size() - dot - 1, '0');
    Rational r(digits + "/" + den, 10);
    r.canonicalize();
    return r;
  } catch (const std::invalid_argument&) {
    throw InputError("bad rational literal: " + text);
  }
}

void save_model(const TokenModel& model, const std::string& model_path, const std::string& vocab_path,
                const std::string& merges_path) {
  std::ofstream out(model_path);
  if (!out) throw InputError("cannot write " + model_path);
  out << kModelMagic << '\n';
  out << "kind " << to_string(model.kind()) << '\n';
  out << "order " << model.order() << '\n';
  {
    std::ostringstream k;
    k.precision(17);
    k << model.smoothing();
    out << "smoothing " << k.str() << '\n';
  }
  out << "vocab " << relative_to(vocab_path, model_path) << '\n';
  out << "merges " << relative_to(merges_path, model_path) << '\n';
  out << "data\n";
  if (model.kind() == ModelKind::ngram) {
    for (const auto& [ctx, row] : model.sparse_counts()) {
      for (const auto& [tok, c] : row) out << format_context(ctx) << ' ' << tok << ' ' << c << '\n';
    }
  } else if (model.kind() == ModelKind::table) {
    for (const auto& [ctx, probs] : model.table_rows()) {
      for (std::size_t t = 0; t < probs.size(); ++t) {
        if (sgn(probs[t]) != 0) out << format_context(ctx) << ' ' << t << ' ' << probs[t].get_str() << '\n';
      }
    }
  }
}

TokenModel load_model(const std::string& model_path) {
  std::ifstream in(model_path);
  if (!in) throw InputError("cannot open " + model_path);
  std::string line;
  if (!std::getline(in, line) || line != kModelMagic) throw InputError("not a tokentiming model file: " + model_path);
  std::string kind = "ngram", vocab, merges;
  int order = 1;
  double smoothing = 0.0;
  bool in_data = false;
  std::map<TokenModel::Context, std::map<TokenId, std::uint32_t>> counts;
  std::map<TokenModel::Context, std::map<TokenId, Rational>> probs;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    if (!in_data) {
      std::string key, value;
      fields >> key;
      std::getline(fields >> std::ws, value);
      if (key == "data") {
        in_data = true;
      } else if (key == "kind") {
        kind = value;
      } else if (key == "order") {
        order = std::stoi(value);
      } else if (key == "smoothing") {
        smoothing = std::stod(value);
      } else if (key == "vocab") {
        vocab = value;
      } else if (key == "merges") {
        merges = value;
      } else {
        throw InputError("unknown model header key: " + key);
      }
      continue;
    }
    std::string ctx, tok, value;
    if (!(fields >> ctx >> tok >> value)) throw InputError("bad model data line: " + line);
    TokenId id = static_cast<TokenId>(std::stoul(tok));
    if (kind == "table") {
      probs[parse_context(ctx)][id] = parse_rational(value);
    } else {
      counts[parse_context(ctx)][id] = static_cast<std::uint32_t>(std::stoul(value));
    }
  }
  if (vocab.empty()) throw InputError("model file has no vocab reference");
  fs::path base = fs::path(model_path).parent_path();
  auto resolve = [&](const std::string& p) { return p.empty() ? p : (base / p).string(); };
  auto tok = std::make_shared<const Tokenizer>(load_tokenizer(resolve(vocab), resolve(merges)));
  switch (parse_model_kind(kind)) {
    case ModelKind::uniform: return TokenModel::uniform(tok);
    case ModelKind::ngram: return TokenModel::ngram_from_counts(tok, order, smoothing, counts);
    case ModelKind::table: {
      const std::size_t v = tok->vocabulary().size();
      std::map<TokenModel::Context, std::vector<Rational>> rows;
      for (const auto& [ctx, entries] : probs) {
        std::vector<Rational> row(v, Rational(0));
        for (const auto& [t, p] : entries) {
          if (t >= v) throw InputError("table token id out of range");
          row[t] = p;
        }
        rows.emplace(ctx, std::move(row));
      }
      return TokenModel::table(tok, order, std::move(rows));
    }
  }
  throw InputError("unreachable model kind");
}

}  // namespace tokentiming
