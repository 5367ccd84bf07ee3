#include "nes/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "nes/error.hpp"
#include "text_util.hpp"

namespace nes {

namespace {

constexpr std::string_view kDocStart = "-DOCSTART-";
constexpr std::string_view kAbsent = "_";
constexpr std::string_view kNoDocId = "-X-";

std::string default_doc_id(std::size_t order) { return fmt::format("doc-{}", order); }

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  return in;
}

}  // namespace

Corpus::Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
  SentenceId next_sentence = 0;
  TokenId next_token = 0;
  for (std::uint32_t d = 0; d < docs_.size(); ++d) {
    Document& doc = docs_[d];
    doc.source_order = d;
    if (doc.doc_id.empty()) doc.doc_id = default_doc_id(d);
    if (!doc_lookup_.emplace(doc.doc_id, d).second) {
      throw Error(fmt::format("duplicate document id '{}'", doc.doc_id));
    }
    for (std::uint32_t s = 0; s < doc.sentences.size(); ++s) {
      Sentence& sent = doc.sentences[s];
      if (sent.tokens.empty()) throw Error("sentence without tokens");
      sent.sentence_id = next_sentence++;
      sent.first_token = next_token;
      next_token += static_cast<TokenId>(sent.tokens.size());
      sentences_.push_back({d, s});
      token_sentence_.insert(token_sentence_.end(), sent.tokens.size(), sent.sentence_id);
    }
  }
}

const Sentence& Corpus::sentence(SentenceId id) const {
  if (id >= sentences_.size()) throw Error(fmt::format("sentence id {} out of range", id));
  const auto& ref = sentences_[id];
  return docs_[ref.doc].sentences[ref.index];
}

std::uint32_t Corpus::doc_index(SentenceId id) const {
  if (id >= sentences_.size()) throw Error(fmt::format("sentence id {} out of range", id));
  return sentences_[id].doc;
}

TokenLocation Corpus::locate(TokenId id) const {
  if (id >= token_sentence_.size()) throw Error(fmt::format("token id {} out of range", id));
  const SentenceId s = token_sentence_[id];
  return {s, id - sentence(s).first_token};
}

const Token& Corpus::token(TokenId id) const {
  const auto loc = locate(id);
  return sentence(loc.sentence_id).tokens[loc.position];
}

std::optional<std::uint32_t> Corpus::find_document(std::string_view doc_id) const {
  auto it = doc_lookup_.find(doc_id);
  if (it == doc_lookup_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// CoNLL

Corpus read_conll(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_conll(in, path.string());
}

Corpus read_conll(std::istream& in, const std::string& source_name) {
  std::vector<Document> docs;
  std::vector<Token> pending;
  bool doc_open = false;
  std::string line;
  std::size_t line_no = 0;

  auto flush_sentence = [&] {
    if (pending.empty()) return;
    if (!doc_open) {
      docs.emplace_back();
      doc_open = true;
    }
    docs.back().sentences.push_back(Sentence{0, 0, std::move(pending)});
    pending.clear();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (auto bad = find_invalid_utf8(line)) {
      throw ParseError(source_name, line_no, fmt::format("invalid UTF-8 at column {}", *bad + 1));
    }
    const auto cols = detail::split_whitespace(line);
    if (cols.empty()) {
      flush_sentence();
      continue;
    }
    if (cols[0] == kDocStart) {
      flush_sentence();
      if (doc_open && docs.back().sentences.empty()) docs.pop_back();
      Document doc;
      if (cols.size() > 1 && cols[1] != kNoDocId) doc.doc_id = std::string(cols[1]);
      docs.push_back(std::move(doc));
      doc_open = true;
      continue;
    }
    if (cols.size() != 4) {
      throw ParseError(source_name, line_no,
                       fmt::format("expected 4 columns (SURFACE POS CHUNK NER), found {}",
                                   cols.size()));
    }
    Token tok;
    tok.surface = std::string(cols[0]);
    if (cols[1] != kAbsent) tok.pos = std::string(cols[1]);
    if (cols[3] != kAbsent) {
      if (!is_valid_bio(cols[3])) {
        throw ParseError(source_name, line_no,
                         fmt::format("label '{}' is not a BIO tag", cols[3]));
      }
      tok.gold = std::string(cols[3]);
    }
    pending.push_back(std::move(tok));
  }
  flush_sentence();
  std::erase_if(docs, [](const Document& d) { return d.sentences.empty(); });
  if (docs.empty()) throw EmptyCorpusError(fmt::format("{}: corpus holds no tokens", source_name));
  return Corpus(std::move(docs));
}

void write_conll(std::ostream& out, const Corpus& corpus) {
  for (const auto& doc : corpus.docs()) {
    out << kDocStart << ' ' << doc.doc_id << " -X- O\n\n";
    for (const auto& sent : doc.sentences) {
      for (const auto& tok : sent.tokens) {
        out << tok.surface << ' ' << tok.pos.value_or(std::string(kAbsent)) << ' ' << kAbsent
            << ' ' << tok.gold.value_or(std::string(kAbsent)) << '\n';
      }
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Plain text

Tokenizer::Tokenizer()
    : abbreviations_{"mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "inc",
                     "ltd", "co", "corp", "gen", "gov", "sen", "rep", "mt", "no", "jan", "feb",
                     "mar", "apr", "aug", "sept", "sep", "oct", "nov", "dec"} {}

Tokenizer::Tokenizer(std::set<std::string> abbreviations)
    : abbreviations_(std::move(abbreviations)) {}

std::vector<std::vector<std::string>> Tokenizer::split(std::string_view text) const {
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> current;

  const auto chunks = detail::split_whitespace(text);
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    std::string_view chunk = chunks[c];
    std::size_t lo = 0;
    std::size_t hi = chunk.size();
    while (lo < hi && detail::is_ascii_punct(chunk[lo])) ++lo;
    if (lo == hi) lo = hi = 0;  // all punctuation: emit as trailing pieces
    while (hi > lo && detail::is_ascii_punct(chunk[hi - 1])) --hi;

    for (std::size_t i = 0; i < lo; ++i) current.emplace_back(1, chunk[i]);
    if (lo < hi) {
      std::string_view core = chunk.substr(lo, hi - lo);
      std::size_t tail = hi;
      if (tail < chunk.size() && chunk[tail] == '.') {
        const bool interior_period = core.find('.') != std::string_view::npos;
        const bool abbreviation = abbreviations_.contains(detail::ascii_lower(core));
        if (interior_period || abbreviation) {
          ++tail;
          core = chunk.substr(lo, tail - lo);
        }
      }
      current.emplace_back(core);
      hi = tail;
    }

    bool terminal = false;
    for (std::size_t i = hi; i < chunk.size(); ++i) {
      current.emplace_back(1, chunk[i]);
      terminal = i + 1 == chunk.size() && (chunk[i] == '.' || chunk[i] == '?' || chunk[i] == '!');
    }
    const bool next_upper =
        c + 1 < chunks.size() && std::isupper(static_cast<unsigned char>(chunks[c + 1][0]));
    if (terminal && next_upper) {
      sentences.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) sentences.push_back(std::move(current));
  return sentences;
}

Corpus corpus_from_text(std::span<const std::pair<std::string, std::string>> records,
                        const Tokenizer& tokenizer, const std::string& source_name) {
  std::vector<Document> docs;
  std::size_t offset = 0;
  for (const auto& [doc_id, text] : records) {
    if (auto bad = find_invalid_utf8(text)) throw EncodingError(source_name, offset + *bad);
    offset += text.size();
    Document doc;
    doc.doc_id = doc_id;
    for (auto& toks : tokenizer.split(text)) {
      Sentence sent;
      for (auto& t : toks) sent.tokens.push_back(Token{std::move(t), std::nullopt, std::nullopt});
      doc.sentences.push_back(std::move(sent));
    }
    if (!doc.sentences.empty()) docs.push_back(std::move(doc));
  }
  if (docs.empty()) throw EmptyCorpusError(fmt::format("{}: corpus holds no tokens", source_name));
  return Corpus(std::move(docs));
}

Corpus read_plaintext(const std::filesystem::path& path, const Tokenizer& tokenizer,
                      PlaintextLayout layout) {
  namespace fs = std::filesystem;
  std::vector<std::pair<std::string, std::string>> records;

  auto slurp = [](const fs::path& p) {
    auto in = open_input(p);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };

  if (layout == PlaintextLayout::kDocumentPerFile) {
    if (fs::is_directory(path)) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) records.emplace_back(f.filename().string(), slurp(f));
    } else {
      records.emplace_back(path.filename().string(), slurp(path));
    }
  } else {
    const std::string all = slurp(path);
    if (auto bad = find_invalid_utf8(all)) throw EncodingError(path.string(), *bad);
    std::size_t n = 0;
    for (auto line : detail::split_lines(all)) {
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (detail::trim(line).empty()) continue;
      const auto tab = line.find('\t');
      if (tab != std::string_view::npos) {
        records.emplace_back(std::string(line.substr(0, tab)), std::string(line.substr(tab + 1)));
      } else {
        records.emplace_back(default_doc_id(n), std::string(line));
      }
      ++n;
    }
  }
  return corpus_from_text(records, tokenizer, path.string());
}

std::optional<std::size_t> find_invalid_utf8(std::string_view bytes) {
  std::size_t i = 0;
  while (i < bytes.size()) {
    const auto c = static_cast<unsigned char>(bytes[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > bytes.size()) return i;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(bytes[i + k]);
      if ((cc & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (cc & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                          (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += len;
  }
  return std::nullopt;
}

std::string normalize_surface(std::string_view s) {
  std::size_t lo = 0;
  std::size_t hi = s.size();
  auto strippable = [](char c) { return detail::is_ascii_space(c) || detail::is_ascii_punct(c); };
  while (lo < hi && strippable(s[lo])) ++lo;
  while (hi > lo && strippable(s[hi - 1])) --hi;

  std::string out;
  out.reserve(hi - lo);
  bool in_space = false;
  for (std::size_t i = lo; i < hi; ++i) {
    const char c = s[i];
    if (detail::is_ascii_space(c)) {
      in_space = true;
      continue;
    }
    if (in_space) out.push_back(' ');
    in_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Judgments and rankings

bool JudgmentSet::accepts(std::string_view surface) const {
  return accepted_forms.contains(normalize_surface(surface));
}

std::vector<JudgmentSet> read_judgments(const std::filesystem::path& path,
                                        const JudgmentOptions& options) {
  auto in = open_input(path);
  return read_judgments(in, path.string(), options);
}

std::vector<JudgmentSet> read_judgments(std::istream& in, const std::string& source_name,
                                        const JudgmentOptions& options) {
  std::vector<JudgmentSet> sets;
  std::map<std::string, std::size_t> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty() || line.front() == '#') continue;
    const auto cols = detail::split_char(line, '\t');
    if (cols.size() != 3) {
      throw ParseError(source_name, line_no,
                       fmt::format("expected query_id<TAB>title<TAB>form, found {} column(s)",
                                   cols.size()));
    }
    const std::string id(detail::trim(cols[0]));
    if (id.empty()) throw ParseError(source_name, line_no, "empty query id");
    auto [it, inserted] = by_id.emplace(id, sets.size());
    if (inserted) sets.push_back(JudgmentSet{id, std::string(detail::trim(cols[1])), {}});
    auto form = normalize_surface(cols[2]);
    if (!form.empty()) sets[it->second].accepted_forms.insert(std::move(form));
  }
  std::erase_if(sets, [&](const JudgmentSet& j) {
    return j.accepted_forms.size() <= options.min_forms_exclusive ||
           options.excluded_queries.contains(j.query_id);
  });
  return sets;
}

JudgmentSet judgments_from_gold(const Corpus& corpus, std::string_view cls) {
  JudgmentSet set{std::string(cls), std::string(cls), {}};
  for (const auto& doc : corpus.docs()) {
    for (const auto& sent : doc.sentences) {
      for (const auto& tok : sent.tokens) {
        if (!is_class_label(tok.gold, cls)) continue;
        auto form = normalize_surface(tok.surface);
        if (!form.empty()) set.accepted_forms.insert(std::move(form));
      }
    }
  }
  return set;
}

DocRankings read_doc_rankings(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_doc_rankings(in, path.string());
}

DocRankings read_doc_rankings(std::istream& in, const std::string& source_name) {
  std::map<std::string, std::vector<std::pair<long, std::string>>> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty() || line.front() == '#') continue;
    const auto cols = detail::split_char(line, '\t');
    if (cols.size() != 3) {
      throw ParseError(source_name, line_no, "expected query_id<TAB>doc_id<TAB>rank");
    }
    long rank = 0;
    if (!detail::parse_integer(detail::trim(cols[2]), rank)) {
      throw ParseError(source_name, line_no, fmt::format("bad rank '{}'", cols[2]));
    }
    raw[std::string(detail::trim(cols[0]))].emplace_back(rank, std::string(detail::trim(cols[1])));
  }
  DocRankings out;
  for (auto& [query, entries] : raw) {
    std::sort(entries.begin(), entries.end());
    auto& docs = out[query];
    for (auto& e : entries) {
      if (std::find(docs.begin(), docs.end(), e.second) == docs.end()) docs.push_back(e.second);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labels

bool is_valid_bio(std::string_view label) {
  if (label == "O") return true;
  return label.size() > 2 && (label[0] == 'B' || label[0] == 'I') && label[1] == '-';
}

bool is_class_label(const std::optional<std::string>& gold, std::string_view cls) {
  if (!gold || gold->size() != cls.size() + 2) return false;
  return ((*gold)[0] == 'B' || (*gold)[0] == 'I') && (*gold)[1] == '-' &&
         std::string_view(*gold).substr(2) == cls;
}

std::vector<std::string> to_bio(std::span<const bool> positive, std::string_view cls) {
  std::vector<std::string> out;
  out.reserve(positive.size());
  bool prev = false;
  for (const bool p : positive) {
    if (!p) {
      out.emplace_back("O");
    } else {
      out.push_back(fmt::format("{}-{}", prev ? 'I' : 'B', cls));
    }
    prev = p;
  }
  return out;
}

std::string corpus_checksum(const Corpus& corpus) {
  std::ostringstream buf;
  write_conll(buf, corpus);
  return fmt::format("{:016x}", detail::fnv1a64(buf.str()));
}

}  // namespace nes
