#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nes {

using TokenId = std::uint32_t;
using SentenceId = std::uint32_t;

struct Token {
  std::string surface;
  std::optional<std::string> pos;
  std::optional<std::string> gold;  // BIO label: "O", "B-X" or "I-X"

  bool operator==(const Token&) const = default;
};

struct Sentence {
  SentenceId sentence_id = 0;
  TokenId first_token = 0;
  std::vector<Token> tokens;

  TokenId end_token() const { return first_token + static_cast<TokenId>(tokens.size()); }
  bool operator==(const Sentence&) const = default;
};

struct Document {
  std::string doc_id;
  std::uint32_t source_order = 0;
  std::vector<Sentence> sentences;

  bool operator==(const Document&) const = default;
};

struct TokenLocation {
  SentenceId sentence_id;
  std::uint32_t position;
};

/// Immutable collection of documents. Token and sentence ids are dense and
/// follow document order; they are (re)assigned on construction.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> docs);

  const std::vector<Document>& docs() const noexcept { return docs_; }
  std::size_t token_count() const noexcept { return token_sentence_.size(); }
  std::size_t sentence_count() const noexcept { return sentences_.size(); }
  bool empty() const noexcept { return token_sentence_.empty(); }

  const Sentence& sentence(SentenceId id) const;
  /// Index into docs() of the document holding `id`.
  std::uint32_t doc_index(SentenceId id) const;
  const Document& document_of(SentenceId id) const { return docs_[doc_index(id)]; }

  TokenLocation locate(TokenId id) const;
  const Token& token(TokenId id) const;

  /// Document whose doc_id equals `doc_id`, if any.
  std::optional<std::uint32_t> find_document(std::string_view doc_id) const;

  bool operator==(const Corpus& other) const { return docs_ == other.docs_; }

 private:
  struct SentenceRef {
    std::uint32_t doc;
    std::uint32_t index;
  };

  std::vector<Document> docs_;
  std::vector<SentenceRef> sentences_;
  std::vector<SentenceId> token_sentence_;
  std::map<std::string, std::uint32_t, std::less<>> doc_lookup_;
};

/// Reads CoNLL-2003 style columns: SURFACE POS CHUNK NER. Blank lines end a
/// sentence, "-DOCSTART-" starts a document. A second DOCSTART column other
/// than "-X-" is taken as the document id. "_" marks an absent POS or label.
Corpus read_conll(const std::filesystem::path& path);
Corpus read_conll(std::istream& in, const std::string& source_name);

/// Writes `corpus` in the layout read_conll accepts; the round trip is exact.
void write_conll(std::ostream& out, const Corpus& corpus);

/// Sentence splitting and tokenization for raw text.
///
/// Whitespace separates chunks; leading and trailing ASCII punctuation is
/// split off one character per token. A trailing period stays attached when
/// the chunk already holds an interior period ("U.S.") or is a known
/// abbreviation ("Mr."). A sentence ends after a split-off '.', '?' or '!'
/// that is followed by whitespace and a chunk starting with an uppercase
/// letter, and at end of text.
class Tokenizer {
 public:
  Tokenizer();
  explicit Tokenizer(std::set<std::string> abbreviations);

  std::vector<std::vector<std::string>> split(std::string_view text) const;

 private:
  std::set<std::string> abbreviations_;  // lowercase, without the period
};

enum class PlaintextLayout {
  kDocumentPerFile,  // path is a file (one doc) or a directory of files
  kLineRecords,      // one document per line, optional "doc_id<TAB>" prefix
};

Corpus read_plaintext(const std::filesystem::path& path, const Tokenizer& tokenizer,
                      PlaintextLayout layout = PlaintextLayout::kDocumentPerFile);

/// Builds a single-pass corpus from text records (doc_id, text).
Corpus corpus_from_text(std::span<const std::pair<std::string, std::string>> records,
                        const Tokenizer& tokenizer, const std::string& source_name);

/// Byte offset of the first invalid UTF-8 sequence, if any.
std::optional<std::size_t> find_invalid_utf8(std::string_view bytes);

/// Case-folds, collapses interior whitespace, strips surrounding whitespace and
/// punctuation. Idempotent.
std::string normalize_surface(std::string_view s);

struct JudgmentSet {
  std::string query_id;
  std::string title;
  std::set<std::string> accepted_forms;  // normalized

  bool accepts(std::string_view surface) const;
};

struct JudgmentOptions {
  /// Queries with this many distinct normalized forms or fewer are dropped.
  std::size_t min_forms_exclusive = 3;
  std::set<std::string> excluded_queries;
};

/// Reads `query_id<TAB>title<TAB>form` lines, grouped by query in order of
/// first appearance.
std::vector<JudgmentSet> read_judgments(const std::filesystem::path& path,
                                        const JudgmentOptions& options = {});
std::vector<JudgmentSet> read_judgments(std::istream& in, const std::string& source_name,
                                        const JudgmentOptions& options = {});

/// Accepted forms are the normalized surfaces of gold tokens of class `cls`.
JudgmentSet judgments_from_gold(const Corpus& corpus, std::string_view cls);

/// Per-query ordered document ids from `query_id<TAB>doc_id<TAB>rank` lines.
using DocRankings = std::map<std::string, std::vector<std::string>>;
DocRankings read_doc_rankings(const std::filesystem::path& path);
DocRankings read_doc_rankings(std::istream& in, const std::string& source_name);

/// True when `gold` is B-cls or I-cls.
bool is_class_label(const std::optional<std::string>& gold, std::string_view cls);
bool is_valid_bio(std::string_view label);

/// BIO labels for a binary token labeling of one class.
std::vector<std::string> to_bio(std::span<const bool> positive, std::string_view cls);

/// 64-bit FNV-1a over the canonical CoNLL serialization, as 16 hex digits.
std::string corpus_checksum(const Corpus& corpus);

}  // namespace nes
