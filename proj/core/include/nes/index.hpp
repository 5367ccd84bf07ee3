#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nes/corpus.hpp"
#include "nes/features.hpp"
#include "nes/model.hpp"

namespace nes {

using FeatureId = std::uint32_t;

inline constexpr int kIndexFormatVersion = 1;

/// Dense membership set over sentence ids.
class SentenceSet {
 public:
  SentenceSet() = default;
  SentenceSet(std::initializer_list<SentenceId> ids);

  void insert(SentenceId id);
  bool contains(SentenceId id) const { return id < bits_.size() && bits_[id]; }
  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }

 private:
  std::vector<bool> bits_;
  std::size_t count_ = 0;
};

struct TokenOccurrence {
  TokenId token_id;
  SentenceId sentence_id;
  std::uint32_t doc_order;
  std::uint32_t position_in_sentence;
  std::string_view surface;
};

struct ScoredToken {
  TokenId token_id;
  double score;

  bool operator==(const ScoredToken&) const = default;
};

/// Ranking order: score descending, then token id ascending.
inline bool ranks_before(const ScoredToken& a, const ScoredToken& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.token_id < b.token_id;
}

struct SentenceScore {
  SentenceId sentence_id;
  TokenId best_token;
  double score;

  bool operator==(const SentenceScore&) const = default;
};

struct IndexManifest {
  int format_version = kIndexFormatVersion;
  std::string corpus_checksum;
  FeatureConfig features;
  std::size_t docs = 0;
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  std::size_t lexicon = 0;
  std::size_t postings = 0;
};

/// Inverted index from feature to token ids, plus the forward view from
/// token to feature ids and the corpus it was built from. Feature ids follow
/// the lexicographic order of the feature strings. Immutable once built.
class FeatureIndex {
 public:
  static FeatureIndex build(Corpus corpus, const FeatureConfig& cfg,
                            const ClusterMap* clusters = nullptr);
  /// Builds, then persists to `out_dir` (created if missing).
  static FeatureIndex build(Corpus corpus, const FeatureConfig& cfg, const ClusterMap* clusters,
                            const std::filesystem::path& out_dir);

  void save(const std::filesystem::path& dir) const;
  /// Loads a persisted index; `verify` runs the forward/inverted cross-check.
  static FeatureIndex open(const std::filesystem::path& dir, bool verify = true);

  FeatureIndex(FeatureIndex&&) noexcept = default;
  FeatureIndex& operator=(FeatureIndex&&) noexcept = default;
  FeatureIndex(const FeatureIndex&) = delete;
  FeatureIndex& operator=(const FeatureIndex&) = delete;

  const Corpus& corpus() const noexcept { return corpus_; }
  const IndexManifest& manifest() const noexcept { return manifest_; }
  std::size_t token_count() const noexcept { return token_sentence_.size(); }
  std::size_t feature_count() const noexcept { return lexicon_.size(); }

  std::optional<FeatureId> lookup(std::string_view feature) const;
  const std::string& feature_name(FeatureId id) const { return lexicon_.at(id); }
  std::span<const TokenId> postings(FeatureId id) const;
  std::span<const FeatureId> forward(TokenId id) const;
  FeatureVector features_of(TokenId id) const;

  SentenceId sentence_of(TokenId id) const { return token_sentence_[id]; }
  TokenOccurrence occurrence(TokenId id) const;

  /// Throws Error when the two views disagree or a list is unsorted.
  void verify() const;

 private:
  FeatureIndex() = default;
  void finish_load();

  Corpus corpus_;
  IndexManifest manifest_;
  std::vector<std::string> lexicon_;
  std::unordered_map<std::string_view, FeatureId> lexicon_lookup_;
  std::vector<std::uint64_t> postings_offsets_;
  std::vector<TokenId> postings_;
  std::vector<std::uint64_t> forward_offsets_;
  std::vector<FeatureId> forward_;
  std::vector<SentenceId> token_sentence_;
};

/// Query features resolved against the lexicon, in feature id order.
struct ResolvedQuery {
  std::vector<std::pair<FeatureId, double>> terms;
};
ResolvedQuery resolve(const FeatureIndex& index, const QueryModel& query);

/// Top-k tokens by Q.f(x) over every token whose sentence is not excluded.
/// Term-at-a-time over postings; tokens matching no query feature score 0 and
/// enter the result only when fewer than k candidates score above 0.
std::vector<ScoredToken> score_topk(const FeatureIndex& index, const QueryModel& query,
                                    std::size_t k, const SentenceSet& exclude = {});

/// Every candidate (matching at least one query feature), fully ordered.
std::vector<ScoredToken> score_candidates(const FeatureIndex& index, const QueryModel& query,
                                          const SentenceSet& exclude = {});

/// Scores every token through the forward index, ordered by ranks_before.
std::vector<ScoredToken> score_all_bruteforce(const FeatureIndex& index, const QueryModel& query);

/// Score of every token indexed by token id (zero for non-matching tokens).
std::vector<double> score_dense(const FeatureIndex& index, const QueryModel& query);

/// All non-excluded tokens ordered by ranks_before; same scores as the brute force.
std::vector<ScoredToken> rank_all(const FeatureIndex& index, const QueryModel& query,
                                  const SentenceSet& exclude = {});

/// Sentences by their best token score (desc, sentence id asc), at most n.
std::vector<SentenceScore> sentence_rank(const FeatureIndex& index, const QueryModel& query,
                                         std::size_t n, const SentenceSet& exclude = {});

}  // namespace nes
