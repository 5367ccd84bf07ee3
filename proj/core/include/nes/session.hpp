#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nes/corpus.hpp"
#include "nes/eval.hpp"
#include "nes/index.hpp"
#include "nes/model.hpp"

namespace nes {

enum class Strategy {
  kInteractive,  // sentence holding the top-ranked token
  kDocRank,      // next sentence of the best-ranked document
  kRandomPool,   // uniform draw from the document pool
  kUnsure,       // sentence holding the token closest to the decision boundary
};

std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);

/// How the first sentence is picked while no model exists.
struct SeedRule {
  /// Normalized terms; the first sentence (collection order) with a token
  /// whose normalized surface equals a term qualifies.
  std::vector<std::string> terms;
  /// Explicit candidates, used before `terms`.
  std::vector<SentenceId> sentences;

  bool empty() const { return terms.empty() && sentences.empty(); }
  static SeedRule from_query(std::string_view query);
};

struct SessionConfig {
  std::string class_name;
  Strategy strategy = Strategy::kInteractive;
  std::uint64_t seed = 0;
  SeedRule seed_rule;
  TrainerParams trainer;
  /// Ranking and selection use the model pruned to this many features.
  std::optional<std::size_t> prune_to;
  /// Retrain after every n-th labeled sentence.
  std::size_t retrain_every = 1;
  /// Ordered pool of document ids. Empty means every document in collection order.
  std::vector<std::string> pool_docs;
  /// Restrict interactive and unsure selection to the pool as well.
  bool pool_only = false;
};

struct LabeledSentence {
  SentenceId sentence_id = 0;
  std::vector<bool> labels;

  bool operator==(const LabeledSentence&) const = default;
};

struct ServedSentence {
  SentenceId sentence_id = 0;
  std::vector<double> token_scores;  // Q.f(x) per token, zeros before any model
};

/// Interaction state: serve a sentence, take its labels, retrain, repeat.
/// Holds a non-owning reference to the index, which must outlive it.
class Session {
 public:
  Session(const FeatureIndex& index, SessionConfig config, std::string session_id = {});

  /// Picks the next sentence and marks it as served. Throws SessionComplete
  /// when the pool has no unlabeled sentence left.
  ServedSentence next_sentence();

  /// Labels the served sentence and retrains when both classes are present.
  /// Throws StateError for a sentence that is not the one served and
  /// InvalidInput when `labels` does not cover the sentence.
  void submit_labels(SentenceId sentence_id, std::span<const bool> labels);
  void submit_labels(SentenceId sentence_id, const std::vector<bool>& labels);

  /// Unique normalized surfaces of the top-ranked tokens. Requires a model.
  std::vector<std::string> entity_list(std::size_t limit) const;

  /// Current ranking over all tokens (empty without a model).
  std::vector<ScoredToken> ranking() const;

  const std::string& id() const noexcept { return id_; }
  const SessionConfig& config() const noexcept { return config_; }
  const FeatureIndex& index() const noexcept { return *index_; }
  const std::vector<LabeledSentence>& labeled() const noexcept { return labeled_; }
  const SentenceSet& exclude() const noexcept { return exclude_; }
  std::size_t round() const noexcept { return labeled_.size(); }
  std::size_t labeled_token_count() const noexcept { return tokens_.size(); }
  std::optional<SentenceId> last_served() const noexcept { return last_served_; }
  /// Model as trained.
  const std::optional<QueryModel>& model() const noexcept { return model_; }
  /// Model used for ranking and selection (pruned when configured).
  const std::optional<QueryModel>& ranking_model() const noexcept { return ranking_model_; }
  bool complete() const;

  nlohmann::json to_json() const;
  /// Rebuilds a session from to_json() output against the same index.
  static Session from_json(const FeatureIndex& index, const nlohmann::json& j);

 private:
  std::optional<SentenceId> seed_choice() const;
  std::optional<SentenceId> first_unlabeled() const;
  bool restricted_universe() const;
  std::optional<SentenceId> random_pool_choice() const;
  std::optional<SentenceId> interactive_choice() const;
  std::optional<SentenceId> unsure_choice() const;
  bool in_universe(SentenceId s) const;
  void record(SentenceId sentence_id, std::vector<bool> labels);
  void retrain();

  const FeatureIndex* index_;
  SessionConfig config_;
  std::string id_;
  std::vector<SentenceId> pool_;  // pool sentences in pool order
  std::vector<bool> in_pool_;     // by sentence id
  std::vector<SentenceId> seed_candidates_;
  std::vector<LabeledSentence> labeled_;
  std::vector<LabeledToken> tokens_;
  SentenceSet exclude_;
  std::optional<QueryModel> model_;
  std::optional<QueryModel> ranking_model_;
  std::optional<SentenceId> last_served_;
  std::size_t universe_size_ = 0;
  std::size_t labeled_in_universe_ = 0;
};

/// Unique normalized surfaces of the top-ranked tokens under `model`, first
/// occurrence kept, empty forms skipped. Throws InvalidInput when limit == 0.
std::vector<std::string> entity_list(const FeatureIndex& index, const QueryModel& model,
                                     std::size_t limit);

/// Labeled sentences as CoNLL, labels in BIO over the session's class name
/// (whitespace replaced by '_').
void export_conll(std::ostream& out, const Session& session);
std::string label_class_name(std::string_view class_name);

/// Deterministic annotator replaying gold BIO labels or a judgment set.
class SimulatedUser {
 public:
  static SimulatedUser from_gold(std::string cls);
  static SimulatedUser from_judgments(JudgmentSet judgments);

  std::vector<bool> label(const Sentence& sentence) const;
  bool positive(const Token& token) const;
  /// Sentence ids (collection order) holding at least one positive token.
  std::vector<SentenceId> positive_sentences(const Corpus& corpus) const;
  /// Accepted forms for scoring this user's target with uAP.
  JudgmentSet judgments(const Corpus& corpus) const;
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
  std::optional<std::string> gold_class_;
  std::optional<JudgmentSet> judgments_;
};

struct SimulationConfig {
  Strategy strategy = Strategy::kInteractive;
  std::size_t rounds = 50;
  std::uint64_t seed = 0;
  TrainerParams trainer;
  std::optional<std::size_t> prune_to;
  std::size_t retrain_every = 1;
  std::vector<std::string> pool_docs;
  bool pool_only = false;
};

/// Runs serve/label/retrain for `rounds` rounds (or until complete) and
/// records the uAP of the full token ranking after every round.
/// `on_round` observes the session after each submitted sentence.
LearningCurve run_simulation(const FeatureIndex& index, const SimulatedUser& user,
                             const SimulationConfig& config, std::string query_id = {},
                             const std::function<void(const Session&)>& on_round = {});

}  // namespace nes
