#include "nes/session.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "nes/error.hpp"
#include "text_util.hpp"

namespace nes {

namespace {

constexpr int kSessionFormatVersion = 1;

std::uint64_t splitmix64(std::uint64_t seed, std::uint64_t round) {
  std::uint64_t z = seed + (round + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

nlohmann::json trainer_to_json(const TrainerParams& p) {
  return {{"l2", p.l2},
          {"max_epochs", p.max_epochs},
          {"tolerance", p.tolerance},
          {"max_positive_weight", p.max_positive_weight},
          {"history", p.history}};
}

TrainerParams trainer_from_json(const nlohmann::json& j) {
  TrainerParams p;
  p.l2 = j.value("l2", p.l2);
  p.max_epochs = j.value("max_epochs", p.max_epochs);
  p.tolerance = j.value("tolerance", p.tolerance);
  p.max_positive_weight = j.value("max_positive_weight", p.max_positive_weight);
  p.history = j.value("history", p.history);
  return p;
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kInteractive:
      return "interactive";
    case Strategy::kDocRank:
      return "docrank";
    case Strategy::kRandomPool:
      return "random_pool";
    case Strategy::kUnsure:
      return "unsure";
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (const auto s : {Strategy::kInteractive, Strategy::kDocRank, Strategy::kRandomPool,
                       Strategy::kUnsure}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

SeedRule SeedRule::from_query(std::string_view query) {
  SeedRule rule;
  for (const auto term : detail::split_whitespace(query)) {
    auto t = normalize_surface(term);
    if (!t.empty() && std::find(rule.terms.begin(), rule.terms.end(), t) == rule.terms.end()) {
      rule.terms.push_back(std::move(t));
    }
  }
  return rule;
}

// ---------------------------------------------------------------------------

Session::Session(const FeatureIndex& index, SessionConfig config, std::string session_id)
    : index_(&index), config_(std::move(config)), id_(std::move(session_id)) {
  if (id_.empty()) id_ = "session";
  if (config_.retrain_every < 1) throw ConfigError("session.retrain_every must be >= 1");
  if (config_.prune_to && *config_.prune_to < 1) throw ConfigError("session.prune_to must be >= 1");

  const Corpus& corpus = index.corpus();
  in_pool_.assign(corpus.sentence_count(), false);
  auto add_doc = [&](std::uint32_t d) {
    for (const auto& sent : corpus.docs()[d].sentences) {
      if (in_pool_[sent.sentence_id]) continue;
      in_pool_[sent.sentence_id] = true;
      pool_.push_back(sent.sentence_id);
    }
  };
  if (config_.pool_docs.empty()) {
    for (std::uint32_t d = 0; d < corpus.docs().size(); ++d) add_doc(d);
  } else {
    for (const auto& doc_id : config_.pool_docs) {
      if (auto d = corpus.find_document(doc_id)) add_doc(*d);
    }
    if (pool_.empty()) throw ConfigError("session.pool_docs: no listed document is in the index");
  }
  universe_size_ = restricted_universe() ? pool_.size() : corpus.sentence_count();

  for (const SentenceId s : config_.seed_rule.sentences) {
    if (s < corpus.sentence_count() && in_universe(s)) seed_candidates_.push_back(s);
  }
  if (!config_.seed_rule.terms.empty()) {
    for (SentenceId s = 0; s < corpus.sentence_count(); ++s) {
      if (!in_universe(s)) continue;
      for (const auto& tok : corpus.sentence(s).tokens) {
        const auto form = normalize_surface(tok.surface);
        if (std::find(config_.seed_rule.terms.begin(), config_.seed_rule.terms.end(), form) !=
            config_.seed_rule.terms.end()) {
          seed_candidates_.push_back(s);
          break;
        }
      }
    }
  }
}

bool Session::restricted_universe() const {
  return config_.pool_only || config_.strategy == Strategy::kDocRank ||
         config_.strategy == Strategy::kRandomPool || !config_.pool_docs.empty();
}

bool Session::in_universe(SentenceId s) const { return !restricted_universe() || in_pool_[s]; }

bool Session::complete() const { return labeled_in_universe_ >= universe_size_; }

std::optional<SentenceId> Session::seed_choice() const {
  for (const SentenceId s : seed_candidates_) {
    if (!exclude_.contains(s)) return s;
  }
  return std::nullopt;
}

std::optional<SentenceId> Session::first_unlabeled() const {
  if (restricted_universe()) {
    for (const SentenceId s : pool_) {
      if (!exclude_.contains(s)) return s;
    }
    return std::nullopt;
  }
  for (SentenceId s = 0; s < index_->corpus().sentence_count(); ++s) {
    if (!exclude_.contains(s)) return s;
  }
  return std::nullopt;
}

std::optional<SentenceId> Session::random_pool_choice() const {
  std::vector<SentenceId> open;
  for (const SentenceId s : pool_) {
    if (!exclude_.contains(s)) open.push_back(s);
  }
  if (open.empty()) return std::nullopt;
  return open[splitmix64(config_.seed, round()) % open.size()];
}

std::optional<SentenceId> Session::interactive_choice() const {
  if (!restricted_universe()) {
    const auto top = sentence_rank(*index_, *ranking_model_, 1, exclude_);
    if (top.empty()) return std::nullopt;
    return top.front().sentence_id;
  }
  // Same order as sentence_rank, limited to the pool.
  const auto scores = score_dense(*index_, *ranking_model_);
  std::optional<SentenceId> best;
  double best_score = 0.0;
  for (const SentenceId s : pool_) {
    if (exclude_.contains(s)) continue;
    const Sentence& sent = index_->corpus().sentence(s);
    const double score = *std::max_element(scores.begin() + sent.first_token, scores.begin() + sent.end_token());
    if (!best || score > best_score || (score == best_score && s < *best)) {
      best = s;
      best_score = score;
    }
  }
  return best;
}

std::optional<SentenceId> Session::unsure_choice() const {
  const auto scores = score_dense(*index_, *ranking_model_);
  std::optional<SentenceId> best;
  double best_u = -std::numeric_limits<double>::infinity();
  for (TokenId t = 0; t < scores.size(); ++t) {
    const SentenceId s = index_->sentence_of(t);
    if (exclude_.contains(s) || !in_universe(s)) continue;
    const double u = uncertainty_of_score(*ranking_model_, scores[t]);
    if (u > best_u) {
      best_u = u;
      best = s;
    }
  }
  return best;
}

ServedSentence Session::next_sentence() {
  if (complete()) throw SessionComplete();
  std::optional<SentenceId> choice;
  if (!ranking_model_) {
    choice = seed_choice();
    if (!choice) {
      choice = config_.strategy == Strategy::kRandomPool ? random_pool_choice() : first_unlabeled();
    }
  } else {
    switch (config_.strategy) {
      case Strategy::kInteractive:
        choice = interactive_choice();
        break;
      case Strategy::kDocRank:
        choice = first_unlabeled();
        break;
      case Strategy::kRandomPool:
        choice = random_pool_choice();
        break;
      case Strategy::kUnsure:
        choice = unsure_choice();
        break;
    }
  }
  if (!choice) throw SessionComplete();

  ServedSentence served{*choice, {}};
  const Sentence& sent = index_->corpus().sentence(*choice);
  served.token_scores.reserve(sent.tokens.size());
  for (TokenId t = sent.first_token; t < sent.end_token(); ++t) {
    served.token_scores.push_back(ranking_model_ ? ranking_model_->score(index_->features_of(t))
                                                 : 0.0);
  }
  last_served_ = *choice;
  return served;
}

void Session::submit_labels(SentenceId sentence_id, const std::vector<bool>& labels) {
  if (!last_served_ || *last_served_ != sentence_id) {
    throw StateError(last_served_
                         ? fmt::format("sentence {} was not served (pending: {})", sentence_id,
                                       *last_served_)
                         : fmt::format("sentence {} was not served", sentence_id));
  }
  const Sentence& sent = index_->corpus().sentence(sentence_id);
  if (labels.size() != sent.tokens.size()) {
    throw InvalidInput(fmt::format("sentence {} has {} tokens, got {} labels", sentence_id,
                                   sent.tokens.size(), labels.size()));
  }
  record(sentence_id, labels);
  if (round() % config_.retrain_every == 0) retrain();
}

void Session::submit_labels(SentenceId sentence_id, std::span<const bool> labels) {
  submit_labels(sentence_id, std::vector<bool>(labels.begin(), labels.end()));
}

void Session::record(SentenceId sentence_id, std::vector<bool> labels) {
  const Sentence& sent = index_->corpus().sentence(sentence_id);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const TokenId t = sent.first_token + static_cast<TokenId>(i);
    tokens_.push_back(LabeledToken{t, index_->features_of(t), labels[i]});
  }
  labeled_.push_back(LabeledSentence{sentence_id, std::move(labels)});
  exclude_.insert(sentence_id);
  if (in_universe(sentence_id)) ++labeled_in_universe_;
  last_served_.reset();
}

void Session::retrain() {
  const bool has_pos = std::any_of(tokens_.begin(), tokens_.end(), [](const auto& t) { return t.positive; });
  const bool has_neg = std::any_of(tokens_.begin(), tokens_.end(), [](const auto& t) { return !t.positive; });
  if (!has_pos || !has_neg) return;
  model_ = train(tokens_, config_.trainer, config_.class_name);
  ranking_model_ = config_.prune_to ? prune(*model_, *config_.prune_to) : *model_;
}

std::vector<ScoredToken> Session::ranking() const {
  if (!ranking_model_) return {};
  return rank_all(*index_, *ranking_model_);
}

std::vector<std::string> entity_list(const FeatureIndex& index, const QueryModel& model,
                                     std::size_t limit) {
  if (limit < 1) throw InvalidInput("entity list limit must be >= 1");
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& st : rank_all(index, model)) {
    auto form = normalize_surface(index.corpus().token(st.token_id).surface);
    if (!seen.insert(form).second || form.empty()) continue;
    out.push_back(std::move(form));
    if (out.size() == limit) break;
  }
  return out;
}

std::vector<std::string> Session::entity_list(std::size_t limit) const {
  if (!ranking_model_) throw StateError("no model yet: label a sentence with both classes first");
  return nes::entity_list(*index_, *ranking_model_, limit);
}

nlohmann::json Session::to_json() const {
  nlohmann::json labeled = nlohmann::json::array();
  for (const auto& ls : labeled_) {
    std::vector<int> bits(ls.labels.begin(), ls.labels.end());
    labeled.push_back({{"sentence_id", ls.sentence_id}, {"labels", bits}});
  }
  return {{"format", "nes-session"},
          {"version", kSessionFormatVersion},
          {"id", id_},
          {"corpus_checksum", index_->manifest().corpus_checksum},
          {"config",
           {{"class_name", config_.class_name},
            {"strategy", to_string(config_.strategy)},
            {"seed", config_.seed},
            {"seed_terms", config_.seed_rule.terms},
            {"seed_sentences", config_.seed_rule.sentences},
            {"trainer", trainer_to_json(config_.trainer)},
            {"prune_to", config_.prune_to ? nlohmann::json(*config_.prune_to) : nlohmann::json()},
            {"retrain_every", config_.retrain_every},
            {"pool_docs", config_.pool_docs},
            {"pool_only", config_.pool_only}}},
          {"labeled", std::move(labeled)},
          {"model", model_ ? model_to_json(*model_) : nlohmann::json()},
          {"last_served", last_served_ ? nlohmann::json(*last_served_) : nlohmann::json()}};
}

Session Session::from_json(const FeatureIndex& index, const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "nes-session") throw Error("not a session document");
    if (j.at("version").get<int>() != kSessionFormatVersion) {
      throw VersionError(fmt::format("session format version {} is not supported",
                                     j.at("version").get<int>()));
    }
    if (j.at("corpus_checksum").get<std::string>() != index.manifest().corpus_checksum) {
      throw Error("session was recorded against a different index");
    }
    const auto& c = j.at("config");
    SessionConfig cfg;
    cfg.class_name = c.at("class_name").get<std::string>();
    const auto strategy = parse_strategy(c.at("strategy").get<std::string>());
    if (!strategy) throw Error("unknown strategy in session document");
    cfg.strategy = *strategy;
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.seed_rule.terms = c.at("seed_terms").get<std::vector<std::string>>();
    cfg.seed_rule.sentences = c.at("seed_sentences").get<std::vector<SentenceId>>();
    cfg.trainer = trainer_from_json(c.at("trainer"));
    if (!c.at("prune_to").is_null()) cfg.prune_to = c.at("prune_to").get<std::size_t>();
    cfg.retrain_every = c.at("retrain_every").get<std::size_t>();
    cfg.pool_docs = c.at("pool_docs").get<std::vector<std::string>>();
    cfg.pool_only = c.at("pool_only").get<bool>();

    Session session(index, std::move(cfg), j.at("id").get<std::string>());
    for (const auto& ls : j.at("labeled")) {
      const auto s = ls.at("sentence_id").get<SentenceId>();
      const auto bits = ls.at("labels").get<std::vector<int>>();
      if (s >= index.corpus().sentence_count() ||
          bits.size() != index.corpus().sentence(s).tokens.size()) {
        throw Error(fmt::format("labeled sentence {} does not match the index", s));
      }
      session.record(s, std::vector<bool>(bits.begin(), bits.end()));
    }
    if (!j.at("model").is_null()) {
      session.model_ = model_from_json(j.at("model"));
      session.ranking_model_ = session.config_.prune_to
                                   ? prune(*session.model_, *session.config_.prune_to)
                                   : *session.model_;
    }
    if (!j.at("last_served").is_null()) session.last_served_ = j.at("last_served").get<SentenceId>();
    return session;
  } catch (const nlohmann::json::exception& e) {
    throw Error(fmt::format("malformed session document: {}", e.what()));
  }
}

// ---------------------------------------------------------------------------

std::string label_class_name(std::string_view class_name) {
  std::string out;
  for (const auto part : detail::split_whitespace(class_name)) {
    if (!out.empty()) out.push_back('_');
    out.append(part);
  }
  return out.empty() ? std::string("ENT") : out;
}

void export_conll(std::ostream& out, const Session& session) {
  const std::string cls = label_class_name(session.config().class_name);
  const Corpus& corpus = session.index().corpus();
  out << "-DOCSTART- -X- -X- O\n\n";
  for (const auto& ls : session.labeled()) {
    const Sentence& sent = corpus.sentence(ls.sentence_id);
    std::vector<bool> labels = ls.labels;
    std::unique_ptr<bool[]> flags(new bool[labels.size()]);
    std::copy(labels.begin(), labels.end(), flags.get());
    const auto bio = to_bio(std::span<const bool>(flags.get(), labels.size()), cls);
    for (std::size_t i = 0; i < sent.tokens.size(); ++i) {
      const auto& tok = sent.tokens[i];
      out << tok.surface << ' ' << tok.pos.value_or("_") << " _ " << bio[i] << '\n';
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

SimulatedUser SimulatedUser::from_gold(std::string cls) {
  SimulatedUser u;
  u.name_ = cls;
  u.gold_class_ = std::move(cls);
  return u;
}

SimulatedUser SimulatedUser::from_judgments(JudgmentSet judgments) {
  SimulatedUser u;
  u.name_ = judgments.title.empty() ? judgments.query_id : judgments.title;
  u.judgments_ = std::move(judgments);
  return u;
}

bool SimulatedUser::positive(const Token& token) const {
  if (gold_class_) return is_class_label(token.gold, *gold_class_);
  return judgments_->accepts(token.surface);
}

std::vector<bool> SimulatedUser::label(const Sentence& sentence) const {
  std::vector<bool> out;
  out.reserve(sentence.tokens.size());
  for (const auto& tok : sentence.tokens) out.push_back(positive(tok));
  return out;
}

std::vector<SentenceId> SimulatedUser::positive_sentences(const Corpus& corpus) const {
  std::vector<SentenceId> out;
  for (const auto& doc : corpus.docs()) {
    for (const auto& sent : doc.sentences) {
      if (std::any_of(sent.tokens.begin(), sent.tokens.end(),
                      [&](const Token& t) { return positive(t); })) {
        out.push_back(sent.sentence_id);
      }
    }
  }
  return out;
}

JudgmentSet SimulatedUser::judgments(const Corpus& corpus) const {
  if (gold_class_) return judgments_from_gold(corpus, *gold_class_);
  return *judgments_;
}

LearningCurve run_simulation(const FeatureIndex& index, const SimulatedUser& user,
                             const SimulationConfig& config, std::string query_id,
                             const std::function<void(const Session&)>& on_round) {
  if (config.rounds < 1) throw InvalidInput("simulation needs rounds >= 1");
  const Corpus& corpus = index.corpus();
  const JudgmentSet judgments = user.judgments(corpus);
  if (judgments.accepted_forms.empty()) {
    throw Error(fmt::format("no accepted forms for '{}' in this corpus", user.name()));
  }

  // Intern normalized surfaces once; uAP per round then works on token ids.
  std::unordered_map<std::string, std::uint32_t> intern;
  std::vector<std::uint32_t> token_key(index.token_count());
  std::vector<std::uint8_t> token_relevant(index.token_count());
  for (TokenId t = 0; t < index.token_count(); ++t) {
    auto form = normalize_surface(corpus.token(t).surface);
    token_relevant[t] = judgments.accepted_forms.contains(form) ? 1 : 0;
    auto [it, inserted] = intern.emplace(std::move(form), static_cast<std::uint32_t>(intern.size()));
    token_key[t] = it->second;
  }

  SessionConfig sc;
  sc.class_name = user.name();
  sc.strategy = config.strategy;
  sc.seed = config.seed;
  sc.seed_rule.sentences = user.positive_sentences(corpus);
  sc.trainer = config.trainer;
  sc.prune_to = config.prune_to;
  sc.retrain_every = config.retrain_every;
  sc.pool_docs = config.pool_docs;
  sc.pool_only = config.pool_only;
  Session session(index, std::move(sc), query_id.empty() ? user.name() : query_id);

  LearningCurve curve{std::string(to_string(config.strategy)),
                      query_id.empty() ? user.name() : std::move(query_id),
                      {},
                      config.seed};
  std::vector<std::uint32_t> keys;
  std::vector<std::uint8_t> relevant;
  for (std::size_t r = 0; r < config.rounds; ++r) {
    ServedSentence served;
    try {
      served = session.next_sentence();
    } catch (const SessionComplete&) {
      break;
    }
    session.submit_labels(served.sentence_id, user.label(corpus.sentence(served.sentence_id)));

    double uap = 0.0;
    if (session.ranking_model()) {
      const auto ranking = session.ranking();
      keys.clear();
      relevant.clear();
      for (const auto& st : ranking) {
        keys.push_back(token_key[st.token_id]);
        relevant.push_back(token_relevant[st.token_id]);
      }
      uap = unique_ap_keys(keys, relevant, judgments.accepted_forms.size());
    }
    curve.uap.push_back(uap);
    if (on_round) on_round(session);
  }
  return curve;
}

}  // namespace nes
