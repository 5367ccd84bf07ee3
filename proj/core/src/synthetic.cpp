#include "nes/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>

#include <fmt/format.h>

#include "nes/error.hpp"

namespace nes {

namespace {

using Rng = std::mt19937_64;
using Chunk = std::vector<Token>;

constexpr const char* kConsonants = "bcdfghklmnprstvz";
constexpr const char* kVowels = "aeiou";

const std::vector<std::pair<std::string, std::string>>& function_words() {
  static const std::vector<std::pair<std::string, std::string>> words = {
      {"the", "DT"}, {"a", "DT"},    {"of", "IN"},   {"in", "IN"},   {"and", "CC"},
      {"to", "TO"},  {"was", "VBD"}, {"is", "VBZ"},  {"for", "IN"},  {"on", "IN"},
      {"with", "IN"}, {"that", "WDT"}, {"by", "IN"}, {"it", "PRP"},  {"as", "IN"}};
  return words;
}

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool chance(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

std::string syllables(Rng& rng, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    s.push_back(kConsonants[uniform(rng, 0, 15)]);
    s.push_back(kVowels[uniform(rng, 0, 4)]);
    if (chance(rng, 0.3)) s.push_back(kConsonants[uniform(rng, 0, 15)]);
  }
  return s;
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

// Draws words no other part of the vocabulary uses.
class WordSource {
 public:
  explicit WordSource(Rng& rng) : rng_(rng) {
    for (const auto& [w, pos] : function_words()) used_.insert(w);
  }

  std::string fresh(std::size_t min_syl, std::size_t max_syl, const std::string& suffix = {}) {
    for (;;) {
      auto w = syllables(rng_, uniform(rng_, min_syl, max_syl)) + suffix;
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

struct ClassVocab {
  std::vector<std::string> class_triggers;
  std::vector<std::string> group_triggers;
  std::vector<std::vector<std::string>> forms;  // by group
  std::vector<std::string> heads;
  std::vector<std::discrete_distribution<std::size_t>> form_dist;
};

std::discrete_distribution<std::size_t> zipf(std::size_t n) {
  std::vector<double> weights(n);
  for (std::size_t r = 0; r < n; ++r) weights[r] = 1.0 / static_cast<double>(r + 1);
  return std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
}

void validate(const SyntheticConfig& c) {
  if (c.documents == 0) throw ConfigError("synthetic.documents must be >= 1");
  if (c.sentences_per_document == 0) throw ConfigError("synthetic.sentences_per_document must be >= 1");
  if (c.min_sentence_length < 1 || c.max_sentence_length < c.min_sentence_length) {
    throw ConfigError("synthetic.min_sentence_length/max_sentence_length: need 1 <= min <= max");
  }
  if (c.filler_vocabulary < 1) throw ConfigError("synthetic.filler_vocabulary must be >= 1");
  std::set<std::string> names;
  for (const auto& cls : c.classes) {
    if (cls.name.empty() || cls.name.find_first_of(" \t-") != std::string::npos) {
      throw ConfigError(fmt::format("synthetic.classes: invalid class name '{}'", cls.name));
    }
    if (!names.insert(cls.name).second) {
      throw ConfigError(fmt::format("synthetic.classes: duplicate class '{}'", cls.name));
    }
    if (cls.groups < 1 || cls.forms_per_group < 1) {
      throw ConfigError(fmt::format("synthetic.classes.{}: groups and forms_per_group must be >= 1",
                                    cls.name));
    }
    if (cls.sentence_rate < 0.0 || cls.sentence_rate > 1.0) {
      throw ConfigError(fmt::format("synthetic.classes.{}.sentence_rate must be in [0, 1]", cls.name));
    }
  }
}

}  // namespace

SyntheticConfig synthetic_bio_preset(std::uint64_t seed) {
  SyntheticConfig c;
  c.seed = seed;
  c.documents = 100;
  c.sentences_per_document = 10;
  c.filler_vocabulary = 800;
  c.distractor_names = 100;
  c.distractor_rate = 0.2;
  c.classes = {{"PER", 0.5, 2, 40, 0.7, 0.5, 3, 0.3},
               {"LOC", 0.4, 2, 30, 0.7, 0.5, 3, 0.0},
               {"ORG", 0.3, 2, 30, 0.6, 0.5, 3, 0.5}};
  return c;
}

SyntheticConfig synthetic_sparse_preset(std::uint64_t seed) {
  SyntheticConfig c;
  c.seed = seed;
  c.documents = 2000;
  c.sentences_per_document = 11;
  c.filler_vocabulary = 3000;
  c.distractor_names = 600;
  c.distractor_rate = 0.3;
  c.trigger_noise_rate = 0.01;
  c.classes = {{"SPECIES", 0.008, 8, 12, 0.95, 0.8, 20, 0.0},
               {"PER", 0.25, 3, 60, 0.6, 0.5, 3, 0.2},
               {"LOC", 0.2, 2, 60, 0.6, 0.5, 3, 0.0}};
  return c;
}

Corpus generate_synthetic(const SyntheticConfig& config) {
  validate(config);
  Rng rng(config.seed);
  WordSource words(rng);

  std::vector<std::pair<std::string, std::string>> filler;
  for (std::size_t i = 0; i < config.filler_vocabulary; ++i) {
    static const char* tags[] = {"NN", "NN", "VB", "JJ", "RB", "NNS"};
    filler.emplace_back(words.fresh(1, 3), tags[uniform(rng, 0, 5)]);
  }
  auto filler_dist = zipf(filler.size());
  std::discrete_distribution<std::size_t> function_dist = zipf(function_words().size());

  std::vector<std::string> distractors;
  for (std::size_t i = 0; i < config.distractor_names; ++i) {
    distractors.push_back(capitalize(words.fresh(2, 3)));
  }

  std::vector<ClassVocab> vocab(config.classes.size());
  std::vector<std::string> all_triggers;
  for (std::size_t c = 0; c < config.classes.size(); ++c) {
    const auto& cls = config.classes[c];
    auto& v = vocab[c];
    for (std::size_t i = 0; i < std::max<std::size_t>(1, cls.class_triggers); ++i) {
      v.class_triggers.push_back(words.fresh(2, 2));
    }
    for (std::size_t g = 0; g < cls.groups; ++g) {
      v.group_triggers.push_back(words.fresh(2, 2));
      const std::string suffix = syllables(rng, 1);
      std::vector<std::string> forms;
      for (std::size_t f = 0; f < cls.forms_per_group; ++f) {
        forms.push_back(capitalize(words.fresh(1, 2, suffix)));
      }
      v.forms.push_back(std::move(forms));
      v.form_dist.push_back(zipf(cls.forms_per_group));
    }
    for (int i = 0; i < 3; ++i) v.heads.push_back(capitalize(words.fresh(1, 2)));
    all_triggers.insert(all_triggers.end(), v.class_triggers.begin(), v.class_triggers.end());
    all_triggers.insert(all_triggers.end(), v.group_triggers.begin(), v.group_triggers.end());
  }

  auto tok = [&](std::string surface, const char* pos, std::string gold = "O") {
    Token t;
    t.surface = std::move(surface);
    if (config.pos_tags) t.pos = pos;
    t.gold = std::move(gold);
    return t;
  };

  std::vector<Document> docs;
  docs.reserve(config.documents);
  for (std::size_t d = 0; d < config.documents; ++d) {
    Document doc;
    doc.doc_id = fmt::format("syn-{:05d}", d);
    for (std::size_t s = 0; s < config.sentences_per_document; ++s) {
      std::vector<Chunk> chunks;
      const auto len = uniform(rng, config.min_sentence_length, config.max_sentence_length);
      for (std::size_t i = 0; i < len; ++i) {
        if (chance(rng, 0.35)) {
          const auto& [w, pos] = function_words()[function_dist(rng)];
          chunks.push_back({tok(w, pos.c_str())});
        } else {
          const auto& [w, pos] = filler[filler_dist(rng)];
          chunks.push_back({tok(w, pos.c_str())});
        }
      }
      auto insert = [&](Chunk chunk) {
        const auto at = uniform(rng, 1, chunks.size());
        chunks.insert(chunks.begin() + static_cast<std::ptrdiff_t>(at), std::move(chunk));
      };

      for (std::size_t c = 0; c < config.classes.size(); ++c) {
        const auto& cls = config.classes[c];
        auto& v = vocab[c];
        if (!chance(rng, cls.sentence_rate)) continue;
        const auto g = uniform(rng, 0, cls.groups - 1);
        Chunk mention;
        if (chance(rng, cls.trigger_rate)) {
          const bool group_trigger = !chance(rng, cls.class_trigger_share);
          mention.push_back(tok(group_trigger ? v.group_triggers[g]
                                              : v.class_triggers[uniform(rng, 0, v.class_triggers.size() - 1)],
                                "JJ"));
        }
        mention.push_back(tok(v.forms[g][v.form_dist[g](rng)], "NNP", "B-" + cls.name));
        if (chance(rng, cls.multi_token_rate)) {
          mention.push_back(tok(v.heads[uniform(rng, 0, 2)], "NNP", "I-" + cls.name));
        }
        insert(std::move(mention));
      }
      if (!distractors.empty() && chance(rng, config.distractor_rate)) {
        insert({tok(distractors[uniform(rng, 0, distractors.size() - 1)], "NNP")});
      }
      if (!all_triggers.empty() && chance(rng, config.trigger_noise_rate)) {
        insert({tok(all_triggers[uniform(rng, 0, all_triggers.size() - 1)], "JJ")});
      }

      Sentence sent;
      for (auto& chunk : chunks) {
        for (auto& t : chunk) sent.tokens.push_back(std::move(t));
      }
      sent.tokens.front().surface = capitalize(sent.tokens.front().surface);
      sent.tokens.push_back(tok(".", "."));
      doc.sentences.push_back(std::move(sent));
    }
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs));
}

}  // namespace nes
