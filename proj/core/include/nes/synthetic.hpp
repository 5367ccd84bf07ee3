#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nes/corpus.hpp"

namespace nes {

/// One generated entity class. Forms come in groups; each group shares a
/// suffix and a trigger word, and every form of the class shares the class
/// triggers, so a tagger can generalize to unseen forms.
struct SyntheticClass {
  std::string name;
  double sentence_rate = 0.1;  // probability that a sentence holds a mention
  std::size_t groups = 2;
  std::size_t forms_per_group = 30;
  double trigger_rate = 0.7;     // mention preceded by a trigger word
  double class_trigger_share = 0.5;  // of those, share using a class (not group) trigger
  std::size_t class_triggers = 3;
  double multi_token_rate = 0.0;  // mention followed by a class head word
};

struct SyntheticConfig {
  std::uint64_t seed = 1;
  std::size_t documents = 100;
  std::size_t sentences_per_document = 10;
  std::size_t min_sentence_length = 6;
  std::size_t max_sentence_length = 14;
  std::size_t filler_vocabulary = 1500;
  std::size_t distractor_names = 300;
  double distractor_rate = 0.3;     // capitalized non-entity per sentence
  double trigger_noise_rate = 0.05;  // stray trigger words without a mention
  bool pos_tags = true;
  std::vector<SyntheticClass> classes;
};

/// Multi-class BIO corpus (PER, LOC, ORG) of roughly 14K tokens.
SyntheticConfig synthetic_bio_preset(std::uint64_t seed = 1);
/// About 22K sentences, one rare target class SPECIES (under 1% of sentences)
/// next to frequent PER and LOC mentions.
SyntheticConfig synthetic_sparse_preset(std::uint64_t seed = 1);

/// Deterministic for a given config. Throws ConfigError on an unusable config.
Corpus generate_synthetic(const SyntheticConfig& config);

}  // namespace nes
