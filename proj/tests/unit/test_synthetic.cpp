#include <gtest/gtest.h>

#include <map>
#include <set>

#include "nes/error.hpp"
#include "nes/synthetic.hpp"

using namespace nes;

TEST(Synthetic, DeterministicPerSeed) {
  EXPECT_EQ(generate_synthetic(synthetic_bio_preset(4)), generate_synthetic(synthetic_bio_preset(4)));
  EXPECT_NE(corpus_checksum(generate_synthetic(synthetic_bio_preset(4))),
            corpus_checksum(generate_synthetic(synthetic_bio_preset(5))));
}

TEST(Synthetic, BioPresetShape) {
  const auto c = generate_synthetic(synthetic_bio_preset(1));
  EXPECT_EQ(c.docs().size(), 100u);
  EXPECT_EQ(c.sentence_count(), 1000u);
  EXPECT_GE(c.token_count(), 5000u);
  EXPECT_EQ(c.docs()[7].doc_id, "syn-00007");
  std::map<std::string, std::size_t> begins;
  for (const auto& d : c.docs()) {
    for (const auto& s : d.sentences) {
      EXPECT_GE(s.tokens.size(), 6u);
      EXPECT_EQ(s.tokens.back().surface, ".");
      std::string prev = "O";
      for (const auto& t : s.tokens) {
        ASSERT_TRUE(t.gold && is_valid_bio(*t.gold));
        ASSERT_TRUE(t.pos.has_value());
        if (t.gold->rfind("I-", 0) == 0) {
          // I- continues a mention of the same class.
          EXPECT_NE(prev, "O");
          EXPECT_EQ(prev.substr(2), t.gold->substr(2));
        }
        if (t.gold->rfind("B-", 0) == 0) ++begins[t.gold->substr(2)];
        prev = *t.gold;
      }
    }
  }
  EXPECT_EQ(begins.size(), 3u);
  for (const auto& [cls, n] : begins) EXPECT_GT(n, 100u) << cls;
}

TEST(Synthetic, SparsePresetTargetIsRare) {
  const auto c = generate_synthetic(synthetic_sparse_preset(2));
  EXPECT_GE(c.sentence_count(), 20000u);
  std::size_t species = 0;
  for (const auto& d : c.docs()) {
    for (const auto& s : d.sentences) {
      for (const auto& t : s.tokens) {
        if (is_class_label(t.gold, "SPECIES")) {
          ++species;
          break;
        }
      }
    }
  }
  EXPECT_GT(species, 0u);
  EXPECT_LT(static_cast<double>(species), 0.01 * static_cast<double>(c.sentence_count()));
}

TEST(Synthetic, RejectsBadConfigs) {
  auto cfg = synthetic_bio_preset(1);
  cfg.documents = 0;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = synthetic_bio_preset(1);
  cfg.min_sentence_length = 9;
  cfg.max_sentence_length = 3;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = synthetic_bio_preset(1);
  cfg.classes.push_back(cfg.classes.front());
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = synthetic_bio_preset(1);
  cfg.classes.front().sentence_rate = 1.5;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
}

TEST(Synthetic, NoPosTagsWhenDisabled) {
  auto cfg = synthetic_bio_preset(1);
  cfg.documents = 2;
  cfg.pos_tags = false;
  const auto c = generate_synthetic(cfg);
  for (TokenId t = 0; t < c.token_count(); ++t) EXPECT_FALSE(c.token(t).pos.has_value());
}
