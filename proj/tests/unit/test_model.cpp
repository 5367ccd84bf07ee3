#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "nes/error.hpp"
#include "nes/model.hpp"

using namespace nes;

namespace {

LabeledToken lt(std::vector<std::string> feats, bool positive) {
  return {0, FeatureVector(std::move(feats)), positive};
}

std::vector<LabeledToken> toy_data() {
  return {lt({"shape[0]=Xx", "w[0]=malta", "w[-1]=in"}, true),
          lt({"shape[0]=Xx", "w[0]=gozo", "w[-1]=in"}, true),
          lt({"shape[0]=x", "w[0]=is", "w[-1]=malta"}, false),
          lt({"shape[0]=x", "w[0]=an", "w[-1]=is"}, false),
          lt({"shape[0]=x", "w[0]=island", "w[-1]=an"}, false),
          lt({"shape[0]=Xx", "w[0]=it", "w[-1]=<S>"}, false)};
}

// Independent weighted logistic objective with L2 on all weights but the bias.
double objective(const std::vector<LabeledToken>& data, const WeightMap& w, double bias, double l2,
                 double pos_cost) {
  double loss = 0.0;
  for (const auto& t : data) {
    double m = bias;
    for (const auto& f : t.features) {
      auto it = w.find(f);
      if (it != w.end()) m += it->second;
    }
    const double y = t.positive ? 1.0 : -1.0;
    loss += (t.positive ? pos_cost : 1.0) * std::log1p(std::exp(-y * m));
  }
  for (const auto& [f, v] : w) loss += 0.5 * l2 * v * v;
  return loss;
}

}  // namespace

TEST(QueryModel, DropsZerosRejectsNonFinite) {
  const QueryModel m("X", {{"a", 1.0}, {"b", 0.0}, {"c", -0.0}}, 0.5);
  EXPECT_EQ(m.size(), 1u);
  EXPECT_DOUBLE_EQ(m.threshold(), -0.5);
  EXPECT_THROW(QueryModel("X", {{"a", std::nan("")}}), Error);
  EXPECT_THROW(QueryModel("X", {{"a", INFINITY}}), Error);
}

TEST(QueryModel, ScoreIgnoresBias) {
  const QueryModel m("X", {{"a", 1.5}, {"b", -0.5}}, 10.0);
  EXPECT_DOUBLE_EQ(m.score(FeatureVector({"a", "b", "z"})), 1.0);
  EXPECT_TRUE(m.predict(FeatureVector({"a"})));
  EXPECT_FALSE(QueryModel("X", {{"a", 1.5}}, -10.0).predict(FeatureVector({"a"})));
  EXPECT_TRUE(QueryModel("X", {{"a", 1.5}}, -1.0).predict(FeatureVector({"a"})));
}

TEST(Train, SeparatesToyData) {
  const auto data = toy_data();
  const auto m = train(data, {}, "LOC");
  EXPECT_EQ(m.class_name(), "LOC");
  EXPECT_EQ(m.trained_on(), data.size());
  for (const auto& t : data) EXPECT_EQ(m.predict(t.features), t.positive);
  EXPECT_GT(m.weight("w[-1]=in"), 0.0);
  EXPECT_LT(m.weight("shape[0]=x"), 0.0);
  EXPECT_EQ(m.meta().at("positive_weight"), "2");
}

TEST(Train, ReachesTheOptimumOfTheObjective) {
  const auto data = toy_data();
  TrainerParams p;
  p.tolerance = 1e-12;
  p.max_epochs = 2000;
  const auto m = train(data, p);
  const double pos_cost = 2.0;  // 4 negatives / 2 positives
  const double best = objective(data, m.weights(), m.bias(), p.l2, pos_cost);
  std::vector<std::string> names;
  for (const auto& t : data) names.insert(names.end(), t.features.begin(), t.features.end());
  for (const auto& f : names) {
    for (const double d : {-1e-3, 1e-3}) {
      auto w = m.weights();
      w[f] += d;
      EXPECT_LE(best, objective(data, w, m.bias(), p.l2, pos_cost) + 1e-12) << f;
    }
  }
  for (const double d : {-1e-3, 1e-3}) {
    EXPECT_LE(best, objective(data, m.weights(), m.bias() + d, p.l2, pos_cost) + 1e-12);
  }
  // The default tolerance lands close to the same optimum.
  const auto loose = train(data);
  EXPECT_NEAR(objective(data, loose.weights(), loose.bias(), 1.0, pos_cost), best, 1e-4 * best);
}

TEST(Train, DeterministicAndGuarded) {
  const auto data = toy_data();
  EXPECT_EQ(train(data), train(data));
  std::vector<LabeledToken> neg = {lt({"a"}, false), lt({"b"}, false)};
  EXPECT_THROW(train(neg), SingleClassError);
  EXPECT_THROW(train(std::span<const LabeledToken>{}), Error);
  TrainerParams bad;
  bad.l2 = 0.0;
  EXPECT_THROW(train(data, bad), ConfigError);
}

TEST(Prune, KeepsLargestMagnitudes) {
  const QueryModel m("X", {{"a", 0.5}, {"b", -3.0}, {"c", 2.0}, {"d", -2.0}}, 0.1);
  const auto p = prune(m, 2);
  EXPECT_EQ(p.size(), 2u);
  EXPECT_DOUBLE_EQ(p.weight("b"), -3.0);
  // Tie between c and d on |w| resolves by feature string.
  EXPECT_DOUBLE_EQ(p.weight("c"), 2.0);
  EXPECT_DOUBLE_EQ(p.bias(), 0.1);
  EXPECT_EQ(p.meta().at("pruned_to"), "2");
  EXPECT_EQ(prune(m, 10), m);
  EXPECT_THROW(prune(m, 0), Error);
  const auto top = top_features(m, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].first, "b");
}

TEST(RankSafe, ScalingPreservesOrder) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  WeightMap w;
  for (int i = 0; i < 20; ++i) w["f" + std::to_string(i)] = u(rng);
  const QueryModel m("X", w, 0.3);
  const auto s = m.scaled(2.5);
  std::vector<FeatureVector> tokens;
  for (int t = 0; t < 200; ++t) {
    std::vector<std::string> f;
    for (int i = 0; i < 20; ++i) {
      if (rng() % 4 == 0) f.push_back("f" + std::to_string(i));
    }
    tokens.emplace_back(f);
  }
  for (std::size_t a = 0; a < tokens.size(); ++a) {
    for (std::size_t b = 0; b < tokens.size(); ++b) {
      EXPECT_EQ(m.score(tokens[a]) < m.score(tokens[b]), s.score(tokens[a]) < s.score(tokens[b]));
    }
    EXPECT_EQ(m.predict(tokens[a]), s.predict(tokens[a]));
  }
  EXPECT_THROW(m.scaled(0.0), Error);
}

TEST(Uncertainty, DistanceToThreshold) {
  const QueryModel m("X", {{"a", 2.0}}, -1.0);
  EXPECT_DOUBLE_EQ(uncertainty(m, FeatureVector({"a"})), -1.0);
  EXPECT_DOUBLE_EQ(uncertainty_of_score(m, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(uncertainty_of_score(m, -0.5), -1.5);
}

TEST(FeatureImportance, MassByFamilyAndTemplate) {
  const QueryModel a("A", {{"w[0]=x", 3.0}, {"suf=ox", 2.0}, {"w[-1]=in", 1.0}});
  const QueryModel b("B", {{"suf=ia", -4.0}, {"shape[0]=Xx", 1.0}});
  const std::vector<std::pair<QueryModel, double>> models = {{a, 0.5}, {b, 0.25}};
  const auto fam = feature_importance(models, FeatureGrouping::kFamily, 2);
  ASSERT_EQ(fam.size(), 3u);
  EXPECT_EQ(fam[0].first, "suf");
  EXPECT_DOUBLE_EQ(fam[0].second, 0.75);
  EXPECT_EQ(fam[1].first, "w");
  EXPECT_DOUBLE_EQ(fam[1].second, 0.5);
  const auto tpl = feature_importance(models, FeatureGrouping::kTemplate, 3);
  EXPECT_EQ(tpl.front().first, "suf");
  EXPECT_THROW(feature_importance({}, FeatureGrouping::kFamily), Error);
}

TEST(ModelIo, TextAndJsonRoundTrip) {
  const auto m = train(toy_data(), {}, "LOC");
  std::stringstream text;
  write_model(text, m);
  EXPECT_EQ(read_model(text, "inline"), m);
  EXPECT_EQ(model_from_json(model_to_json(m)), m);

  testing_support::TempDir dir;
  save_model(m, dir / "m.txt");
  save_model(m, dir / "m.json");
  EXPECT_EQ(load_model(dir / "m.txt"), m);
  EXPECT_EQ(load_model(dir / "m.json"), m);
  std::ifstream js(dir / "m.json");
  EXPECT_EQ(js.peek(), '{');
  EXPECT_FALSE(std::filesystem::exists(dir / "m.txt.tmp"));
}

TEST(ModelIo, RejectsBadInput) {
  std::istringstream v2("format\tnes-query-model\nversion\t2\nclass\tX\ntrained_on\t0\nbias\t0\nweights\t0\n");
  EXPECT_THROW(read_model(v2, "inline"), VersionError);
  std::istringstream nan(
      "format\tnes-query-model\nversion\t1\nclass\tX\ntrained_on\t0\nbias\t0\nweights\t1\na\tnan\n");
  EXPECT_THROW(read_model(nan, "inline"), ParseError);
  std::istringstream truncated(
      "format\tnes-query-model\nversion\t1\nclass\tX\ntrained_on\t0\nbias\t0\nweights\t2\na\t1\n");
  EXPECT_THROW(read_model(truncated, "inline"), ParseError);
  std::istringstream junk("hello\n");
  EXPECT_THROW(read_model(junk, "inline"), ParseError);
}
