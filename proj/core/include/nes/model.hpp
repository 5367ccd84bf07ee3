#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nes/corpus.hpp"
#include "nes/features.hpp"

namespace nes {

using WeightMap = std::map<std::string, double, std::less<>>;

/// Sparse per-class linear query model. Retrieval scores a token by the dot
/// product of the weights with its binary feature bag; the bias is kept out
/// of retrieval and only sets the decision threshold.
class QueryModel {
 public:
  QueryModel() = default;
  /// Drops zero weights (including -0.0); throws Error on non-finite values.
  QueryModel(std::string class_name, WeightMap weights, double bias = 0.0,
             std::size_t trained_on = 0, std::map<std::string, std::string> meta = {});

  const std::string& class_name() const noexcept { return class_name_; }
  const WeightMap& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }
  /// Score at which the classifier is undecided (log-odds zero).
  double threshold() const noexcept { return -bias_; }
  std::size_t trained_on() const noexcept { return trained_on_; }
  const std::map<std::string, std::string>& meta() const noexcept { return meta_; }
  std::size_t size() const noexcept { return weights_.size(); }
  bool empty() const noexcept { return weights_.empty(); }

  double weight(std::string_view feature) const;
  /// Sum of weights of the features present in `fv`, accumulated in feature order.
  double score(const FeatureVector& fv) const;
  /// True when score + bias > 0.
  bool predict(const FeatureVector& fv) const { return score(fv) > threshold(); }

  /// Same model with every weight and the bias multiplied by `c` (> 0).
  QueryModel scaled(double c) const;

  bool operator==(const QueryModel&) const = default;

 private:
  std::string class_name_;
  WeightMap weights_;
  double bias_ = 0.0;
  std::size_t trained_on_ = 0;
  std::map<std::string, std::string> meta_;
};

struct LabeledToken {
  TokenId token_id = 0;
  FeatureVector features;
  bool positive = false;
};

struct TrainerParams {
  double l2 = 1.0;
  int max_epochs = 200;
  double tolerance = 1e-6;  // on relative change of the loss
  double max_positive_weight = 10.0;
  int history = 8;  // L-BFGS memory
};

/// L2-regularized logistic regression, minimized with L-BFGS. Positives are
/// up-weighted by clamp(#neg / #pos, 1, max_positive_weight). Deterministic
/// for a fixed input order.
QueryModel train(std::span<const LabeledToken> labeled, const TrainerParams& params = {},
                 std::string class_name = {});

/// Keeps the `max_features` largest-magnitude weights; ties by feature string.
QueryModel prune(const QueryModel& model, std::size_t max_features);

/// -|score - threshold|; zero on the decision boundary.
double uncertainty(const QueryModel& model, const FeatureVector& fv);
double uncertainty_of_score(const QueryModel& model, double score);

/// Features of `model` ordered by |weight| desc, then feature string.
std::vector<std::pair<std::string, double>> top_features(const QueryModel& model, std::size_t n);

enum class FeatureGrouping {
  kFamily,    // "w", "suf", "cl", ...
  kTemplate,  // "w[+1]", "cl[0][4]", ...
};

/// Each model's top-10 features contribute that model's uAP to their group.
/// Returned by mass desc, then group name.
std::vector<std::pair<std::string, double>> feature_importance(
    std::span<const std::pair<QueryModel, double>> models,
    FeatureGrouping grouping = FeatureGrouping::kFamily, std::size_t top_n = 10);

inline constexpr int kModelFormatVersion = 1;

void write_model(std::ostream& out, const QueryModel& model);
QueryModel read_model(std::istream& in, const std::string& source_name);
/// Atomic write; a ".json" extension selects the JSON form.
void save_model(const QueryModel& model, const std::filesystem::path& path);
/// Accepts the text format and the JSON form.
QueryModel load_model(const std::filesystem::path& path);

nlohmann::json model_to_json(const QueryModel& model);
QueryModel model_from_json(const nlohmann::json& j);

}  // namespace nes
