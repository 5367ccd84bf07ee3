#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nes/corpus.hpp"

namespace nes {

/// Registered feature families. A feature string is "<family>[...]=value".
namespace family {
inline constexpr std::string_view kWord = "w";
inline constexpr std::string_view kShape = "shape";
inline constexpr std::string_view kPrefix = "pre";
inline constexpr std::string_view kSuffix = "suf";
inline constexpr std::string_view kPos = "pos";
inline constexpr std::string_view kCluster = "cl";
}  // namespace family

const std::set<std::string, std::less<>>& registered_families();

/// "w[-1]=the" -> "w". Empty when the string has no family prefix.
std::string_view feature_family(std::string_view feature);
/// "w[-1]=the" -> "w[-1]", "pre=lo" -> "pre".
std::string_view feature_template(std::string_view feature);

struct FeatureConfig {
  int window = 2;
  int ngram_max = 4;
  std::set<std::string> enabled_families{"w", "shape", "pre", "suf", "pos"};
  std::optional<std::filesystem::path> cluster_path;
  std::vector<int> cluster_prefix_lengths{4, 6, 10, 20};

  /// Throws ConfigError naming the offending field.
  void validate() const;

  bool enabled(std::string_view fam) const { return enabled_families.contains(std::string(fam)); }
  bool operator==(const FeatureConfig&) const = default;
};

nlohmann::json feature_config_to_json(const FeatureConfig& cfg);
/// Missing keys keep their defaults. Throws ConfigError naming the bad field.
FeatureConfig feature_config_from_json(const nlohmann::json& j);

/// Sorted, duplicate-free bag of binary features.
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::vector<std::string> features);

  const std::vector<std::string>& features() const noexcept { return features_; }
  std::size_t size() const noexcept { return features_.size(); }
  bool contains(std::string_view f) const;

  auto begin() const { return features_.begin(); }
  auto end() const { return features_.end(); }

  bool operator==(const FeatureVector&) const = default;

 private:
  std::vector<std::string> features_;
};

/// Word to Brown-cluster bitstring.
class ClusterMap {
 public:
  void insert(std::string word, std::string bits);

  /// Exact match first, then the lowercased word.
  const std::string* lookup(std::string_view word) const;
  std::size_t size() const noexcept { return paths_.size(); }

 private:
  std::unordered_map<std::string, std::string> paths_;
};

/// Reads `bitstring<TAB>word<TAB>count` lines; later duplicates win.
ClusterMap load_clusters(const std::filesystem::path& path);
ClusterMap load_clusters(std::istream& in, const std::string& source_name);

/// Character-class abstraction: X upper, x lower, d digit, anything else
/// kept. Runs of the same symbol collapse to one.
std::string word_shape(std::string_view s);

/// Feature bag of the token at `position`. Pure in its arguments.
FeatureVector extract(const Sentence& sentence, std::size_t position, const FeatureConfig& cfg,
                      const ClusterMap* clusters = nullptr);

}  // namespace nes
