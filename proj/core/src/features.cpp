#include "nes/features.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "nes/error.hpp"
#include "text_util.hpp"

namespace nes {

namespace {

constexpr std::string_view kSentenceStart = "<S>";
constexpr std::string_view kSentenceEnd = "</S>";

std::string offset_tag(int k) {
  if (k == 0) return "0";
  return k > 0 ? fmt::format("+{}", k) : fmt::format("{}", k);
}

// Code point boundaries of `s`, including s.size().
std::vector<std::size_t> code_point_starts(std::string_view s) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < s.size();) {
    starts.push_back(i);
    i += std::min(detail::utf8_length(static_cast<unsigned char>(s[i])), s.size() - i);
  }
  starts.push_back(s.size());
  return starts;
}

}  // namespace

const std::set<std::string, std::less<>>& registered_families() {
  static const std::set<std::string, std::less<>> families{
      std::string(family::kWord),   std::string(family::kShape), std::string(family::kPrefix),
      std::string(family::kSuffix), std::string(family::kPos),   std::string(family::kCluster)};
  return families;
}

std::string_view feature_family(std::string_view feature) {
  const auto cut = feature.find_first_of("[=");
  if (cut == std::string_view::npos) return {};
  return feature.substr(0, cut);
}

std::string_view feature_template(std::string_view feature) {
  const auto eq = feature.find('=');
  if (eq == std::string_view::npos) return {};
  return feature.substr(0, eq);
}

void FeatureConfig::validate() const {
  if (window < 0) throw ConfigError(fmt::format("features.window must be >= 0, got {}", window));
  if (ngram_max < 1) {
    throw ConfigError(fmt::format("features.ngram_max must be >= 1, got {}", ngram_max));
  }
  for (const auto& fam : enabled_families) {
    if (!registered_families().contains(fam)) {
      throw ConfigError(fmt::format("features.enabled_families: unknown family '{}'", fam));
    }
  }
  for (const int len : cluster_prefix_lengths) {
    if (len < 1) {
      throw ConfigError(
          fmt::format("features.cluster_prefix_lengths must be >= 1, got {}", len));
    }
  }
}

nlohmann::json feature_config_to_json(const FeatureConfig& cfg) {
  nlohmann::json j{{"window", cfg.window},
                   {"ngram_max", cfg.ngram_max},
                   {"enabled_families", cfg.enabled_families},
                   {"cluster_prefix_lengths", cfg.cluster_prefix_lengths}};
  j["cluster_path"] = cfg.cluster_path ? nlohmann::json(cfg.cluster_path->string()) : nlohmann::json();
  return j;
}

FeatureConfig feature_config_from_json(const nlohmann::json& j) {
  FeatureConfig cfg;
  auto field = [&](const char* name, auto& target) {
    if (!j.contains(name) || j[name].is_null()) return;
    try {
      j[name].get_to(target);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(fmt::format("features.{} has the wrong type", name));
    }
  };
  if (!j.is_object()) throw ConfigError("features must be an object");
  field("window", cfg.window);
  field("ngram_max", cfg.ngram_max);
  field("enabled_families", cfg.enabled_families);
  field("cluster_prefix_lengths", cfg.cluster_prefix_lengths);
  if (j.contains("cluster_path") && j["cluster_path"].is_string()) {
    cfg.cluster_path = j["cluster_path"].get<std::string>();
  }
  cfg.validate();
  return cfg;
}

FeatureVector::FeatureVector(std::vector<std::string> features) : features_(std::move(features)) {
  std::sort(features_.begin(), features_.end());
  features_.erase(std::unique(features_.begin(), features_.end()), features_.end());
}

bool FeatureVector::contains(std::string_view f) const {
  return std::binary_search(features_.begin(), features_.end(), f, std::less<>{});
}

void ClusterMap::insert(std::string word, std::string bits) {
  paths_.insert_or_assign(std::move(word), std::move(bits));
}

const std::string* ClusterMap::lookup(std::string_view word) const {
  if (auto it = paths_.find(std::string(word)); it != paths_.end()) return &it->second;
  if (auto it = paths_.find(detail::ascii_lower(word)); it != paths_.end()) return &it->second;
  return nullptr;
}

ClusterMap load_clusters(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  return load_clusters(in, path.string());
}

ClusterMap load_clusters(std::istream& in, const std::string& source_name) {
  ClusterMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = detail::split_char(line, '\t');
    if (cols.size() != 3) {
      throw ParseError(source_name, line_no, "expected bitstring<TAB>word<TAB>count");
    }
    const auto bits = cols[0];
    if (bits.empty() || bits.find_first_not_of("01") != std::string_view::npos) {
      throw ParseError(source_name, line_no, fmt::format("bad cluster bitstring '{}'", bits));
    }
    long count = 0;
    if (cols[1].empty() || !detail::parse_integer(cols[2], count)) {
      throw ParseError(source_name, line_no, "bad word or count column");
    }
    map.insert(std::string(cols[1]), std::string(bits));
  }
  return map;
}

std::string word_shape(std::string_view s) {
  std::string out;
  std::string_view last;
  for (std::size_t i = 0; i < s.size();) {
    const auto len = std::min(detail::utf8_length(static_cast<unsigned char>(s[i])), s.size() - i);
    std::string_view sym;
    const char c = s[i];
    if (len == 1 && c >= 'A' && c <= 'Z') {
      sym = "X";
    } else if (len == 1 && c >= 'a' && c <= 'z') {
      sym = "x";
    } else if (len == 1 && c >= '0' && c <= '9') {
      sym = "d";
    } else {
      sym = s.substr(i, len);
    }
    if (sym != last) out.append(sym);
    last = sym;
    i += len;
  }
  return out;
}

FeatureVector extract(const Sentence& sentence, std::size_t position, const FeatureConfig& cfg,
                      const ClusterMap* clusters) {
  const auto& tokens = sentence.tokens;
  if (position >= tokens.size()) {
    throw Error(fmt::format("token position {} out of range for sentence of {} tokens", position,
                            tokens.size()));
  }
  if (cfg.enabled(family::kCluster) && clusters == nullptr) {
    throw ConfigError("features.enabled_families: 'cl' requires a cluster map (cluster_path)");
  }

  std::vector<std::string> out;
  const auto n = static_cast<long>(tokens.size());
  const auto pos = static_cast<long>(position);

  for (int k = -cfg.window; k <= cfg.window; ++k) {
    const long at = pos + k;
    const std::string tag = offset_tag(k);
    if (at < 0 || at >= n) {
      if (cfg.enabled(family::kWord)) {
        out.push_back(fmt::format("w[{}]={}", tag, at < 0 ? kSentenceStart : kSentenceEnd));
      }
      continue;
    }
    const Token& tok = tokens[static_cast<std::size_t>(at)];
    if (cfg.enabled(family::kWord)) {
      out.push_back(fmt::format("w[{}]={}", tag, detail::ascii_lower(tok.surface)));
    }
    if (cfg.enabled(family::kShape)) {
      out.push_back(fmt::format("shape[{}]={}", tag, word_shape(tok.surface)));
    }
    if (cfg.enabled(family::kPos) && tok.pos) {
      out.push_back(fmt::format("pos[{}]={}", tag, *tok.pos));
    }
    if (cfg.enabled(family::kCluster)) {
      if (const std::string* bits = clusters->lookup(tok.surface)) {
        for (const int len : cfg.cluster_prefix_lengths) {
          const auto take = std::min<std::size_t>(static_cast<std::size_t>(len), bits->size());
          out.push_back(fmt::format("cl[{}][{}]={}", tag, len, bits->substr(0, take)));
        }
      }
    }
  }

  if (cfg.enabled(family::kPrefix) || cfg.enabled(family::kSuffix)) {
    const std::string lower = detail::ascii_lower(tokens[position].surface);
    const auto starts = code_point_starts(lower);
    const std::size_t chars = starts.size() - 1;
    const std::size_t max_len = std::min<std::size_t>(static_cast<std::size_t>(cfg.ngram_max), chars);
    for (std::size_t len = 1; len <= max_len; ++len) {
      if (cfg.enabled(family::kPrefix)) {
        out.push_back(fmt::format("pre={}", lower.substr(0, starts[len])));
      }
      if (cfg.enabled(family::kSuffix)) {
        out.push_back(fmt::format("suf={}", lower.substr(starts[chars - len])));
      }
    }
  }
  return FeatureVector(std::move(out));
}

}  // namespace nes
