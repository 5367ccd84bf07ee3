// Brute-force reference implementations used as test oracles. They share no
// code with the library beyond plain data types.
#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

struct Item {
  std::string key;  // already normalized
  bool relevant;
};

// Dedup first (keep first occurrence of each key), then ordinary AP with
// recall base max(|judged|, relevant kept).
inline double dedup_then_ap(const std::vector<Item>& ranking, std::size_t judged) {
  std::vector<Item> kept;
  std::set<std::string> seen;
  for (const auto& it : ranking) {
    if (seen.insert(it.key).second) kept.push_back(it);
  }
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (!kept[i].relevant) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(std::max(judged, hits));
}

struct Scored {
  unsigned token;
  double score;
};

// Scores by walking each token's feature strings against the weight table,
// adding in lexicographic feature order; full sort with the tie rule.
inline std::vector<Scored> rank_tokens(const std::vector<std::vector<std::string>>& token_features,
                                       const std::map<std::string, double>& weights) {
  std::vector<Scored> out;
  for (unsigned t = 0; t < token_features.size(); ++t) {
    auto feats = token_features[t];
    std::sort(feats.begin(), feats.end());
    feats.erase(std::unique(feats.begin(), feats.end()), feats.end());
    double s = 0.0;
    for (const auto& f : feats) {
      auto it = weights.find(f);
      if (it != weights.end()) s += it->second;
    }
    out.push_back({t, s});
  }
  std::sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.token < b.token;
  });
  return out;
}

inline double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
  const double r = tp + fn ? double(tp) / double(tp + fn) : 0.0;
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

}  // namespace oracle
