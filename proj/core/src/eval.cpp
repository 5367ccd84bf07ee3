#include "nes/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "nes/error.hpp"
#include "text_util.hpp"

namespace nes {

RankedList make_ranked_list(const FeatureIndex& index, std::span<const ScoredToken> ranking) {
  RankedList out;
  out.reserve(ranking.size());
  for (const auto& st : ranking) {
    out.push_back({st.token_id, index.corpus().token(st.token_id).surface, std::nullopt});
  }
  return out;
}

std::vector<std::size_t> first_occurrences(std::span<const std::string> normalized) {
  std::unordered_set<std::string_view> seen;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    if (seen.insert(normalized[i]).second) kept.push_back(i);
  }
  return kept;
}

double unique_ap_keys(std::span<const std::uint32_t> keys, std::span<const std::uint8_t> relevant,
                      std::size_t accepted_forms) {
  if (accepted_forms == 0) throw Error("unique_ap: empty judgment set");
  if (keys.size() != relevant.size()) throw InvalidInput("unique_ap: keys/relevance length mismatch");
  std::vector<bool> seen;
  std::size_t hits = 0;
  std::size_t rank = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto key = keys[i];
    if (key >= seen.size()) seen.resize(static_cast<std::size_t>(key) + 1, false);
    if (seen[key]) continue;
    seen[key] = true;
    ++rank;
    if (relevant[i]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  return sum / static_cast<double>(std::max(accepted_forms, hits));
}

double unique_ap(std::span<const RankedItem> ranking, const JudgmentSet& judgments) {
  if (judgments.accepted_forms.empty()) {
    throw Error(fmt::format("judgment set '{}' has no accepted forms", judgments.query_id));
  }
  std::unordered_map<std::string, std::uint32_t> intern;
  std::vector<std::uint32_t> keys;
  std::vector<std::uint8_t> relevant_flags;
  keys.reserve(ranking.size());
  for (const auto& item : ranking) {
    auto form = normalize_surface(item.surface);
    const bool relevant = item.relevant.value_or(judgments.accepted_forms.contains(form));
    auto [it, inserted] = intern.emplace(std::move(form), static_cast<std::uint32_t>(intern.size()));
    keys.push_back(it->second);
    relevant_flags.push_back(relevant ? 1 : 0);
  }
  return unique_ap_keys(keys, relevant_flags, judgments.accepted_forms.size());
}

// ---------------------------------------------------------------------------

Prf BinaryCounts::prf() const {
  Prf r;
  r.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  const double denom = r.precision + r.recall;
  r.f1 = denom == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / denom;
  return r;
}

BinaryCounts& BinaryCounts::operator+=(const BinaryCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

BinaryCounts count_binary(std::span<const bool> predicted, std::span<const bool> gold) {
  if (predicted.size() != gold.size()) {
    throw Error(fmt::format("token_f1: {} predictions for {} gold labels", predicted.size(),
                            gold.size()));
  }
  BinaryCounts c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] && gold[i]) {
      ++c.tp;
    } else if (predicted[i]) {
      ++c.fp;
    } else if (gold[i]) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

Prf token_f1(std::span<const bool> predicted, std::span<const bool> gold) {
  return count_binary(predicted, gold).prf();
}

Prf micro_f1(std::span<const BinaryCounts> per_class) {
  BinaryCounts total;
  for (const auto& c : per_class) total += c;
  return total.prf();
}

Prf macro_f1(std::span<const BinaryCounts> per_class) {
  Prf r;
  if (per_class.empty()) return r;
  for (const auto& c : per_class) {
    const auto p = c.prf();
    r.precision += p.precision;
    r.recall += p.recall;
    r.f1 += p.f1;
  }
  const auto n = static_cast<double>(per_class.size());
  r.precision /= n;
  r.recall /= n;
  r.f1 /= n;
  return r;
}

// ---------------------------------------------------------------------------
// Curves

void write_curves_csv(std::ostream& out, std::span<const LearningCurve> curves) {
  out << "strategy,query_id,round,uap,seed\n";
  for (const auto& c : curves) {
    for (std::size_t r = 0; r < c.uap.size(); ++r) {
      out << c.strategy << ',' << c.query_id << ',' << r + 1 << ','
          << detail::format_double(c.uap[r]) << ',' << c.seed << '\n';
    }
  }
}

std::vector<LearningCurve> read_curves_csv(std::istream& in, const std::string& source_name) {
  std::vector<LearningCurve> curves;
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::size_t> slot;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("strategy,", 0) == 0) continue;
    const auto cols = detail::split_char(line, ',');
    std::size_t round = 0;
    double uap = 0.0;
    std::uint64_t seed = 0;
    if (cols.size() != 5 || !detail::parse_integer(cols[2], round) ||
        !detail::parse_double(cols[3], uap) || !detail::parse_integer(cols[4], seed) ||
        round == 0) {
      throw ParseError(source_name, line_no, "expected strategy,query_id,round,uap,seed");
    }
    auto key = std::make_tuple(std::string(cols[0]), std::string(cols[1]), seed);
    auto [it, inserted] = slot.emplace(key, curves.size());
    if (inserted) curves.push_back({std::get<0>(key), std::get<1>(key), {}, seed});
    auto& c = curves[it->second];
    if (round != c.uap.size() + 1) {
      throw ParseError(source_name, line_no, fmt::format("round {} out of sequence", round));
    }
    c.uap.push_back(uap);
  }
  return curves;
}

std::vector<CurvePoint> curve_aggregate(std::span<const LearningCurve> curves) {
  if (curves.empty()) throw Error("curve_aggregate: no curves");
  std::size_t rounds = 0;
  for (const auto& c : curves) rounds = std::max(rounds, c.uap.size());

  std::vector<std::string> order;
  std::map<std::string, std::vector<const LearningCurve*>> by_strategy;
  for (const auto& c : curves) {
    auto& group = by_strategy[c.strategy];
    if (group.empty()) order.push_back(c.strategy);
    group.push_back(&c);
  }

  std::vector<CurvePoint> out;
  for (const auto& strategy : order) {
    const auto& group = by_strategy[strategy];
    for (std::size_t r = 0; r < rounds; ++r) {
      std::vector<double> values;
      for (const auto* c : group) {
        values.push_back(c->uap.empty() ? 0.0 : c->uap[std::min(r, c->uap.size() - 1)]);
      }
      const auto n = static_cast<double>(values.size());
      double mean = 0.0;
      for (const double v : values) mean += v;
      mean /= n;
      double se = 0.0;
      if (values.size() > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - mean) * (v - mean);
        se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
      }
      out.push_back({strategy, r + 1, mean, se, values.size()});
    }
  }
  return out;
}

void write_aggregate_csv(std::ostream& out, std::span<const CurvePoint> points) {
  out << "strategy,round,mean_uap,stderr,n\n";
  for (const auto& p : points) {
    out << p.strategy << ',' << p.round << ',' << detail::format_double(p.mean) << ','
        << detail::format_double(p.std_error) << ',' << p.n << '\n';
  }
}

// ---------------------------------------------------------------------------
// Timing

double median(std::vector<double> values) {
  if (values.empty()) throw Error("median of an empty sample");
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

namespace {

template <typename Fn>
TimingRow time_rows(std::optional<std::size_t> q_size, const TimingOptions& options, Fn&& fn) {
  using clock = std::chrono::steady_clock;
  const std::size_t repeats = std::max<std::size_t>(1, options.inner_repeats);
  std::vector<double> samples;
  samples.reserve(options.trials);
  volatile std::size_t sink = 0;
  for (std::size_t t = 0; t < options.trials; ++t) {
    const auto start = clock::now();
    for (std::size_t r = 0; r < repeats; ++r) sink = sink + fn();
    const std::chrono::duration<double> elapsed = clock::now() - start;
    samples.push_back(elapsed.count() / static_cast<double>(repeats));
  }
  return {q_size, median(std::move(samples)), options.trials};
}

}  // namespace

TimingReport time_queries(const FeatureIndex& index, std::span<const QueryModel> models,
                          const TimingOptions& options) {
  if (options.trials < 5) throw ConfigError("timing.trials must be >= 5");
  if (options.k < 1) throw ConfigError("timing.k must be >= 1");
  TimingReport report;
  for (const auto& m : models) {
    report.rows.push_back(time_rows(m.size(), options, [&] {
      return score_topk(index, m, options.k).size();
    }));
  }
  if (!models.empty()) {
    report.rows.push_back(time_rows(std::nullopt, options, [&] {
      return score_all_bruteforce(index, models.back()).size();
    }));
  }
  return report;
}

TimingReport time_query_schedule(const FeatureIndex& index, const QueryModel& model,
                                 std::span<const std::size_t> schedule,
                                 const TimingOptions& options) {
  std::vector<QueryModel> models;
  for (const auto q : schedule) models.push_back(prune(model, q));
  auto report = time_queries(index, models, options);
  for (std::size_t i = 0; i < schedule.size(); ++i) report.rows[i].q_size = schedule[i];
  return report;
}

void write_timing_csv(std::ostream& out, const TimingReport& report) {
  out << "q_size,median_s,trials\n";
  for (const auto& row : report.rows) {
    out << (row.q_size ? std::to_string(*row.q_size) : std::string("full")) << ','
        << fmt::format("{:.9f}", row.median_seconds) << ',' << row.trials << '\n';
  }
}

}  // namespace nes
