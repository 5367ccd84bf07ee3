#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nes/corpus.hpp"
#include "nes/index.hpp"
#include "nes/model.hpp"

namespace nes {

struct RankedItem {
  TokenId token_id = 0;
  std::string surface;
  std::optional<bool> relevant;  // resolved against the judgments when unset
};
using RankedList = std::vector<RankedItem>;

RankedList make_ranked_list(const FeatureIndex& index, std::span<const ScoredToken> ranking);

/// First occurrence of each normalized surface, in ranking order. This is the
/// uniqueness rule shared by unique_ap and entity lists.
std::vector<std::size_t> first_occurrences(std::span<const std::string> normalized);

/// Average precision after dropping every repeated mention (relevant or not)
/// of an already-seen normalized surface. Recall base is the number of
/// accepted forms, so unretrieved forms count against the score.
double unique_ap(std::span<const RankedItem> ranking, const JudgmentSet& judgments);

/// unique_ap over pre-interned surfaces: `keys[i]` identifies the normalized
/// surface of rank i, `relevant[i]` its judgment, `accepted_forms` the recall base.
double unique_ap_keys(std::span<const std::uint32_t> keys, std::span<const std::uint8_t> relevant,
                      std::size_t accepted_forms);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct BinaryCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  /// Precision is 0 when nothing is predicted positive; recall 0 without gold positives.
  Prf prf() const;
  BinaryCounts& operator+=(const BinaryCounts& o);
};

BinaryCounts count_binary(std::span<const bool> predicted, std::span<const bool> gold);
Prf token_f1(std::span<const bool> predicted, std::span<const bool> gold);
/// Pooled counts across classes.
Prf micro_f1(std::span<const BinaryCounts> per_class);
/// Unweighted mean of per-class precision, recall and F1.
Prf macro_f1(std::span<const BinaryCounts> per_class);

struct LearningCurve {
  std::string strategy;
  std::string query_id;
  std::vector<double> uap;  // one value per completed round
  std::uint64_t seed = 0;

  bool operator==(const LearningCurve&) const = default;
};

/// `strategy,query_id,round,uap,seed`, rounds numbered from 1.
void write_curves_csv(std::ostream& out, std::span<const LearningCurve> curves);
std::vector<LearningCurve> read_curves_csv(std::istream& in, const std::string& source_name);

struct CurvePoint {
  std::string strategy;
  std::size_t round = 0;
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

/// Per-strategy mean and standard error by round. Curves shorter than the
/// longest are padded with their final value.
std::vector<CurvePoint> curve_aggregate(std::span<const LearningCurve> curves);
void write_aggregate_csv(std::ostream& out, std::span<const CurvePoint> points);

struct TimingRow {
  std::optional<std::size_t> q_size;  // nullopt: full-scan baseline
  double median_seconds = 0.0;
  std::size_t trials = 0;
};

struct TimingReport {
  std::vector<TimingRow> rows;
};

struct TimingOptions {
  std::size_t trials = 5;
  std::size_t k = 100;
  /// Calls per trial; the trial time is the mean over them.
  std::size_t inner_repeats = 1;
};

double median(std::vector<double> values);

/// Times score_topk for every model, then the full-scan baseline.
TimingReport time_queries(const FeatureIndex& index, std::span<const QueryModel> models,
                          const TimingOptions& options = {});
/// Prunes `model` to each size of `schedule` and times the result.
TimingReport time_query_schedule(const FeatureIndex& index, const QueryModel& model,
                                 std::span<const std::size_t> schedule,
                                 const TimingOptions& options = {});

/// `q_size,median_s,trials`; the baseline row has q_size "full".
void write_timing_csv(std::ostream& out, const TimingReport& report);

}  // namespace nes
