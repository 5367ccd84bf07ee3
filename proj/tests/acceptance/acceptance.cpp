// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "nes/corpus.hpp"
#include "nes/eval.hpp"
#include "nes/index.hpp"
#include "nes/model.hpp"
#include "nes/session.hpp"
#include "nes/synthetic.hpp"
#include "oracles.hpp"

using namespace nes;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail, Clock::time_point start) {
  const std::chrono::duration<double> took = Clock::now() - start;
  fmt::print("{} {}: {} [{:.1f}s]\n", ok ? "PASS" : "FAIL", name, detail, took.count());
  std::fflush(stdout);
  if (!ok) ++failures;
}

// ---------------------------------------------------------------------------

void uap_oracle() {
  const auto start = Clock::now();
  const std::vector<std::string> letters = {"a", "b", "c", "d", "e", "f", "g", "h"};
  std::size_t checked = 0;
  std::size_t mismatches = 0;
  // `shown` is what the library sees; the oracle gets the already-normalized key.
  auto check = [&](const std::vector<std::string>& surfaces, const std::set<std::string>& forms,
                   const std::vector<std::string>* shown = nullptr) {
    RankedList r;
    std::vector<oracle::Item> ref;
    for (std::size_t i = 0; i < surfaces.size(); ++i) {
      r.push_back({static_cast<TokenId>(i), shown ? (*shown)[i] : surfaces[i], std::nullopt});
      ref.push_back({surfaces[i], forms.contains(surfaces[i])});
    }
    ++checked;
    if (unique_ap(r, {"q", "", forms}) != oracle::dedup_then_ap(ref, forms.size())) ++mismatches;
  };

  // Every permutation of n distinct surfaces, under several judgment sets,
  // including forms that never appear in the ranking.
  for (std::size_t n = 1; n <= 8; ++n) {
    std::vector<std::string> perm(letters.begin(), letters.begin() + static_cast<std::ptrdiff_t>(n));
    const std::vector<std::set<std::string>> judged = {
        {perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>((n + 1) / 2)},
        {perm.front(), "zz"},
        {perm.back()},
        {perm.begin(), perm.end()},
    };
    do {
      for (const auto& forms : judged) check(perm, forms);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }

  // Random rankings with injected duplicates and case/punctuation variants.
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t distinct = 1 + rng() % 8;
    std::vector<std::string> surfaces;
    std::vector<std::string> shown;
    const std::size_t len = 1 + rng() % 24;
    for (std::size_t i = 0; i < len; ++i) {
      surfaces.push_back(letters[rng() % distinct]);
      std::string v = surfaces.back();
      if (rng() % 3 == 0) v[0] = static_cast<char>(v[0] - 'a' + 'A');
      if (rng() % 4 == 0) v += ".";
      if (rng() % 5 == 0) v = " " + v;
      shown.push_back(v);
    }
    std::set<std::string> forms;
    for (std::size_t i = 0; i < distinct; ++i) {
      if (rng() % 2) forms.insert(letters[i]);
    }
    if (forms.empty()) forms.insert("zz");
    check(surfaces, forms, &shown);
  }

  RankedList worked = {{0, "A", true}, {1, "X", false}, {2, "A", true}, {3, "B", true}};
  const double w = unique_ap(worked, {"q", "", {"a", "b"}});
  const bool ok = mismatches == 0 && std::abs(w - 0.8333333333333333) <= 1e-12;
  const std::chrono::duration<double> took = Clock::now() - start;
  report(ok && took.count() < 60.0, "uap-oracle",
         fmt::format("{} rankings, {} mismatches, worked example {:.12f}", checked, mismatches, w), start);
}

// ---------------------------------------------------------------------------

void rank_safety() {
  const auto start = Clock::now();
  auto cfg = synthetic_bio_preset(17);
  cfg.documents = 70;
  const auto index = FeatureIndex::build(generate_synthetic(cfg), FeatureConfig{});
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::size_t order_diffs = 0;
  double max_delta = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    WeightMap w;
    const std::size_t n = 1 + rng() % 200;
    const bool integral = rng() % 3 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto f = index.feature_name(static_cast<FeatureId>(rng() % index.feature_count()));
      w[f] = integral ? static_cast<double>(static_cast<int>(rng() % 5) - 2) : u(rng);
    }
    const QueryModel q("Q", w);
    const std::size_t k = 1 + rng() % 500;
    const auto top = score_topk(index, q, k);
    const auto brute = score_all_bruteforce(index, q);
    const std::size_t expect = std::min(k, brute.size());
    if (top.size() != expect) {
      ++order_diffs;
      continue;
    }
    for (std::size_t i = 0; i < expect; ++i) {
      if (top[i].token_id != brute[i].token_id) ++order_diffs;
      max_delta = std::max(max_delta, std::abs(top[i].score - brute[i].score));
    }
  }
  const std::chrono::duration<double> took = Clock::now() - start;
  report(order_diffs == 0 && max_delta <= 1e-9 && took.count() < 120.0 && index.token_count() <= 10000,
         "rank-safety",
         fmt::format("1000 queries over {} tokens, {} order differences, max |delta| {:.3g}", index.token_count(),
                     order_diffs, max_delta),
         start);
}

// ---------------------------------------------------------------------------

std::vector<LabeledToken> gold_tokens(const FeatureIndex& index, const std::string& cls, std::size_t doc_begin,
                                      std::size_t doc_end) {
  std::vector<LabeledToken> out;
  const auto& docs = index.corpus().docs();
  for (std::size_t d = doc_begin; d < doc_end; ++d) {
    for (const auto& s : docs[d].sentences) {
      for (TokenId t = s.first_token; t < s.end_token(); ++t) {
        out.push_back({t, index.features_of(t), is_class_label(index.corpus().token(t).gold, cls)});
      }
    }
  }
  return out;
}

void heldout_f1() {
  const auto start = Clock::now();
  const auto index = FeatureIndex::build(generate_synthetic(synthetic_bio_preset(1)), FeatureConfig{});
  const std::size_t docs = index.corpus().docs().size();
  const std::size_t split = docs * 8 / 10;
  std::string detail = fmt::format("{} tokens;", index.token_count());
  double per_f1 = 0.0;
  for (const std::string cls : {"PER", "LOC", "ORG"}) {
    const auto model = train(gold_tokens(index, cls, 0, split), {}, cls);
    const auto held = gold_tokens(index, cls, split, docs);
    std::unique_ptr<bool[]> p(new bool[held.size()]);
    std::unique_ptr<bool[]> g(new bool[held.size()]);
    for (std::size_t i = 0; i < held.size(); ++i) {
      p[i] = model.predict(held[i].features);
      g[i] = held[i].positive;
    }
    const auto prf = token_f1({p.get(), held.size()}, {g.get(), held.size()});
    if (cls == "PER") per_f1 = prf.f1;
    detail += fmt::format(" {} F1 {:.3f}", cls, prf.f1);
  }
  report(per_f1 >= 0.6 && index.token_count() >= 5000, "heldout-token-f1", detail + " (PER must be >= 0.6)", start);
}

// ---------------------------------------------------------------------------

struct Runs {
  // run name -> one curve per corpus seed
  std::map<std::string, std::vector<LearningCurve>> curves;
  std::size_t min_sentences = SIZE_MAX;
  double max_positive_share = 0.0;
};

std::vector<double> mean_curve(const std::vector<LearningCurve>& cs) {
  std::size_t rounds = 0;
  for (const auto& c : cs) rounds = std::max(rounds, c.uap.size());
  std::vector<double> m(rounds, 0.0);
  for (const auto& c : cs) {
    for (std::size_t r = 0; r < rounds; ++r) m[r] += c.uap[std::min(r, c.uap.size() - 1)];
  }
  for (auto& v : m) v /= static_cast<double>(cs.size());
  return m;
}

struct RunSpec {
  std::string name;
  Strategy strategy;
  std::optional<std::size_t> prune_to;
};

const std::vector<RunSpec>& run_specs() {
  static const std::vector<RunSpec> specs = {{"interactive", Strategy::kInteractive, std::nullopt},
                                             {"unsure", Strategy::kUnsure, std::nullopt},
                                             {"random_pool", Strategy::kRandomPool, std::nullopt},
                                             {"interactive-prune1000", Strategy::kInteractive, 1000},
                                             {"interactive-prune10", Strategy::kInteractive, 10}};
  return specs;
}

LearningCurve simulate(const FeatureIndex& index, const RunSpec& spec, std::uint64_t seed) {
  SimulationConfig cfg;
  cfg.strategy = spec.strategy;
  cfg.rounds = 50;
  cfg.seed = seed;
  cfg.prune_to = spec.prune_to;
  auto c = run_simulation(index, SimulatedUser::from_gold("SPECIES"), cfg, "SPECIES");
  c.strategy = spec.name;
  return c;
}

std::string curves_csv(const std::vector<LearningCurve>& curves) {
  std::ostringstream out;
  write_curves_csv(out, curves);
  return out.str();
}

Runs sparse_runs(double& seconds) {
  const auto start = Clock::now();
  Runs runs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto corpus = generate_synthetic(synthetic_sparse_preset(seed));
    const auto positives = SimulatedUser::from_gold("SPECIES").positive_sentences(corpus).size();
    runs.min_sentences = std::min(runs.min_sentences, corpus.sentence_count());
    runs.max_positive_share = std::max(
        runs.max_positive_share, static_cast<double>(positives) / static_cast<double>(corpus.sentence_count()));
    const auto index = FeatureIndex::build(corpus, FeatureConfig{});
    for (const auto& spec : run_specs()) runs.curves[spec.name].push_back(simulate(index, spec, seed));
  }
  seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return runs;
}

void strategy_shape(const Runs& runs, double seconds) {
  const auto start = Clock::now();
  const double inter = mean_curve(runs.curves.at("interactive")).at(49);
  const double unsure = mean_curve(runs.curves.at("unsure")).at(49);
  const double random = mean_curve(runs.curves.at("random_pool")).at(49);
  const bool corpus_ok = runs.max_positive_share < 0.01 && runs.min_sentences >= 20000;
  const bool ok = corpus_ok && inter >= 2.0 * random && unsure >= 2.0 * random && seconds < 600.0;
  report(ok, "sparse-strategies",
         fmt::format("uAP@50 over 5 seeds: interactive {:.4f}, unsure {:.4f}, random_pool {:.4f} (need >= {:.4f}); "
                     ">= {} sentences, positives <= {:.2f}%; simulations {:.0f}s",
                     inter, unsure, random, 2.0 * random, runs.min_sentences, 100.0 * runs.max_positive_share,
                     seconds),
         start);
}

void pruning_shape(const Runs& runs, double seconds) {
  const auto start = Clock::now();
  const auto full = mean_curve(runs.curves.at("interactive"));
  const auto p1000 = mean_curve(runs.curves.at("interactive-prune1000"));
  const auto p10 = mean_curve(runs.curves.at("interactive-prune10"));
  double worst = 0.0;
  double full_mass = 0.0;
  double p10_mass = 0.0;
  for (std::size_t r = 20; r < 50; ++r) {  // rounds 21..50
    worst = std::max(worst, std::abs(p1000[r] - full[r]) / full[r]);
    full_mass += full[r];
    p10_mass += p10[r];
  }
  const double degradation = 1.0 - p10_mass / full_mass;
  const bool ok = worst <= 0.05 && degradation >= 0.10 && seconds < 900.0;
  report(ok, "pruning-shape",
         fmt::format("prune-1000 worst relative gap after round 20 {:.4f} (<= 0.05); prune-10 mean uAP {:.1f}% below "
                     "full over rounds 21-50 (>= 10%); uAP@50 full {:.4f}, 1000 {:.4f}, 10 {:.4f}",
                     worst, 100.0 * degradation, full[49], p1000[49], p10[49]),
         start);
}

void determinism(const Runs& runs) {
  const auto start = Clock::now();
  // Fresh corpus, fresh index, fresh sessions for seed 1.
  const auto index = FeatureIndex::build(generate_synthetic(synthetic_sparse_preset(1)), FeatureConfig{});
  std::vector<LearningCurve> first;
  std::vector<LearningCurve> second;
  for (const auto& spec : run_specs()) {
    if (spec.prune_to) continue;
    first.push_back(runs.curves.at(spec.name).front());
    second.push_back(simulate(index, spec, 1));
  }
  const auto a = curves_csv(first);
  const auto b = curves_csv(second);
  report(a == b && !a.empty(), "determinism",
         fmt::format("{} byte curve CSV for 3 strategies, second run {}", a.size(), a == b ? "identical" : "differs"),
         start);
}

// ---------------------------------------------------------------------------

void timing_shape() {
  const auto start = Clock::now();
  const auto index = FeatureIndex::build(generate_synthetic(synthetic_sparse_preset(1)), FeatureConfig{});
  // A dense PER model: gold labels on the first 3000 sentences.
  std::vector<LabeledToken> labeled;
  for (SentenceId s = 0; s < 3000; ++s) {
    const auto& sent = index.corpus().sentence(s);
    for (TokenId t = sent.first_token; t < sent.end_token(); ++t) {
      labeled.push_back({t, index.features_of(t), is_class_label(index.corpus().token(t).gold, "PER")});
    }
  }
  const auto model = train(labeled, {}, "PER");
  const std::vector<std::size_t> schedule = {1, 10, 100, 1000};
  TimingOptions opts;
  opts.trials = 7;
  opts.inner_repeats = 3;
  std::vector<std::vector<double>> per_run;
  for (int run = 0; run < 3; ++run) {
    const auto rep = time_query_schedule(index, model, schedule, opts);
    std::vector<double> med;
    for (const auto& row : rep.rows) med.push_back(row.median_seconds);
    per_run.push_back(med);
  }
  std::vector<double> med(per_run.front().size());
  for (std::size_t i = 0; i < med.size(); ++i) {
    std::vector<double> col;
    for (const auto& r : per_run) col.push_back(r[i]);
    med[i] = median(col);
  }
  bool monotone = true;
  for (std::size_t i = 0; i + 1 < schedule.size(); ++i) monotone = monotone && med[i + 1] >= 0.7 * med[i];
  const double speedup = med.back() / med[1];
  const bool ok = monotone && speedup >= 10.0 && index.token_count() >= 100000 && model.size() >= 1000;
  report(ok, "query-latency-shape",
         fmt::format("{} tokens, model {} features; median s |Q|=1 {:.2e}, 10 {:.2e}, 100 {:.2e}, 1000 {:.2e}, "
                     "full {:.2e}; non-decreasing within 30%: {}; |Q|=10 speedup {:.1f}x (>= 10x)",
                     index.token_count(), model.size(), med[0], med[1], med[2], med[3], med[4],
                     monotone ? "yes" : "no", speedup),
         start);
}

// ---------------------------------------------------------------------------

void export_round_trip() {
  const auto start = Clock::now();
  auto cfg = synthetic_bio_preset(9);
  cfg.documents = 40;
  const auto index = FeatureIndex::build(generate_synthetic(cfg), FeatureConfig{});
  std::size_t sessions = 0;
  std::size_t mismatches = 0;
  for (const auto strat : {Strategy::kInteractive, Strategy::kDocRank, Strategy::kRandomPool, Strategy::kUnsure}) {
    for (const std::string cls : {"PER", "ORG"}) {
      const auto user = SimulatedUser::from_gold(cls);
      SessionConfig sc;
      sc.class_name = cls;
      sc.strategy = strat;
      sc.seed = 5;
      sc.seed_rule.sentences = user.positive_sentences(index.corpus());
      sc.seed_rule.sentences.resize(1);
      Session session(index, sc);
      for (int r = 0; r < 25; ++r) {
        const auto served = session.next_sentence();
        session.submit_labels(served.sentence_id, user.label(index.corpus().sentence(served.sentence_id)));
      }
      std::ostringstream out;
      export_conll(out, session);
      std::istringstream in(out.str());
      const auto back = read_conll(in, "export");
      ++sessions;
      if (back.sentence_count() != session.labeled().size()) {
        ++mismatches;
        continue;
      }
      for (std::size_t i = 0; i < session.labeled().size(); ++i) {
        const auto& ls = session.labeled()[i];
        const auto& orig = index.corpus().sentence(ls.sentence_id);
        const auto& got = back.sentence(static_cast<SentenceId>(i));
        bool same = got.tokens.size() == orig.tokens.size();
        for (std::size_t t = 0; same && t < got.tokens.size(); ++t) {
          same = got.tokens[t].surface == orig.tokens[t].surface && got.tokens[t].pos == orig.tokens[t].pos &&
                 is_class_label(got.tokens[t].gold, cls) == ls.labels[t];
        }
        if (!same) ++mismatches;
      }
    }
  }
  report(mismatches == 0, "export-round-trip",
         fmt::format("{} sessions x 25 labeled sentences, {} mismatching sentences", sessions, mismatches), start);
}

}  // namespace

int main() {
  uap_oracle();
  rank_safety();
  heldout_f1();
  double seconds = 0.0;
  const auto runs = sparse_runs(seconds);
  strategy_shape(runs, seconds);
  pruning_shape(runs, seconds);
  timing_shape();
  determinism(runs);
  export_round_trip();
  fmt::print("{} failed\n", failures);
  return failures == 0 ? 0 : 1;
}
