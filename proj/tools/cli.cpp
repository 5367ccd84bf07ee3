#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "nes/error.hpp"
#include "nes/eval.hpp"
#include "nes/index.hpp"
#include "nes/server.hpp"
#include "nes/session.hpp"
#include "nes/synthetic.hpp"
#include "run_config.hpp"

namespace nes::cli {

namespace fs = std::filesystem;

namespace {

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", tmp.string()));
    out << content;
    if (!out.flush()) throw IoError(fmt::format("cannot write {}", tmp.string()));
  }
  fs::rename(tmp, path);
}

// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    write_file_atomic(path, content);
  }
}

template <typename T>
T pick(const CLI::Option* opt, const T& flag, const std::optional<T>& config, const T& fallback) {
  if (opt->count() > 0) return flag;
  return config.value_or(fallback);
}

template <typename T>
std::vector<T> pick_list(const CLI::Option* opt, const std::vector<T>& flag,
                         const std::vector<T>& config, const std::vector<T>& fallback) {
  if (opt->count() > 0) return flag;
  return config.empty() ? fallback : config;
}

std::string require_path(const CLI::Option* opt, const std::string& flag,
                         const std::optional<fs::path>& config, const char* field) {
  if (opt->count() > 0) return flag;
  if (config) return config->string();
  throw ConfigError(fmt::format("{}: required (flag or config)", field));
}

struct Common {
  std::string config_path;
  RunConfig config;

  void load() {
    if (!config_path.empty()) config = load_run_config(config_path);
  }
};

struct TrainerFlags {
  double l2 = 1.0;
  int max_epochs = 200;
  double tolerance = 1e-6;
  double max_positive_weight = 10.0;
  CLI::Option* l2_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* tol_opt = nullptr;
  CLI::Option* pos_opt = nullptr;

  void add(CLI::App* app) {
    l2_opt = app->add_option("--l2", l2, "L2 penalty of the logistic trainer")->check(CLI::PositiveNumber);
    epochs_opt = app->add_option("--max-epochs", max_epochs, "L-BFGS iteration cap")->check(CLI::PositiveNumber);
    tol_opt = app->add_option("--tolerance", tolerance, "relative loss change that stops training")
                  ->check(CLI::PositiveNumber);
    pos_opt = app->add_option("--max-positive-weight", max_positive_weight,
                              "cap on the positive-class weight")
                  ->check(CLI::Range(1.0, 1e9));
  }

  TrainerParams resolve(const RunConfig& cfg) const {
    TrainerParams p = cfg.trainer.value_or(TrainerParams{});
    if (l2_opt->count()) p.l2 = l2;
    if (epochs_opt->count()) p.max_epochs = max_epochs;
    if (tol_opt->count()) p.tolerance = tolerance;
    if (pos_opt->count()) p.max_positive_weight = max_positive_weight;
    return p;
  }
};

std::string format_score(double v) { return fmt::format("{:.6f}", v); }

// ---------------------------------------------------------------------------

void cmd_build_index(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("build-index", "Extract features and write an index directory");
  struct Args {
    std::string corpus, format = "conll", clusters, out;
    int window = 2, ngram_max = 4;
    std::vector<std::string> families;
  };
  auto a = std::make_shared<Args>();
  auto* corpus_opt = sub->add_option("--corpus", a->corpus, "corpus file or directory");
  sub->add_option("--format", a->format, "conll | text (one document per file) | lines (doc per line)")
      ->check(CLI::IsMember({"conll", "text", "lines"}));
  auto* clusters_opt = sub->add_option("--clusters", a->clusters, "word cluster file (bits<TAB>word<TAB>count)");
  auto* window_opt = sub->add_option("--window", a->window, "context window")->check(CLI::NonNegativeNumber);
  auto* ngram_opt = sub->add_option("--ngram-max", a->ngram_max, "longest prefix/suffix")->check(CLI::PositiveNumber);
  auto* fam_opt = sub->add_option("--families", a->families, "enabled feature families")->delimiter(',');
  auto* out_opt = sub->add_option("--out", a->out, "index directory to write");
  sub->callback([=, &common] {
    common.load();
    const auto& rc = common.config;
    const auto corpus_path = require_path(corpus_opt, a->corpus, rc.corpus, "build-index.corpus");
    const auto out = require_path(out_opt, a->out, rc.index_dir, "build-index.out");
    FeatureConfig fc = rc.features.value_or(FeatureConfig{});
    if (window_opt->count()) fc.window = a->window;
    if (ngram_opt->count()) fc.ngram_max = a->ngram_max;
    if (fam_opt->count()) fc.enabled_families = {a->families.begin(), a->families.end()};
    if (clusters_opt->count()) fc.cluster_path = a->clusters;
    else if (rc.clusters) fc.cluster_path = *rc.clusters;
    if (fc.cluster_path && !fc.enabled("cl")) fc.enabled_families.insert("cl");
    fc.validate();

    Corpus corpus;
    if (a->format == "conll") {
      corpus = read_conll(corpus_path);
    } else {
      corpus = read_plaintext(corpus_path, Tokenizer{},
                              a->format == "lines" ? PlaintextLayout::kLineRecords
                                                   : PlaintextLayout::kDocumentPerFile);
    }
    std::optional<ClusterMap> clusters;
    if (fc.cluster_path) clusters = load_clusters(*fc.cluster_path);
    auto index = FeatureIndex::build(std::move(corpus), fc, clusters ? &*clusters : nullptr, out);
    const auto& m = index.manifest();
    std::cout << fmt::format("index {}: {} docs, {} sentences, {} tokens, {} features, {} postings\n",
                             out, m.docs, m.sentences, m.tokens, m.lexicon, m.postings);
  });
}

void cmd_synth_corpus(CLI::App& app, Common&) {
  auto* sub = app.add_subcommand("synth-corpus", "Write a synthetic BIO corpus in CoNLL format");
  struct Args {
    std::string preset = "sparse", out;
    std::uint64_t seed = 0;
    std::size_t documents = 0;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--preset", a->preset, "bio (multi-class, ~14K tokens) | sparse (rare SPECIES class)")
      ->check(CLI::IsMember({"bio", "sparse"}));
  sub->add_option("--seed", a->seed, "generator seed")->required();
  sub->add_option("--documents", a->documents, "override the preset's document count");
  sub->add_option("--out", a->out, "output CoNLL file (stdout when omitted)");
  sub->callback([=] {
    auto cfg = a->preset == "bio" ? synthetic_bio_preset(a->seed) : synthetic_sparse_preset(a->seed);
    if (a->documents) cfg.documents = a->documents;
    std::ostringstream out;
    write_conll(out, generate_synthetic(cfg));
    emit(a->out, out.str());
  });
}

std::vector<LabeledToken> gold_tokens(const FeatureIndex& index, const std::string& cls,
                                      std::size_t doc_begin, std::size_t doc_end) {
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

void cmd_train(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("train", "Train a query model from gold labels");
  struct Args {
    std::string index, cls, out;
    double split = 1.0;
    std::size_t prune_to = 0;
    TrainerFlags trainer;
  };
  auto a = std::make_shared<Args>();
  auto* index_opt = sub->add_option("--index", a->index, "index directory");
  auto* cls_opt = sub->add_option("--class", a->cls, "gold class, e.g. PER");
  sub->add_option("--split", a->split, "train on this leading fraction of documents")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--prune-to", a->prune_to, "keep the n largest weights");
  sub->add_option("--out", a->out, "model file (.json selects JSON)")->required();
  a->trainer.add(sub);
  sub->callback([=, &common] {
    common.load();
    const auto& rc = common.config;
    const auto index = FeatureIndex::open(require_path(index_opt, a->index, rc.index_dir, "train.index"));
    const auto cls = pick<std::string>(cls_opt, a->cls, rc.class_name, "");
    if (cls.empty()) throw ConfigError("train.class: required");
    const auto docs = index.corpus().docs().size();
    const auto end = static_cast<std::size_t>(a->split * static_cast<double>(docs));
    const auto labeled = gold_tokens(index, cls, 0, std::max<std::size_t>(1, end));
    auto model = train(labeled, a->trainer.resolve(rc), cls);
    if (a->prune_to) model = prune(model, a->prune_to);
    save_model(model, a->out);
    std::cout << fmt::format("model {}: {} features, trained on {} tokens\n", a->out, model.size(),
                             labeled.size());
  });
}

// Token F1 on a held-out document split, per class plus micro and macro rows.
void cmd_eval_f1(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("eval-f1", "Held-out token F1 of per-class query models");
  struct Args {
    std::string index, out;
    std::vector<std::string> classes;
    double split = 0.8;
    TrainerFlags trainer;
  };
  auto a = std::make_shared<Args>();
  auto* index_opt = sub->add_option("--index", a->index, "index directory");
  auto* cls_opt = sub->add_option("--class", a->classes, "gold classes")->delimiter(',');
  sub->add_option("--split", a->split, "leading fraction of documents used for training")
      ->check(CLI::Range(0.01, 0.99));
  sub->add_option("--out", a->out, "CSV output (stdout when omitted)");
  a->trainer.add(sub);
  sub->callback([=, &common] {
    common.load();
    const auto& rc = common.config;
    const auto index = FeatureIndex::open(require_path(index_opt, a->index, rc.index_dir, "eval-f1.index"));
    auto classes = a->classes;
    if (cls_opt->count() == 0 && rc.class_name) classes = {*rc.class_name};
    if (classes.empty()) throw ConfigError("eval-f1.class: required");
    const auto docs = index.corpus().docs().size();
    const auto split = std::clamp<std::size_t>(
        static_cast<std::size_t>(a->split * static_cast<double>(docs)), 1, docs - 1);
    const auto params = a->trainer.resolve(rc);

    std::ostringstream out;
    out << "class,precision,recall,f1,tp,fp,fn\n";
    std::vector<BinaryCounts> counts;
    for (const auto& cls : classes) {
      const auto model = train(gold_tokens(index, cls, 0, split), params, cls);
      std::vector<std::uint8_t> pred, gold;
      for (const auto& lt : gold_tokens(index, cls, split, docs)) {
        pred.push_back(model.predict(lt.features));
        gold.push_back(lt.positive);
      }
      std::vector<bool> p(pred.begin(), pred.end()), g(gold.begin(), gold.end());
      std::unique_ptr<bool[]> pb(new bool[p.size()]), gb(new bool[g.size()]);
      std::copy(p.begin(), p.end(), pb.get());
      std::copy(g.begin(), g.end(), gb.get());
      const auto c = count_binary({pb.get(), p.size()}, {gb.get(), g.size()});
      counts.push_back(c);
      const auto r = c.prf();
      out << fmt::format("{},{:.4f},{:.4f},{:.4f},{},{},{}\n", cls, r.precision, r.recall, r.f1, c.tp,
                         c.fp, c.fn);
    }
    const auto mi = micro_f1(counts);
    const auto ma = macro_f1(counts);
    out << fmt::format("micro,{:.4f},{:.4f},{:.4f},,,\n", mi.precision, mi.recall, mi.f1);
    out << fmt::format("macro,{:.4f},{:.4f},{:.4f},,,\n", ma.precision, ma.recall, ma.f1);
    emit(a->out, out.str());
  });
}

void cmd_query(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("query", "Rank tokens, sentences or entities under a model");
  struct Args {
    std::string index, model;
    std::size_t k = 20;
    std::string mode = "tokens";
  };
  auto a = std::make_shared<Args>();
  auto* index_opt = sub->add_option("--index", a->index, "index directory");
  sub->add_option("--model", a->model, "query model file")->required()->check(CLI::ExistingFile);
  sub->add_option("--k", a->k, "results to print")->check(CLI::PositiveNumber);
  sub->add_option("--mode", a->mode, "tokens | sentences | entities")
      ->check(CLI::IsMember({"tokens", "sentences", "entities"}));
  sub->callback([=, &common] {
    common.load();
    const auto index = FeatureIndex::open(require_path(index_opt, a->index, common.config.index_dir, "query.index"), false);
    const auto model = load_model(a->model);
    const auto& corpus = index.corpus();
    if (a->mode == "tokens") {
      for (const auto& st : score_topk(index, model, a->k)) {
        std::cout << st.token_id << '\t' << format_score(st.score) << '\t' << corpus.token(st.token_id).surface
                  << '\n';
      }
    } else if (a->mode == "sentences") {
      for (const auto& ss : sentence_rank(index, model, a->k)) {
        std::string text;
        for (const auto& t : corpus.sentence(ss.sentence_id).tokens) text += (text.empty() ? "" : " ") + t.surface;
        std::cout << ss.sentence_id << '\t' << format_score(ss.score) << '\t' << text << '\n';
      }
    } else {
      for (const auto& form : entity_list(index, model, a->k)) std::cout << form << '\n';
    }
  });
}

void cmd_simulate(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("simulate", "Replay a simulated annotator and write learning curves");
  struct Args {
    std::string index, judgments, gold_class, doc_rankings, out;
    std::vector<std::string> strategies, queries;
    std::vector<std::uint64_t> seeds;
    std::size_t rounds = 50, prune_to = 0, retrain_every = 1, min_forms = 3;
    bool pool_only = false;
    TrainerFlags trainer;
  };
  auto a = std::make_shared<Args>();
  auto* index_opt = sub->add_option("index", a->index, "index directory");
  auto* judg_opt = sub->add_option("judgments", a->judgments, "judgment TSV (query_id, title, form)");
  auto* gold_opt = sub->add_option("--gold-class", a->gold_class, "replay gold BIO labels of this class instead");
  auto* strat_opt = sub->add_option("--strategy", a->strategies, "interactive, docrank, random_pool, unsure")
                        ->delimiter(',');
  auto* rounds_opt = sub->add_option("--rounds", a->rounds, "rounds per run")->check(CLI::PositiveNumber);
  auto* seed_opt = sub->add_option("--seed", a->seeds, "one or more seeds")->delimiter(',');
  sub->add_option("--prune-to", a->prune_to, "rank and select with the model pruned to n features");
  sub->add_option("--retrain-every", a->retrain_every, "retrain after every n-th sentence")
      ->check(CLI::PositiveNumber);
  auto* rank_opt = sub->add_option("--doc-rankings", a->doc_rankings,
                                   "per-query document ranking (query_id, doc_id, rank): the document pool");
  sub->add_flag("--pool-only", a->pool_only, "restrict interactive/unsure selection to the pool");
  sub->add_option("--query", a->queries, "only these query ids")->delimiter(',');
  sub->add_option("--min-forms", a->min_forms, "drop queries with this many forms or fewer");
  sub->add_option("--out", a->out, "curves CSV (stdout when omitted)");
  a->trainer.add(sub);
  sub->callback([=, &common] {
    common.load();
    const auto& rc = common.config;
    const auto index = FeatureIndex::open(require_path(index_opt, a->index, rc.index_dir, "simulate.index"), false);
    const auto seeds = pick_list<std::uint64_t>(seed_opt, a->seeds, rc.seeds, {});
    if (seeds.empty()) throw ConfigError("simulate.seed: required for simulations");
    const auto strategy_names = pick_list<std::string>(strat_opt, a->strategies, rc.strategies, {"interactive"});
    std::vector<Strategy> strategies;
    for (const auto& s : strategy_names) {
      auto parsed = parse_strategy(s);
      if (!parsed) throw ConfigError(fmt::format("simulate.strategy: unknown strategy '{}'", s));
      strategies.push_back(*parsed);
    }
    const auto rounds = pick<std::size_t>(rounds_opt, a->rounds, rc.rounds, 50);

    std::vector<std::pair<std::string, SimulatedUser>> users;
    if (gold_opt->count() || (!judg_opt->count() && !rc.judgments && rc.class_name)) {
      const auto cls = gold_opt->count() ? a->gold_class : *rc.class_name;
      users.emplace_back(cls, SimulatedUser::from_gold(cls));
    } else {
      const auto path = require_path(judg_opt, a->judgments, rc.judgments, "simulate.judgments");
      JudgmentOptions jo;
      jo.min_forms_exclusive = a->min_forms;
      for (auto& js : read_judgments(path, jo)) {
        if (!a->queries.empty() &&
            std::find(a->queries.begin(), a->queries.end(), js.query_id) == a->queries.end()) {
          continue;
        }
        auto id = js.query_id;
        users.emplace_back(std::move(id), SimulatedUser::from_judgments(std::move(js)));
      }
    }
    if (users.empty()) throw ConfigError("simulate.judgments: no query left to simulate");

    DocRankings rankings;
    if (rank_opt->count() || rc.doc_rankings) {
      rankings = read_doc_rankings(rank_opt->count() ? fs::path(a->doc_rankings) : *rc.doc_rankings);
    }

    std::vector<LearningCurve> curves;
    for (const auto& [query_id, user] : users) {
      for (const auto strategy : strategies) {
        for (const auto seed : seeds) {
          SimulationConfig sc;
          sc.strategy = strategy;
          sc.rounds = rounds;
          sc.seed = seed;
          sc.trainer = a->trainer.resolve(rc);
          if (a->prune_to) sc.prune_to = a->prune_to;
          sc.retrain_every = a->retrain_every;
          sc.pool_only = a->pool_only;
          if (auto it = rankings.find(query_id); it != rankings.end()) sc.pool_docs = it->second;
          curves.push_back(run_simulation(index, user, sc, query_id));
          std::cerr << fmt::format("{} {} seed={} uap@{}={:.4f}\n", query_id, to_string(strategy), seed,
                                   curves.back().uap.size(),
                                   curves.back().uap.empty() ? 0.0 : curves.back().uap.back());
        }
      }
    }
    std::ostringstream out;
    write_curves_csv(out, curves);
    emit(a->out, out.str());
  });
}

void cmd_eval_uap(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("eval-uap", "Unique average precision of a ranking");
  struct Args {
    std::string ranking, judgments, query, index, model;
    std::size_t min_forms = 3;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("--ranking", a->ranking, "ranked surfaces, one per line; optional TAB 1/0 relevance")
      ->check(CLI::ExistingFile);
  auto* judg_opt = sub->add_option("--judgments", a->judgments, "judgment TSV");
  sub->add_option("--query", a->query, "query id (default: the only / first query)");
  sub->add_option("--index", a->index, "rank the index with --model instead of --ranking");
  sub->add_option("--model", a->model, "query model file")->check(CLI::ExistingFile);
  sub->add_option("--min-forms", a->min_forms, "drop queries with this many forms or fewer");
  sub->callback([=, &common] {
    common.load();
    JudgmentOptions jo;
    jo.min_forms_exclusive = a->min_forms;
    const auto sets = read_judgments(require_path(judg_opt, a->judgments, common.config.judgments,
                                                  "eval-uap.judgments"),
                                     jo);
    const JudgmentSet* js = nullptr;
    for (const auto& s : sets) {
      if (a->query.empty() || s.query_id == a->query) {
        js = &s;
        break;
      }
    }
    if (!js) throw ConfigError(fmt::format("eval-uap.query: '{}' not found in the judgments", a->query));

    RankedList ranking;
    if (!a->ranking.empty()) {
      std::ifstream in(a->ranking);
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        RankedItem item;
        const auto tab = line.find('\t');
        item.surface = line.substr(0, tab);
        if (tab != std::string::npos) {
          const auto flag = line.substr(tab + 1);
          if (flag != "0" && flag != "1") throw ParseError(a->ranking, line_no, "relevance must be 0 or 1");
          item.relevant = flag == "1";
        }
        ranking.push_back(std::move(item));
      }
    } else if (!a->index.empty() && !a->model.empty()) {
      const auto index = FeatureIndex::open(a->index, false);
      const auto scored = rank_all(index, load_model(a->model));
      ranking = make_ranked_list(index, scored);
    } else {
      throw ConfigError("eval-uap: give --ranking, or --index with --model");
    }
    std::cout << fmt::format("{}\t{:.10f}\n", js->query_id, unique_ap(ranking, *js));
  });
}

void cmd_time_queries(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("time-queries", "Median score_topk latency per model size plus a full scan");
  struct Args {
    std::string index, model, out;
    std::vector<std::size_t> schedule;
    std::size_t trials = 5, k = 100, repeats = 1;
  };
  auto a = std::make_shared<Args>();
  auto* index_opt = sub->add_option("--index", a->index, "index directory");
  sub->add_option("--model", a->model, "model to prune for each size")->required()->check(CLI::ExistingFile);
  auto* sched_opt = sub->add_option("--schedule", a->schedule, "model sizes, e.g. 1,10,100,1000")->delimiter(',');
  sub->add_option("--trials", a->trials, "trials per row (>= 5)")->check(CLI::Range(5, 100000));
  sub->add_option("--k", a->k, "top-k depth")->check(CLI::PositiveNumber);
  sub->add_option("--repeats", a->repeats, "calls per trial")->check(CLI::PositiveNumber);
  sub->add_option("--out", a->out, "timing CSV (stdout when omitted)");
  sub->callback([=, &common] {
    common.load();
    const auto index = FeatureIndex::open(require_path(index_opt, a->index, common.config.index_dir, "time-queries.index"), false);
    const auto schedule = pick_list<std::size_t>(sched_opt, a->schedule, common.config.prune_schedule,
                                                 {1, 5, 10, 50, 100, 250, 500, 1000, 5000});
    TimingOptions opts;
    opts.trials = a->trials;
    opts.k = a->k;
    opts.inner_repeats = a->repeats;
    std::ostringstream out;
    write_timing_csv(out, time_query_schedule(index, load_model(a->model), schedule, opts));
    emit(a->out, out.str());
  });
}

void cmd_export_curves(CLI::App& app, Common&) {
  auto* sub = app.add_subcommand("export-curves", "Aggregate curve CSVs into per-strategy mean and stderr");
  struct Args {
    std::vector<std::string> curves;
    std::string out;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("curves", a->curves, "curve CSVs from simulate")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", a->out, "aggregate CSV (stdout when omitted)");
  sub->callback([=] {
    std::vector<LearningCurve> all;
    for (const auto& path : a->curves) {
      std::ifstream in(path);
      auto curves = read_curves_csv(in, path);
      all.insert(all.end(), curves.begin(), curves.end());
    }
    std::ostringstream out;
    write_aggregate_csv(out, curve_aggregate(all));
    emit(a->out, out.str());
  });
}

void cmd_feature_importance(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("feature-importance", "uAP mass of the top features, grouped by family");
  struct Args {
    std::vector<std::string> models;
    std::string index, judgments, grouping = "family", out;
    std::size_t top = 10;
  };
  auto a = std::make_shared<Args>();
  sub->add_option("models", a->models, "model files")->required()->check(CLI::ExistingFile);
  sub->add_option("--index", a->index, "weight each model by its uAP on this index");
  sub->add_option("--judgments", a->judgments, "judgments matched by model class name (default: gold labels)");
  sub->add_option("--grouping", a->grouping, "family | template")->check(CLI::IsMember({"family", "template"}));
  sub->add_option("--top", a->top, "top features per model")->check(CLI::PositiveNumber);
  sub->add_option("--out", a->out, "CSV output (stdout when omitted)");
  sub->callback([=, &common] {
    common.load();
    std::optional<FeatureIndex> index;
    if (!a->index.empty()) index.emplace(FeatureIndex::open(a->index, false));
    std::vector<JudgmentSet> sets;
    if (!a->judgments.empty()) sets = read_judgments(a->judgments);
    std::vector<std::pair<QueryModel, double>> weighted;
    for (const auto& path : a->models) {
      auto model = load_model(path);
      double weight = 1.0;
      if (index) {
        JudgmentSet js;
        auto it = std::find_if(sets.begin(), sets.end(),
                               [&](const JudgmentSet& s) { return s.query_id == model.class_name(); });
        js = it != sets.end() ? *it : judgments_from_gold(index->corpus(), model.class_name());
        const auto scored = rank_all(*index, model);
        weight = js.accepted_forms.empty() ? 0.0 : unique_ap(make_ranked_list(*index, scored), js);
      }
      weighted.emplace_back(std::move(model), weight);
    }
    const auto grouping = a->grouping == "template" ? FeatureGrouping::kTemplate : FeatureGrouping::kFamily;
    std::ostringstream out;
    out << "group,uap_mass\n";
    for (const auto& [group, mass] : feature_importance(weighted, grouping, a->top)) {
      out << group << ',' << fmt::format("{:.6f}", mass) << '\n';
    }
    emit(a->out, out.str());
  });
}

void cmd_serve(CLI::App& app, Common& common) {
  auto* sub = app.add_subcommand("serve", "Run the HTTP labeling service");
  struct Args {
    std::string index_dir, state_dir, host = "127.0.0.1", token;
    int port = 8080;
    std::size_t threads = 4;
  };
  auto a = std::make_shared<Args>();
  auto* dir_opt = sub->add_option("--index-dir", a->index_dir, "index directory or a directory of indexes");
  sub->add_option("--state-dir", a->state_dir, "session snapshots (default <index-dir>/sessions)");
  sub->add_option("--host", a->host, "listen address");
  sub->add_option("--port", a->port, "listen port (0 picks one)")->check(CLI::Range(0, 65535));
  sub->add_option("--token", a->token, "require Authorization: Bearer <token>");
  sub->add_option("--threads", a->threads, "worker threads")->check(CLI::PositiveNumber);
  sub->callback([=, &common] {
    common.load();
    ServerOptions o;
    o.index_dir = require_path(dir_opt, a->index_dir, common.config.index_dir, "serve.index_dir");
    if (!a->state_dir.empty()) o.state_dir = a->state_dir;
    o.host = a->host;
    o.port = a->port;
    if (!a->token.empty()) o.token = a->token;
    o.threads = a->threads;
    Server server(o);
    const int port = server.bind();
    std::cout << fmt::format("serving {} index(es), {} session(s) on http://{}:{}\n", server.index_count(),
                             server.session_count(), o.host, port)
              << std::flush;
    server.listen();
  });
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"nes: named entity search over token-level feature indexes"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "nes 0.3.0");
  Common common;
  app.add_option("--config", common.config_path, "versioned JSON run config; flags override it")
      ->check(CLI::ExistingFile);

  cmd_build_index(app, common);
  cmd_synth_corpus(app, common);
  cmd_train(app, common);
  cmd_eval_f1(app, common);
  cmd_query(app, common);
  cmd_simulate(app, common);
  cmd_eval_uap(app, common);
  cmd_time_queries(app, common);
  cmd_export_curves(app, common);
  cmd_feature_importance(app, common);
  cmd_serve(app, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const nes::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace nes::cli
