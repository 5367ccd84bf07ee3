#include "nes/index.hpp"

#include <algorithm>
#include <iterator>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "nes/error.hpp"

namespace nes {

static_assert(std::endian::native == std::endian::little,
              "index files are written in host byte order and assume little endian");

namespace {

namespace fs = std::filesystem;

constexpr std::string_view kManifestFile = "manifest.json";
constexpr std::string_view kCorpusFile = "corpus.conll";
constexpr std::string_view kLexiconFile = "lexicon.txt";
constexpr std::string_view kPostingsFile = "postings.bin";
constexpr std::string_view kForwardFile = "forward.bin";
constexpr char kPostingsMagic[8] = {'N', 'E', 'S', 'P', 'O', 'S', 'T', '1'};
constexpr char kForwardMagic[8] = {'N', 'E', 'S', 'F', 'W', 'D', '0', '1'};

// Writes to a temporary sibling and renames on success.
template <typename Fn>
void write_atomically(const fs::path& path, Fn&& fn) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", tmp.string()));
    fn(out);
    out.flush();
    if (!out) throw IoError(fmt::format("write failed: {}", tmp.string()));
  }
  fs::rename(tmp, path);
}

template <typename T>
void write_pod_array(std::ostream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
void read_pod_array(std::istream& in, std::vector<T>& v, std::size_t n, const fs::path& path) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw IoError(fmt::format("{}: truncated file", path.string()));
}

// Layout: magic, u64 list count, u64 entry count, u64 offsets[count+1], u32 entries.
void write_lists(const fs::path& path, const char (&magic)[8], const std::vector<std::uint64_t>& offsets,
                 const std::vector<std::uint32_t>& entries) {
  write_atomically(path, [&](std::ostream& out) {
    out.write(magic, sizeof(magic));
    const std::uint64_t header[2] = {offsets.size() - 1, entries.size()};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    write_pod_array(out, offsets);
    write_pod_array(out, entries);
  });
}

void read_lists(const fs::path& path, const char (&magic)[8], std::size_t expected_lists,
                std::vector<std::uint64_t>& offsets, std::vector<std::uint32_t>& entries) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  char got[8];
  in.read(got, sizeof(got));
  if (!in || std::memcmp(got, magic, sizeof(got)) != 0) {
    throw VersionError(fmt::format("{}: unrecognized file header", path.string()));
  }
  std::uint64_t header[2];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw IoError(fmt::format("{}: truncated file", path.string()));
  if (header[0] != expected_lists) {
    throw Error(fmt::format("{}: holds {} lists, manifest says {}", path.string(), header[0],
                            expected_lists));
  }
  read_pod_array(in, offsets, header[0] + 1, path);
  if (offsets.front() != 0 || offsets.back() != header[1] ||
      !std::is_sorted(offsets.begin(), offsets.end())) {
    throw Error(fmt::format("{}: corrupt offsets", path.string()));
  }
  read_pod_array(in, entries, header[1], path);
}

nlohmann::json manifest_to_json(const IndexManifest& m) {
  return {{"format", "nes-feature-index"},
          {"format_version", m.format_version},
          {"corpus_checksum", m.corpus_checksum},
          {"features", feature_config_to_json(m.features)},
          {"counts",
           {{"docs", m.docs},
            {"sentences", m.sentences},
            {"tokens", m.tokens},
            {"lexicon", m.lexicon},
            {"postings", m.postings}}},
          {"files",
           {{"corpus", kCorpusFile},
            {"lexicon", kLexiconFile},
            {"postings", kPostingsFile},
            {"forward", kForwardFile}}}};
}

IndexManifest manifest_from_json(const nlohmann::json& j, const fs::path& path) {
  try {
    if (j.at("format").get<std::string>() != "nes-feature-index") {
      throw Error(fmt::format("{}: not a feature index manifest", path.string()));
    }
    IndexManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kIndexFormatVersion) {
      throw VersionError(fmt::format("{}: index format version {} is not supported (expected {})",
                                     path.string(), m.format_version, kIndexFormatVersion));
    }
    m.corpus_checksum = j.at("corpus_checksum").get<std::string>();
    m.features = feature_config_from_json(j.at("features"));
    const auto& c = j.at("counts");
    m.docs = c.at("docs").get<std::size_t>();
    m.sentences = c.at("sentences").get<std::size_t>();
    m.tokens = c.at("tokens").get<std::size_t>();
    m.lexicon = c.at("lexicon").get<std::size_t>();
    m.postings = c.at("postings").get<std::size_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

// Reused accumulator for term-at-a-time scoring; one per thread.
struct Accumulator {
  std::vector<double> score;
  std::vector<std::uint8_t> seen;
  std::vector<TokenId> touched;

  void prepare(std::size_t tokens) {
    if (score.size() < tokens) {
      score.assign(tokens, 0.0);
      seen.assign(tokens, 0);
    }
    touched.clear();
  }

  void reset() {
    for (const TokenId t : touched) {
      score[t] = 0.0;
      seen[t] = 0;
    }
    touched.clear();
  }
};

Accumulator& thread_accumulator() {
  thread_local Accumulator acc;
  return acc;
}

// Accumulates every query term into `acc`; terms are visited in feature id
// order so each token's sum follows the same order as a forward scan.
void accumulate(const FeatureIndex& index, const ResolvedQuery& q, Accumulator& acc) {
  acc.prepare(index.token_count());
  for (const auto& [fid, w] : q.terms) {
    for (const TokenId t : index.postings(fid)) {
      if (!acc.seen[t]) {
        acc.seen[t] = 1;
        acc.touched.push_back(t);
      }
      acc.score[t] += w;
    }
  }
}

std::vector<ScoredToken> collect(const FeatureIndex& index, Accumulator& acc,
                                 const SentenceSet& exclude) {
  std::vector<ScoredToken> out;
  out.reserve(acc.touched.size());
  for (const TokenId t : acc.touched) {
    if (exclude.empty() || !exclude.contains(index.sentence_of(t))) {
      out.push_back({t, acc.score[t]});
    }
  }
  acc.reset();
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

SentenceSet::SentenceSet(std::initializer_list<SentenceId> ids) {
  for (const auto id : ids) insert(id);
}

void SentenceSet::insert(SentenceId id) {
  if (id >= bits_.size()) bits_.resize(static_cast<std::size_t>(id) + 1, false);
  if (!bits_[id]) {
    bits_[id] = true;
    ++count_;
  }
}

FeatureIndex FeatureIndex::build(Corpus corpus, const FeatureConfig& cfg,
                                 const ClusterMap* clusters) {
  cfg.validate();
  if (corpus.empty()) throw EmptyCorpusError("cannot build an index over an empty corpus");

  FeatureIndex idx;
  idx.corpus_ = std::move(corpus);
  const std::size_t tokens = idx.corpus_.token_count();

  // Intern with provisional ids, then renumber in lexicographic order.
  std::unordered_map<std::string, FeatureId> provisional;
  std::vector<std::vector<FeatureId>> per_token(tokens);
  for (const auto& doc : idx.corpus_.docs()) {
    for (const auto& sent : doc.sentences) {
      for (std::size_t p = 0; p < sent.tokens.size(); ++p) {
        auto& ids = per_token[sent.first_token + p];
        for (const auto& f : extract(sent, p, cfg, clusters)) {
          auto [it, inserted] = provisional.emplace(f, static_cast<FeatureId>(provisional.size()));
          ids.push_back(it->second);
        }
      }
    }
  }

  std::vector<std::pair<std::string, FeatureId>> names(provisional.begin(), provisional.end());
  provisional = {};
  std::sort(names.begin(), names.end());
  std::vector<FeatureId> remap(names.size());
  idx.lexicon_.reserve(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    remap[names[i].second] = static_cast<FeatureId>(i);
    idx.lexicon_.push_back(std::move(names[i].first));
  }

  idx.forward_offsets_.assign(1, 0);
  idx.forward_offsets_.reserve(tokens + 1);
  std::vector<std::uint64_t> counts(idx.lexicon_.size(), 0);
  for (auto& ids : per_token) {
    for (auto& id : ids) id = remap[id];
    std::sort(ids.begin(), ids.end());
    for (const auto id : ids) ++counts[id];
    idx.forward_.insert(idx.forward_.end(), ids.begin(), ids.end());
    idx.forward_offsets_.push_back(idx.forward_.size());
    ids = {};
  }

  idx.postings_offsets_.assign(idx.lexicon_.size() + 1, 0);
  for (std::size_t f = 0; f < counts.size(); ++f) {
    idx.postings_offsets_[f + 1] = idx.postings_offsets_[f] + counts[f];
  }
  idx.postings_.resize(idx.forward_.size());
  std::vector<std::uint64_t> cursor(idx.postings_offsets_.begin(), idx.postings_offsets_.end() - 1);
  for (TokenId t = 0; t < tokens; ++t) {
    for (auto i = idx.forward_offsets_[t]; i < idx.forward_offsets_[t + 1]; ++i) {
      idx.postings_[cursor[idx.forward_[i]]++] = t;
    }
  }

  idx.manifest_.corpus_checksum = corpus_checksum(idx.corpus_);
  idx.manifest_.features = cfg;
  idx.finish_load();
  return idx;
}

FeatureIndex FeatureIndex::build(Corpus corpus, const FeatureConfig& cfg,
                                 const ClusterMap* clusters, const fs::path& out_dir) {
  auto idx = build(std::move(corpus), cfg, clusters);
  idx.save(out_dir);
  return idx;
}

void FeatureIndex::finish_load() {
  token_sentence_.assign(corpus_.token_count(), 0);
  for (const auto& doc : corpus_.docs()) {
    for (const auto& sent : doc.sentences) {
      std::fill_n(token_sentence_.begin() + sent.first_token, sent.tokens.size(),
                  sent.sentence_id);
    }
  }
  lexicon_lookup_.clear();
  lexicon_lookup_.reserve(lexicon_.size());
  for (std::size_t i = 0; i < lexicon_.size(); ++i) {
    lexicon_lookup_.emplace(lexicon_[i], static_cast<FeatureId>(i));
  }
  manifest_.docs = corpus_.docs().size();
  manifest_.sentences = corpus_.sentence_count();
  manifest_.tokens = corpus_.token_count();
  manifest_.lexicon = lexicon_.size();
  manifest_.postings = postings_.size();
}

void FeatureIndex::save(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));

  write_atomically(dir / kCorpusFile, [&](std::ostream& out) { write_conll(out, corpus_); });
  write_atomically(dir / kLexiconFile, [&](std::ostream& out) {
    for (const auto& f : lexicon_) out << f << '\n';
  });
  write_lists(dir / kPostingsFile, kPostingsMagic, postings_offsets_, postings_);
  write_lists(dir / kForwardFile, kForwardMagic, forward_offsets_, forward_);
  // Manifest last: its presence marks a complete index.
  write_atomically(dir / kManifestFile,
                   [&](std::ostream& out) { out << manifest_to_json(manifest_).dump(2) << '\n'; });
}

FeatureIndex FeatureIndex::open(const fs::path& dir, bool verify) {
  const fs::path manifest_path = dir / kManifestFile;
  std::ifstream mf(manifest_path);
  if (!mf) throw IoError(fmt::format("no index at {} (missing {})", dir.string(), kManifestFile));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string(), 0, e.what());
  }

  FeatureIndex idx;
  const IndexManifest expected = manifest_from_json(j, manifest_path);
  idx.corpus_ = read_conll(dir / kCorpusFile);
  if (corpus_checksum(idx.corpus_) != expected.corpus_checksum) {
    throw Error(fmt::format("{}: corpus checksum does not match manifest", dir.string()));
  }
  if (idx.corpus_.token_count() != expected.tokens) {
    throw Error(fmt::format("{}: token count does not match manifest", dir.string()));
  }

  std::ifstream lex(dir / kLexiconFile, std::ios::binary);
  if (!lex) throw IoError(fmt::format("cannot open {}", (dir / kLexiconFile).string()));
  std::string line;
  while (std::getline(lex, line)) idx.lexicon_.push_back(line);
  if (idx.lexicon_.size() != expected.lexicon) {
    throw Error(fmt::format("{}: lexicon size does not match manifest", dir.string()));
  }
  read_lists(dir / kPostingsFile, kPostingsMagic, expected.lexicon, idx.postings_offsets_,
             idx.postings_);
  read_lists(dir / kForwardFile, kForwardMagic, expected.tokens, idx.forward_offsets_,
             idx.forward_);
  if (idx.postings_.size() != expected.postings || idx.forward_.size() != expected.postings) {
    throw Error(fmt::format("{}: posting count does not match manifest", dir.string()));
  }
  idx.manifest_ = expected;
  idx.finish_load();
  if (verify) idx.verify();
  return idx;
}

std::optional<FeatureId> FeatureIndex::lookup(std::string_view feature) const {
  auto it = lexicon_lookup_.find(feature);
  if (it == lexicon_lookup_.end()) return std::nullopt;
  return it->second;
}

std::span<const TokenId> FeatureIndex::postings(FeatureId id) const {
  const auto b = postings_offsets_[id];
  const auto e = postings_offsets_[id + 1];
  return {postings_.data() + b, static_cast<std::size_t>(e - b)};
}

std::span<const FeatureId> FeatureIndex::forward(TokenId id) const {
  const auto b = forward_offsets_[id];
  const auto e = forward_offsets_[id + 1];
  return {forward_.data() + b, static_cast<std::size_t>(e - b)};
}

FeatureVector FeatureIndex::features_of(TokenId id) const {
  std::vector<std::string> names;
  for (const auto f : forward(id)) names.push_back(lexicon_[f]);
  return FeatureVector(std::move(names));
}

TokenOccurrence FeatureIndex::occurrence(TokenId id) const {
  const SentenceId s = token_sentence_.at(id);
  const Sentence& sent = corpus_.sentence(s);
  const auto pos = id - sent.first_token;
  return {id, s, corpus_.doc_index(s), pos, sent.tokens[pos].surface};
}

void FeatureIndex::verify() const {
  if (!std::is_sorted(lexicon_.begin(), lexicon_.end()) ||
      std::adjacent_find(lexicon_.begin(), lexicon_.end()) != lexicon_.end()) {
    throw Error("index integrity: lexicon is not strictly sorted");
  }
  const std::size_t tokens = token_count();
  std::vector<std::uint64_t> cursor(postings_offsets_.begin(), postings_offsets_.end() - 1);
  for (TokenId t = 0; t < tokens; ++t) {
    const auto fwd = forward(t);
    for (std::size_t i = 0; i < fwd.size(); ++i) {
      const FeatureId f = fwd[i];
      if (f >= lexicon_.size() || (i > 0 && fwd[i - 1] >= f)) {
        throw Error(fmt::format("index integrity: forward list of token {} is not sorted", t));
      }
      // Tokens are visited in ascending order, so each posting list must
      // yield exactly this token next.
      if (cursor[f] >= postings_offsets_[f + 1] || postings_[cursor[f]] != t) {
        throw Error(fmt::format("index integrity: token {} missing from postings of '{}'", t,
                                lexicon_[f]));
      }
      ++cursor[f];
    }
  }
  for (std::size_t f = 0; f < lexicon_.size(); ++f) {
    if (cursor[f] != postings_offsets_[f + 1]) {
      throw Error(fmt::format("index integrity: postings of '{}' hold tokens absent from the "
                              "forward index",
                              lexicon_[f]));
    }
  }
}

// ---------------------------------------------------------------------------
// Scoring

ResolvedQuery resolve(const FeatureIndex& index, const QueryModel& query) {
  ResolvedQuery q;
  q.terms.reserve(query.size());
  for (const auto& [feature, w] : query.weights()) {
    if (auto id = index.lookup(feature)) q.terms.emplace_back(*id, w);
  }
  std::sort(q.terms.begin(), q.terms.end());
  return q;
}

std::vector<ScoredToken> score_topk(const FeatureIndex& index, const QueryModel& query,
                                    std::size_t k, const SentenceSet& exclude) {
  if (k < 1) throw Error("score_topk: k must be >= 1");
  const auto q = resolve(index, query);
  auto& acc = thread_accumulator();
  accumulate(index, q, acc);
  // Bounded heap whose front is the worst kept candidate.
  std::vector<ScoredToken> heap;
  heap.reserve(std::min(k, acc.touched.size()) + 1);
  for (const TokenId t : acc.touched) {
    const ScoredToken cand{t, acc.score[t]};
    if (heap.size() == k && !ranks_before(cand, heap.front())) continue;
    if (!exclude.empty() && exclude.contains(index.sentence_of(t))) continue;
    heap.push_back(cand);
    std::push_heap(heap.begin(), heap.end(), ranks_before);
    if (heap.size() > k) {
      std::pop_heap(heap.begin(), heap.end(), ranks_before);
      heap.pop_back();
    }
  }
  std::sort(heap.begin(), heap.end(), ranks_before);

  // Tokens matching no query feature score 0. They only matter when fewer
  // than k candidates score above 0; then merge them in token id order.
  const auto positive = static_cast<std::size_t>(
      std::find_if(heap.begin(), heap.end(), [](const ScoredToken& st) { return !(st.score > 0.0); }) -
      heap.begin());
  if (heap.size() < k || positive < k) {
    std::vector<ScoredToken> zeros;
    const std::size_t need = k - positive;
    for (TokenId t = 0; t < index.token_count() && zeros.size() < need; ++t) {
      if (acc.seen[t]) continue;
      if (!exclude.empty() && exclude.contains(index.sentence_of(t))) continue;
      zeros.push_back({t, 0.0});
    }
    std::vector<ScoredToken> merged(heap.begin(), heap.begin() + static_cast<std::ptrdiff_t>(positive));
    std::merge(heap.begin() + static_cast<std::ptrdiff_t>(positive), heap.end(), zeros.begin(), zeros.end(),
               std::back_inserter(merged), ranks_before);
    if (merged.size() > k) merged.resize(k);
    heap = std::move(merged);
  }
  acc.reset();
  return heap;
}

std::vector<ScoredToken> score_candidates(const FeatureIndex& index, const QueryModel& query,
                                          const SentenceSet& exclude) {
  const auto q = resolve(index, query);
  if (q.terms.empty()) return {};
  auto& acc = thread_accumulator();
  accumulate(index, q, acc);
  auto out = collect(index, acc, exclude);
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

std::vector<double> score_dense(const FeatureIndex& index, const QueryModel& query) {
  std::vector<double> dense(index.token_count(), 0.0);
  const auto q = resolve(index, query);
  for (const auto& [fid, w] : q.terms) {
    for (const TokenId t : index.postings(fid)) dense[t] += w;
  }
  return dense;
}

std::vector<ScoredToken> score_all_bruteforce(const FeatureIndex& index, const QueryModel& query) {
  std::vector<double> weight(index.feature_count(), 0.0);
  std::vector<std::uint8_t> present(index.feature_count(), 0);
  for (const auto& [fid, w] : resolve(index, query).terms) {
    weight[fid] = w;
    present[fid] = 1;
  }
  std::vector<ScoredToken> out(index.token_count());
  for (TokenId t = 0; t < index.token_count(); ++t) {
    double s = 0.0;
    for (const FeatureId f : index.forward(t)) {
      if (present[f]) s += weight[f];
    }
    out[t] = {t, s};
  }
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

std::vector<ScoredToken> rank_all(const FeatureIndex& index, const QueryModel& query,
                                  const SentenceSet& exclude) {
  const auto dense = score_dense(index, query);
  std::vector<ScoredToken> out;
  out.reserve(dense.size());
  for (TokenId t = 0; t < dense.size(); ++t) {
    if (exclude.empty() || !exclude.contains(index.sentence_of(t))) out.push_back({t, dense[t]});
  }
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

std::vector<SentenceScore> sentence_rank(const FeatureIndex& index, const QueryModel& query,
                                         std::size_t n, const SentenceSet& exclude) {
  if (n < 1) throw Error("sentence_rank: n must be >= 1");
  const auto dense = score_dense(index, query);
  const Corpus& corpus = index.corpus();
  std::vector<SentenceScore> out;
  for (SentenceId s = 0; s < corpus.sentence_count(); ++s) {
    if (exclude.contains(s)) continue;
    const Sentence& sent = corpus.sentence(s);
    SentenceScore best{s, sent.first_token, dense[sent.first_token]};
    for (TokenId t = sent.first_token + 1; t < sent.end_token(); ++t) {
      if (dense[t] > best.score) best = {s, t, dense[t]};
    }
    out.push_back(best);
  }
  auto before = [](const SentenceScore& a, const SentenceScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.sentence_id < b.sentence_id;
  };
  if (out.size() > n) {
    std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), out.end(), before);
    out.resize(n);
  } else {
    std::sort(out.begin(), out.end(), before);
  }
  return out;
}

}  // namespace nes
