#include "nes/server.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "nes/error.hpp"
#include "nes/index.hpp"
#include "nes/session.hpp"

namespace nes {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct ApiSession {
  std::string index_id;
  std::string created_at;
  Session session;
  std::mutex mu;

  ApiSession(std::string idx, std::string created, Session s)
      : index_id(std::move(idx)), created_at(std::move(created)), session(std::move(s)) {}
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, {{"error", message}});
}

std::string sentence_text(const Sentence& s) {
  std::string out;
  for (const auto& t : s.tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t.surface;
  }
  return out;
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", tmp.string()));
    out << content;
    if (!out.flush()) throw IoError(fmt::format("cannot write {}", tmp.string()));
  }
  fs::rename(tmp, path);
}

}  // namespace

struct Server::Impl {
  ServerOptions options;
  fs::path state_dir;
  std::map<std::string, std::unique_ptr<FeatureIndex>> indexes;
  std::map<std::string, std::shared_ptr<ApiSession>> sessions;
  mutable std::mutex mu;
  std::mt19937_64 id_rng{std::random_device{}()};
  httplib::Server http;
  std::atomic<bool> bound{false};

  explicit Impl(ServerOptions opts) : options(std::move(opts)) {
    load_indexes();
    state_dir = options.state_dir.value_or(options.index_dir / "sessions");
    fs::create_directories(state_dir);
    load_sessions();
    routes();
  }

  void load_indexes() {
    const auto& dir = options.index_dir;
    if (!fs::is_directory(dir)) throw ConfigError(fmt::format("serve.index_dir: {} is not a directory", dir.string()));
    if (fs::exists(dir / "manifest.json")) {
      indexes.emplace(fs::absolute(dir).filename().string(),
                      std::make_unique<FeatureIndex>(FeatureIndex::open(dir)));
      return;
    }
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_directory() && fs::exists(e.path() / "manifest.json")) subdirs.push_back(e.path());
    }
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& p : subdirs) {
      indexes.emplace(p.filename().string(), std::make_unique<FeatureIndex>(FeatureIndex::open(p)));
    }
    if (indexes.empty()) throw ConfigError(fmt::format("serve.index_dir: no index under {}", dir.string()));
  }

  void load_sessions() {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(state_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
      std::ifstream in(path);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw ParseError(path.string(), 0, e.what());
      }
      const auto index_id = j.at("index_id").get<std::string>();
      auto it = indexes.find(index_id);
      if (it == indexes.end()) {
        throw ConfigError(fmt::format("session {} refers to unknown index '{}'", path.string(), index_id));
      }
      auto s = std::make_shared<ApiSession>(index_id, j.at("created_at").get<std::string>(),
                                            Session::from_json(*it->second, j.at("session")));
      sessions.emplace(s->session.id(), std::move(s));
    }
  }

  void persist(const ApiSession& s) const {
    const json j{{"format", "nes-api-session"},
                 {"version", kApiSchemaVersion},
                 {"index_id", s.index_id},
                 {"created_at", s.created_at},
                 {"session", s.session.to_json()}};
    write_atomic(state_dir / (s.session.id() + ".json"), j.dump(1));
  }

  std::string fresh_id() {
    for (;;) {
      auto id = fmt::format("s{:012x}", id_rng() & 0xFFFFFFFFFFFFULL);
      if (!sessions.contains(id)) return id;
    }
  }

  std::shared_ptr<ApiSession> find(const std::string& id) const {
    std::lock_guard lock(mu);
    auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : it->second;
  }

  json summary(const ApiSession& s) const {
    const auto& sess = s.session;
    return {{"session_id", sess.id()},
            {"index_id", s.index_id},
            {"created_at", s.created_at},
            {"class_name", sess.config().class_name},
            {"strategy", to_string(sess.config().strategy)},
            {"round", sess.round()},
            {"labeled_tokens", sess.labeled_token_count()},
            {"model_size", sess.model() ? sess.model()->size() : 0},
            {"pending", sess.last_served() ? json(*sess.last_served()) : json()},
            {"complete", sess.complete()}};
  }

  // Runs `fn` with the session locked; 404 when it does not exist.
  template <typename Fn>
  void with_session(const httplib::Request& req, httplib::Response& res, Fn&& fn) {
    auto s = find(req.matches[1]);
    if (!s) return fail(res, 404, fmt::format("unknown session '{}'", std::string(req.matches[1])));
    std::lock_guard lock(s->mu);
    try {
      fn(*s);
    } catch (const StateError& e) {
      fail(res, 409, e.what());
    } catch (const InvalidInput& e) {
      fail(res, 400, e.what());
    }
  }

  void create_session(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return fail(res, 400, "request body is not valid JSON");
    }
    if (!body.is_object()) return fail(res, 400, "request body must be a JSON object");
    auto str = [&](const char* key) -> std::optional<std::string> {
      if (!body.contains(key) || !body[key].is_string()) return std::nullopt;
      return body[key].get<std::string>();
    };
    const auto index_id = str("index_id");
    if (!index_id) return fail(res, 400, "index_id is required");
    auto idx = indexes.find(*index_id);
    if (idx == indexes.end()) return fail(res, 404, fmt::format("unknown index '{}'", *index_id));
    const auto class_name = str("class_name");
    if (!class_name || class_name->empty()) return fail(res, 400, "class_name is required");
    const auto strategy = parse_strategy(str("strategy").value_or("interactive"));
    if (!strategy) return fail(res, 400, "strategy must be one of interactive, docrank, random_pool, unsure");
    const auto seed_query = str("seed_query");
    SessionConfig cfg;
    cfg.class_name = *class_name;
    cfg.strategy = *strategy;
    cfg.seed_rule = SeedRule::from_query(seed_query.value_or(""));
    if (cfg.seed_rule.empty()) return fail(res, 400, "seed_query with at least one term is required");
    try {
      if (body.contains("seed")) cfg.seed = body.at("seed").get<std::uint64_t>();
      if (body.contains("prune_to") && !body["prune_to"].is_null()) {
        cfg.prune_to = body.at("prune_to").get<std::size_t>();
      }
      if (body.contains("retrain_every")) cfg.retrain_every = body.at("retrain_every").get<std::size_t>();
      if (body.contains("pool_docs")) cfg.pool_docs = body.at("pool_docs").get<std::vector<std::string>>();
      if (body.contains("pool_only")) cfg.pool_only = body.at("pool_only").get<bool>();
    } catch (const json::exception& e) {
      return fail(res, 400, e.what());
    }

    std::shared_ptr<ApiSession> s;
    try {
      std::lock_guard lock(mu);
      const auto id = fresh_id();
      s = std::make_shared<ApiSession>(*index_id, utc_now(), Session(*idx->second, std::move(cfg), id));
      persist(*s);
      sessions.emplace(id, s);
    } catch (const ConfigError& e) {
      return fail(res, 400, e.what());
    }
    reply(res, 201, summary(*s));
  }

  void next(ApiSession& s, httplib::Response& res) {
    auto& sess = s.session;
    if (sess.last_served()) {
      return fail(res, 409, fmt::format("sentence {} is pending labels", *sess.last_served()));
    }
    ServedSentence served;
    try {
      served = sess.next_sentence();
    } catch (const SessionComplete&) {
      res.status = 204;
      return;
    }
    persist(s);
    const Corpus& corpus = sess.index().corpus();
    const Sentence& sent = corpus.sentence(served.sentence_id);
    const auto& doc = corpus.document_of(served.sentence_id);
    json tokens = json::array();
    for (std::size_t i = 0; i < sent.tokens.size(); ++i) {
      tokens.push_back({{"surface", sent.tokens[i].surface}, {"score", served.token_scores[i]}});
    }
    json before = json::array();
    json after = json::array();
    const auto first = doc.sentences.front().sentence_id;
    const auto last = doc.sentences.back().sentence_id;
    if (served.sentence_id > first) before.push_back(sentence_text(corpus.sentence(served.sentence_id - 1)));
    if (served.sentence_id < last) after.push_back(sentence_text(corpus.sentence(served.sentence_id + 1)));
    reply(res, 200,
          {{"sentence_id", served.sentence_id},
           {"round", sess.round()},
           {"tokens", std::move(tokens)},
           {"context", {{"doc_id", doc.doc_id}, {"before", before}, {"after", after}}}});
  }

  void labels(ApiSession& s, const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return fail(res, 400, "request body is not valid JSON");
    }
    SentenceId sid = 0;
    std::vector<bool> labels;
    try {
      sid = body.at("sentence_id").get<SentenceId>();
      for (const auto& v : body.at("labels")) {
        if (!v.is_boolean() && !v.is_number_integer()) throw InvalidInput("labels must be booleans");
        labels.push_back(v.is_boolean() ? v.get<bool>() : v.get<int>() != 0);
      }
    } catch (const json::exception&) {
      return fail(res, 400, "body must hold sentence_id and labels");
    }
    auto& sess = s.session;
    if (!sess.last_served() || *sess.last_served() != sid) {
      return fail(res, 409, sess.last_served()
                                ? fmt::format("sentence {} is pending, not {}", *sess.last_served(), sid)
                                : fmt::format("no sentence is pending; {} was not served", sid));
    }
    sess.submit_labels(sid, labels);
    persist(s);
    reply(res, 200,
          {{"round", sess.round()},
           {"model_size", sess.model() ? sess.model()->size() : 0},
           {"top_entities", sess.ranking_model() ? sess.entity_list(10) : std::vector<std::string>{}}});
  }

  void entities(ApiSession& s, const httplib::Request& req, httplib::Response& res) {
    std::size_t limit = 20;
    if (req.has_param("limit")) {
      const auto raw = req.get_param_value("limit");
      std::size_t parsed = 0;
      const auto* end = raw.data() + raw.size();
      auto [ptr, ec] = std::from_chars(raw.data(), end, parsed);
      if (ec != std::errc() || ptr != end) return fail(res, 400, "limit must be a non-negative integer");
      limit = parsed;
    }
    if (limit == 0) return fail(res, 400, "limit must be >= 1");
    if (!s.session.ranking_model()) return fail(res, 409, "no model yet");
    reply(res, 200, {{"round", s.session.round()}, {"entities", s.session.entity_list(limit)}});
  }

  void routes() {
    http.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      res.set_header(kSchemaHeader, std::to_string(kApiSchemaVersion));
      if (options.token && req.get_header_value("Authorization") != "Bearer " + *options.token) {
        fail(res, 401, "missing or wrong bearer token");
        return httplib::Server::HandlerResponse::Handled;
      }
      if (req.has_header(kSchemaHeader) &&
          req.get_header_value(kSchemaHeader) != std::to_string(kApiSchemaVersion)) {
        fail(res, 400, fmt::format("unsupported schema version; server speaks {}", kApiSchemaVersion));
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });
    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        fail(res, 500, e.what());
      } catch (...) {
        fail(res, 500, "internal error");
      }
    });

    http.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"status", "ok"}, {"schema_version", kApiSchemaVersion}});
    });
    http.Get("/indexes", [this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& [id, idx] : indexes) {
        out.push_back({{"index_id", id},
                       {"docs", idx->corpus().docs().size()},
                       {"sentences", idx->corpus().sentence_count()},
                       {"tokens", idx->token_count()},
                       {"features", idx->feature_count()}});
      }
      reply(res, 200, {{"indexes", out}});
    });
    http.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      create_session(req, res);
    });
    http.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
      std::vector<std::shared_ptr<ApiSession>> all;
      {
        std::lock_guard lock(mu);
        for (const auto& [id, s] : sessions) all.push_back(s);
      }
      json out = json::array();
      for (const auto& s : all) {
        std::lock_guard lock(s->mu);
        out.push_back(summary(*s));
      }
      reply(res, 200, {{"sessions", out}});
    });
    http.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](ApiSession& s) { reply(res, 200, summary(s)); });
    });
    http.Get(R"(/sessions/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](ApiSession& s) { next(s, res); });
    });
    http.Post(R"(/sessions/([^/]+)/labels)", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](ApiSession& s) { labels(s, req, res); });
    });
    http.Get(R"(/sessions/([^/]+)/entities)", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](ApiSession& s) { entities(s, req, res); });
    });
    http.Get(R"(/sessions/([^/]+)/model)", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](ApiSession& s) {
        if (!s.session.model()) return fail(res, 409, "no model yet");
        reply(res, 200, model_to_json(*s.session.model()));
      });
    });
    http.Get(R"(/sessions/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](ApiSession& s) {
        std::ostringstream out;
        export_conll(out, s.session);
        res.status = 200;
        res.set_content(out.str(), "text/plain; charset=utf-8");
      });
    });
  }
};

Server::Server(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  const std::size_t threads = std::max<std::size_t>(1, impl_->options.threads);
  impl_->http.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
}

Server::~Server() { stop(); }

int Server::bind() {
  if (impl_->bound) return impl_->options.port;
  auto& o = impl_->options;
  if (o.port == 0) {
    o.port = impl_->http.bind_to_any_port(o.host);
    if (o.port < 0) throw IoError(fmt::format("cannot bind {}", o.host));
  } else if (!impl_->http.bind_to_port(o.host, o.port)) {
    throw IoError(fmt::format("cannot bind {}:{}", o.host, o.port));
  }
  impl_->bound = true;
  return o.port;
}

void Server::listen() {
  bind();
  impl_->http.listen_after_bind();
}

void Server::stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

bool Server::running() const { return impl_->http.is_running(); }

std::size_t Server::index_count() const { return impl_->indexes.size(); }

std::size_t Server::session_count() const {
  std::lock_guard lock(impl_->mu);
  return impl_->sessions.size();
}

}  // namespace nes
