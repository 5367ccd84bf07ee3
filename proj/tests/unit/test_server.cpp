#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "nes/index.hpp"
#include "nes/server.hpp"
#include "nes/session.hpp"
#include "nes/synthetic.hpp"

using namespace nes;
using json = nlohmann::json;
using testing_support::TempDir;

namespace {

class Running {
 public:
  explicit Running(ServerOptions o) : server_(std::move(o)) {
    port_ = server_.bind();
    thread_ = std::thread([this] { server_.listen(); });
    for (int i = 0; i < 200 && !server_.running(); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
  ~Running() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client(const std::string& token = {}) const {
    httplib::Client c("127.0.0.1", port_);
    if (!token.empty()) c.set_bearer_token_auth(token);
    return c;
  }
  Server& server() { return server_; }

 private:
  Server server_;
  int port_ = 0;
  std::thread thread_;
};

struct Fixture {
  TempDir dir;
  std::filesystem::path index_dir = dir / "per";
  Fixture() {
    auto cfg = synthetic_bio_preset(31);
    cfg.documents = 4;
    const auto corpus = generate_synthetic(cfg);
    for (TokenId t = 0; t < corpus.token_count() && seed_term.empty(); ++t) {
      if (is_class_label(corpus.token(t).gold, "PER")) seed_term = normalize_surface(corpus.token(t).surface);
    }
    FeatureIndex::build(corpus, FeatureConfig{}, nullptr, index_dir);
  }
  std::string seed_term;
  ServerOptions options() const {
    ServerOptions o;
    o.index_dir = index_dir;
    o.state_dir = dir / "state";
    o.port = 0;
    o.threads = 2;
    return o;
  }
};

json post_json(httplib::Client& c, const std::string& path, const json& body, int expect) {
  auto r = c.Post(path, body.dump(), "application/json");
  EXPECT_TRUE(r) << path;
  if (!r) return {};
  EXPECT_EQ(r->status, expect) << path << ": " << r->body;
  return r->body.empty() ? json{} : json::parse(r->body);
}

json get_json(httplib::Client& c, const std::string& path, int expect) {
  auto r = c.Get(path);
  EXPECT_TRUE(r) << path;
  if (!r) return {};
  EXPECT_EQ(r->status, expect) << path << ": " << r->body;
  return r->body.empty() ? json{} : json::parse(r->body);
}

json create_body(const Fixture& f) {
  return {{"index_id", "per"}, {"class_name", "PER"}, {"strategy", "interactive"}, {"seed_query", f.seed_term}};
}

}  // namespace

TEST(Server, HealthIndexesAndSchemaHeader) {
  Fixture f;
  Running srv(f.options());
  EXPECT_EQ(srv.server().index_count(), 1u);
  auto c = srv.client();
  auto r = c.Get("/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value(kSchemaHeader), "1");
  const auto idx = get_json(c, "/indexes", 200);
  ASSERT_TRUE(idx.is_array() || idx.contains("indexes"));
  EXPECT_NE(idx.dump().find("\"per\""), std::string::npos);
  auto bad = c.Get("/health", {{kSchemaHeader, "7"}});
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
}

TEST(Server, CreateValidatesBody) {
  Fixture f;
  Running srv(f.options());
  auto c = srv.client();
  auto r = c.Post("/sessions", "{nope", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  auto body = create_body(f);
  body.erase("seed_query");
  post_json(c, "/sessions", body, 400);
  body = create_body(f);
  body["index_id"] = "missing";
  post_json(c, "/sessions", body, 404);
  body = create_body(f);
  body["strategy"] = "greedy";
  post_json(c, "/sessions", body, 400);
  body = create_body(f);
  body["class_name"] = "";
  post_json(c, "/sessions", body, 400);
  EXPECT_EQ(srv.server().session_count(), 0u);
  get_json(c, "/sessions/unknown", 404);
}

TEST(Server, LoopMatchesDirectModuleCalls) {
  Fixture f;
  const auto index = FeatureIndex::open(f.index_dir);
  const auto user = SimulatedUser::from_gold("PER");
  Running srv(f.options());
  auto c = srv.client();
  const auto created = post_json(c, "/sessions", create_body(f), 201);
  const std::string id = created.at("session_id");
  EXPECT_EQ(created.at("round"), 0);

  SessionConfig cfg;
  cfg.class_name = "PER";
  cfg.seed_rule = SeedRule::from_query(f.seed_term);
  Session mirror(index, cfg);

  get_json(c, "/sessions/" + id + "/entities", 409);
  for (int round = 0; round < 4; ++round) {
    const auto next = get_json(c, "/sessions/" + id + "/next", 200);
    get_json(c, "/sessions/" + id + "/next", 409);
    const auto served = mirror.next_sentence();
    ASSERT_EQ(next.at("sentence_id").get<SentenceId>(), served.sentence_id);
    ASSERT_EQ(next.at("tokens").size(), served.token_scores.size());
    for (std::size_t i = 0; i < served.token_scores.size(); ++i) {
      EXPECT_EQ(next["tokens"][i]["score"].get<double>(), served.token_scores[i]);
    }
    EXPECT_TRUE(next.at("context").contains("doc_id"));

    const auto labels = user.label(index.corpus().sentence(served.sentence_id));
    json lab = json::array();
    for (const bool b : labels) lab.push_back(b);
    post_json(c, "/sessions/" + id + "/labels", {{"sentence_id", served.sentence_id + 1}, {"labels", lab}}, 409);
    post_json(c, "/sessions/" + id + "/labels", {{"sentence_id", served.sentence_id}, {"labels", json::array()}},
              400);
    const auto after = post_json(c, "/sessions/" + id + "/labels",
                                 {{"sentence_id", served.sentence_id}, {"labels", lab}}, 200);
    mirror.submit_labels(served.sentence_id, labels);
    EXPECT_EQ(after.at("round"), round + 1);
    if (mirror.model()) {
      EXPECT_EQ(after.at("top_entities").get<std::vector<std::string>>(), mirror.entity_list(10));
      const auto ents = get_json(c, "/sessions/" + id + "/entities?limit=7", 200);
      EXPECT_EQ(ents.at("entities").get<std::vector<std::string>>(), mirror.entity_list(7));
      EXPECT_EQ(model_from_json(get_json(c, "/sessions/" + id + "/model", 200)), *mirror.model());
    }
  }
  ASSERT_TRUE(mirror.model().has_value());
  get_json(c, "/sessions/" + id + "/entities?limit=0", 400);
  get_json(c, "/sessions/" + id + "/entities?limit=abc", 400);
  post_json(c, "/sessions/" + id + "/labels", {{"sentence_id", 0}, {"labels", json::array()}}, 409);

  const auto summary = get_json(c, "/sessions/" + id, 200);
  EXPECT_EQ(summary.at("round"), 4);
  EXPECT_EQ(summary.at("labeled_tokens"), mirror.labeled_token_count());
  EXPECT_TRUE(summary.at("pending").is_null());

  auto exp = c.Get("/sessions/" + id + "/export");
  ASSERT_TRUE(exp);
  std::ostringstream direct;
  export_conll(direct, mirror);
  EXPECT_EQ(exp->body, direct.str());
  EXPECT_EQ(get_json(c, "/sessions", 200).dump().find(id) != std::string::npos, true);
}

TEST(Server, RestartResumesSessions) {
  Fixture f;
  const auto user = SimulatedUser::from_gold("PER");
  std::string id;
  SentenceId pending = 0;
  {
    Running srv(f.options());
    auto c = srv.client();
    id = post_json(c, "/sessions", create_body(f), 201).at("session_id");
    const auto next = get_json(c, "/sessions/" + id + "/next", 200);
    pending = next.at("sentence_id");
  }
  Running srv(f.options());
  EXPECT_EQ(srv.server().session_count(), 1u);
  auto c = srv.client();
  const auto summary = get_json(c, "/sessions/" + id, 200);
  EXPECT_EQ(summary.at("pending"), pending);
  get_json(c, "/sessions/" + id + "/next", 409);
  const auto index = FeatureIndex::open(f.index_dir);
  json lab = json::array();
  for (const bool b : user.label(index.corpus().sentence(pending))) lab.push_back(b);
  post_json(c, "/sessions/" + id + "/labels", {{"sentence_id", pending}, {"labels", lab}}, 200);
}

TEST(Server, BearerTokenRequiredWhenConfigured) {
  Fixture f;
  auto o = f.options();
  o.token = "s3cret";
  Running srv(o);
  auto anon = srv.client();
  auto r = anon.Get("/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 401);
  auto wrong = srv.client("nope");
  EXPECT_EQ(wrong.Get("/sessions")->status, 401);
  auto ok = srv.client("s3cret");
  EXPECT_EQ(ok.Get("/health")->status, 200);
}

TEST(Server, CompleteSessionReturnsNoContent) {
  TempDir dir;
  FeatureIndex::build(testing_support::conll("Ann _ _ B-PER\nran _ _ O\n"), FeatureConfig{}, nullptr,
                      dir / "tiny");
  ServerOptions o;
  o.index_dir = dir / "tiny";
  o.port = 0;
  Running srv(o);
  auto c = srv.client();
  const std::string id =
      post_json(c, "/sessions", {{"index_id", "tiny"}, {"class_name", "PER"}, {"seed_query", "ann"}}, 201)
          .at("session_id");
  get_json(c, "/sessions/" + id + "/next", 200);
  post_json(c, "/sessions/" + id + "/labels", {{"sentence_id", 0}, {"labels", {1, 0}}}, 200);
  auto r = c.Get("/sessions/" + id + "/next");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 204);
  EXPECT_EQ(get_json(c, "/sessions/" + id, 200).at("complete"), true);
  EXPECT_TRUE(std::filesystem::exists(dir / "tiny" / "sessions" / (id + ".json")));
}
