#include <doctest.h>

// Project headers (Eigen) must precede httplib: it drags in resolv.h,
// whose _res macro breaks any Eigen header parsed after it.
#include "naveval/adapters.hpp"
#include "naveval/engine.hpp"
#include "testutil.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace naveval;
using namespace testutil;
using nlohmann::json;

namespace {

Scene fixture_grid8() {
  return load_scene(std::string(NAVEVAL_TEST_DATA) + "/scene_grid8.json");
}

// Local text-generation stub. The handler runs under the server mutex-free
// threadpool; keep state atomic or guarded.
class StubServer {
 public:
  using Handler = std::function<void(const httplib::Request&,
                                     httplib::Response&)>;

  explicit StubServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/generate",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   ++hits_;
                   handler_(req, res);
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_);
  }
  int hits() const { return hits_.load(); }

 private:
  httplib::Server server_;
  Handler handler_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
};

EndpointConfig endpoint_for(const StubServer& server) {
  EndpointConfig config;
  config.base_url = server.url();
  config.model = "stub-model";
  config.timeout_s = 5.0;
  config.max_retries = 2;
  config.backoff_base_ms = 1;
  return config;
}

void reply_text(httplib::Response& res, const std::string& text,
                bool truncated = false) {
  json body{{"text", text}};
  if (truncated) {
    body["truncated"] = true;
  }
  res.set_content(body.dump(), "application/json");
}

}  // namespace

TEST_SUITE("adapters") {

TEST_CASE("oracle policy follows the path and refuses to improvise") {
  const Scene scene = fixture_grid8();
  auto episodes =
      load_episodes(std::string(NAVEVAL_TEST_DATA) + "/episodes_grid8.json");
  Episode ep = episodes.at(0);
  validate_episode(scene, ep);
  OraclePolicy policy(scene, ep);

  Observation obs;
  obs.at = "g0";
  obs.candidates = scene.navigable_from("g0");
  History history;
  PromptBundle prompt;
  const PolicyDecision d0 = policy.act(prompt, obs, history);
  CHECK(d0.action == Action::go_to("g1"));
  CHECK(d0.raw_output == "g1");

  obs.at = "somewhere_else";  // drifted off the path
  CHECK_THROWS_AS(policy.act(prompt, obs, history), std::logic_error);
}

TEST_CASE("oracle policy rejects episodes from another scene") {
  const Scene scene = fixture_grid8();
  Episode ep;
  ep.id = "alien";
  ep.scene_id = "elsewhere";
  ep.gt_path = {"g0"};
  CHECK_THROWS_AS(OraclePolicy(scene, ep), std::invalid_argument);
}

TEST_CASE("greedy policy matches an independent greedy walk") {
  const Scene trap =
      load_scene(std::string(NAVEVAL_TEST_DATA) + "/scene_trap.json");

  // independent simulation of the documented rule
  std::vector<std::string> want{"s"};
  while (true) {
    const std::string& at = want.back();
    const auto d_here = trap.geodesic(at, "g");
    if (!d_here || *d_here <= 3.0) {
      break;
    }
    const auto& nb = trap.navigable_from(at);
    std::string best;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& c : nb) {
      const auto d = trap.geodesic(c, "g");
      if (d && *d < best_d) {
        best_d = *d;
        best = c;
      }
    }
    if (best.empty()) {
      break;
    }
    want.push_back(best);
  }
  CHECK(want == std::vector<std::string>{"s", "a", "g"});  // the trap route

  Episode ep;
  ep.id = "ep_trap_greedy";
  ep.scene_id = "trap";
  ep.start = "s";
  ep.goal = "g";
  ep.instruction = "Reach the far platform.";
  ep.gt_path = {"s", "b", "g"};
  validate_episode(trap, ep);

  GreedyPolicy policy(trap, "g", 3.0);
  NullBeliefSource belief;
  const Trajectory traj = run_episode(trap, ep, policy, belief, {});
  CHECK(traj.visited == want);
  CHECK(traj.terminal == Terminal::StoppedByPolicy);

  const EpisodeResult r = make_result(trap, ep, traj, 3.0);
  const std::vector<EpisodeResult> rs{r};
  const double expect = 11.0 / (std::sqrt(109.0) + std::sqrt(10.0));
  CHECK(spl(rs) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("greedy policy stops when the goal is unreachable") {
  std::vector<Viewpoint> vps(3);
  vps[0] = {"p0", Eigen::Vector3d(0, 0, 0), {}};
  vps[1] = {"p1", Eigen::Vector3d(1, 0, 0), {}};
  vps[2] = {"lost", Eigen::Vector3d(9, 9, 0), {}};
  const Scene scene("cut", vps, {{"p0", "p1"}, {"p1", "p0"}});
  GreedyPolicy policy(scene, "lost", 3.0);
  Observation obs;
  obs.at = "p0";
  obs.candidates = scene.navigable_from("p0");
  const PolicyDecision d = policy.act({}, obs, {});
  CHECK(d.action.is_stop());
}

TEST_CASE("random policy is seed deterministic and always legal") {
  const Scene scene = fixture_grid8();
  auto roll = [&](std::uint64_t seed) {
    RandomPolicy policy(seed);
    std::vector<std::string> outs;
    Observation obs;
    History history;
    for (const auto& vp : scene.viewpoints()) {
      obs.at = vp.id;
      obs.candidates = scene.navigable_from(vp.id);
      const PolicyDecision d = policy.act({}, obs, history);
      if (d.action.is_stop()) {
        outs.push_back("stop");
      } else {
        CHECK(std::find(obs.candidates.begin(), obs.candidates.end(),
                        d.action.target) != obs.candidates.end());
        outs.push_back(d.action.target);
      }
    }
    return outs;
  };
  CHECK(roll(7) == roll(7));
  CHECK(roll(7) != roll(8));
}

TEST_CASE("scripted belief book resolves per episode scripts") {
  const auto book = load_scripted_beliefs(std::string(NAVEVAL_TEST_DATA) +
                                          "/scripted_beliefs.json");
  const auto special = book.script_for("ep_grid_corner");
  CHECK(special.at(0) == "A long corridor with a table at the far end.");
  CHECK(special.at(1) == "The table is two steps ahead, past the shelf.");
  const auto fallback = book.script_for("unknown_episode");
  CHECK(fallback.at(0) ==
        "A bathroom with blue and white tiles on the walls.");

  ScriptedBeliefSource source(fallback);
  BeliefQuery query;
  query.step = 0;
  CHECK(source.describe(query).text ==
        "A bathroom with blue and white tiles on the walls.");
  query.step = 3;
  CHECK(source.describe(query).text.empty());
}

TEST_CASE("remote client sends the documented wire payload") {
  std::string seen_body;
  std::string seen_auth;
  std::mutex mu;
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard<std::mutex> lock(mu);
    seen_body = req.body;
    seen_auth = req.get_header_value("Authorization");
    reply_text(res, "go to g1");
  });

  EndpointConfig config = endpoint_for(server);
  config.auth_token_env = "NAVEVAL_TEST_TOKEN";
  ::setenv("NAVEVAL_TEST_TOKEN", "sesame", 1);
  RemoteClient client(config);
  const GenResult out =
      client.generate("Pick a direction.", GenerationParams::nav_defaults());
  ::unsetenv("NAVEVAL_TEST_TOKEN");

  CHECK(out.text == "go to g1");
  CHECK_FALSE(out.truncated);
  CHECK(out.stats.attempts == 1);
  CHECK(out.stats.prompt_tokens == 3);
  CHECK(out.stats.completion_tokens == 3);

  const auto body = json::parse(seen_body);
  CHECK(body.at("model") == "stub-model");
  CHECK(body.at("prompt") == "Pick a direction.");
  CHECK(body.at("max_new_tokens") == 20);
  CHECK(body.at("top_p").get<double>() == doctest::Approx(0.95));
  CHECK(body.at("temperature").get<double>() == doctest::Approx(0.1));
  CHECK(body.at("do_sample") == true);
  CHECK(seen_auth == "Bearer sesame");
}

TEST_CASE("belief decoding defaults differ from navigation defaults") {
  std::string seen_body;
  std::mutex mu;
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard<std::mutex> lock(mu);
    seen_body = req.body;
    reply_text(res, "A tiled bathroom.");
  });
  RemoteClient client(endpoint_for(server));
  client.generate("Describe.", GenerationParams::belief_defaults());
  const auto body = json::parse(seen_body);
  CHECK(body.at("max_new_tokens") == 64);
  CHECK(body.at("temperature").get<double>() == doctest::Approx(0.2));
}

TEST_CASE("transient failures are retried until the budget runs out") {
  SUBCASE("two failures then success uses three attempts") {
    std::atomic<int> calls{0};
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
      if (++calls <= 2) {
        res.status = 503;
        res.set_content("overloaded", "text/plain");
        return;
      }
      reply_text(res, "recovered");
    });
    EndpointConfig config = endpoint_for(server);
    config.max_retries = 3;
    RemoteClient client(config);
    const GenResult out =
        client.generate("x", GenerationParams::nav_defaults());
    CHECK(out.text == "recovered");
    CHECK(out.stats.attempts == 3);
    CHECK(server.hits() == 3);
  }
  SUBCASE("persistent 500s exhaust exactly max_retries plus one attempts") {
    StubServer server([](const httplib::Request&, httplib::Response& res) {
      res.status = 500;
      res.set_content("boom", "text/plain");
    });
    EndpointConfig config = endpoint_for(server);
    config.max_retries = 2;
    RemoteClient client(config);
    try {
      client.generate("x", GenerationParams::nav_defaults());
      FAIL("expected RemoteError");
    } catch (const RemoteError& e) {
      CHECK(e.kind() == RemoteErrorKind::HttpStatus);
      CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
    }
    CHECK(server.hits() == 3);
  }
  SUBCASE("client errors fail immediately") {
    StubServer server([](const httplib::Request&, httplib::Response& res) {
      res.status = 404;
      res.set_content("no such model", "text/plain");
    });
    RemoteClient client(endpoint_for(server));
    CHECK_THROWS_AS(client.generate("x", GenerationParams::nav_defaults()),
                    RemoteError);
    CHECK(server.hits() == 1);
  }
  SUBCASE("malformed bodies fail immediately") {
    StubServer server([](const httplib::Request&, httplib::Response& res) {
      res.set_content("not json at all", "application/json");
    });
    RemoteClient client(endpoint_for(server));
    try {
      client.generate("x", GenerationParams::nav_defaults());
      FAIL("expected RemoteError");
    } catch (const RemoteError& e) {
      CHECK(e.kind() == RemoteErrorKind::MalformedBody);
    }
    CHECK(server.hits() == 1);
  }
  SUBCASE("connection refusal surfaces as a transport error") {
    EndpointConfig config;
    config.base_url = "http://127.0.0.1:1";  // nothing listens there
    config.model = "stub";
    config.max_retries = 1;
    config.backoff_base_ms = 1;
    config.timeout_s = 1.0;
    RemoteClient client(config);
    CHECK_THROWS_AS(client.generate("x", GenerationParams::nav_defaults()),
                    TransportError);
  }
}

TEST_CASE("truncated replies carry the flag through") {
  StubServer server([](const httplib::Request&, httplib::Response& res) {
    reply_text(res, "cut off mid", true);
  });
  RemoteClient client(endpoint_for(server));
  const GenResult out =
      client.generate("x", GenerationParams::belief_defaults());
  CHECK(out.truncated);
}

TEST_CASE("remote policy turns model text into candidate actions") {
  StubServer server([](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    const std::string prompt = body.at("prompt").get<std::string>();
    if (prompt.find("Instruction: go") != std::string::npos) {
      reply_text(res, "I choose option 2");
    } else {
      reply_text(res, "mumble mumble");
    }
  });
  auto client = std::make_shared<RemoteClient>(endpoint_for(server));
  RemotePolicy policy(client);

  Observation obs;
  obs.at = "g0";
  obs.candidates = {"g1", "g4"};
  BeliefHypothesis hyp;
  const PromptBundle parse_ok = fmt(hyp, "go", "Candidate 1: g1; Candidate 2: g4",
                                    "None", TaskKind::VLN);
  const PolicyDecision good = policy.act(parse_ok, obs, {});
  CHECK(good.action == Action::go_to("g4"));
  CHECK_FALSE(good.parse_failed);

  const PromptBundle parse_bad =
      fmt(hyp, "other", "Candidate 1: g1", "None", TaskKind::VLN);
  const PolicyDecision bad = policy.act(parse_bad, obs, {});
  CHECK(bad.action.is_stop());
  CHECK(bad.parse_failed);
  CHECK(bad.raw_output == "mumble mumble");

  Observation cornered;
  cornered.at = "alone";
  const PolicyDecision forced = policy.act(parse_ok, cornered, {});
  CHECK(forced.action.is_stop());
  CHECK_FALSE(forced.parse_failed);
}

TEST_CASE("remote belief source wants clouds and relays hypotheses") {
  StubServer server([](const httplib::Request&, httplib::Response& res) {
    reply_text(res, "A kitchen with a long table.", true);
  });
  auto client = std::make_shared<RemoteClient>(endpoint_for(server));
  RemoteBeliefSource source(client);
  CHECK(source.wants_cloud());

  const PromptBundle request = build_3d_request(TaskKind::VLN, "");
  PointCloud cloud;
  cloud.append({0, 0, 0}, {1, 1, 1});
  BeliefQuery query;
  query.request = &request;
  query.cloud = &cloud;
  query.step = 2;
  const BeliefHypothesis hyp = source.describe(query);
  CHECK(hyp.text == "A kitchen with a long table.");
  CHECK(hyp.source_step == 2);
  CHECK(hyp.truncated);
}

TEST_CASE("endpoint and generation parameter validation") {
  EndpointConfig config;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);  // no url
  config.base_url = "http://127.0.0.1:9";
  CHECK_NOTHROW(config.validate());
  config.max_retries = -1;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);

  GenerationParams params;
  CHECK_NOTHROW(params.validate());
  params.top_p = 1.5;
  CHECK_THROWS_AS(params.validate(), std::invalid_argument);
  params = GenerationParams::nav_defaults();
  params.max_new_tokens = 0;
  CHECK_THROWS_AS(params.validate(), std::invalid_argument);
}

}  // TEST_SUITE
