#include <doctest.h>

#include "amod/gateway.hpp"
#include "amod/reflection.hpp"

using namespace amod;

namespace {

PromptBundle tiny_bundle(BevVariant variant = BevVariant::Scheduling) {
  PromptBundle b;
  b.variant = variant;
  b.system_message = "system";
  b.task_message = "task";
  b.image.width = b.image.height = 4;
  b.image.rgb.assign(4 * 4 * 3, 128);
  return b;
}

}  // namespace

TEST_CASE("mock script: responses in order, then a script-exhausted error") {
  MockScript script;
  script.scheduling.push_back({"A"});
  script.scheduling.push_back({"B"});
  LmmGateway gw(GatewayConfig{}, script);
  auto b = tiny_bundle();
  CHECK(gw.query(b).response == "A");
  CHECK(gw.query(b).response == "B");
  CHECK_THROWS_AS(gw.query(b), GatewayError);
}

TEST_CASE("mock script: per-variant call indices are independent") {
  MockScript script;
  script.scheduling.push_back({"sched"});
  script.graph_evolution.push_back({"evo"});
  LmmGateway gw(GatewayConfig{}, script);
  CHECK(gw.query(tiny_bundle(BevVariant::GraphEvolution)).response == "evo");
  CHECK(gw.query(tiny_bundle(BevVariant::Scheduling)).response == "sched");
}

TEST_CASE("mock script: retry count equals injected failures + 1") {
  MockScript script;
  script.scheduling.push_back({"ok after trouble", 2});
  GatewayConfig cfg;
  cfg.max_retries = 2;
  LmmGateway gw(cfg, script);
  auto ex = gw.query(tiny_bundle());
  CHECK(ex.attempts == 3);
  CHECK(ex.response == "ok after trouble");
}

TEST_CASE("mock script: failures beyond max retries raise gateway-unavailable") {
  MockScript script;
  script.scheduling.push_back({"never delivered", 5});
  GatewayConfig cfg;
  cfg.max_retries = 2;
  LmmGateway gw(cfg, script);
  CHECK_THROWS_AS(gw.query(tiny_bundle()), GatewayError);
}

TEST_CASE("mock determinism: identical script and call sequence, identical exchanges") {
  for (int variant_round = 0; variant_round < 2; ++variant_round) {
    MockScript script;
    script.scheduling.push_back({"one"});
    script.scheduling.push_back({"two"});
    LmmGateway g1(GatewayConfig{}, script), g2(GatewayConfig{}, script);
    auto b = tiny_bundle();
    for (int i = 0; i < 2; ++i) {
      auto e1 = g1.query(b);
      auto e2 = g2.query(b);
      CHECK(e1.response == e2.response);
      CHECK(e1.prompt_hash == e2.prompt_hash);
      CHECK(e1.attempts == e2.attempts);
    }
  }
}

TEST_CASE("live mode: missing key is a configuration error before any network use") {
  GatewayConfig cfg;
  cfg.mode = GatewayMode::Live;
  cfg.api_key_env = "AMODSIM_SURELY_UNSET_KEY_VAR";
  LmmGateway gw(cfg);
  CHECK_THROWS_AS(gw.query(tiny_bundle()), GatewayConfigError);
}

TEST_CASE("exchange sink observes every query") {
  MockScript script;
  script.scheduling.push_back({"logged"});
  LmmGateway gw(GatewayConfig{}, script);
  int seen = 0;
  gw.on_exchange = [&](const LmmExchange& ex) {
    ++seen;
    CHECK(ex.response == "logged");
  };
  gw.query(tiny_bundle());
  CHECK(seen == 1);
}

TEST_CASE("parse assignment: bare, fenced and embedded blocks") {
  auto pairs = parse_structured_assignment("{\"assign\": [[3, 7]]}");
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0] == std::pair<int, int>{3, 7});

  pairs = parse_structured_assignment(
      "Here is my reasoning...\n```json\n{\"assign\": [[1, 2], [4, 5]]}\n```\nDone.");
  REQUIRE(pairs.size() == 2);

  pairs = parse_structured_assignment(
      "Let me think. The best plan is {\"assign\": [[\"9\", \"4\"]]} as shown.");
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0] == std::pair<int, int>{9, 4});  // string ids coerced
}

TEST_CASE("parse assignment: malformed shapes rejected with a reason") {
  CHECK_THROWS_AS(parse_structured_assignment("no json at all"), LmmParseError);
  CHECK_THROWS_AS(parse_structured_assignment("{\"assign\": [[1]]}"), LmmParseError);
  CHECK_THROWS_AS(parse_structured_assignment("{\"assign\": [[1, \"x\"]]}"), LmmParseError);
  CHECK_THROWS_AS(parse_structured_assignment("{\"wrong\": []}"), LmmParseError);
}

TEST_CASE("parse groups: bare block and prose-wrapped block") {
  auto groups = parse_structured_groups("{\"groups\": [[1, 2], [4]]}");
  REQUIRE(groups.size() == 2);
  CHECK(groups[0] == std::vector<int>{1, 2});
  CHECK(groups[1] == std::vector<int>{4});

  groups = parse_structured_groups("Plan: first {\"broken\": true} then "
                                   "{\"groups\": [[5, 6]]} done");
  REQUIRE(groups.size() == 1);
  CHECK(groups[0] == std::vector<int>{5, 6});

  CHECK_THROWS_AS(parse_structured_groups("{\"groups\": \"none\"}"), LmmParseError);
}

TEST_CASE("reflection: stored on success, skipped with flag on gateway failure") {
  MemoryStore store(8, std::make_shared<BlockMeanEmbedder>());
  WorldState w;
  w.map = std::make_shared<LaneGraph>(make_grid_city());
  auto bev = render_bev(w, BevVariant::GraphEvolution);
  CollisionEvent ev;
  ev.time = 3.0;
  ev.vehicle_a = 1;
  ev.vehicle_b = 2;
  ev.dist = 2.1;
  ev.decision_summary = "groups [[1,2]]";

  MockScript script;
  script.graph_evolution.push_back({"They closed head-on; brake earlier."});
  LmmGateway gw(GatewayConfig{}, script);
  bool failed = true;
  auto entry = reflect_on_collision(store, gw, w, bev, ev, &failed);
  REQUIRE(entry.has_value());
  CHECK_FALSE(failed);
  CHECK(entry->kind == MemoryKind::Reflection);
  CHECK(store.size() == 1);

  // second call exhausts the script: skipped, flagged, store unchanged
  auto none = reflect_on_collision(store, gw, w, bev, ev, &failed);
  CHECK_FALSE(none.has_value());
  CHECK(failed);
  CHECK(store.size() == 1);
}

TEST_CASE("reflection: retrievable from a near-identical query image") {
  MemoryStore store(8, std::make_shared<BlockMeanEmbedder>());
  WorldState w;
  w.map = std::make_shared<LaneGraph>(make_grid_city());
  VehicleState v;
  v.id = 1;
  v.x = 200;
  v.y = 200;
  w.vehicles.push_back(v);
  auto bev = render_bev(w, BevVariant::GraphEvolution);

  // unrelated plain entries elsewhere on the map
  for (int i = 0; i < 3; ++i) {
    WorldState other;
    other.map = w.map;
    VehicleState ov;
    ov.id = 10 + i;
    ov.x = 40.0 * i;
    ov.y = 30;
    other.vehicles.push_back(ov);
    MemoryEntry e;
    e.image = std::make_shared<BevImage>(render_bev(other, BevVariant::GraphEvolution));
    e.prompt_text = "plain";
    store.store(e);
  }
  MockScript script;
  script.graph_evolution.push_back({"collision analysis"});
  LmmGateway gw(GatewayConfig{}, script);
  CollisionEvent ev;
  reflect_on_collision(store, gw, w, bev, ev);

  // query with the vehicle nudged slightly: reflection should rank first
  w.vehicles[0].x += 1.0;
  auto query = render_bev(w, BevVariant::GraphEvolution);
  auto got = store.retrieve_top_k(query, 1);
  REQUIRE(got.size() == 1);
  CHECK(got[0].kind == MemoryKind::Reflection);
}
