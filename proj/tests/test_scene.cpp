#include <doctest.h>

#include "naveval/scene.hpp"
#include "testutil.hpp"

using namespace naveval;
using namespace testutil;

namespace {

Scene fixture_grid8() {
  return load_scene(std::string(NAVEVAL_TEST_DATA) + "/scene_grid8.json");
}

}  // namespace

TEST_SUITE("scene") {

TEST_CASE("grid fixture loads and exposes hand checked geometry") {
  const Scene scene = fixture_grid8();
  CHECK(scene.id() == "grid8");
  CHECK(scene.viewpoints().size() == 8);

  // corner to corner: three steps along the row, one across
  const auto d = scene.geodesic("g0", "g7");
  REQUIRE(d.has_value());
  CHECK(*d == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(scene.euclidean("g0", "g7") ==
        doctest::Approx(std::sqrt(10.0)).epsilon(1e-12));

  // the diagonal chord makes g5 degree four, in manifest edge order
  const auto& nb = scene.navigable_from("g5");
  REQUIRE(nb.size() == 4);
  CHECK(nb == std::vector<std::string>{"g4", "g6", "g1", "g2"});
}

TEST_CASE("path_length sums edge lengths and rejects teleports") {
  const Scene scene = fixture_grid8();
  CHECK(scene.path_length({"g0", "g1", "g5", "g2"}) ==
        doctest::Approx(2.0 + std::sqrt(2.0)).epsilon(1e-12));
  CHECK(scene.path_length({"g3"}) == 0.0);
  CHECK_THROWS_AS(scene.path_length({"g0", "g7"}), SceneError);
  CHECK_THROWS_AS(scene.path_length({"g0", "nope"}), SceneError);
}

TEST_CASE("geodesic equals corner brute force enumeration") {
  const Scene scene = fixture_grid8();
  const double brute = brute_min_path(scene, "g0", "g7");
  CHECK(*scene.geodesic("g0", "g7") == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("geodesic matches an all pairs oracle on random graphs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 4 + static_cast<int>(rng() % 12);
    const Scene scene = random_scene(rng, n, "rand" + std::to_string(trial));
    const auto oracle = floyd_warshall(scene);
    const auto& vps = scene.viewpoints();
    for (std::size_t i = 0; i < vps.size(); ++i) {
      for (std::size_t j = 0; j < vps.size(); ++j) {
        const auto d = scene.geodesic(vps[i].id, vps[j].id);
        if (std::isinf(oracle[i][j])) {
          CHECK_FALSE(d.has_value());
        } else {
          REQUIRE(d.has_value());
          CHECK(*d == doctest::Approx(oracle[i][j]).epsilon(1e-9));
        }
      }
    }
  }
}

TEST_CASE("geodesic is none across disconnected components") {
  std::vector<Viewpoint> vps(4);
  vps[0] = {"i0", {0, 0, 0}, {}};
  vps[1] = {"i1", {1, 0, 0}, {}};
  vps[2] = {"i2", {5, 0, 0}, {}};
  vps[3] = {"i3", {6, 0, 0}, {}};
  const Scene scene("island", vps,
                    {{"i0", "i1"}, {"i1", "i0"}, {"i2", "i3"}, {"i3", "i2"}});
  CHECK_FALSE(scene.geodesic("i0", "i3").has_value());
  CHECK(*scene.geodesic("i0", "i1") == doctest::Approx(1.0));
}

TEST_CASE("construction rejects malformed graphs") {
  std::vector<Viewpoint> two(2);
  two[0] = {"a", {0, 0, 0}, {}};
  two[1] = {"b", {1, 0, 0}, {}};

  SUBCASE("duplicate viewpoint id") {
    auto dup = two;
    dup[1].id = "a";
    CHECK_THROWS_WITH_AS(Scene("s", dup, {}),
                         doctest::Contains("duplicate viewpoint id a"),
                         SceneError);
  }
  SUBCASE("edge to unknown viewpoint") {
    CHECK_THROWS_WITH_AS(Scene("s", two, {{"a", "zz"}, {"zz", "a"}}),
                         doctest::Contains("zz"), SceneError);
  }
  SUBCASE("self edge") {
    CHECK_THROWS_WITH_AS(Scene("s", two, {{"a", "a"}}),
                         doctest::Contains("a"), SceneError);
  }
  SUBCASE("one way edge") {
    CHECK_THROWS_WITH_AS(Scene("s", two, {{"a", "b"}}),
                         doctest::Contains("no reverse edge"), SceneError);
  }
  SUBCASE("non finite position") {
    auto bad = two;
    bad[1].position.x() = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(Scene("s", bad, {}), SceneError);
  }
}

TEST_CASE("camera validation rejects degenerate intrinsics and poses") {
  CameraParams cam = test_camera();
  CHECK_NOTHROW(cam.validate("ok"));

  SUBCASE("nonpositive focal") {
    cam.fx = 0.0;
    CHECK_THROWS_AS(cam.validate("ctx"), SceneError);
  }
  SUBCASE("principal point outside image") {
    cam.cx = 99.0;
    CHECK_THROWS_AS(cam.validate("ctx"), SceneError);
  }
  SUBCASE("non orthonormal rotation") {
    cam.pose(0, 0) = 2.0;
    CHECK_THROWS_AS(cam.validate("ctx"), SceneError);
  }
}

TEST_CASE("scene json round trips through save and load") {
  TempDir dir("scene_rt");
  const Scene scene = fixture_grid8();
  save_scene(scene, dir.file("copy.json"));
  const Scene back = load_scene(dir.file("copy.json"));
  CHECK(back.id() == scene.id());
  REQUIRE(back.viewpoints().size() == scene.viewpoints().size());
  for (std::size_t i = 0; i < back.viewpoints().size(); ++i) {
    CHECK(back.viewpoints()[i].id == scene.viewpoints()[i].id);
    CHECK((back.viewpoints()[i].position - scene.viewpoints()[i].position)
              .norm() == doctest::Approx(0.0));
    CHECK(back.navigable_from(back.viewpoints()[i].id) ==
          scene.navigable_from(scene.viewpoints()[i].id));
  }
}

TEST_CASE("missing frame files are an error unless waived") {
  TempDir dir("scene_frames");
  const std::string manifest = R"({
    "scene_id": "cam1",
    "viewpoints": [
      {"id": "p", "position": [0, 0, 0], "frames": [
        {"heading": 0, "rgb_path": "gone.ppm", "depth_path": "gone.pfm",
         "camera": {"fx": 20, "fy": 20, "cx": 4, "cy": 3,
                    "width": 8, "height": 6}}
      ]}
    ],
    "edges": []
  })";
  write_file(dir.file("cam1.json"), manifest);
  CHECK_THROWS_WITH_AS(load_scene(dir.file("cam1.json")),
                       doctest::Contains("gone.ppm"), SceneError);
  SceneLoadOptions opts;
  opts.require_frame_files = false;
  const Scene scene = load_scene(dir.file("cam1.json"), opts);
  REQUIRE(scene.viewpoint("p").frames.size() == 1);
  // relative paths resolve against the manifest directory
  CHECK(scene.viewpoint("p").frames[0].rgb_path == dir.file("gone.ppm"));
}

TEST_CASE("episode fixture pack loads and validates") {
  SceneSet scenes;
  scenes.add(fixture_grid8());
  scenes.add(load_scene(std::string(NAVEVAL_TEST_DATA) + "/scene_trap.json"));
  auto episodes =
      load_episodes(std::string(NAVEVAL_TEST_DATA) + "/episodes_grid8.json");
  REQUIRE(episodes.size() == 3);
  for (auto& ep : episodes) {
    CHECK_NOTHROW(validate_episode(scenes.get(ep.scene_id), ep));
  }
  CHECK(episodes[0].gt_path_length == doctest::Approx(4.0));
  CHECK(episodes[2].task_kind == TaskKind::VLN);
}

TEST_CASE("episode validation rejects inconsistent paths") {
  const Scene scene = fixture_grid8();
  Episode ep;
  ep.id = "bad";
  ep.scene_id = "grid8";
  ep.start = "g0";
  ep.goal = "g2";
  ep.gt_path = {"g0", "g1", "g2"};
  ep.gt_path_length = 2.0;

  SUBCASE("ok as given, zero stored length is recomputed") {
    ep.gt_path_length = 0.0;
    validate_episode(scene, ep);
    CHECK(ep.gt_path_length == doctest::Approx(2.0));
  }
  SUBCASE("start mismatch") {
    ep.start = "g1";
    CHECK_THROWS_WITH_AS(validate_episode(scene, ep),
                         doctest::Contains("bad"), SceneError);
  }
  SUBCASE("goal mismatch") {
    ep.goal = "g7";
    CHECK_THROWS_AS(validate_episode(scene, ep), SceneError);
  }
  SUBCASE("non adjacent hop") {
    ep.gt_path = {"g0", "g2"};
    ep.start = "g0";
    ep.goal = "g2";
    CHECK_THROWS_AS(validate_episode(scene, ep), SceneError);
  }
  SUBCASE("stored length contradicts the path") {
    ep.gt_path_length = 3.5;
    CHECK_THROWS_AS(validate_episode(scene, ep), SceneError);
  }
  SUBCASE("unknown endpoint") {
    ep.gt_path = {"g0", "gX"};
    ep.goal = "gX";
    CHECK_THROWS_AS(validate_episode(scene, ep), SceneError);
  }
}

TEST_CASE("task kind strings round trip") {
  CHECK(to_string(TaskKind::VLN) == "VLN");
  CHECK(to_string(TaskKind::SpatialQA) == "SpatialQA");
  CHECK(task_kind_from_string("VLN") == TaskKind::VLN);
  CHECK(task_kind_from_string("SpatialQA") == TaskKind::SpatialQA);
  CHECK_THROWS_AS(task_kind_from_string("other"), SceneError);
}

TEST_CASE("scene set lookups name the missing id") {
  SceneSet scenes;
  scenes.add(fixture_grid8());
  CHECK(scenes.has("grid8"));
  CHECK_FALSE(scenes.has("nope"));
  CHECK_THROWS_WITH_AS(scenes.get("nope"), doctest::Contains("nope"),
                       SceneError);
}

}  // TEST_SUITE
