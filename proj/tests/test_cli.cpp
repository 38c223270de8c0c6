#include <doctest.h>

#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "naveval/datagen.hpp"
#include "naveval/image_io.hpp"
#include "naveval/pointcloud.hpp"
#include "naveval/sha256.hpp"
#include "testutil.hpp"

using namespace naveval;
using nlohmann::json;

namespace {

const std::string kData = NAVEVAL_TEST_DATA;
const std::string kBin = NAVEVAL_BIN;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const testutil::TempDir& dir, const std::string& args) {
  static std::atomic<int> seq{0};
  const int n = seq.fetch_add(1);
  const std::string out_path = dir.file("cli_out_" + std::to_string(n));
  const std::string err_path = dir.file("cli_err_" + std::to_string(n));
  const std::string cmd =
      kBin + " " + args + " > " + out_path + " 2> " + err_path;
  const int rc = std::system(cmd.c_str());
  CliResult result;
  result.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  result.out = testutil::read_file(out_path);
  result.err = testutil::read_file(err_path);
  return result;
}

std::size_t count_lines(const std::string& text) {
  std::size_t lines = 0;
  for (const char c : text) {
    if (c == '\n') ++lines;
  }
  return lines;
}

void touch(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
}

std::string grid_and_trap_scenes() {
  return kData + "/scene_grid8.json," + kData + "/scene_trap.json";
}

std::string grid_episodes() { return kData + "/episodes_grid8.json"; }

// Two-viewpoint scene where p0 carries one 16x12 RGB-D frame (identity
// pose) and p1 is geometry-only. Written fresh into `dir`.
std::string write_imagery_scene(const testutil::TempDir& dir) {
  const CameraParams cam = testutil::test_camera();
  RgbImage rgb = testutil::pattern_rgb(cam.width, cam.height, 1);
  DepthImage depth = testutil::pattern_depth(cam.width, cam.height, 2);
  write_ppm(dir.file("p0_rgb.ppm"), rgb);
  write_pfm(dir.file("p0_depth.pfm"), depth);

  json frame;
  frame["heading"] = 0;
  frame["rgb_path"] = "p0_rgb.ppm";
  frame["depth_path"] = "p0_depth.pfm";
  frame["camera"] = {{"fx", cam.fx},         {"fy", cam.fy},
                     {"cx", cam.cx},         {"cy", cam.cy},
                     {"width", cam.width},   {"height", cam.height},
                     {"pose", std::vector<double>{1, 0, 0, 0, 0, 1, 0, 0, 0,
                                                  0, 1, 0, 0, 0, 0, 1}}};
  json doc;
  doc["scene_id"] = "imscene";
  doc["viewpoints"] = json::array();
  doc["viewpoints"].push_back({{"id", "p0"},
                               {"position", {0.0, 0.0, 0.0}},
                               {"frames", json::array({frame})}});
  doc["viewpoints"].push_back(
      {{"id", "p1"}, {"position", {1.0, 0.0, 0.0}}});
  doc["edges"] =
      json::array({json::array({"p0", "p1"}), json::array({"p1", "p0"})});
  const std::string path = dir.file("imscene.json");
  testutil::write_file(path, doc.dump(2));
  return path;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("oracle run writes logs and eval scores them perfectly") {
  testutil::TempDir dir("cli_run");
  const std::string run_dir = dir.file("run1");
  const auto run = run_cli(dir, "run --scenes " + grid_and_trap_scenes() +
                                    " --episodes " + grid_episodes() +
                                    " --out " + run_dir + " --seed 9");
  CHECK(run.code == 0);
  CHECK(run.out.find("episodes: 3") != std::string::npos);
  CHECK(run.out.find("completed: 3") != std::string::npos);
  CHECK(run.out.find("aborted: 0") != std::string::npos);

  const std::string traj_path = run_dir + "/trajectories.jsonl";
  REQUIRE(std::filesystem::exists(traj_path));
  // one JSONL line per step: 5 + 3 + 3 across the three oracle episodes
  CHECK(count_lines(testutil::read_file(traj_path)) == 11);
  CHECK_FALSE(std::filesystem::exists(run_dir + "/aborts.json"));

  const json snapshot =
      json::parse(testutil::read_file(run_dir + "/config.json"));
  CHECK(snapshot.at("seed").get<std::uint64_t>() == 9);
  CHECK(snapshot.at("policy").get<std::string>() == "oracle");
  CHECK(snapshot.at("harness_version").get<std::string>() == "0.1.0");

  const std::string report_path = dir.file("report.json");
  const auto eval = run_cli(
      dir, "eval --trajectories " + traj_path + " --scenes " +
               grid_and_trap_scenes() + " --episodes " + grid_episodes() +
               " --json-out " + report_path);
  CHECK(eval.code == 0);
  CHECK(eval.out.find("SR") != std::string::npos);
  CHECK(eval.out.find("1.0000") != std::string::npos);

  const json report = json::parse(testutil::read_file(report_path));
  CHECK(report.at("n_episodes").get<std::size_t>() == 3);
  CHECK(report.at("SR").get<double>() == 1.0);
  CHECK(report.at("SPL").get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(report.at("OSR").get<double>() == 1.0);
  CHECK(report.at("NE").get<double>() == doctest::Approx(0.0));
  // TL and GP both average the three gt path lengths (4 + 2 + 11) / 3.
  CHECK(report.at("TL").get<double>() ==
        doctest::Approx(17.0 / 3.0).epsilon(1e-9));
  CHECK(report.at("GP").get<double>() ==
        doctest::Approx(17.0 / 3.0).epsilon(1e-9));
  CHECK(report.at("distance_mode").get<std::string>() == "geodesic");
}

TEST_CASE("flags override config file values") {
  testutil::TempDir dir("cli_prec");
  const std::string run_dir = dir.file("run_file");
  const std::string cfg = dir.file("run.cfg");
  testutil::write_file(cfg, "scenes = " + grid_and_trap_scenes() +
                                "\n"
                                "episodes = " +
                                grid_episodes() +
                                "\n"
                                "seed = 1\n"
                                "out_dir = " +
                                run_dir + "\n");
  const auto run = run_cli(dir, "run --config " + cfg + " --seed 2");
  CHECK(run.code == 0);
  const json snapshot =
      json::parse(testutil::read_file(run_dir + "/config.json"));
  CHECK(snapshot.at("seed").get<std::uint64_t>() == 2);
  CHECK(snapshot.at("episodes").get<std::string>() == grid_episodes());
}

TEST_CASE("identical seeds give byte-identical logs, across job counts") {
  testutil::TempDir dir("cli_det");
  const std::string base = " --scenes " + grid_and_trap_scenes() +
                           " --episodes " + grid_episodes() +
                           " --policy random --seed 5";
  CHECK(run_cli(dir, "run" + base + " --out " + dir.file("a")).code == 0);
  CHECK(run_cli(dir, "run" + base + " --out " + dir.file("b")).code == 0);
  CHECK(run_cli(dir, "run" + base + " --jobs 3 --out " + dir.file("c")).code ==
        0);
  const std::string a = testutil::read_file(dir.file("a/trajectories.jsonl"));
  const std::string b = testutil::read_file(dir.file("b/trajectories.jsonl"));
  const std::string c = testutil::read_file(dir.file("c/trajectories.jsonl"));
  CHECK(a == b);
  CHECK(a == c);

  const std::string other = " --scenes " + grid_and_trap_scenes() +
                            " --episodes " + grid_episodes() +
                            " --policy random --seed 6";
  CHECK(run_cli(dir, "run" + other + " --out " + dir.file("d")).code == 0);
  CHECK(a != testutil::read_file(dir.file("d/trajectories.jsonl")));
}

TEST_CASE("setup problems exit 2, runtime failures exit 1") {
  testutil::TempDir dir("cli_exit");

  const auto missing = run_cli(
      dir, "run --scenes " + grid_and_trap_scenes() + " --episodes " +
               dir.file("nope.json") + " --out " + dir.file("x"));
  CHECK(missing.code == 2);
  CHECK(missing.err.find("error:") != std::string::npos);

  const auto bad_policy = run_cli(
      dir, "run --scenes " + grid_and_trap_scenes() + " --episodes " +
               grid_episodes() + " --policy warp --out " + dir.file("y"));
  CHECK(bad_policy.code == 2);
  CHECK(bad_policy.err.find("warp") != std::string::npos);

  const auto bad_eval = run_cli(
      dir, "eval --trajectories " + dir.file("absent.jsonl") + " --scenes " +
               grid_and_trap_scenes() + " --episodes " + grid_episodes());
  CHECK(bad_eval.code == 2);

  // A remote policy pointed at a dead endpoint aborts every episode.
  const std::string fail_dir = dir.file("run_fail");
  const auto refused = run_cli(
      dir, "run --scenes " + grid_and_trap_scenes() + " --episodes " +
               grid_episodes() +
               " --policy remote --policy-url http://127.0.0.1:1"
               " --policy-model m --out " +
               fail_dir);
  CHECK(refused.code == 1);
  CHECK(refused.err.find("abort: episode") != std::string::npos);
  REQUIRE(std::filesystem::exists(fail_dir + "/aborts.json"));
  const json aborts =
      json::parse(testutil::read_file(fail_dir + "/aborts.json"));
  CHECK(aborts.size() == 3);
  CHECK(count_lines(testutil::read_file(fail_dir + "/trajectories.jsonl")) ==
        0);
}

TEST_CASE("pcgen samples a single viewpoint deterministically") {
  testutil::TempDir dir("cli_pcgen");
  const std::string scene = write_imagery_scene(dir);

  const std::string c1 = dir.file("c1.pc6");
  const auto first = run_cli(dir, "pcgen --scene " + scene +
                                      " --viewpoint p0 --out " + c1 +
                                      " --points 500 --seed 3 --ply " +
                                      dir.file("c1.ply"));
  CAPTURE(first.err);
  CHECK(first.code == 0);
  CHECK(first.out.find("wrote") != std::string::npos);
  const PointCloud cloud = read_cloud(c1);
  REQUIRE(cloud.size() == 500);

  // Separate process, same inputs: identical bytes.
  const std::string c2 = dir.file("c2.pc6");
  CHECK(run_cli(dir, "pcgen --scene " + scene + " --viewpoint p0 --out " +
                         c2 + " --points 500 --seed 3")
            .code == 0);
  CHECK(testutil::read_file(c1) == testutil::read_file(c2));
  // Frozen digest of this exact fixture; flags any unprojection or
  // resampling drift.
  CHECK(sha256_file_hex(c1) ==
        "90160ab87454303b4d624e635efc7b2b4938e50bfc5f7367500421eea0f688b4");

  const PointCloud ply = read_ply(dir.file("c1.ply"));
  REQUIRE(ply.size() == 500);
  CHECK(ply.positions[0].x() ==
        doctest::Approx(cloud.positions[0].x()).epsilon(1e-4));
  CHECK(ply.positions[0].y() ==
        doctest::Approx(cloud.positions[0].y()).epsilon(1e-4));

  // Default size matches the pipeline's cloud budget.
  const std::string c3 = dir.file("c3.pc6");
  CHECK(run_cli(dir, "pcgen --scene " + scene + " --viewpoint p0 --out " + c3)
            .code == 0);
  CHECK(read_cloud(c3).size() == 8192);
}

TEST_CASE("pcgen mask restricts the cloud to selected pixels") {
  testutil::TempDir dir("cli_mask");
  const std::string scene = write_imagery_scene(dir);

  const CameraParams cam = testutil::test_camera();
  MaskImage mask;
  mask.width = cam.width;
  mask.height = cam.height;
  mask.values.assign(
      static_cast<std::size_t>(cam.width) * cam.height, 0);
  for (int y = 0; y < cam.height / 2; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      mask.at(x, y) = 255;
    }
  }
  write_pgm(dir.file("top.pgm"), mask);

  const std::string out = dir.file("masked.pc6");
  const auto r = run_cli(dir, "pcgen --scene " + scene +
                                  " --viewpoint p0 --mask " +
                                  dir.file("top.pgm") + " --out " + out +
                                  " --points 200 --seed 1");
  CHECK(r.code == 0);
  const PointCloud cloud = read_cloud(out);
  REQUIRE(cloud.size() == 200);
  // Identity pose: pixel rows above the principal point unproject to y < 0.
  for (const auto& p : cloud.positions) {
    CHECK(p.y() < 0.0);
  }
}

TEST_CASE("pcgen batch mode covers viewpoints with imagery") {
  testutil::TempDir dir("cli_all");
  const std::string scene = write_imagery_scene(dir);
  const std::string clouds = dir.file("clouds");
  const auto r = run_cli(dir, "pcgen --scene " + scene + " --all --out-dir " +
                                  clouds + " --points 300");
  CHECK(r.code == 0);
  CHECK(r.out.find("wrote 1 clouds") != std::string::npos);
  CHECK(r.err.find("skipping p1") != std::string::npos);
  const std::string expected = clouds + "/" + cloud_ref_name("imscene", "p0");
  REQUIRE(std::filesystem::exists(expected));
  CHECK(read_cloud(expected).size() == 300);
}

TEST_CASE("pcgen rejects contradictory modes") {
  testutil::TempDir dir("cli_pcgen_usage");
  const std::string scene = write_imagery_scene(dir);
  CHECK(run_cli(dir, "pcgen --scene " + scene +
                         " --all --viewpoint p0 --out-dir " + dir.file("d"))
            .code == 2);
  CHECK(run_cli(dir, "pcgen --scene " + scene + " --out " + dir.file("o.pc6"))
            .code == 2);
  CHECK(run_cli(dir, "pcgen --scene " + scene + " --all --mask " +
                         dir.file("m.pgm") + " --out-dir " + dir.file("d2"))
            .code == 2);
  CHECK(run_cli(dir, "pcgen --scene " + scene + " --viewpoint p0").code == 2);
  CHECK(run_cli(dir, "pcgen --scene " + scene + " --all").code == 2);
}

TEST_CASE("export-align reads a run directory") {
  testutil::TempDir dir("cli_export");
  const std::string run_dir = dir.file("run1");
  REQUIRE(run_cli(dir, "run --scenes " + grid_and_trap_scenes() +
                           " --episodes " + grid_episodes() + " --out " +
                           run_dir)
              .code == 0);

  const std::string clouds = dir.file("clouds");
  std::filesystem::create_directories(clouds);
  for (int i = 0; i < 8; ++i) {
    touch(clouds + "/" + cloud_ref_name("grid8", "g" + std::to_string(i)));
  }
  for (const auto& vp : {"s", "a", "b", "g"}) {
    touch(clouds + "/" + cloud_ref_name("trap", vp));
  }

  const std::string out = dir.file("align.jsonl");
  const auto r = run_cli(dir, "export-align --in " + run_dir + " --clouds " +
                                  clouds + " --out " + out +
                                  " --with-hypotheses");
  CHECK(r.code == 0);
  // gt paths cover 5 + 3 + 3 viewpoints, one record each.
  CHECK(r.out.find("wrote 11 records") != std::string::npos);
  const std::string body = testutil::read_file(out);
  REQUIRE(count_lines(body) == 11);

  const json first = json::parse(body.substr(0, body.find('\n')));
  CHECK(first.at("t").get<std::size_t>() == 0);
  CHECK(first.contains("gt_action"));
  CHECK(first.contains("prompt_sha256"));
}

TEST_CASE("templates dump prints the pinned registry") {
  testutil::TempDir dir("cli_tpl");
  const auto r = run_cli(dir, "templates dump");
  CHECK(r.code == 0);
  const json doc = json::parse(r.out);
  CHECK(doc.at("version").get<std::string>() == "1");
  const auto& templates = doc.at("templates");
  CHECK(templates.size() == 5);
  CHECK(templates.at("belief_request_nav").at("sha256").get<std::string>() ==
        "b94fdfb63083feba026577a69a3cd29cf85683f088f9b297a1318853ae1fde87");
  CHECK(templates.at("nav_agent_vln").at("sha256").get<std::string>() ==
        "9a361b5b88a0b268846e9a51a3eacf85d5d512ff7fce7b5744a8017a6cd884be");
  for (const auto& [name, entry] : templates.items()) {
    CHECK(entry.at("sha256").get<std::string>() ==
          sha256_hex(entry.at("text").get<std::string>()));
  }
}

TEST_CASE("manifests subcommand writes the three stage files") {
  testutil::TempDir dir("cli_manifests");
  const std::string out_dir = dir.file("stages");
  const auto r = run_cli(dir, "manifests --out-dir " + out_dir);
  CHECK(r.code == 0);
  for (int stage = 1; stage <= 3; ++stage) {
    const std::string path =
        out_dir + "/stage" + std::to_string(stage) + ".json";
    REQUIRE(std::filesystem::exists(path));
  }
  const json stage2 =
      json::parse(testutil::read_file(out_dir + "/stage2.json"));
  CHECK(stage2.at("training").at("batch_size").get<int>() == 4);
  CHECK(stage2.at("training").at("parallel").get<std::string>() ==
        "FSDP (full shard auto wrap)");
}

TEST_CASE("report re-scores a finished run in place") {
  testutil::TempDir dir("cli_report");
  const std::string run_dir = dir.file("run1");
  REQUIRE(run_cli(dir, "run --scenes " + grid_and_trap_scenes() +
                           " --episodes " + grid_episodes() + " --out " +
                           run_dir)
              .code == 0);

  const auto r = run_cli(dir, "report --run " + run_dir);
  CHECK(r.code == 0);
  const json report =
      json::parse(testutil::read_file(run_dir + "/report.json"));
  CHECK(report.at("SR").get<double>() == 1.0);
  CHECK(report.at("distance_mode").get<std::string>() == "geodesic");

  const auto r2 =
      run_cli(dir, "report --run " + run_dir + " --metric-distance euclidean");
  CHECK(r2.code == 0);
  const json report2 =
      json::parse(testutil::read_file(run_dir + "/report.json"));
  CHECK(report2.at("distance_mode").get<std::string>() == "euclidean");
  CHECK(report2.at("SR").get<double>() == 1.0);

  CHECK(run_cli(dir, "report --run " + dir.file("nowhere")).code == 2);
}

}  // TEST_SUITE
