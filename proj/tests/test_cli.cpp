#include "splatroom/cli.hpp"
#include "splatroom/io.hpp"
#include "splatroom/synthetic.hpp"

#include "support.hpp"

#include <json.hpp>

#include <sstream>

using namespace splatroom;
using namespace splatroom::test;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

bool empty_dir(const TempDir& d) { return std::filesystem::is_empty(d.path); }

}  // namespace

TEST_CASE("usage errors exit 1 and write nothing") {
  TempDir dir("cli_usage");
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"bogus"}).code == kExitUsage);
  CHECK(cli({"synth", "default", dir / "room", "--no-such-flag"}).code == kExitUsage);
  CHECK(cli({"train", dir / "manifest.json", "--iters", "-3"}).code == kExitUsage);
  CHECK(cli({"eval", dir / "only_one.ply"}).code == kExitUsage);
  CHECK(empty_dir(dir));
}

TEST_CASE("missing inputs exit 2") {
  TempDir dir("cli_missing");
  const Run r = cli({"init", dir / "manifest.json", "--out", dir / "init.ckpt"});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("error:") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "init.ckpt"));
  CHECK(cli({"mesh", dir / "none.ckpt", dir / "manifest.json", dir / "m.ply"}).code == kExitRuntime);
}

TEST_CASE("eval of a cloud against itself is perfect") {
  TempDir dir("cli_eval");
  std::vector<SfmPoint> pts(20);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i].position = Vec3(double(i), 0.5 * double(i % 3), 0);
  write_point_cloud(dir / "a.ply", pts);
  const Run r = cli({"eval", dir / "a.ply", dir / "a.ply", "--json", dir / "out/report.json"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(read_text_file(dir / "out/report.json"));
  CHECK(j["fscore"].get<double>() == 1.0);
  CHECK(j["accuracy"].get<double>() == 0.0);
}

TEST_CASE("a tiny end-to-end pipeline runs") {
  TempDir dir("cli_pipeline");
  write_text_file(dir / "room.cfg",
                  "extents = 2 2 2\nn_views = 4\nwidth = 24\nheight = 18\nn_points = 400\ntrajectory_radius = 0.3\n");
  write_text_file(dir / "train.cfg", "delta = 0.25\nk = 2\nsamples = 2000\n");
  const std::string room = dir / "room";
  REQUIRE(cli({"synth", dir / "room.cfg", room}).code == kExitOk);
  const std::string manifest = room + "/manifest.json";
  REQUIRE(cli({"init", manifest, "--config", dir / "train.cfg"}).code == kExitOk);
  REQUIRE(cli({"train", manifest, "--iters", "20", "--config", dir / "train.cfg", "--init", room + "/init.ckpt"}).code ==
          kExitOk);
  CHECK(std::filesystem::exists(room + "/model.csv"));
  REQUIRE(cli({"render", room + "/model.ckpt", "1", dir / "render"}).code == kExitOk);
  CHECK(std::filesystem::exists(dir / "render/view0001_depth.pfm"));
  CHECK(cli({"render", room + "/model.ckpt", "9", dir / "render"}).code == kExitRuntime);
  CHECK(cli({"render", room + "/model.ckpt", "x1", dir / "render"}).code == kExitUsage);
}

TEST_CASE("verify passes at default tolerances") {
  TempDir dir("cli_verify");
  const Run r = cli({"verify", "--seed", "3", "--json", dir / "v.json", "--coverage"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("failures 0") != std::string::npos);
  CHECK(r.out.find("coverage:") != std::string::npos);
  CHECK(nlohmann::json::parse(read_text_file(dir / "v.json")).is_array());
}
