#include "splatroom/io.hpp"
#include "splatroom/synthetic.hpp"

#include "support.hpp"

#include <json.hpp>

using namespace splatroom;
using namespace splatroom::test;

TEST_CASE("PLY point clouds round trip in both encodings") {
  TempDir dir("ply");
  Rng rng(3);
  std::vector<SfmPoint> pts;
  for (int i = 0; i < 50; ++i) {
    SfmPoint p;
    p.position = Vec3(rng.normal(), rng.normal(), rng.normal());
    p.match_count = int(rng.uniform_int(0, 40));
    p.color = Vec3(rng.uniform_int(0, 255), rng.uniform_int(0, 255), rng.uniform_int(0, 255)) / 255.0;
    pts.push_back(p);
  }
  for (PlyFormat fmt : {PlyFormat::Ascii, PlyFormat::BinaryLittleEndian}) {
    write_point_cloud(dir / "p.ply", pts, fmt);
    const auto back = read_point_cloud(dir / "p.ply", 0);
    REQUIRE(back.size() == pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK((back[i].position - pts[i].position).norm() < 1e-6);
      CHECK(back[i].match_count == pts[i].match_count);
      REQUIRE(back[i].color);
      CHECK((*back[i].color - *pts[i].color).norm() < 1e-12);
    }
  }
}

TEST_CASE("PLY meshes round trip and polygons are fanned") {
  TempDir dir("mesh");
  const TriangleMesh box = room_mesh(Vec3(1, 2, 3));
  write_mesh(dir / "m.ply", box);
  const TriangleMesh back = read_mesh(dir / "m.ply");
  CHECK(back.triangles == box.triangles);
  REQUIRE(back.vertices.size() == box.vertices.size());
  for (std::size_t i = 0; i < box.vertices.size(); ++i) CHECK((back.vertices[i] - box.vertices[i]).norm() < 1e-6);

  write_text_file(dir / "quad.ply",
                  "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n"
                  "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
                  "0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
  const TriangleMesh quad = read_mesh(dir / "quad.ply");
  REQUIRE(quad.triangles.size() == 2);
  CHECK(quad.triangles[1] == Eigen::Vector3i(0, 2, 3));
}

TEST_CASE("malformed PLY files are rejected") {
  TempDir dir("badply");
  write_text_file(dir / "a.ply", "not a ply");
  CHECK_THROWS_AS(read_ply(dir / "a.ply"), IoError);
  write_text_file(dir / "b.ply",
                  "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
                  "end_header\n0 0 0\n");
  CHECK_THROWS_AS(read_ply(dir / "b.ply"), IoError);
  CHECK_THROWS_AS(read_ply(dir / "missing.ply"), IoError);
}

TEST_CASE("PFM round trip is exact for float values") {
  TempDir dir("pfm");
  Rng rng(4);
  Image1 d(7, 5);
  Image3 n(7, 5);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    d.data(i) = double(float(rng.uniform(0, 10)));
    for (int c = 0; c < 3; ++c) n.data(i, c) = double(float(rng.normal()));
  }
  write_pfm(dir / "d.pfm", d);
  write_pfm(dir / "n.pfm", n);
  const Image1 d2 = read_pfm1(dir / "d.pfm");
  const Image3 n2 = read_pfm3(dir / "n.pfm");
  CHECK(d2.width == 7);
  CHECK(d2.height == 5);
  CHECK((d2.data == d.data).all());
  CHECK((n2.data == n.data).all());
  CHECK_THROWS_AS(read_pfm3(dir / "d.pfm"), IoError);
}

TEST_CASE("PNG round trips at 8 and 16 bits") {
  TempDir dir("png");
  Image3 rgb(6, 4);
  for (Eigen::Index i = 0; i < rgb.size(); ++i)
    for (int c = 0; c < 3; ++c) rgb.data(i, c) = double((i * 37 + c * 91) % 256) / 255.0;
  write_png(dir / "c.png", rgb);
  const Image3 back = read_png(dir / "c.png");
  CHECK((back.data - rgb.data).abs().maxCoeff() < 1e-12);

  Image1 depth(6, 4);
  for (Eigen::Index i = 0; i < depth.size(); ++i) depth.data(i) = 0.001 * double(i * 1000 + 17);
  write_png16(dir / "d.png", depth, 0.001);
  CHECK((read_png16(dir / "d.png", 0.001).data - depth.data).abs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(read_png16(dir / "c.png", 1.0), IoError);
}

TEST_CASE("config parsing") {
  const ConfigMap m = parse_config("# comment\n a = 1 \n\nb=two words # trailing\n");
  CHECK(m.size() == 2);
  CHECK(m.at("a") == "1");
  CHECK(m.at("b") == "two words");
  try {
    parse_config("a = 1\nbroken\n");
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("a =\n"), IoError);
  CHECK_THROWS_AS(read_text_file("/nonexistent/file"), IoError);
}

namespace {

SyntheticRoomSpec small_room() {
  SyntheticRoomSpec s;
  s.extents = Vec3(2, 2, 2);
  s.n_views = 2;
  s.trajectory_radius = 1e-4;
  s.pitch_deg = 0.0;
  s.width = 33;
  s.height = 33;
  s.n_points = 200;
  return s;
}

}  // namespace

TEST_CASE("a dataset survives save and load unchanged") {
  TempDir dir("dataset");
  const SyntheticRoom room = generate_synthetic_room(small_room());
  save_dataset(dir.path.string(), room.dataset);
  const Dataset back = load_dataset(dir / "manifest.json");
  REQUIRE(back.frames.size() == room.dataset.frames.size());
  for (std::size_t i = 0; i < back.frames.size(); ++i) {
    const Frame &a = room.dataset.frames[i], &b = back.frames[i];
    CHECK(b.name == a.name);
    CHECK((b.camera.K - a.camera.K).norm() < 1e-12);
    CHECK((b.camera.R_wc - a.camera.R_wc).norm() < 1e-12);
    CHECK((b.image.data == a.image.data).all());
    CHECK((b.depth_prior->data == a.depth_prior->data).all());
    CHECK((b.normal_prior->data == a.normal_prior->data).all());
  }
  REQUIRE(back.points.size() == room.dataset.points.size());
  for (std::size_t i = 0; i < back.points.size(); ++i)
    CHECK(back.points[i].match_count == room.dataset.points[i].match_count);
}

TEST_CASE("load_dataset reports every problem and names the frame") {
  TempDir dir("broken");
  const SyntheticRoom room = generate_synthetic_room(small_room());
  save_dataset(dir.path.string(), room.dataset);
  const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  std::filesystem::remove(dir / manifest["frames"][1]["image"].get<std::string>());
  std::filesystem::remove(dir / manifest["frames"][0]["depth"].get<std::string>());
  try {
    load_dataset(dir / "manifest.json");
    FAIL("expected an error");
  } catch (const IoError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2 problem(s)") != std::string::npos);
    CHECK(msg.find("frame view0") != std::string::npos);
    CHECK(msg.find("frame view1") != std::string::npos);
  }
  CHECK_THROWS_AS(load_dataset(dir / "nope.json"), IoError);
}

TEST_CASE("synthetic room shading") {
  SyntheticRoomSpec spec = small_room();
  const auto up = trace_room(spec, Vec3(1, 1, 1), Vec3(0, 0, 1));
  REQUIRE(up);
  CHECK(up->t == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((up->normal - Vec3(0, 0, -1)).norm() < 1e-15);
  CHECK((up->point - Vec3(1, 1, 2)).norm() < 1e-14);
  CHECK_FALSE(trace_room(spec, Vec3(3, 1, 1), Vec3(1, 0, 0)));

  // View 0 sits at the center and looks straight at the wall x = 0.
  const SyntheticRoom room = generate_synthetic_room(spec);
  const Frame& f = room.dataset.frames[0];
  CHECK(f.depth_prior->at(16, 16) == doctest::Approx(1.0001).epsilon(1e-6));
  CHECK(f.normal_prior->at(16, 16, 0) == doctest::Approx(0.0).scale(1.0));
  CHECK(f.normal_prior->at(16, 16, 2) == doctest::Approx(-1.0).epsilon(1e-6));
  // Without noise the priors equal the exact geometry on the whole wall.
  for (int y = 8; y < 25; ++y)
    for (int x = 8; x < 25; ++x) {
      CHECK(std::abs(f.depth_prior->at(x, y) - 1.0001) < 1e-6);
      CHECK(std::abs(f.normal_prior->at(x, y, 2) + 1.0) < 1e-6);
    }
}

TEST_CASE("room spec parsing") {
  const SyntheticRoomSpec s = parse_room_spec(parse_config("extents = 4 5 3\ntexture = noise\nn_views = 7\n"));
  CHECK(s.extents == Vec3(4, 5, 3));
  CHECK(s.texture == RoomTexture::GradientNoise);
  CHECK(s.n_views == 7);
  CHECK_THROWS_AS(parse_room_spec(parse_config("colour = red\n")), IoError);
  CHECK_THROWS_AS(parse_room_spec(parse_config("n_views = many\n")), IoError);
}
