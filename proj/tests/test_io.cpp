#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "isac/csv.hpp"
#include "isac/io.hpp"

using namespace isac;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("isac_test_io_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("shortest round-trip number formatting") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-2.5e-9) == "-2.5e-09");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-1.0 / 0.0) == "-inf");
}

TEST_CASE("CSV writer") {
  const auto dir = scratch("csv");
  {
    CsvWriter w(dir / "sub" / "a.csv", {"a", "b", "c", "d"});
    w << 1.5 << std::size_t(7) << "x" << true;
    w.end_row();
    w.close();
  }
  CHECK(slurp(dir / "sub" / "a.csv") == "a,b,c,d\n1.5,7,x,1\n");
  CHECK_THROWS_AS(CsvWriter("/proc/forbidden/x.csv", {"a"}), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("scene JSON round trip") {
  SceneConfig s = full_scene();
  s.offsets.mode = OffsetMode::linear_drift;
  s.offsets.per_tbs[2].cfo_drift = 12.5;
  s.channel.attenuation_mode = AttenuationMode::physical;
  s.channel.reflecting_factor = {{1, 0}, {0.5, -0.5}, {1, 0}, {0, 1}};
  const json j = scene_to_json(s);
  const SceneConfig back = scene_from_json(j, desk_scene());
  CHECK(scene_to_json(back) == j);
  CHECK(scene_hash(back) == scene_hash(s));
  CHECK(scene_hash(desk_scene()) != scene_hash(s));
}

TEST_CASE("partial configs fall back to the base scene") {
  const json j = json::parse(R"({"noise": {"snr_db": 3.0}, "ofdm": {"carrier_freq_hz": 28e9}})");
  const SceneConfig s = scene_from_json(j, desk_scene());
  CHECK(s.noise.snr_db == 3.0);
  CHECK(s.ofdm.n_subcarriers == 128);
  CHECK(s.array.element_spacing == kSpeedOfLight / 28e9 / 2.0);
  const json u = json::parse(R"({"offsets": {"time_offset_s": 6e-8, "cfo_frac": 0.06}})");
  const SceneConfig o = scene_from_json(u, desk_scene());
  for (const auto& x : o.offsets.per_tbs) {
    CHECK(x.time_offset == 6e-8);
    CHECK(x.cfo == 0.06 * 120e3);
  }
  const json t = json::parse(R"({"geometry": {"tbs": [{"position": [10, 0], "broadside_rad": 1.2}]}})");
  const SceneConfig one = scene_from_json(t, desk_scene());
  CHECK(one.n_tbs() == 1);
  CHECK(one.offsets.per_tbs.size() == 1);
}

TEST_CASE("bad configs are rejected") {
  CHECK_THROWS_AS(scene_from_json(json::parse(R"({"nosie": {}})"), desk_scene()), std::invalid_argument);
  CHECK_THROWS_AS(scene_from_json(json::parse(R"({"ofdm": {"n_subcarriers": "many"}})"), desk_scene()),
                  std::invalid_argument);
  CHECK_THROWS_AS(scene_from_json(json::parse(R"({"ofdm": {"n_subcarriers": 1}})"), desk_scene()), std::invalid_argument);
  CHECK_THROWS_AS(scene_from_json(json::parse(R"({"offsets": {"mode": "wobbly"}})"), desk_scene()), std::invalid_argument);
  CHECK_THROWS_AS(pipeline_from_json(json::parse(R"({"estimation": {"aoa_step_rad": 0}})")), std::invalid_argument);
  CHECK_THROWS_AS(read_json_file("/nonexistent/config.json"), std::runtime_error);
}

TEST_CASE("pipeline JSON round trip") {
  PipelineConfig p;
  p.angle.aoa_step = 0.02;
  p.weighting = SymbolWeighting::matched;
  p.position.coarse_to_fine = true;
  p.velocity.speed_max = 40.0;
  const json j = pipeline_to_json(p);
  CHECK(pipeline_to_json(pipeline_from_json(j)) == j);
}

TEST_CASE("shipped configs load") {
  for (const char* name : {"desk_scene.json", "full_scale.json"}) {
    const fs::path p = fs::path(ISAC_SOURCE_DIR) / "configs" / name;
    INFO(p.string());
    CHECK_NOTHROW(load_config(p, desk_scene()));
  }
  const auto c = load_config(fs::path(ISAC_SOURCE_DIR) / "configs" / "full_scale.json", desk_scene());
  CHECK(c.scene.ofdm.n_subcarriers == 512);
  CHECK(scene_hash(c.scene) == scene_hash(full_scene()));
  const auto d = load_config(fs::path(ISAC_SOURCE_DIR) / "configs" / "desk_scene.json", full_scene());
  CHECK(scene_hash(d.scene) == scene_hash(desk_scene()));
}

TEST_CASE("cube dump round trip") {
  const auto dir = scratch("cube");
  Cube c(3, 4, 2);
  Rng rng(2);
  for (Eigen::Index k = 0; k < c.data.size(); ++k) c.data.data()[k] = rng.complex_normal(1.0);
  write_cube(dir / "c.bin", c, 0xabcdef0123456789ull);
  const auto back = read_cube(dir / "c.bin");
  CHECK(back.scene_hash == 0xabcdef0123456789ull);
  CHECK(back.cube.same_shape(c));
  CHECK(back.cube.data == c.data);
  const auto text = slurp(dir / "c.bin");
  CHECK(text.rfind("isac-cube 1\nshape 3 4 2\nscene_hash abcdef0123456789\nend\n", 0) == 0);
  CHECK(text.size() == 56 + 24 * 16);
  std::ofstream(dir / "bad.bin") << "isac-cube 1\nshape 3 4 2\nend\n";
  CHECK_THROWS_AS(read_cube(dir / "bad.bin"), std::runtime_error);
  fs::remove_all(dir);
}
