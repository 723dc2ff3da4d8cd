#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "deepstruct/checksum.hpp"
#include "deepstruct/errors.hpp"
#include "deepstruct/model.hpp"
#include "deepstruct/model_io.hpp"

using namespace deepstruct;

namespace {

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void dump(const std::string& path, const std::vector<unsigned char>& buf) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(buf.data()), buf.size());
}

void refix_crc(std::vector<unsigned char>& buf) {
  std::uint32_t crc = crc32(buf.data(), buf.size() - 4);
  std::memcpy(buf.data() + buf.size() - 4, &crc, 4);
}

Model sample_model(const std::string& graph_lines = "") {
  ConfigDoc doc = parse_config(
      "[network]\n"
      "input = x 6\n"
      "node = h affine x Wh:5x6 bh:5\n"
      "node = hr relu h\n"
      "node = scores affine hr Ws:3x5 bs:3\n"
      "output = scores\n"
      "[graph]\n"
      "variables = 3\n"
      "cardinality = 3\n" +
      graph_lines);
  Model m = build_model(doc);
  m.params.init_params(17);
  return m;
}

}  // namespace

TEST_CASE("model files round-trip parameters, config and layout bitwise") {
  for (const char* extra : {"", "pairwise = mlp\npairwise_hidden = 4\n", "order = 2\n"}) {
    Model m = sample_model(extra);
    const std::string path = "/tmp/ds_model_rt.bin";
    save_model(path, m);
    Model back = load_model(path);

    CHECK(config_hash(back.doc) == config_hash(m.doc));
    CHECK(back.first_pair_param == m.first_pair_param);
    REQUIRE(back.params.names.size() == m.params.names.size());
    for (std::size_t i = 0; i < m.params.names.size(); ++i) {
      CHECK(back.params.names[i] == m.params.names[i]);
      CHECK(back.params.value[i].shape == m.params.value[i].shape);
      REQUIRE(back.params.value[i].v.size() == m.params.value[i].v.size());
      CHECK(std::memcmp(back.params.value[i].v.data(), m.params.value[i].v.data(),
                        m.params.value[i].v.size() * sizeof(double)) == 0);
    }
    std::remove(path.c_str());
  }
}

TEST_CASE("saving a loaded model reproduces the file byte for byte") {
  Model m = sample_model();
  const std::string p1 = "/tmp/ds_model_a.bin";
  const std::string p2 = "/tmp/ds_model_b.bin";
  save_model(p1, m);
  Model back = load_model(p1);
  save_model(p2, back);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("the embedded config alone rebuilds a runnable model") {
  Model m = sample_model();
  const std::string path = "/tmp/ds_model_standalone.bin";
  save_model(path, m);
  Model back = load_model(path);
  CHECK(back.graph.num_vars() == 3);
  CHECK(back.graph.card() == 3);
  CHECK(back.unary_out >= 0);
  CHECK(back.plan.edges().size() == m.plan.edges().size());
  std::remove(path.c_str());
}

TEST_CASE("the model reader rejects every kind of damage") {
  Model m = sample_model();
  const std::string path = "/tmp/ds_model_damage.bin";

  CHECK_THROWS_AS(load_model("/tmp/ds_model_missing.bin"), IoError);

  save_model(path, m);
  std::vector<unsigned char> good = slurp(path);

  SUBCASE("bad magic") {
    auto buf = good;
    buf[0] = 'Z';
    dump(path, buf);
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("bad magic"),
                         ValidationError);
  }
  SUBCASE("short file") {
    dump(path, std::vector<unsigned char>(good.begin(), good.begin() + 20));
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("truncated"),
                         ValidationError);
  }
  SUBCASE("flipped tensor byte") {
    auto buf = good;
    buf[buf.size() - 20] ^= 0x40;
    dump(path, buf);
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("checksum"),
                         ValidationError);
  }
  SUBCASE("future version") {
    auto buf = good;
    buf[8] = 9;
    refix_crc(buf);
    dump(path, buf);
    CHECK_THROWS_WITH_AS(load_model(path),
                         doctest::Contains("unsupported model version"),
                         ValidationError);
  }
  SUBCASE("config text no longer matches its stored hash") {
    auto buf = good;
    // the embedded text starts at offset 24; flip one config character
    REQUIRE(buf[24] == '[');
    buf[25] ^= 0x01;
    refix_crc(buf);
    dump(path, buf);
    CHECK_THROWS_AS(load_model(path), ValidationError);
  }
  SUBCASE("tensor count disagrees with the config") {
    auto buf = good;
    std::uint32_t cfg_len = 0;
    std::memcpy(&cfg_len, buf.data() + 20, 4);
    std::size_t count_off = 24 + cfg_len;
    buf[count_off] += 1;
    refix_crc(buf);
    dump(path, buf);
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("tensors but its config"),
                         ValidationError);
  }
  SUBCASE("trailing garbage") {
    auto buf = good;
    buf.insert(buf.end() - 4, {0, 0, 0, 0});
    refix_crc(buf);
    dump(path, buf);
    CHECK_THROWS_AS(load_model(path), ValidationError);
  }
  std::remove(path.c_str());
}

TEST_CASE("saving into an unwritable location raises an io error") {
  Model m = sample_model();
  CHECK_THROWS_AS(save_model("/tmp/no_such_dir_ds/model.bin", m), IoError);
}
