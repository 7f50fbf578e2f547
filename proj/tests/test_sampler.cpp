#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "lever/sampler.hpp"
#include "lever/worldgen.hpp"

using namespace lever;

namespace {

WorldSpec world_one() {
  WorldConfig cfg;
  cfg.latent_mean = 2.668;
  cfg.name = "world1";
  return generate_world(1, cfg);
}

WorldSpec world_three() {
  WorldConfig cfg;
  cfg.density_volume = {true, true};
  cfg.latent_mean = 3.203;
  cfg.name = "world3";
  return generate_world(3, cfg);
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "lever-sampler-test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("datasets are pure functions of (world, seed, index)") {
  WorldSpec w = world_one();
  Dataset a = sample_dataset(w, 200, 5);
  Dataset b = sample_dataset(w, 200, 5);
  REQUIRE(a.samples.size() == 200);
  CHECK(a.samples == b.samples);

  for (std::int64_t i : {0, 7, 131, 199})
    CHECK(draw_sample(w, 5, i) == a.samples[static_cast<std::size_t>(i)]);

  Dataset c = sample_dataset(w, 200, 6);
  CHECK(a.samples != c.samples);
}

TEST_CASE("marginal frequencies match the input distribution") {
  WorldSpec w = world_one();
  const std::int64_t n = 50'000;
  Dataset data = sample_dataset(w, n, 17);

  std::size_t d1 = w.position_of(1, VariableKind::distance);
  std::size_t s1 = w.position_of(1, VariableKind::side);

  std::map<double, int> dist_counts;
  int left_sides = 0;
  for (const Sample& s : data.samples) {
    dist_counts[s.x[d1]] += 1;
    left_sides += s.x[s1] > 0 ? 1 : 0;
  }

  double tol = 4.0 * std::sqrt(0.2 * 0.8 / static_cast<double>(n));
  for (double g : w.grid)
    CHECK(std::abs(dist_counts[g] / static_cast<double>(n) - 0.2) <= tol);
  double side_tol = 4.0 * std::sqrt(0.25 / static_cast<double>(n));
  CHECK(std::abs(left_sides / static_cast<double>(n) - 0.5) <= side_tol);
}

TEST_CASE("per-input outcome frequencies match the true conditional") {
  WorldSpec w = world_one();
  const std::int64_t n = 100'000;
  Dataset data = sample_dataset(w, n, 23);

  std::map<VisibleInput, std::pair<int, int>> buckets;  // x -> (left, total)
  for (const Sample& s : data.samples) {
    auto& b = buckets[s.x];
    b.first += s.y == Outcome::left ? 1 : 0;
    b.second += 1;
  }
  REQUIRE(buckets.size() == 500);

  int checked = 0;
  for (const auto& [x, counts] : buckets) {
    if (counts.second < 150) continue;
    double p = true_conditional(w, x);
    double freq = counts.first / static_cast<double>(counts.second);
    double se = std::sqrt(std::max(p * (1.0 - p), 1e-4) / counts.second);
    CHECK(std::abs(freq - p) <= 4.0 * se);
    if (++checked == 25) break;
  }
  CHECK(checked == 25);
}

TEST_CASE("rendering follows the canonical field order") {
  WorldSpec w1 = world_one();
  Sample s1;
  s1.x.resize(w1.schema.size());
  s1.x[w1.position_of(1, VariableKind::distance)] = 2.0;
  s1.x[w1.position_of(1, VariableKind::side)] = 1.0;
  s1.x[w1.position_of(1, VariableKind::mass)] = 1.0;
  s1.x[w1.position_of(2, VariableKind::side)] = -1.0;
  s1.x[w1.position_of(2, VariableKind::mass)] = 1.0;
  s1.y = Outcome::left;
  CHECK(render_sample(w1, s1) ==
        "object1 distance: 2, object1 side: L, object1 mass: 1, "
        "object2 side: R, object2 mass: 1, balance: L");

  WorldSpec w3 = world_three();
  Sample s3;
  s3.x.resize(w3.schema.size());
  s3.x[w3.position_of(1, VariableKind::density)] = 3.0;
  s3.x[w3.position_of(1, VariableKind::volume)] = 2.0;
  s3.x[w3.position_of(1, VariableKind::distance)] = 4.0;
  s3.x[w3.position_of(1, VariableKind::side)] = 1.0;
  s3.x[w3.position_of(1, VariableKind::mass)] = 6.0;
  s3.x[w3.position_of(2, VariableKind::density)] = 1.0;
  s3.x[w3.position_of(2, VariableKind::volume)] = 5.0;
  s3.x[w3.position_of(2, VariableKind::side)] = -1.0;
  s3.x[w3.position_of(2, VariableKind::mass)] = 5.0;
  s3.y = Outcome::right;
  CHECK(render_sample(w3, s3) ==
        "object1 density: 3, object1 volume: 2, object1 distance: 4, object1 side: L, "
        "object1 mass: 6, object2 density: 1, object2 volume: 5, object2 side: R, "
        "object2 mass: 5, balance: R");

  CHECK(render_visible(w1, s1.x) ==
        "object1 distance: 2, object1 side: L, object1 mass: 1, "
        "object2 side: R, object2 mass: 1");
}

TEST_CASE("render then parse is the identity on sampled data") {
  for (const WorldSpec& w : {world_one(), world_three()}) {
    Dataset data = sample_dataset(w, 2000, 31);
    for (const Sample& s : data.samples) {
      Sample back = parse_sample_line(w, render_sample(w, s));
      CHECK(back == s);
    }
  }
}

TEST_CASE("malformed sample lines are rejected") {
  WorldSpec w = world_one();
  const std::string good =
      "object1 distance: 2, object1 side: L, object1 mass: 1, "
      "object2 side: R, object2 mass: 1, balance: L";
  CHECK_NOTHROW(parse_sample_line(w, good));

  CHECK_THROWS_AS(parse_sample_line(w, ""), std::invalid_argument);
  // missing balance
  CHECK_THROWS_AS(parse_sample_line(w,
      "object1 distance: 2, object1 side: L, object1 mass: 1, "
      "object2 side: R, object2 mass: 1"), std::invalid_argument);
  // swapped fields
  CHECK_THROWS_AS(parse_sample_line(w,
      "object1 side: L, object1 distance: 2, object1 mass: 1, "
      "object2 side: R, object2 mass: 1, balance: L"), std::invalid_argument);
  // bad side token
  CHECK_THROWS_AS(parse_sample_line(w,
      "object1 distance: 2, object1 side: left, object1 mass: 1, "
      "object2 side: R, object2 mass: 1, balance: L"), std::invalid_argument);
  // unparsable scalar
  CHECK_THROWS_AS(parse_sample_line(w,
      "object1 distance: two, object1 side: L, object1 mass: 1, "
      "object2 side: R, object2 mass: 1, balance: L"), std::invalid_argument);
  // trailing garbage
  CHECK_THROWS_AS(parse_sample_line(w, good + ", extra: 1"), std::invalid_argument);
}

TEST_CASE("format_value renders shortest round-trip decimals") {
  CHECK(format_value(2.0) == "2");
  CHECK(format_value(-3.0) == "-3");
  CHECK(format_value(2.5) == "2.5");
  CHECK(format_value(0.1) == "0.1");
  for (double v : {1.0 / 3.0, 2.668, 1e-9, 123456.789, 5e22}) {
    CHECK(std::strtod(format_value(v).c_str(), nullptr) == v);
  }
}

TEST_CASE("regenerated corpora match the checked-in fixtures") {
  auto dir = temp_dir();
  auto read_bytes = [](const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(bool(f));
    return std::string((std::istreambuf_iterator<char>(f)), {});
  };

  struct Fixture {
    WorldSpec world;
    std::int64_t seed, n;
    const char* name;
  };
  for (const Fixture& fx : {Fixture{world_one(), 11, 20, "corpus_world1_seed11_n20.txt"},
                            Fixture{world_three(), 7, 10, "corpus_world3_seed7_n10.txt"}}) {
    auto out = dir / fx.name;
    export_corpus(sample_dataset(fx.world, fx.n, fx.seed), out);
    CHECK(read_bytes(out) == read_bytes(std::filesystem::path(LEVER_GOLDEN_DIR) / fx.name));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("corpus export and import round-trip, byte for byte") {
  auto dir = temp_dir();
  WorldSpec w = world_three();
  Dataset data = sample_dataset(w, 500, 42);

  auto path = dir / "corpus.txt";
  export_corpus(data, path);
  Dataset back = import_corpus(path);
  CHECK(back.seed == data.seed);
  CHECK(back.samples == data.samples);
  CHECK(world_to_json(back.world) == world_to_json(w));

  auto again = dir / "corpus2.txt";
  export_corpus(back, again);
  std::ifstream f1(path, std::ios::binary), f2(again, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
  CHECK(!b1.empty());

  std::filesystem::remove(dir / "corpus2.txt.meta.json");
  CHECK_THROWS_AS(import_corpus(again), std::runtime_error);
  std::filesystem::remove_all(dir);
}
