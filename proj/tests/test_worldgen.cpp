#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "lever/normal.hpp"
#include "lever/worldgen.hpp"
#include "oracles.hpp"

using namespace lever;

namespace {

WorldConfig plain_two_object() { return WorldConfig{}; }

WorldConfig dense_two_object() {
  WorldConfig cfg;
  cfg.density_volume = {true, true};
  return cfg;
}

void set_var(const WorldSpec& world, VisibleInput& x, int object, VariableKind kind, double v) {
  std::size_t pos = world.position_of(object, kind);
  REQUIRE(pos < world.schema.size());
  x[pos] = v;
}

// World with m1=1, d1=2, s1=L, m2=1, s2=R: visible torque 2, latent coeff -1.
VisibleInput k2_cminus1_input(const WorldSpec& world) {
  VisibleInput x(world.schema.size(), 0.0);
  set_var(world, x, 1, VariableKind::distance, 2.0);
  set_var(world, x, 1, VariableKind::side, 1.0);
  set_var(world, x, 1, VariableKind::mass, 1.0);
  set_var(world, x, 2, VariableKind::side, -1.0);
  set_var(world, x, 2, VariableKind::mass, 1.0);
  return x;
}

}  // namespace

TEST_CASE("two-object world without density/volume exposes five visible variables") {
  WorldConfig cfg = plain_two_object();
  cfg.latent_mean = 2.668;
  WorldSpec w = generate_world(1, cfg);

  REQUIRE(w.schema.size() == 5);
  CHECK(w.schema[0].object == 1);
  CHECK(w.schema[0].kind == VariableKind::distance);
  CHECK(w.schema[1].kind == VariableKind::side);
  CHECK(w.schema[2].kind == VariableKind::mass);
  CHECK(w.schema[3].object == 2);
  CHECK(w.schema[3].kind == VariableKind::side);
  CHECK(w.schema[4].kind == VariableKind::mass);
  CHECK(w.latent_object == 2);
  CHECK(w.latent.mean == 2.668);
  CHECK(w.latent.variance == 1.0);
  CHECK(w.free_scalars.size() == 3);
  CHECK(w.free_sides.size() == 2);
  CHECK(w.input_space_size() == 500);  // 5^3 * 2^2
}

TEST_CASE("two-object world with density/volume everywhere exposes nine visible variables") {
  WorldConfig cfg = dense_two_object();
  cfg.latent_mean = 3.203;
  WorldSpec w = generate_world(3, cfg);

  REQUIRE(w.schema.size() == 9);
  CHECK(w.schema[0].kind == VariableKind::density);
  CHECK(w.schema[1].kind == VariableKind::volume);
  CHECK(w.schema[2].kind == VariableKind::distance);
  CHECK(w.schema[3].kind == VariableKind::side);
  CHECK(w.schema[4].kind == VariableKind::mass);
  CHECK(w.schema[4].derived);
  CHECK(w.schema[5].object == 2);
  CHECK(w.schema[8].kind == VariableKind::mass);
  CHECK(w.free_scalars.size() == 5);  // rho1, V1, d1, rho2, V2
  CHECK(w.input_space_size() == 12500);  // 5^5 * 2^2
}

TEST_CASE("generation is deterministic in (seed, config)") {
  WorldSpec a = generate_world(7, dense_two_object());
  WorldSpec b = generate_world(7, dense_two_object());
  CHECK(world_to_json(a) == world_to_json(b));
  CHECK(a.latent.mean >= 1.0);
  CHECK(a.latent.mean <= 5.0);

  WorldSpec c = generate_world(8, dense_two_object());
  CHECK(c.latent.mean != a.latent.mean);
}

TEST_CASE("malformed configs are rejected") {
  WorldConfig one;
  one.n_objects = 1;
  CHECK_THROWS_AS(generate_world(1, one), std::invalid_argument);

  WorldConfig two_latents;
  two_latents.latent = {true, true};
  CHECK_THROWS_AS(generate_world(1, two_latents), std::invalid_argument);

  WorldConfig no_latents;
  no_latents.latent = {false, false};
  CHECK_THROWS_AS(generate_world(1, no_latents), std::invalid_argument);

  WorldConfig out_of_range;
  out_of_range.latent_mean = 7.0;
  CHECK_THROWS_AS(generate_world(1, out_of_range), std::invalid_argument);
}

TEST_CASE("balance outcome: ties and signs") {
  double tie[] = {6.0, -6.0};
  CHECK(balance_outcome(tie) == Outcome::left);
  double left[] = {6.0, -2.0};
  CHECK(balance_outcome(left) == Outcome::left);
  double right[] = {1.5, -2.0, 0.25};
  CHECK(balance_outcome(right) == Outcome::right);
}

TEST_CASE("conditional at a cancelled visible torque is one half") {
  // Three objects chosen so the visible torques cancel: s1 d1 m1 = +2,
  // s2 d2 m2 = -2, latent object with side L and mass 1.
  WorldConfig cfg;
  cfg.n_objects = 3;
  WorldSpec w = generate_world(11, cfg);

  VisibleInput x(w.schema.size(), 0.0);
  set_var(w, x, 1, VariableKind::distance, 2.0);
  set_var(w, x, 1, VariableKind::side, 1.0);
  set_var(w, x, 1, VariableKind::mass, 1.0);
  set_var(w, x, 2, VariableKind::distance, 1.0);
  set_var(w, x, 2, VariableKind::side, -1.0);
  set_var(w, x, 2, VariableKind::mass, 2.0);
  set_var(w, x, 3, VariableKind::side, 1.0);
  set_var(w, x, 3, VariableKind::mass, 1.0);

  CHECK(conditional_given_mean(w, x, 0.0) == 0.5);
  CHECK(conditional_given_mean(w, x, 3.0) == doctest::Approx(normal_cdf(3.0)).epsilon(1e-15));
}

TEST_CASE("overwhelming visible torque saturates the conditional") {
  WorldConfig cfg = plain_two_object();
  cfg.latent_mean = 3.0;
  WorldSpec w = generate_world(2, cfg);

  VisibleInput x(w.schema.size(), 0.0);
  set_var(w, x, 1, VariableKind::distance, 5.0);
  set_var(w, x, 1, VariableKind::side, 1.0);
  set_var(w, x, 1, VariableKind::mass, 5.0);
  set_var(w, x, 2, VariableKind::side, 1.0);
  set_var(w, x, 2, VariableKind::mass, 1.0);
  CHECK(true_conditional(w, x) == 1.0);
}

TEST_CASE("analytic conditional matches quadrature and simulation") {
  oracle::Quadrature quad = oracle::gauss_hermite(64);

  WorldConfig cfg1 = plain_two_object();
  cfg1.latent_mean = 2.668;
  WorldSpec w1 = generate_world(1, cfg1);

  WorldConfig cfg3 = dense_two_object();
  cfg3.latent_mean = 3.203;
  WorldSpec w3 = generate_world(3, cfg3);

  // The named spot check: visible torque 2 against latent coefficient -1.
  VisibleInput probe = k2_cminus1_input(w1);
  double analytic = true_conditional(w1, probe);
  CHECK(analytic == doctest::Approx(normal_cdf(2.0 - 2.668)).epsilon(1e-15));
  oracle::McEstimate sim = oracle::mc_conditional(w1, probe, w1.latent.mean, 10'000'000, 99);
  CHECK(std::abs(analytic - sim.p) <= 3.0 * sim.stderr_);

  for (const WorldSpec* w : {&w1, &w3}) {
    auto inputs = enumerate_visible_inputs(*w);
    std::size_t stride = inputs.size() / 20;
    for (std::size_t i = 0; i < inputs.size(); i += stride) {
      double p = true_conditional(*w, inputs[i].x);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      double q = oracle::gh_conditional(*w, inputs[i].x, w->latent.mean, quad);
      CHECK(std::abs(p - q) <= 1e-8);
    }
  }
}

TEST_CASE("enumeration covers the full input space with uniform weights") {
  WorldConfig cfg = plain_two_object();
  cfg.latent_mean = 2.668;
  WorldSpec w = generate_world(1, cfg);

  auto inputs = enumerate_visible_inputs(w);
  REQUIRE(inputs.size() == 500);

  double total = 0.0;
  std::set<VisibleInput> seen;
  for (const auto& wi : inputs) {
    CHECK(wi.weight == doctest::Approx(1.0 / 500).epsilon(1e-14));
    total += wi.weight;
    seen.insert(wi.x);
  }
  CHECK(seen.size() == 500);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  WorldConfig cfg3 = dense_two_object();
  cfg3.latent_mean = 3.203;
  auto inputs3 = enumerate_visible_inputs(generate_world(3, cfg3));
  CHECK(inputs3.size() == 12500);
}

TEST_CASE("enumeration respects pinned sides and derived masses") {
  WorldConfig cfg = plain_two_object();
  cfg.fixed_sides = {1, -1};
  cfg.latent_mean = 2.668;
  WorldSpec w = generate_world(1, cfg);
  auto inputs = enumerate_visible_inputs(w);
  REQUIRE(inputs.size() == 125);  // 5^3, sides pinned
  for (const auto& wi : inputs) {
    CHECK(wi.x[w.position_of(1, VariableKind::side)] == 1.0);
    CHECK(wi.x[w.position_of(2, VariableKind::side)] == -1.0);
  }

  WorldConfig cfg3 = dense_two_object();
  cfg3.latent_mean = 3.203;
  WorldSpec w3 = generate_world(3, cfg3);
  for (const auto& wi : enumerate_visible_inputs(w3)) {
    double rho = wi.x[w3.position_of(2, VariableKind::density)];
    double vol = wi.x[w3.position_of(2, VariableKind::volume)];
    CHECK(wi.x[w3.position_of(2, VariableKind::mass)] == rho * vol);
  }
}

TEST_CASE("flipping every side reflects the conditional") {
  WorldConfig cfg = plain_two_object();
  cfg.latent_mean = 2.668;
  WorldSpec w = generate_world(1, cfg);
  for (const auto& wi : enumerate_visible_inputs(w)) {
    VisibleInput flipped = wi.x;
    flipped[w.position_of(1, VariableKind::side)] *= -1.0;
    flipped[w.position_of(2, VariableKind::side)] *= -1.0;
    double p = true_conditional(w, wi.x);
    double q = true_conditional(w, flipped);
    CHECK(std::abs(q - (1.0 - p)) <= 1e-15);
  }
}

TEST_CASE("monotonicity of the conditional in perturbed scalars") {
  WorldConfig cfg = dense_two_object();
  cfg.latent_mean = 3.203;
  WorldSpec w = generate_world(3, cfg);
  auto inputs = enumerate_visible_inputs(w);

  auto sgn = [](double v) { return (v > 0.0) - (v < 0.0); };

  for (std::size_t i = 0; i < inputs.size(); i += 7) {
    const VisibleInput& x = inputs[i].x;

    // Scalars of the fully visible object move p with their side's sign.
    for (VariableKind kind : {VariableKind::density, VariableKind::volume, VariableKind::distance}) {
      std::size_t pos = w.position_of(1, kind);
      if (x[pos] == 5.0) continue;
      VisibleInput up = x;
      up[pos] += 1.0;
      up[w.position_of(1, VariableKind::mass)] =
          up[w.position_of(1, VariableKind::density)] * up[w.position_of(1, VariableKind::volume)];
      double side = x[w.position_of(1, VariableKind::side)];
      double diff = conditional_diff(w, up, x, w.latent.mean);
      CHECK(sgn(diff) == sgn(side));
    }

    // Growing the latent object's mass scales the latent coefficient, which
    // drags Phi's argument K/|c| + sgn(c)*mean toward its limit sgn(c)*mean.
    // The change in p therefore carries the sign of -K.
    {
      std::size_t pos = w.position_of(2, VariableKind::volume);
      if (x[pos] == 5.0) continue;
      VisibleInput up = x;
      up[pos] += 1.0;
      up[w.position_of(2, VariableKind::mass)] =
          up[w.position_of(2, VariableKind::density)] * up[w.position_of(2, VariableKind::volume)];
      TorqueSplit split = torque_split(w, x);
      double diff = conditional_diff(w, up, x, w.latent.mean);
      if (split.visible != 0.0) CHECK(sgn(diff) == -sgn(split.visible));
    }
  }
}

TEST_CASE("tail differences keep their sign when probabilities saturate") {
  WorldConfig cfg = plain_two_object();
  cfg.latent_mean = 5.0;
  WorldSpec w = generate_world(4, cfg);

  // Both inputs have saturated p(L): visible torque 20 and 25 against
  // latent coefficient -1. Plain subtraction of the conditionals gives 0.
  VisibleInput lo(w.schema.size(), 0.0);
  set_var(w, lo, 1, VariableKind::distance, 4.0);
  set_var(w, lo, 1, VariableKind::side, 1.0);
  set_var(w, lo, 1, VariableKind::mass, 5.0);
  set_var(w, lo, 2, VariableKind::side, -1.0);
  set_var(w, lo, 2, VariableKind::mass, 1.0);
  VisibleInput hi = lo;
  set_var(w, hi, 1, VariableKind::distance, 5.0);

  CHECK(true_conditional(w, lo) == 1.0);
  CHECK(true_conditional(w, hi) == 1.0);
  CHECK(conditional_diff(w, hi, lo, w.latent.mean) > 0.0);
  CHECK(conditional_diff(w, lo, hi, w.latent.mean) < 0.0);
}

TEST_CASE("inputs off the derived-mass manifold are rejected") {
  WorldConfig cfg = dense_two_object();
  cfg.latent_mean = 3.203;
  WorldSpec w = generate_world(3, cfg);
  auto inputs = enumerate_visible_inputs(w);
  VisibleInput x = inputs[0].x;
  x[w.position_of(1, VariableKind::mass)] += 1.0;
  CHECK_THROWS_AS(torque_split(w, x), std::invalid_argument);

  VisibleInput short_x(w.schema.size() - 1, 1.0);
  CHECK_THROWS_AS(validate_input(w, short_x), std::invalid_argument);

  VisibleInput bad_side = inputs[0].x;
  bad_side[w.position_of(1, VariableKind::side)] = 0.5;
  CHECK_THROWS_AS(validate_input(w, bad_side), std::invalid_argument);
}

TEST_CASE("world json round trip preserves every field") {
  WorldConfig cfg = dense_two_object();
  cfg.latent_mean = 3.203;
  cfg.fixed_sides = {1, 0};
  cfg.name = "roundtrip";
  WorldSpec w = generate_world(3, cfg);

  WorldSpec back = world_from_json(world_to_json(w));
  CHECK(world_to_json(back) == world_to_json(w));
  CHECK(back.latent.mean == w.latent.mean);
  CHECK(back.objects[0].fixed_side == 1);
  CHECK(back.schema.size() == w.schema.size());

  nlohmann::json bad = world_to_json(w);
  bad["format"] = "other";
  CHECK_THROWS_AS(world_from_json(bad), std::invalid_argument);
}
