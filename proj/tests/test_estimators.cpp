#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "lever/estimators.hpp"
#include "lever/normal.hpp"
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

// Mean absolute gap to the true conditional over the full input space.
double mean_abs_gap(const WorldSpec& w, const Estimator& est) {
  double acc = 0.0;
  for (const WeightedInput& wi : enumerate_visible_inputs(w))
    acc += wi.weight * std::abs(est.predict_left(wi.x) - true_conditional(w, wi.x));
  return acc;
}

}  // namespace

TEST_CASE("naive frequencies are exact and unseen inputs fall back to 1/2") {
  WorldSpec w = world_one();
  auto inputs = enumerate_visible_inputs(w);

  Dataset data;
  data.world = w;
  for (int i = 0; i < 6; ++i) data.samples.push_back({inputs[0].x, Outcome::left});
  for (int i = 0; i < 2; ++i) data.samples.push_back({inputs[0].x, Outcome::right});
  for (int i = 0; i < 3; ++i) data.samples.push_back({inputs[1].x, Outcome::right});

  NaiveMle est;
  est.fit(data);
  CHECK(est.table_size() == 2);
  CHECK(est.predict_left(inputs[0].x) == 0.75);
  CHECK(est.predict_left(inputs[1].x) == 0.0);
  CHECK(est.predict_left(inputs[2].x) == 0.5);
}

TEST_CASE("naive table built from rounded true frequencies sits within quantization error") {
  WorldSpec w = world_one();
  const int per_input = 64;

  Dataset data;
  data.world = w;
  for (const WeightedInput& wi : enumerate_visible_inputs(w)) {
    int lefts = static_cast<int>(std::lround(per_input * true_conditional(w, wi.x)));
    for (int i = 0; i < per_input; ++i)
      data.samples.push_back({wi.x, i < lefts ? Outcome::left : Outcome::right});
  }

  NaiveMle est;
  est.fit(data);
  for (const WeightedInput& wi : enumerate_visible_inputs(w)) {
    double gap = std::abs(est.predict_left(wi.x) - true_conditional(w, wi.x));
    CHECK(gap <= 0.5 / per_input + 1e-12);
  }
}

TEST_CASE("naive model survives a json round trip") {
  WorldSpec w = world_three();
  NaiveMle est;
  est.fit(sample_dataset(w, 3000, 5));
  auto back = estimator_from_json(est.to_json());
  for (const WeightedInput& wi : enumerate_visible_inputs(w))
    CHECK(back->predict_left(wi.x) == est.predict_left(wi.x));
}

TEST_CASE("monomial enumeration matches the closed-form count") {
  auto combos = monomial_index_sets(2, 2);
  REQUIRE(combos.size() == 5);
  CHECK(combos[0] == std::vector<int>{0});
  CHECK(combos[1] == std::vector<int>{1});
  CHECK(combos[2] == std::vector<int>{0, 0});
  CHECK(combos[3] == std::vector<int>{0, 1});
  CHECK(combos[4] == std::vector<int>{1, 1});

  for (int v : {2, 5, 9}) {
    for (int d : {1, 2, 3, 4}) {
      CHECK(static_cast<std::int64_t>(monomial_index_sets(v, d).size()) ==
            poly_feature_count(v, d));
    }
  }
  CHECK(poly_feature_count(9, 3) == 219);
}

TEST_CASE("logistic regression fits are deterministic and serializable") {
  WorldSpec w = world_one();
  Dataset data = sample_dataset(w, 4000, 9);

  PolyLogReg a({.degree = 2});
  PolyLogReg b({.degree = 2});
  a.fit(data);
  b.fit(data);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.converged());

  auto back = estimator_from_json(a.to_json());
  for (const WeightedInput& wi : enumerate_visible_inputs(w)) {
    double p = a.predict_left(wi.x);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(back->predict_left(wi.x) == p);
  }
}

TEST_CASE("degree three is enough for the torque rule where degree one is not") {
  WorldSpec w = world_one();
  Dataset data = sample_dataset(w, 20'000, 3);

  PolyLogReg cubic({.degree = 3});
  cubic.fit(data);
  CHECK(mean_abs_gap(w, cubic) < 0.05);

  PolyLogReg linear({.degree = 1});
  linear.fit(data);
  CHECK(mean_abs_gap(w, linear) > 0.05);
}

TEST_CASE("single-outcome training sets get the smoothed intercept fit") {
  WorldSpec w = world_one();
  Dataset data;
  data.world = w;
  auto inputs = enumerate_visible_inputs(w);
  for (int i = 0; i < 40; ++i) data.samples.push_back({inputs[i].x, Outcome::left});

  PolyLogReg est({.degree = 2});
  est.fit(data);
  CHECK(est.converged());
  for (int i = 0; i < 60; ++i) {
    double p = est.predict_left(inputs[i].x);
    CHECK(p > 0.5);
    CHECK(p < 1.0);
  }

  Dataset empty;
  empty.world = w;
  CHECK_THROWS_AS(est.fit(empty), std::invalid_argument);
  PolyLogReg unfit({.degree = 1});
  CHECK_THROWS_AS(unfit.predict_left(inputs[0].x), std::invalid_argument);
}

TEST_CASE("parametric structure fit recovers the latent mean") {
  WorldSpec w = world_one();
  for (std::int64_t seed : {41, 42}) {
    StructureMle est;
    est.fit(sample_dataset(w, 10'000, seed));
    CHECK(std::abs(est.mu_hat() - w.latent.mean) <= 0.1);
  }

  WorldSpec w3 = world_three();
  StructureMle est3;
  est3.fit(sample_dataset(w3, 10'000, 43));
  CHECK(std::abs(est3.mu_hat() - w3.latent.mean) <= 0.1);
}

TEST_CASE("structure fit reads the data, not the world's own latent mean") {
  WorldSpec w = world_one();
  Dataset data = sample_dataset(w, 2000, 13);

  nlohmann::json altered_json = world_to_json(w);
  altered_json["latent"]["mean"] = 4.9;
  Dataset altered = data;
  altered.world = world_from_json(altered_json);

  StructureMle a, b;
  a.fit(data);
  b.fit(altered);
  CHECK(a.mu_hat() == b.mu_hat());
  CHECK(std::abs(a.mu_hat() - 4.9) > 1.0);
}

TEST_CASE("parametric structure predictions follow the fitted conditional") {
  WorldSpec w = world_one();
  StructureMle est;
  est.fit(sample_dataset(w, 5000, 8));
  for (const WeightedInput& wi : enumerate_visible_inputs(w))
    CHECK(est.predict_left(wi.x) == conditional_given_mean(w, wi.x, est.mu_hat()));

  auto back = estimator_from_json(est.to_json());
  auto inputs = enumerate_visible_inputs(w);
  CHECK(back->predict_left(inputs[7].x) == est.predict_left(inputs[7].x));
}

TEST_CASE("grid EM raises the likelihood monotonically and lands near the mean") {
  WorldSpec w = world_one();
  StructureOptions opts;
  opts.mode = StructureOptions::Mode::grid_em;
  StructureMle est(opts);
  est.fit(sample_dataset(w, 5000, 21));

  const auto& history = est.em_loglik_history();
  REQUIRE(history.size() >= 2);
  for (std::size_t i = 1; i < history.size(); ++i)
    CHECK(history[i] >= history[i - 1] - 1e-9);

  double total = 0.0;
  for (double v : est.pmf()) {
    CHECK(v >= 0.0);
    total += v;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(est.mu_hat() - w.latent.mean) <= 0.25);

  for (const WeightedInput& wi : enumerate_visible_inputs(w)) {
    double p = est.predict_left(wi.x);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }

  auto back = estimator_from_json(est.to_json());
  auto inputs = enumerate_visible_inputs(w);
  CHECK(back->predict_left(inputs[3].x) == est.predict_left(inputs[3].x));
}

TEST_CASE("empty training sets leave structure fits at their documented defaults") {
  WorldSpec w = world_one();
  Dataset empty;
  empty.world = w;

  StructureMle parametric;
  parametric.fit(empty);
  CHECK(parametric.mu_hat() == 3.0);
  REQUIRE(parametric.warnings().size() == 1);

  StructureOptions opts;
  opts.mode = StructureOptions::Mode::grid_em;
  StructureMle grid(opts);
  grid.fit(empty);
  REQUIRE(!grid.pmf().empty());
  for (double v : grid.pmf()) CHECK(v == doctest::Approx(grid.pmf()[0]).epsilon(1e-12));
  CHECK(!grid.warnings().empty());
}

TEST_CASE("saturated structure deltas keep their sign") {
  WorldSpec w = world_three();
  StructureMle est;
  est.fit(sample_dataset(w, 2000, 2));

  auto inputs = enumerate_visible_inputs(w);
  // Hunt for a pair deep in the saturated zone: huge visible torque, small
  // latent coefficient, so both predictions round to 1.
  VisibleInput big(w.schema.size());
  big[w.position_of(1, VariableKind::density)] = 5.0;
  big[w.position_of(1, VariableKind::volume)] = 5.0;
  big[w.position_of(1, VariableKind::mass)] = 25.0;
  big[w.position_of(1, VariableKind::distance)] = 4.0;
  big[w.position_of(1, VariableKind::side)] = 1.0;
  big[w.position_of(2, VariableKind::density)] = 1.0;
  big[w.position_of(2, VariableKind::volume)] = 1.0;
  big[w.position_of(2, VariableKind::mass)] = 1.0;
  big[w.position_of(2, VariableKind::side)] = -1.0;
  VisibleInput bigger = big;
  bigger[w.position_of(1, VariableKind::distance)] = 5.0;

  CHECK(est.predict_left(big) == 1.0);
  CHECK(est.predict_left(bigger) == 1.0);
  CHECK(est.predict_delta(bigger, big) > 0.0);
  CHECK(est.predict_delta(big, bigger) < 0.0);
}

TEST_CASE("estimator factory covers every advertised type") {
  CHECK(make_estimator({{"type", "naive"}})->id() == "naive-mle");
  CHECK(make_estimator({{"type", "constant"}, {"p", 0.5}})->id() == "constant-0.5");
  CHECK(make_estimator({{"type", "truth"}})->id() == "truth");
  CHECK(make_estimator({{"type", "logreg"}, {"degree", 3}})->id() == "logreg-d3");
  CHECK(make_estimator({{"type", "structure"}})->id() == "structure-parametric");
  CHECK(make_estimator({{"type", "structure"}, {"mode", "grid"}})->id() == "structure-grid");
  CHECK_THROWS_AS(make_estimator({{"type", "mystery"}}), std::invalid_argument);
  CHECK_THROWS_AS(make_estimator({{"type", "constant"}, {"p", 1.5}}), std::invalid_argument);
}

TEST_CASE("the true model reproduces the generating conditional") {
  WorldSpec w = world_one();
  TrueModel truth;
  truth.fit(sample_dataset(w, 10, 1));
  for (const WeightedInput& wi : enumerate_visible_inputs(w))
    CHECK(truth.predict_left(wi.x) == true_conditional(w, wi.x));
  CHECK(mean_abs_gap(w, truth) == 0.0);
}
