#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "lever/estimators.hpp"
#include "lever/worldgen.hpp"

namespace lever {

// Pointwise total variation distance between two Bernoulli conditionals.
inline double tv_point(double p, double q) { return std::abs(p - q); }

enum class EvalMode { enumerate_all, monte_carlo };

struct TvEstimate {
  double value = 0.0;
  double std_error = 0.0;  // zero in enumerate mode
  EvalMode mode = EvalMode::enumerate_all;
  std::int64_t draws = 0;  // monte carlo only
};

// Expected pointwise TV distance to the true conditional under the input
// distribution. enumerate_all integrates the full support exactly;
// monte_carlo averages mc_draws input draws (at least 100, enforced) and
// reports the standard error of the mean.
TvEstimate expected_tv(const WorldSpec& world, const Estimator& est, EvalMode mode,
                       std::int64_t mc_draws = 10'000, std::uint64_t seed = 0);

// Expected pointwise TV distance between two predictors, enumerated.
double expected_tv_between(const WorldSpec& world, const Estimator& a, const Estimator& b);

// A single-variable change to one input: one eligible free scalar re-drawn
// uniformly from the other grid values. Derived masses are recomputed; sides
// are never perturbed.
struct Perturbation {
  VisibleInput base;
  VisibleInput perturbed;
  std::size_t position = 0;  // schema position of the changed variable
  double side = 0.0;         // owning object's side in the base input
  double delta = 0.0;        // new value minus old value
};

std::vector<Perturbation> make_perturbations(const WorldSpec& world, std::int64_t count,
                                             std::uint64_t seed);

// Fraction of perturbations where the model's predicted probability change
// matches the true change in sign, with sign(0) = 0: a zero prediction
// matches only a genuinely zero true change.
double structure_score(const WorldSpec& world, const Estimator& est,
                       std::span<const Perturbation> perturbations);

}  // namespace lever
