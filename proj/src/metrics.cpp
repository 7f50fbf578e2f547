#include "lever/metrics.hpp"

#include <stdexcept>

#include "lever/rng.hpp"
#include "lever/sampler.hpp"

namespace lever {

namespace {

constexpr std::uint64_t kEvalStream = 0xe7a1u;
constexpr std::uint64_t kPerturbStream = 0x9e27u;

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

int sgn(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

TvEstimate expected_tv(const WorldSpec& world, const Estimator& est, EvalMode mode,
                       std::int64_t mc_draws, std::uint64_t seed) {
  TvEstimate out;
  out.mode = mode;
  if (mode == EvalMode::enumerate_all) {
    double acc = 0.0;
    for (const WeightedInput& wi : enumerate_visible_inputs(world))
      acc += wi.weight * tv_point(est.predict_left(wi.x), true_conditional(world, wi.x));
    out.value = acc;
    return out;
  }

  if (mc_draws < 100) fail("monte carlo evaluation needs at least 100 draws");
  Rng rng(mix_seed(seed, kEvalStream));
  double sum = 0.0, sumsq = 0.0;
  for (std::int64_t i = 0; i < mc_draws; ++i) {
    VisibleInput x = draw_visible(world, rng);
    double gap = tv_point(est.predict_left(x), true_conditional(world, x));
    sum += gap;
    sumsq += gap * gap;
  }
  const double n = static_cast<double>(mc_draws);
  out.value = sum / n;
  double var = std::max(sumsq / n - out.value * out.value, 0.0);
  out.std_error = std::sqrt(var / n);
  out.draws = mc_draws;
  return out;
}

double expected_tv_between(const WorldSpec& world, const Estimator& a, const Estimator& b) {
  double acc = 0.0;
  for (const WeightedInput& wi : enumerate_visible_inputs(world))
    acc += wi.weight * tv_point(a.predict_left(wi.x), b.predict_left(wi.x));
  return acc;
}

std::vector<Perturbation> make_perturbations(const WorldSpec& world, std::int64_t count,
                                             std::uint64_t seed) {
  if (count < 1) fail("perturbation count must be positive");
  if (world.free_scalars.empty()) fail("world has no perturbable scalar");
  if (world.grid.size() < 2) fail("perturbations need at least two grid values");

  std::vector<Perturbation> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, kPerturbStream, static_cast<std::uint64_t>(i)));
    Perturbation p;
    p.base = draw_visible(world, rng);
    p.position = world.free_scalars[rng.next_below(world.free_scalars.size())];

    double old_value = p.base[p.position];
    double new_value = old_value;
    while (new_value == old_value) new_value = world.grid[rng.next_below(world.grid.size())];

    p.perturbed = p.base;
    p.perturbed[p.position] = new_value;
    p.delta = new_value - old_value;

    const VisibleVariable& var = world.schema[p.position];
    const ObjectSpec& obj = world.objects[static_cast<std::size_t>(var.object) - 1];
    if (obj.uses_density_volume &&
        (var.kind == VariableKind::density || var.kind == VariableKind::volume)) {
      p.perturbed[world.position_of(var.object, VariableKind::mass)] =
          p.perturbed[world.position_of(var.object, VariableKind::density)] *
          p.perturbed[world.position_of(var.object, VariableKind::volume)];
    }
    p.side = p.base[world.position_of(var.object, VariableKind::side)];
    out.push_back(std::move(p));
  }
  return out;
}

double structure_score(const WorldSpec& world, const Estimator& est,
                       std::span<const Perturbation> perturbations) {
  if (perturbations.empty()) fail("structure score needs at least one perturbation");
  std::int64_t matches = 0;
  for (const Perturbation& p : perturbations) {
    double predicted = est.predict_delta(p.perturbed, p.base);
    double truth = conditional_diff(world, p.perturbed, p.base, world.latent.mean);
    matches += sgn(predicted) == sgn(truth) ? 1 : 0;
  }
  return static_cast<double>(matches) / static_cast<double>(perturbations.size());
}

}  // namespace lever
