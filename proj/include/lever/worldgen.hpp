#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace lever {

// A lever world holds n objects on a lever arm. Each object i carries a
// distance d_i from the fulcrum, a side s_i (L = +1, R = -1), and a mass m_i,
// either free or derived as density * volume. Torque is s*d*m; the lever
// tips left when the torques sum to >= 0. Exactly one distance is latent,
// drawn per observation from a unit-variance Gaussian; every other scalar is
// visible and supported on a small positive grid.

enum class VariableKind { density, volume, distance, side, mass };

const char* to_string(VariableKind kind);

enum class Outcome : int { left = +1, right = -1 };

inline char outcome_char(Outcome b) { return b == Outcome::left ? 'L' : 'R'; }

struct LatentGaussian {
  double mean = 0.0;
  double variance = 1.0;  // pinned at exactly 1
};

struct ObjectSpec {
  int index = 0;                     // 1-based position in the object list
  bool uses_density_volume = false;  // mass derived as density * volume
  bool latent_distance = false;      // distance hidden from observations
  int fixed_side = 0;                // 0 free, +1 pinned to L, -1 pinned to R
};

// One slot in the canonical visible-variable order. Within an object the
// order is density, volume, distance, side, mass; objects appear in index
// order. Latent distances are skipped. Derived masses stay visible but are
// not free: their value is implied by density and volume.
struct VisibleVariable {
  int object = 0;  // 1-based
  VariableKind kind{};
  bool derived = false;
};

using VisibleInput = std::vector<double>;

struct WorldSpec {
  std::string name;
  std::int64_t seed = 0;
  std::vector<ObjectSpec> objects;
  LatentGaussian latent;
  std::vector<double> grid = {1, 2, 3, 4, 5};

  // Derived layout, rebuilt by finalize(). Treat as read-only.
  std::vector<VisibleVariable> schema;
  std::vector<std::size_t> free_scalars;  // schema positions drawn from the grid
  std::vector<std::size_t> free_sides;    // schema positions drawn uniform over ±1
  int latent_object = 0;                  // 1-based

  // Validates the spec and rebuilds the derived layout. Throws
  // std::invalid_argument on a malformed spec (fewer than two objects, not
  // exactly one latent distance, variance != 1, bad grid, bad sides).
  void finalize();

  // Schema position of (object, kind), or schema.size() if not visible.
  std::size_t position_of(int object, VariableKind kind) const;

  std::size_t num_visible() const { return schema.size(); }
  std::size_t num_free_scalars() const { return free_scalars.size(); }

  // Count of distinct visible inputs: grid^free_scalars * 2^free_sides.
  std::int64_t input_space_size() const;
};

struct WorldConfig {
  int n_objects = 2;
  std::vector<bool> density_volume;   // empty = all false
  std::vector<bool> latent;           // empty = last object's distance
  std::vector<int> fixed_sides;       // empty = all free; entries 0 / +1 / -1
  std::optional<double> latent_mean;  // explicit mean; otherwise Uniform[1,5] from seed
  std::string name;                   // label; default derived from seed
};

// Builds a world deterministically from (seed, config). The latent mean is
// drawn from Uniform[1,5] unless config pins it; a pinned mean must also lie
// in [1,5]. Throws std::invalid_argument on a malformed config.
WorldSpec generate_world(std::int64_t seed, const WorldConfig& config = {});

inline double object_torque(double side, double distance, double mass) {
  return side * distance * mass;
}

// L exactly when the torques sum to >= 0 (ties tip left).
Outcome balance_outcome(std::span<const double> torques);

// Decomposition of the total torque given a visible input: the sum K over
// fully visible objects plus c * d_latent, where c = side * mass of the
// latent object.
struct TorqueSplit {
  double visible = 0.0;
  double latent_coeff = 0.0;
};

// Validates the input (size, side coding, derived masses on-manifold) and
// splits the torque. Throws std::invalid_argument on a malformed input.
TorqueSplit torque_split(const WorldSpec& world, const VisibleInput& x);

void validate_input(const WorldSpec& world, const VisibleInput& x);

// p(L | x) when the latent distance has the given mean: Phi((K + c*mean)/|c|),
// degenerating to the indicator of K >= 0 when c = 0.
double conditional_given_mean(const WorldSpec& world, const VisibleInput& x, double mean);

// p(L | x) under the world's own latent mean.
double true_conditional(const WorldSpec& world, const VisibleInput& x);

// p(L | x_new) - p(L | x_base) under the given mean. Computed through the
// matching normal tail so the sign survives even when both probabilities
// round to 0 or 1; once the magnitude underflows entirely the result is
// clamped to the smallest normal double with the analytic sign.
double conditional_diff(const WorldSpec& world, const VisibleInput& x_new,
                        const VisibleInput& x_base, double mean);

struct WeightedInput {
  VisibleInput x;
  double weight = 0.0;
};

// All distinct visible inputs with their probabilities under the sampling
// distribution (uniform product over free scalars and free sides). Inputs
// appear in odometer order over the free schema positions, last position
// fastest.
std::vector<WeightedInput> enumerate_visible_inputs(const WorldSpec& world);

nlohmann::json world_to_json(const WorldSpec& world);
WorldSpec world_from_json(const nlohmann::json& j);

}  // namespace lever
