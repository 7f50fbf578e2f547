#include "lever/worldgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lever/normal.hpp"
#include "lever/rng.hpp"

namespace lever {

namespace {

constexpr std::uint64_t kWorldStream = 0x1e7e7b01d5eedull;

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

bool is_side_value(double v) { return v == 1.0 || v == -1.0; }

}  // namespace

const char* to_string(VariableKind kind) {
  switch (kind) {
    case VariableKind::density: return "density";
    case VariableKind::volume: return "volume";
    case VariableKind::distance: return "distance";
    case VariableKind::side: return "side";
    case VariableKind::mass: return "mass";
  }
  return "?";
}

void WorldSpec::finalize() {
  if (objects.size() < 2) fail("world needs at least two objects");
  if (latent.variance != 1.0) fail("latent variance is pinned at 1");
  if (!std::isfinite(latent.mean)) fail("latent mean must be finite");

  if (grid.empty()) fail("value grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) fail("grid values must be positive");
    if (i > 0 && !(grid[i] > grid[i - 1])) fail("grid values must be strictly increasing");
  }

  int latent_count = 0;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const ObjectSpec& obj = objects[i];
    if (obj.index != static_cast<int>(i) + 1) fail("object indices must run 1..n in order");
    if (obj.fixed_side != 0 && !is_side_value(obj.fixed_side)) fail("fixed_side must be 0, +1 or -1");
    if (obj.latent_distance) {
      ++latent_count;
      latent_object = obj.index;
    }
  }
  if (latent_count != 1) fail("exactly one latent distance is required");

  schema.clear();
  free_scalars.clear();
  free_sides.clear();
  for (const ObjectSpec& obj : objects) {
    if (obj.uses_density_volume) {
      schema.push_back({obj.index, VariableKind::density, false});
      schema.push_back({obj.index, VariableKind::volume, false});
    }
    if (!obj.latent_distance) schema.push_back({obj.index, VariableKind::distance, false});
    schema.push_back({obj.index, VariableKind::side, false});
    schema.push_back({obj.index, VariableKind::mass, obj.uses_density_volume});
  }
  for (std::size_t pos = 0; pos < schema.size(); ++pos) {
    const VisibleVariable& var = schema[pos];
    if (var.kind == VariableKind::side) {
      if (objects[var.object - 1].fixed_side == 0) free_sides.push_back(pos);
    } else if (!var.derived) {
      free_scalars.push_back(pos);
    }
  }
}

std::size_t WorldSpec::position_of(int object, VariableKind kind) const {
  for (std::size_t pos = 0; pos < schema.size(); ++pos)
    if (schema[pos].object == object && schema[pos].kind == kind) return pos;
  return schema.size();
}

std::int64_t WorldSpec::input_space_size() const {
  std::int64_t total = 1;
  for (std::size_t i = 0; i < free_scalars.size(); ++i) total *= static_cast<std::int64_t>(grid.size());
  for (std::size_t i = 0; i < free_sides.size(); ++i) total *= 2;
  return total;
}

WorldSpec generate_world(std::int64_t seed, const WorldConfig& config) {
  const int n = config.n_objects;
  if (n < 2) fail("world needs at least two objects");
  if (!config.density_volume.empty() && config.density_volume.size() != static_cast<std::size_t>(n))
    fail("density_volume must list every object or be empty");
  if (!config.latent.empty() && config.latent.size() != static_cast<std::size_t>(n))
    fail("latent must list every object or be empty");
  if (!config.fixed_sides.empty() && config.fixed_sides.size() != static_cast<std::size_t>(n))
    fail("fixed_sides must list every object or be empty");

  WorldSpec world;
  world.seed = seed;
  world.name = config.name.empty() ? "world-seed" + std::to_string(seed) : config.name;

  int latent_requested = 0;
  for (int i = 0; i < n; ++i) {
    ObjectSpec obj;
    obj.index = i + 1;
    obj.uses_density_volume = !config.density_volume.empty() && config.density_volume[i];
    obj.latent_distance = config.latent.empty() ? (i == n - 1) : bool(config.latent[i]);
    obj.fixed_side = config.fixed_sides.empty() ? 0 : config.fixed_sides[i];
    latent_requested += obj.latent_distance ? 1 : 0;
    world.objects.push_back(obj);
  }
  if (latent_requested != 1) fail("exactly one latent distance is required");

  if (config.latent_mean) {
    world.latent.mean = *config.latent_mean;
  } else {
    Rng rng(mix_seed(static_cast<std::uint64_t>(seed), kWorldStream));
    world.latent.mean = 1.0 + 4.0 * rng.next_unit();
  }
  if (world.latent.mean < 1.0 || world.latent.mean > 5.0) fail("latent mean must lie in [1, 5]");
  world.latent.variance = 1.0;

  world.finalize();
  return world;
}

Outcome balance_outcome(std::span<const double> torques) {
  double sum = 0.0;
  for (double t : torques) sum += t;
  return sum >= 0.0 ? Outcome::left : Outcome::right;
}

void validate_input(const WorldSpec& world, const VisibleInput& x) {
  if (x.size() != world.schema.size()) fail("input size does not match the visible schema");
  for (std::size_t pos = 0; pos < x.size(); ++pos) {
    const VisibleVariable& var = world.schema[pos];
    if (!std::isfinite(x[pos])) fail("input values must be finite");
    if (var.kind == VariableKind::side) {
      if (!is_side_value(x[pos])) fail("sides must be +1 (L) or -1 (R)");
      int pinned = world.objects[var.object - 1].fixed_side;
      if (pinned != 0 && x[pos] != pinned) fail("input contradicts a pinned side");
    } else if (!(x[pos] > 0.0)) {
      fail("scalar variables must be positive");
    }
  }
  for (const ObjectSpec& obj : world.objects) {
    if (!obj.uses_density_volume) continue;
    double rho = x[world.position_of(obj.index, VariableKind::density)];
    double vol = x[world.position_of(obj.index, VariableKind::volume)];
    double mass = x[world.position_of(obj.index, VariableKind::mass)];
    if (mass != rho * vol) fail("derived mass must equal density * volume");
  }
}

TorqueSplit torque_split(const WorldSpec& world, const VisibleInput& x) {
  validate_input(world, x);
  TorqueSplit split;
  for (const ObjectSpec& obj : world.objects) {
    double side = x[world.position_of(obj.index, VariableKind::side)];
    double mass = x[world.position_of(obj.index, VariableKind::mass)];
    if (obj.latent_distance) {
      split.latent_coeff = side * mass;
    } else {
      double dist = x[world.position_of(obj.index, VariableKind::distance)];
      split.visible += object_torque(side, dist, mass);
    }
  }
  return split;
}

double conditional_given_mean(const WorldSpec& world, const VisibleInput& x, double mean) {
  TorqueSplit split = torque_split(world, x);
  if (split.latent_coeff == 0.0) return split.visible >= 0.0 ? 1.0 : 0.0;
  return normal_cdf((split.visible + split.latent_coeff * mean) / std::abs(split.latent_coeff));
}

double true_conditional(const WorldSpec& world, const VisibleInput& x) {
  return conditional_given_mean(world, x, world.latent.mean);
}

double conditional_diff(const WorldSpec& world, const VisibleInput& x_new,
                        const VisibleInput& x_base, double mean) {
  TorqueSplit sn = torque_split(world, x_new);
  TorqueSplit sb = torque_split(world, x_base);
  auto arg = [mean](const TorqueSplit& s) {
    return (s.visible + s.latent_coeff * mean) / std::abs(s.latent_coeff);
  };
  if (sn.latent_coeff == 0.0 || sb.latent_coeff == 0.0) {
    auto point = [&](const TorqueSplit& s) {
      return s.latent_coeff == 0.0 ? (s.visible >= 0.0 ? 1.0 : 0.0) : normal_cdf(arg(s));
    };
    return point(sn) - point(sb);
  }
  double t_base = arg(sb);
  double t_new = arg(sn);
  if (t_new == t_base) return 0.0;
  double diff = normal_cdf_diff(t_base, t_new);
  // Far enough into one tail both cdf values underflow together. The
  // analytic difference is still nonzero there, so clamp to the smallest
  // normal double with the correct sign rather than losing it.
  if (diff == 0.0) diff = std::copysign(std::numeric_limits<double>::min(), t_new - t_base);
  return diff;
}

std::vector<WeightedInput> enumerate_visible_inputs(const WorldSpec& world) {
  struct Axis {
    std::size_t pos;
    bool side;
  };
  std::vector<Axis> axes;
  for (std::size_t pos = 0; pos < world.schema.size(); ++pos) {
    const VisibleVariable& var = world.schema[pos];
    if (var.kind == VariableKind::side) {
      if (world.objects[var.object - 1].fixed_side == 0) axes.push_back({pos, true});
    } else if (!var.derived) {
      axes.push_back({pos, false});
    }
  }

  const std::int64_t total = world.input_space_size();
  const double weight = 1.0 / static_cast<double>(total);

  std::vector<WeightedInput> out;
  out.reserve(static_cast<std::size_t>(total));

  VisibleInput x(world.schema.size(), 0.0);
  for (const ObjectSpec& obj : world.objects)
    if (obj.fixed_side != 0) x[world.position_of(obj.index, VariableKind::side)] = obj.fixed_side;

  std::vector<std::size_t> digits(axes.size(), 0);
  for (std::int64_t i = 0; i < total; ++i) {
    for (std::size_t a = 0; a < axes.size(); ++a)
      x[axes[a].pos] = axes[a].side ? (digits[a] == 0 ? 1.0 : -1.0) : world.grid[digits[a]];
    for (const ObjectSpec& obj : world.objects) {
      if (!obj.uses_density_volume) continue;
      x[world.position_of(obj.index, VariableKind::mass)] =
          x[world.position_of(obj.index, VariableKind::density)] *
          x[world.position_of(obj.index, VariableKind::volume)];
    }
    out.push_back({x, weight});

    for (std::size_t a = axes.size(); a-- > 0;) {
      std::size_t radix = axes[a].side ? 2 : world.grid.size();
      if (++digits[a] < radix) break;
      digits[a] = 0;
    }
  }
  return out;
}

nlohmann::json world_to_json(const WorldSpec& world) {
  nlohmann::json objects = nlohmann::json::array();
  for (const ObjectSpec& obj : world.objects) {
    nlohmann::json o{{"index", obj.index}, {"uses_density_volume", obj.uses_density_volume}};
    if (obj.fixed_side != 0) o["fixed_side"] = obj.fixed_side == 1 ? "L" : "R";
    objects.push_back(std::move(o));
  }
  return nlohmann::json{
      {"format", "lever-world/1"},
      {"name", world.name},
      {"seed", world.seed},
      {"grid", world.grid},
      {"objects", std::move(objects)},
      {"latent",
       {{"object", world.latent_object},
        {"kind", "distance"},
        {"mean", world.latent.mean},
        {"variance", world.latent.variance}}},
  };
}

WorldSpec world_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "lever-world/1") fail("unrecognized world format");
  WorldSpec world;
  world.name = j.value("name", "");
  world.seed = j.at("seed").get<std::int64_t>();
  world.grid = j.at("grid").get<std::vector<double>>();

  const nlohmann::json& latent = j.at("latent");
  if (latent.value("kind", "distance") != "distance") fail("only latent distances are supported");
  world.latent.mean = latent.at("mean").get<double>();
  world.latent.variance = latent.value("variance", 1.0);
  const int latent_object = latent.at("object").get<int>();

  for (const nlohmann::json& o : j.at("objects")) {
    ObjectSpec obj;
    obj.index = o.at("index").get<int>();
    obj.uses_density_volume = o.value("uses_density_volume", false);
    obj.latent_distance = obj.index == latent_object;
    if (o.contains("fixed_side")) {
      std::string s = o.at("fixed_side").get<std::string>();
      if (s == "L") obj.fixed_side = 1;
      else if (s == "R") obj.fixed_side = -1;
      else fail("fixed_side must be \"L\" or \"R\"");
    }
    world.objects.push_back(obj);
  }

  world.finalize();
  return world;
}

}  // namespace lever
