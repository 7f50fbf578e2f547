#include "lever/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lever {

namespace {

constexpr std::uint64_t kSampleStream = 0x5a3d7e1b9c24f06aull;

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

double draw_grid(const WorldSpec& world, Rng& rng) {
  return world.grid[rng.next_below(world.grid.size())];
}

double draw_side(const ObjectSpec& obj, Rng& rng) {
  if (obj.fixed_side != 0) return obj.fixed_side;
  return rng.next_below(2) == 0 ? 1.0 : -1.0;
}

// Canonical draw order per object: density, volume, distance (the latent one
// from its Gaussian), side, mass. Visible slots land in x; the latent
// distance is returned separately.
VisibleInput draw_assignment(const WorldSpec& world, Rng& rng, bool with_latent,
                             double* latent_out) {
  VisibleInput x(world.schema.size(), 0.0);
  for (const ObjectSpec& obj : world.objects) {
    double rho = 0.0, vol = 0.0;
    if (obj.uses_density_volume) {
      rho = draw_grid(world, rng);
      vol = draw_grid(world, rng);
      x[world.position_of(obj.index, VariableKind::density)] = rho;
      x[world.position_of(obj.index, VariableKind::volume)] = vol;
    }
    if (obj.latent_distance) {
      if (with_latent) *latent_out = rng.next_normal(world.latent.mean, 1.0);
    } else {
      x[world.position_of(obj.index, VariableKind::distance)] = draw_grid(world, rng);
    }
    x[world.position_of(obj.index, VariableKind::side)] = draw_side(obj, rng);
    x[world.position_of(obj.index, VariableKind::mass)] =
        obj.uses_density_volume ? rho * vol : draw_grid(world, rng);
  }
  return x;
}

}  // namespace

VisibleInput draw_visible(const WorldSpec& world, Rng& rng) {
  return draw_assignment(world, rng, false, nullptr);
}

Sample draw_sample(const WorldSpec& world, std::int64_t seed, std::int64_t index) {
  Rng rng(mix_seed(static_cast<std::uint64_t>(seed), kSampleStream,
                   static_cast<std::uint64_t>(index)));
  double latent = 0.0;
  Sample s;
  s.x = draw_assignment(world, rng, true, &latent);

  double total = 0.0;
  for (const ObjectSpec& obj : world.objects) {
    double side = s.x[world.position_of(obj.index, VariableKind::side)];
    double mass = s.x[world.position_of(obj.index, VariableKind::mass)];
    double dist = obj.latent_distance
                      ? latent
                      : s.x[world.position_of(obj.index, VariableKind::distance)];
    total += object_torque(side, dist, mass);
  }
  s.y = total >= 0.0 ? Outcome::left : Outcome::right;
  return s;
}

Dataset sample_dataset(const WorldSpec& world, std::int64_t n, std::int64_t seed) {
  if (n < 0) fail("dataset size must be nonnegative");
  Dataset data;
  data.world = world;
  data.seed = seed;
  data.samples.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) data.samples.push_back(draw_sample(world, seed, i));
  return data;
}

std::string format_value(double v) {
  if (v == std::rint(v) && std::abs(v) < 9.007199254740992e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

std::string render_visible(const WorldSpec& world, const VisibleInput& x) {
  validate_input(world, x);
  std::ostringstream out;
  for (std::size_t pos = 0; pos < world.schema.size(); ++pos) {
    const VisibleVariable& var = world.schema[pos];
    if (pos > 0) out << ", ";
    out << "object" << var.object << ' ' << to_string(var.kind) << ": ";
    if (var.kind == VariableKind::side) {
      out << (x[pos] > 0 ? 'L' : 'R');
    } else {
      out << format_value(x[pos]);
    }
  }
  return out.str();
}

std::string render_sample(const WorldSpec& world, const Sample& s) {
  return render_visible(world, s.x) + ", balance: " + outcome_char(s.y);
}

namespace {

// One "label: value" field, consumed strictly.
std::string_view next_field(std::string_view& rest, const std::string& line) {
  if (rest.empty()) fail("truncated sample line: " + line);
  std::size_t comma = rest.find(", ");
  std::string_view field = comma == std::string_view::npos ? rest : rest.substr(0, comma);
  rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 2);
  return field;
}

double parse_field(std::string_view field, const std::string& expect_label, bool side,
                   const std::string& line) {
  std::size_t colon = field.find(": ");
  if (colon == std::string_view::npos) fail("missing ': ' in field '" + std::string(field) + "'");
  if (std::string_view label = field.substr(0, colon); label != expect_label)
    fail("expected field '" + expect_label + "', got '" + std::string(label) + "' in: " + line);
  std::string_view value = field.substr(colon + 2);
  if (side) {
    if (value == "L") return 1.0;
    if (value == "R") return -1.0;
    fail("side must be L or R in: " + line);
  }
  std::string buf(value);
  char* end = nullptr;
  double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || buf.empty())
    fail("unparsable value '" + buf + "' in: " + line);
  return v;
}

}  // namespace

Sample parse_sample_line(const WorldSpec& world, const std::string& line) {
  std::string_view rest = line;
  Sample s;
  s.x.resize(world.schema.size());
  for (std::size_t pos = 0; pos < world.schema.size(); ++pos) {
    const VisibleVariable& var = world.schema[pos];
    std::string label =
        "object" + std::to_string(var.object) + " " + to_string(var.kind);
    s.x[pos] = parse_field(next_field(rest, line), label, var.kind == VariableKind::side, line);
  }
  double balance = parse_field(next_field(rest, line), "balance", true, line);
  if (!rest.empty()) fail("trailing content after balance in: " + line);
  s.y = balance > 0 ? Outcome::left : Outcome::right;
  validate_input(world, s.x);
  return s;
}

void export_corpus(const Dataset& data, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus: " + path.string());
  for (const Sample& s : data.samples) out << render_sample(data.world, s) << '\n';
  if (!out) throw std::runtime_error("short write on corpus: " + path.string());

  nlohmann::json meta{
      {"format", "lever-corpus/1"},
      {"world", world_to_json(data.world)},
      {"seed", data.seed},
      {"n", static_cast<std::int64_t>(data.samples.size())},
  };
  std::filesystem::path meta_path = path;
  meta_path += ".meta.json";
  std::ofstream mout(meta_path);
  if (!mout) throw std::runtime_error("cannot write corpus sidecar: " + meta_path.string());
  mout << meta.dump(2) << '\n';
}

Dataset import_corpus(const std::filesystem::path& path) {
  std::filesystem::path meta_path = path;
  meta_path += ".meta.json";
  std::ifstream min(meta_path);
  if (!min) throw std::runtime_error("missing corpus sidecar: " + meta_path.string());
  nlohmann::json meta = nlohmann::json::parse(min);
  if (meta.value("format", "") != "lever-corpus/1") fail("unrecognized corpus format");

  Dataset data;
  data.world = world_from_json(meta.at("world"));
  data.seed = meta.at("seed").get<std::int64_t>();
  const auto n = meta.at("n").get<std::int64_t>();

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read corpus: " + path.string());
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    try {
      data.samples.push_back(parse_sample_line(data.world, line));
    } catch (const std::invalid_argument& e) {
      fail(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (static_cast<std::int64_t>(data.samples.size()) != n)
    fail(path.string() + ": sidecar says " + std::to_string(n) + " samples, file has " +
         std::to_string(data.samples.size()));
  return data;
}

}  // namespace lever
