#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lever/rng.hpp"
#include "lever/worldgen.hpp"

namespace lever {

struct Sample {
  VisibleInput x;
  Outcome y = Outcome::left;

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  WorldSpec world;
  std::int64_t seed = 0;
  std::vector<Sample> samples;
};

// One visible assignment drawn from the input distribution: free scalars
// uniform on the grid, free sides uniform on ±1, pinned sides and derived
// masses filled in.
VisibleInput draw_visible(const WorldSpec& world, Rng& rng);

// Sample `index` of the dataset keyed by `seed`. A pure function of
// (world, seed, index): each sample owns a derived generator, so datasets
// regenerate identically regardless of draw order or parallelism. The latent
// distance is drawn in canonical variable order alongside the visible
// variables and enters only the outcome.
Sample draw_sample(const WorldSpec& world, std::int64_t seed, std::int64_t index);

Dataset sample_dataset(const WorldSpec& world, std::int64_t n, std::int64_t seed);

// Shortest decimal string that strtod parses back to exactly v.
std::string format_value(double v);

// "object1 distance: 2, object1 side: L, object1 mass: 1, ..." in canonical
// order; render_sample appends ", balance: L".
std::string render_visible(const WorldSpec& world, const VisibleInput& x);
std::string render_sample(const WorldSpec& world, const Sample& s);

// Strict inverse of render_sample. Throws std::invalid_argument on any
// deviation: wrong field order, unknown label, unparsable value, off-grid
// side coding, missing balance.
Sample parse_sample_line(const WorldSpec& world, const std::string& line);

// Corpus files hold one rendered sample per line. A sidecar at
// <path>.meta.json records format, world, seed and count, which is enough to
// regenerate the corpus byte-for-byte.
void export_corpus(const Dataset& data, const std::filesystem::path& path);
Dataset import_corpus(const std::filesystem::path& path);

}  // namespace lever
