#include "lever/experiments.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "lever/estimators.hpp"
#include "lever/rng.hpp"
#include "lever/sampler.hpp"

namespace lever {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kDataStream = 0x646174612d736574ull;
constexpr std::uint64_t kEvalSeedStream = 0x6576616c2d736574ull;
constexpr std::uint64_t kPerturbStream = 0x706572742d736574ull;

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

const char* eval_name(EvalMode mode) {
  return mode == EvalMode::enumerate_all ? "enumerate" : "mc";
}

EvalMode eval_from_name(const std::string& name) {
  if (name == "enumerate") return EvalMode::enumerate_all;
  if (name == "mc") return EvalMode::monte_carlo;
  fail("eval must be \"enumerate\" or \"mc\", got \"" + name + "\"");
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) fail(std::string("unknown key \"") + it.key() + "\" in " + where);
  }
}

WorldSpec resolve_world(const nlohmann::json& j, const fs::path& base_dir) {
  if (j.is_string()) {
    fs::path p = j.get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    std::ifstream in(p);
    if (!in) fail("cannot open world file " + p.string());
    nlohmann::json doc;
    in >> doc;
    return world_from_json(doc);
  }
  if (!j.is_object()) fail("world must be a path, a world document, or generator settings");
  if (j.contains("format")) return world_from_json(j);

  check_keys(j, {"seed", "n_objects", "density_volume", "latent", "fixed_sides",
                 "latent_mean", "name"},
             "world settings");
  if (!j.contains("seed")) fail("world settings need a seed");
  WorldConfig wc;
  wc.n_objects = j.value("n_objects", 2);
  if (j.contains("density_volume"))
    wc.density_volume = j.at("density_volume").get<std::vector<bool>>();
  if (j.contains("latent")) wc.latent = j.at("latent").get<std::vector<bool>>();
  if (j.contains("fixed_sides")) wc.fixed_sides = j.at("fixed_sides").get<std::vector<int>>();
  if (j.contains("latent_mean")) wc.latent_mean = j.at("latent_mean").get<double>();
  wc.name = j.value("name", std::string{});
  return generate_world(j.at("seed").get<std::int64_t>(), wc);
}

void validate(const ExperimentConfig& c) {
  if (c.world.objects.size() < 2) fail("config has no world");
  if (c.estimators.empty()) fail("config needs at least one estimator");
  if (c.sizes.empty()) fail("config needs at least one training size");
  for (std::size_t i = 0; i < c.sizes.size(); ++i) {
    if (c.sizes[i] < 1) fail("training sizes must be >= 1");
    if (i > 0 && c.sizes[i] <= c.sizes[i - 1]) fail("training sizes must be strictly increasing");
  }
  if (c.seeds_per_point < 1) fail("seeds_per_point must be >= 1");
  if (c.perturbations < 1) fail("perturbations must be >= 1");
  if (c.eval == EvalMode::monte_carlo && c.mc_draws < 100)
    fail("monte carlo evaluation needs at least 100 draws");
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

nlohmann::json cell_to_json(const CellResult& r) {
  nlohmann::json j{{"cell", {r.estimator_index, r.size_index, r.seed_index}},
                   {"estimator", r.estimator_id},
                   {"n_train", r.n_train},
                   {"status", r.ok ? "ok" : "failed"},
                   {"wall_ms", r.wall_ms}};
  if (r.ok) {
    j["tv"] = r.tv.value;
    j["tv_se"] = r.tv.std_error;
    j["eval"] = eval_name(r.tv.mode);
    j["draws"] = r.tv.draws;
    j["score"] = r.score;
  } else {
    j["error"] = r.error;
  }
  return j;
}

CellResult cell_from_json(const nlohmann::json& j) {
  CellResult r;
  const auto& cell = j.at("cell");
  r.estimator_index = cell.at(0).get<std::size_t>();
  r.size_index = cell.at(1).get<std::size_t>();
  r.seed_index = cell.at(2).get<std::int64_t>();
  r.estimator_id = j.at("estimator").get<std::string>();
  r.n_train = j.at("n_train").get<std::int64_t>();
  r.ok = j.at("status").get<std::string>() == "ok";
  r.wall_ms = j.value("wall_ms", std::int64_t{0});
  if (r.ok) {
    r.tv.value = j.at("tv").get<double>();
    r.tv.std_error = j.at("tv_se").get<double>();
    r.tv.mode = eval_from_name(j.at("eval").get<std::string>());
    r.tv.draws = j.at("draws").get<std::int64_t>();
    r.score = j.at("score").get<double>();
  } else {
    r.error = j.value("error", std::string{});
  }
  return r;
}

}  // namespace

std::vector<std::int64_t> default_sizes() {
  return {10, 32, 100, 316, 1000, 3162, 10000, 31623, 100000};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             const fs::path& base_dir) {
  if (!doc.is_object()) fail("experiment config must be an object");
  check_keys(doc,
             {"world", "estimators", "sizes", "seeds_per_point", "eval", "mc_draws",
              "perturbations", "master_seed", "workers", "out_dir"},
             "experiment config");
  if (!doc.contains("world")) fail("experiment config needs a world");
  if (!doc.contains("estimators")) fail("experiment config needs estimators");

  ExperimentConfig c;
  c.world = resolve_world(doc.at("world"), base_dir);
  if (!doc.at("estimators").is_array() || doc.at("estimators").empty())
    fail("estimators must be a non-empty array");
  for (const auto& e : doc.at("estimators")) {
    make_estimator(e);  // reject malformed settings up front
    c.estimators.push_back(e);
  }
  c.sizes = doc.contains("sizes") ? doc.at("sizes").get<std::vector<std::int64_t>>()
                                  : default_sizes();
  c.seeds_per_point = doc.value("seeds_per_point", std::int64_t{5});
  c.eval = eval_from_name(doc.value("eval", std::string("enumerate")));
  c.mc_draws = doc.value("mc_draws", std::int64_t{10'000});
  c.perturbations = doc.value("perturbations", std::int64_t{1'000});
  c.master_seed = doc.value("master_seed", std::uint64_t{1});
  c.workers = doc.value("workers", 1);
  if (doc.contains("out_dir")) {
    fs::path p = doc.at("out_dir").get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    c.out_dir = p;
  }
  validate(c);
  return c;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& config) {
  return {{"world", world_to_json(config.world)},
          {"estimators", config.estimators},
          {"sizes", config.sizes},
          {"seeds_per_point", config.seeds_per_point},
          {"eval", eval_name(config.eval)},
          {"mc_draws", config.mc_draws},
          {"perturbations", config.perturbations},
          {"master_seed", config.master_seed},
          {"workers", config.workers}};
}

std::string config_hash(const ExperimentConfig& config) {
  nlohmann::json j = experiment_config_to_json(config);
  j.erase("workers");  // parallelism never changes results
  const std::string dump = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::int64_t curve_data_seed(std::uint64_t master_seed, std::int64_t n_train,
                             std::int64_t seed_index) {
  return static_cast<std::int64_t>(mix_seed(master_seed, kDataStream,
                                            static_cast<std::uint64_t>(n_train),
                                            static_cast<std::uint64_t>(seed_index)));
}

namespace {

CellResult run_cell(const ExperimentConfig& config,
                    const std::vector<Perturbation>& perturbations,
                    const std::string& estimator_id, std::size_t e, std::size_t s,
                    std::int64_t k) {
  CellResult r;
  r.estimator_index = e;
  r.size_index = s;
  r.seed_index = k;
  r.estimator_id = estimator_id;
  r.n_train = config.sizes[s];
  const auto t0 = std::chrono::steady_clock::now();
  try {
    auto est = make_estimator(config.estimators[e]);
    Dataset data = sample_dataset(config.world, r.n_train,
                                  curve_data_seed(config.master_seed, r.n_train, k));
    est->fit(data);
    r.tv = expected_tv(config.world, *est, config.eval, config.mc_draws,
                       mix_seed(config.master_seed, kEvalSeedStream,
                                static_cast<std::uint64_t>(r.n_train),
                                static_cast<std::uint64_t>(k)));
    r.score = structure_score(config.world, *est, perturbations);
    r.ok = true;
  } catch (const std::exception& ex) {
    r.ok = false;
    r.error = ex.what();
  }
  r.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
  return r;
}

}  // namespace

RunRecord run_learning_curve(const ExperimentConfig& config) {
  validate(config);

  RunRecord record;
  record.config = config;
  record.hash = config_hash(config);

  // Estimator labels survive even if construction fails per cell later.
  std::vector<std::string> ids;
  for (const auto& e : config.estimators) {
    try {
      ids.push_back(make_estimator(e)->id());
    } catch (const std::exception&) {
      ids.push_back(e.is_object() ? e.value("type", std::string("invalid"))
                                  : std::string("invalid"));
    }
  }

  const auto perturbations =
      make_perturbations(config.world, config.perturbations,
                         mix_seed(config.master_seed, kPerturbStream));

  struct Coord {
    std::size_t e, s;
    std::int64_t k;
  };
  std::vector<Coord> plan;
  for (std::size_t e = 0; e < config.estimators.size(); ++e)
    for (std::size_t s = 0; s < config.sizes.size(); ++s)
      for (std::int64_t k = 0; k < config.seeds_per_point; ++k) plan.push_back({e, s, k});
  record.cells.resize(plan.size());

  // Journal: previously finished cells are loaded, new ones appended.
  std::map<std::array<std::int64_t, 3>, CellResult> done;
  std::ofstream journal;
  std::mutex journal_mutex;
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    const fs::path path = config.out_dir / "journal.jsonl";
    if (fs::exists(path)) {
      bool ends_with_newline = true;
      std::ifstream in(path);
      std::string line;
      bool first = true;
      if (in.seekg(0, std::ios::end), in.tellg() > 0) {
        in.seekg(-1, std::ios::end);
        ends_with_newline = in.get() == '\n';
        in.seekg(0);
      }
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
          continue;  // torn tail line from an interrupted run
        }
        if (first) {
          first = false;
          if (j.value("format", std::string{}) != kRunFormat ||
              j.value("config_hash", std::string{}) != record.hash)
            throw std::runtime_error("journal in " + config.out_dir.string() +
                                     " belongs to a different experiment config");
          continue;
        }
        try {
          CellResult r = cell_from_json(j);
          done[{static_cast<std::int64_t>(r.estimator_index),
                static_cast<std::int64_t>(r.size_index), r.seed_index}] = r;
        } catch (const nlohmann::json::exception&) {
          continue;
        }
      }
      journal.open(path, std::ios::app);
      // Terminate a torn tail line so appended cells stay parsable.
      if (!ends_with_newline) journal << '\n';
    } else {
      journal.open(path);
      journal << nlohmann::json{{"format", kRunFormat}, {"config_hash", record.hash}}.dump()
              << std::endl;
    }
    if (!journal) throw std::runtime_error("cannot write journal in " + config.out_dir.string());
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plan.size()) return;
      const auto [e, s, k] = plan[i];
      if (auto it = done.find({static_cast<std::int64_t>(e), static_cast<std::int64_t>(s), k});
          it != done.end()) {
        record.cells[i] = it->second;
        continue;
      }
      record.cells[i] = run_cell(config, perturbations, ids[e], e, s, k);
      if (journal.is_open()) {
        std::lock_guard<std::mutex> lock(journal_mutex);
        journal << cell_to_json(record.cells[i]).dump() << std::endl;
      }
    }
  };

  const int workers =
      std::max(1, std::min<int>(config.workers, static_cast<int>(plan.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return record;
}

std::string csv_text(const RunRecord& record) {
  std::string out =
      "schema_version,world,estimator,n_train,seed,eval_mode,mc_draws,"
      "expected_tv,tv_std_error,structure_score,status\n";
  const std::string world = csv_field(record.config.world.name);
  for (const CellResult& r : record.cells) {
    out += '1';
    out += ',';
    out += world;
    out += ',';
    out += csv_field(r.estimator_id);
    out += ',';
    out += std::to_string(r.n_train);
    out += ',';
    out += std::to_string(r.seed_index);
    out += ',';
    out += eval_name(r.ok ? r.tv.mode : record.config.eval);
    out += ',';
    if (r.ok) {
      out += std::to_string(r.tv.draws);
      out += ',';
      out += format_value(r.tv.value);
      out += ',';
      out += format_value(r.tv.std_error);
      out += ',';
      out += format_value(r.score);
    } else {
      out += ",,,";
    }
    out += ',';
    out += r.ok ? "ok" : "failed";
    out += '\n';
  }
  return out;
}

void write_outputs(const RunRecord& record, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "results.csv", std::ios::binary);
    csv << csv_text(record);
  }
  nlohmann::json cells = nlohmann::json::array();
  for (const CellResult& r : record.cells) cells.push_back(cell_to_json(r));
  nlohmann::json run{{"format", kRunFormat},
                     {"config_hash", record.hash},
                     {"config", experiment_config_to_json(record.config)},
                     {"cells", cells}};
  std::ofstream out(dir / "run.json");
  out << run.dump(2) << '\n';
}

std::vector<CurvePoint> summarize(const RunRecord& record) {
  std::vector<CurvePoint> points;
  const std::size_t n_sizes = record.config.sizes.size();
  for (std::size_t e = 0; e < record.config.estimators.size(); ++e) {
    for (std::size_t s = 0; s < n_sizes; ++s) {
      CurvePoint p;
      p.n_train = record.config.sizes[s];
      for (const CellResult& r : record.cells) {
        if (r.estimator_index != e || r.size_index != s) continue;
        if (p.estimator.empty()) p.estimator = r.estimator_id;
        if (!r.ok) continue;
        p.mean_tv += r.tv.value;
        p.mean_score += r.score;
        ++p.count;
      }
      if (p.count > 0) {
        p.mean_tv /= p.count;
        p.mean_score /= p.count;
      }
      points.push_back(p);
    }
  }
  return points;
}

}  // namespace lever
