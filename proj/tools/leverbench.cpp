// Command line front end: world generation, sampling, fitting, evaluation,
// learning curves, sample-complexity bounds, and chat-model probes.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lever/bounds.hpp"
#include "lever/estimators.hpp"
#include "lever/experiments.hpp"
#include "lever/icl.hpp"
#include "lever/metrics.hpp"
#include "lever/rng.hpp"
#include "lever/sampler.hpp"
#include "lever/worldgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path default_out_root() {
  if (const char* env = std::getenv("LEVERBENCH_OUT"); env && *env) return env;
  return "out";
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json doc;
  in >> doc;
  return doc;
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

lever::WorldSpec load_world(const fs::path& path) {
  return lever::world_from_json(read_json_file(path));
}

// Estimator settings from either raw JSON ({"type":"logreg","degree":3}) or
// the estimator id shorthand (naive-mle, logreg-d3, structure-parametric,
// structure-grid, truth, constant-0.5).
json estimator_settings(const std::string& text) {
  if (!text.empty() && text.front() == '{') return json::parse(text);
  if (text == "naive-mle" || text == "naive") return {{"type", "naive"}};
  if (text == "truth") return {{"type", "truth"}};
  if (text.rfind("logreg-d", 0) == 0)
    return {{"type", "logreg"}, {"degree", std::stoi(text.substr(8))}};
  if (text == "structure-parametric") return {{"type", "structure"}, {"mode", "parametric"}};
  if (text == "structure-grid") return {{"type", "structure"}, {"mode", "grid"}};
  if (text.rfind("constant-", 0) == 0)
    return {{"type", "constant"}, {"p", std::stod(text.substr(9))}};
  throw std::runtime_error("unrecognized estimator \"" + text + "\"");
}

int side_code(const std::string& s) {
  if (s == "L" || s == "l" || s == "+1") return +1;
  if (s == "R" || s == "r" || s == "-1") return -1;
  if (s == "free" || s == "0") return 0;
  throw std::runtime_error("side must be L, R, or free, got \"" + s + "\"");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lever world benchmark"};
  app.require_subcommand(1);

  // ---- gen-world -----------------------------------------------------------
  auto* gen = app.add_subcommand("gen-world", "generate a world spec from a seed");
  std::int64_t gen_seed = 1;
  int gen_objects = 2;
  std::vector<int> gen_dv;
  std::vector<std::string> gen_sides;
  int gen_latent_object = 0;
  std::optional<double> gen_mean;
  std::string gen_name, gen_out;
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_option("--objects", gen_objects, "number of objects (default 2)");
  gen->add_option("--density-volume", gen_dv,
                  "per-object 0/1 flags: mass derived as density*volume");
  gen->add_option("--sides", gen_sides, "per-object side: L, R, or free");
  gen->add_option("--latent-object", gen_latent_object,
                  "1-based object whose distance is latent (default: last)");
  double gen_mean_value = 0.0;
  auto* mean_opt = gen->add_option("--mean", gen_mean_value,
                                   "pin the latent mean (default: drawn from the seed)");
  gen->add_option("--name", gen_name, "world label");
  gen->add_option("--out", gen_out, "output file (default: stdout)");

  // ---- sample --------------------------------------------------------------
  auto* sample = app.add_subcommand("sample", "draw samples from a world");
  std::string sample_world, sample_out;
  std::int64_t sample_n = 10, sample_seed = 0;
  sample->add_option("--world", sample_world, "world spec file")->required();
  sample->add_option("-n,--count", sample_n, "number of samples")->required();
  sample->add_option("--seed", sample_seed, "dataset seed (default 0)");
  sample->add_option("--out", sample_out,
                     "corpus file; written with a .meta.json sidecar (default: stdout)");

  // ---- export-corpus -------------------------------------------------------
  auto* expc = app.add_subcommand(
      "export-corpus", "regenerate a corpus byte-identically from its sidecar");
  std::string expc_meta, expc_out;
  expc->add_option("--meta", expc_meta, "corpus .meta.json sidecar")->required();
  expc->add_option("--out", expc_out,
                   "output corpus path (default: sidecar path without .meta.json)");

  // ---- fit -----------------------------------------------------------------
  auto* fit = app.add_subcommand("fit", "fit an estimator on a sampled dataset");
  std::string fit_world, fit_estimator = "naive-mle", fit_out;
  std::int64_t fit_n = 1000, fit_seed = 0;
  fit->add_option("--world", fit_world, "world spec file")->required();
  fit->add_option("--estimator", fit_estimator,
                  "estimator id shorthand or JSON settings (default naive-mle)");
  fit->add_option("-n,--count", fit_n, "training samples (default 1000)");
  fit->add_option("--seed", fit_seed, "dataset seed (default 0)");
  fit->add_option("--out", fit_out, "fitted model file (default: stdout)");

  // ---- eval ----------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "evaluate a fitted model file");
  std::string eval_model, eval_world, eval_mode = "enumerate", eval_out;
  std::int64_t eval_draws = 10'000, eval_perturbations = 1'000;
  std::uint64_t eval_seed = 1;
  eval->add_option("--model", eval_model, "fitted model file from `fit`")->required();
  eval->add_option("--world", eval_world,
                   "world spec file, for models that embed none (constant)");
  eval->add_option("--mode", eval_mode, "enumerate or mc (default enumerate)");
  eval->add_option("--draws", eval_draws, "monte carlo draws (default 10000)");
  eval->add_option("--perturbations", eval_perturbations,
                   "structure-score perturbations (default 1000)");
  eval->add_option("--seed", eval_seed, "evaluation seed (default 1)");
  eval->add_option("--out", eval_out, "report file (default: stdout)");

  // ---- curve ---------------------------------------------------------------
  auto* curve = app.add_subcommand("curve", "run a learning-curve experiment config");
  std::string curve_config, curve_out_dir;
  int curve_workers = 0;
  curve->add_option("--config", curve_config, "experiment config JSON")->required();
  curve->add_option("--out-dir", curve_out_dir, "output directory (overrides config)");
  curve->add_option("--workers", curve_workers, "worker threads (overrides config)");

  // ---- bounds --------------------------------------------------------------
  auto* bounds = app.add_subcommand("bounds", "sample-complexity accounting table");
  double bounds_epsilon = 0.05;
  std::int64_t bounds_inputs = 125, bounds_budget = 4000;
  bounds->add_option("--epsilon", bounds_epsilon, "target expected TV (default 0.05)");
  bounds->add_option("--inputs", bounds_inputs, "number of distinct inputs (default 125)");
  bounds->add_option("--budget", bounds_budget, "total sample budget (default 4000)");

  // ---- icl -----------------------------------------------------------------
  auto* icl = app.add_subcommand("icl", "probe a chat model on lever worlds");
  std::string icl_mock, icl_base = "https://api.openai.com/v1", icl_model = "gpt-4o";
  std::string icl_key_env = "OPENAI_API_KEY", icl_audit, icl_out;
  std::vector<std::int64_t> icl_world_seeds{101, 102};
  std::vector<std::int64_t> icl_sizes{10, 100};
  int icl_sets = 2, icl_hints = 0;
  std::int64_t icl_test_n = 5, icl_train_n = 100;
  std::uint64_t icl_master = 1;
  double icl_rate = 0.0;
  bool icl_pipeline = false;
  icl->add_option("--mock", icl_mock,
                  "offline self-test against a loopback endpoint: truth or malformed");
  icl->add_option("--base-url", icl_base, "endpoint base URL");
  icl->add_option("--model", icl_model, "model name");
  icl->add_option("--key-env", icl_key_env,
                  "environment variable holding the API key (default OPENAI_API_KEY)");
  icl->add_option("--world-seeds", icl_world_seeds, "world seeds (default 101 102)");
  icl->add_option("--sizes", icl_sizes, "in-context sample counts (default 10 100)");
  icl->add_option("--sets", icl_sets, "sample sets per (world, size) (default 2)");
  icl->add_option("--test-n", icl_test_n, "test inputs per experiment (default 5)");
  icl->add_option("--master-seed", icl_master, "master seed (default 1)");
  icl->add_option("--rate-limit", icl_rate, "minimum seconds between requests");
  icl->add_option("--audit", icl_audit, "JSONL request/response audit log");
  icl->add_option("--out", icl_out, "full run report file");
  icl->add_flag("--pipeline", icl_pipeline,
                "ask for parser code instead (recorded only, never executed)");
  icl->add_option("--hints", icl_hints, "pipeline hint level 0..3 (default 0)");
  icl->add_option("--train-n", icl_train_n, "pipeline samples per prompt (default 100)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      lever::WorldConfig cfg;
      cfg.n_objects = gen_objects;
      for (int flag : gen_dv) cfg.density_volume.push_back(flag != 0);
      for (const std::string& s : gen_sides) cfg.fixed_sides.push_back(side_code(s));
      if (gen_latent_object > 0) {
        cfg.latent.assign(static_cast<std::size_t>(gen_objects), false);
        cfg.latent.at(static_cast<std::size_t>(gen_latent_object) - 1) = true;
      }
      if (!mean_opt->empty()) cfg.latent_mean = gen_mean_value;
      cfg.name = gen_name;
      const json doc = lever::world_to_json(lever::generate_world(gen_seed, cfg));
      if (gen_out.empty()) std::cout << doc.dump(2) << '\n';
      else write_text_file(gen_out, doc.dump(2) + "\n");
    }

    if (*sample) {
      const lever::WorldSpec world = load_world(sample_world);
      const lever::Dataset data = lever::sample_dataset(world, sample_n, sample_seed);
      if (sample_out.empty()) {
        for (const lever::Sample& s : data.samples)
          std::cout << lever::render_sample(world, s) << '\n';
      } else {
        fs::path path = sample_out;
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        lever::export_corpus(data, path);
        std::cout << "wrote " << data.samples.size() << " samples to " << path.string()
                  << '\n';
      }
    }

    if (*expc) {
      const json meta = read_json_file(expc_meta);
      if (meta.value("format", "") != "lever-corpus/1")
        throw std::runtime_error("not a corpus sidecar: " + expc_meta);
      const lever::WorldSpec world = lever::world_from_json(meta.at("world"));
      const lever::Dataset data = lever::sample_dataset(
          world, meta.at("n").get<std::int64_t>(), meta.at("seed").get<std::int64_t>());
      fs::path out = expc_out;
      if (out.empty()) {
        std::string s = expc_meta;
        const std::string suffix = ".meta.json";
        if (s.size() <= suffix.size() || s.substr(s.size() - suffix.size()) != suffix)
          throw std::runtime_error("--out required when the sidecar is not *.meta.json");
        out = s.substr(0, s.size() - suffix.size());
      }
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      lever::export_corpus(data, out);
      std::cout << "regenerated " << out.string() << '\n';
    }

    if (*fit) {
      const lever::WorldSpec world = load_world(fit_world);
      auto est = lever::make_estimator(estimator_settings(fit_estimator));
      est->fit(lever::sample_dataset(world, fit_n, fit_seed));
      const std::string doc = est->to_json().dump(2) + "\n";
      if (fit_out.empty()) std::cout << doc;
      else write_text_file(fit_out, doc);
    }

    if (*eval) {
      const json model = read_json_file(eval_model);
      auto est = lever::estimator_from_json(model);
      lever::WorldSpec world;
      if (model.contains("world")) world = lever::world_from_json(model.at("world"));
      else if (!eval_world.empty()) world = load_world(eval_world);
      else throw std::runtime_error("model embeds no world; pass --world");
      lever::EvalMode mode;
      if (eval_mode == "enumerate") mode = lever::EvalMode::enumerate_all;
      else if (eval_mode == "mc") mode = lever::EvalMode::monte_carlo;
      else throw std::runtime_error("--mode must be enumerate or mc");
      const lever::TvEstimate tv = lever::expected_tv(world, *est, mode, eval_draws,
                                                      lever::mix_seed(eval_seed, 0xe7a1));
      const auto perturbations =
          lever::make_perturbations(world, eval_perturbations, lever::mix_seed(eval_seed, 0x9e27));
      const double score = lever::structure_score(world, *est, perturbations);
      json report{{"estimator", est->id()},
                  {"world", world.name},
                  {"eval_mode", eval_mode},
                  {"expected_tv", tv.value},
                  {"tv_std_error", tv.std_error},
                  {"mc_draws", tv.draws},
                  {"structure_score", score},
                  {"perturbations", eval_perturbations}};
      if (eval_out.empty()) std::cout << report.dump(2) << '\n';
      else write_text_file(eval_out, report.dump(2) + "\n");
    }

    if (*curve) {
      const fs::path config_path = curve_config;
      lever::ExperimentConfig config = lever::experiment_config_from_json(
          read_json_file(config_path), config_path.parent_path());
      if (curve_workers > 0) config.workers = curve_workers;
      if (!curve_out_dir.empty()) config.out_dir = curve_out_dir;
      if (config.out_dir.empty())
        config.out_dir = default_out_root() / ("curve-" + lever::config_hash(config));

      const lever::RunRecord record = lever::run_learning_curve(config);
      lever::write_outputs(record, config.out_dir);
      lever::emit_plots(record, config.out_dir);

      int failed = 0;
      for (const lever::CellResult& r : record.cells)
        if (!r.ok) ++failed;
      std::printf("config %s: %zu cells (%d failed) -> %s\n", record.hash.c_str(),
                  record.cells.size(), failed, config.out_dir.string().c_str());
      std::printf("%-22s %10s %12s %12s\n", "estimator", "n_train", "mean_tv", "mean_score");
      for (const lever::CurvePoint& p : lever::summarize(record)) {
        if (p.count == 0) {
          std::printf("%-22s %10lld %12s %12s\n", p.estimator.c_str(),
                      static_cast<long long>(p.n_train), "-", "-");
        } else {
          std::printf("%-22s %10lld %12.6f %12.4f\n", p.estimator.c_str(),
                      static_cast<long long>(p.n_train), p.mean_tv, p.mean_score);
        }
      }
    }

    if (*bounds) {
      const lever::BoundReport r =
          lever::bound_report(bounds_epsilon, bounds_inputs, bounds_budget);
      std::printf("%-28s %.6g\n", "epsilon", r.epsilon);
      std::printf("%-28s %lld\n", "inputs", static_cast<long long>(r.num_inputs));
      std::printf("%-28s %lld\n", "budget", static_cast<long long>(r.budget));
      std::printf("%-28s %.10g\n", "p_x (uniform)", r.p_x);
      std::printf("%-28s %lld\n", "required per input (N*)", static_cast<long long>(r.n_star));
      std::printf("%-28s %lld\n", "budget per input", static_cast<long long>(r.budget_per_input));
      if (r.formula_valid) {
        std::printf("%-28s %.12g\n", "short-tail bound (formula)", r.tail_formula);
      } else {
        std::printf("%-28s %s\n", "short-tail bound (formula)",
                    "1 (N* above N*p_x; bound not applicable)");
      }
      std::printf("%-28s %.12g\n", "short-tail exact binomial", r.tail_exact);
      std::printf("%-28s %.12g\n", "union bound (formula)", r.union_formula);
      std::printf("%-28s %.12g\n", "union bound (exact)", r.union_exact);
    }

    if (*icl) {
      lever::EndpointConfig endpoint;
      endpoint.base_url = icl_base;
      endpoint.model = icl_model;
      endpoint.api_key_env = icl_key_env;
      endpoint.min_request_interval_s = icl_rate;
      if (!icl_audit.empty()) endpoint.audit_log = icl_audit;

      std::vector<lever::WorldSpec> worlds;
      for (std::int64_t seed : icl_world_seeds) {
        lever::WorldConfig cfg;
        cfg.fixed_sides = {-1, +1};  // first object right, second left
        cfg.name = "icl-" + std::to_string(seed);
        worlds.push_back(lever::generate_world(seed, cfg));
      }

      std::unique_ptr<lever::MockChatServer> mock;
      if (!icl_mock.empty()) {
        if (icl_mock != "truth" && icl_mock != "malformed")
          throw std::runtime_error("--mock must be truth or malformed");
        mock = std::make_unique<lever::MockChatServer>();
        endpoint.base_url = mock->url();
        endpoint.model = "mock";
        endpoint.retry_initial_delay_s = 0.001;
      }

      if (icl_pipeline) {
        lever::PipelineRunConfig pc;
        pc.worlds = worlds;
        pc.sample_sets = icl_sets;
        pc.train_n = icl_train_n;
        pc.hint_level = icl_hints;
        pc.master_seed = icl_master;
        if (mock) {
          mock->set_default_text(icl_mock == "truth"
                                     ? "def parse_samples(lines):\n    pass\n"
                                     : "I prefer not to write code today.");
        }
        lever::ChatClient client(endpoint);
        const auto reports = lever::run_pipeline(pc, client);
        json out = json::array();
        for (const lever::PipelineReport& r : reports) {
          out.push_back({{"world", r.world},
                         {"sample_set", r.sample_set},
                         {"hint_level", r.hint_level},
                         {"prompt", r.prompt},
                         {"response_ok", r.response.ok},
                         {"response_text", r.response.text},
                         {"error", r.response.error}});
          std::printf("%s set %d: %s\n", r.world.c_str(), r.sample_set,
                      r.response.ok ? "completion recorded (never executed)"
                                    : r.response.error.c_str());
        }
        if (!icl_out.empty()) write_text_file(icl_out, out.dump(2) + "\n");
      } else {
        lever::IclRunConfig rc;
        rc.worlds = worlds;
        rc.context_sizes = icl_sizes;
        rc.sample_sets = icl_sets;
        rc.test_count = icl_test_n;
        rc.master_seed = icl_master;
        if (mock) {
          if (icl_mock == "truth") {
            for (const lever::IclExperiment& exp : lever::make_icl_experiments(rc))
              mock->enqueue_text(lever::format_probability_list(exp.true_probs));
          } else {
            mock->set_default_text("Probabilities are a state of mind.");
          }
        }
        lever::ChatClient client(endpoint);
        const lever::IclRun run = lever::run_icl(rc, client);
        std::printf("experiments %d, failures %d\n", run.summary.experiments,
                    run.summary.failures);
        std::printf("mean TV      %.6f\n", run.summary.mean_tv);
        std::printf("ratio <0.1   %.4f\n", run.summary.ratio_below_0_1);
        if (!icl_out.empty())
          write_text_file(icl_out, lever::icl_run_to_json(run).dump(2) + "\n");
      }
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
