#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lever/worldgen.hpp"

namespace lever {

// Querying chat models about lever worlds, two ways: in-context learning
// (samples in the prompt, model returns outcome probabilities for test
// inputs) and a pipeline mode that asks the model to write a sample-parsing
// function for a downstream logistic regression. Pipeline completions are
// recorded verbatim for review; nothing a model returns is ever executed.

// ---------------------------------------------------------------------------
// Prompts

struct PromptSpec {
  enum class Mode { icl, pipeline };
  Mode mode = Mode::icl;
  std::vector<std::string> train_lines;  // rendered samples, outcome included
  std::vector<std::string> test_lines;   // rendered inputs, no outcome (icl)
  int hint_level = 0;                    // pipeline: 0 (none) .. 3 (all hints)
};

// The fixed in-context template with the sample and test line blocks
// substituted. Needs at least one line of each; rejects test lines carrying
// an outcome field.
std::string build_icl_prompt(const PromptSpec& spec);

// The parser-recommendation template. hint_level picks how many of the three
// escalating hints appear at their marked positions.
std::string build_pipeline_prompt(const PromptSpec& spec);

// First bracketed numeric list in the text, e.g. "Sure: [0.1, 0.25, 1]".
// Empty when there is no list, the length differs from expected_count, an
// entry does not parse as a number, or a value leaves [0, 1].
std::optional<std::vector<double>> parse_probability_list(const std::string& text,
                                                          std::size_t expected_count);

// "[a, b, c]" with round-trip value formatting.
std::string format_probability_list(std::span<const double> probs);

// ---------------------------------------------------------------------------
// Chat endpoint

struct EndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o";
  std::string api_key_env = "OPENAI_API_KEY";  // credential read from here only
  double temperature = 0.0;
  int max_retries = 3;                  // retries after the first attempt
  double retry_initial_delay_s = 0.5;   // doubles per retry
  double min_request_interval_s = 0.0;  // client-side rate limit
  double timeout_s = 60.0;
  std::filesystem::path audit_log;      // JSONL request/response trace
};

enum class ChatErrorKind { none, auth, quota, transport, format };

const char* to_string(ChatErrorKind kind);

struct ChatResult {
  bool ok = false;
  std::string text;        // assistant message when ok
  ChatErrorKind error_kind = ChatErrorKind::none;
  std::string error;
  int http_status = 0;     // last status, 0 when the connection failed
  int attempts = 0;
};

// Minimal chat-completion client. Auth and malformed-response errors return
// immediately; 429 and transport failures retry with exponential backoff.
// The API key is read from the configured environment variable at request
// time and never logged; without it the request goes out unauthenticated and
// the server's 401/403 surfaces as an auth error.
class ChatClient {
 public:
  explicit ChatClient(EndpointConfig config);
  ~ChatClient();
  ChatClient(const ChatClient&) = delete;
  ChatClient& operator=(const ChatClient&) = delete;

  ChatResult complete(const std::string& prompt);

  const EndpointConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Experiments

struct IclRunConfig {
  std::vector<WorldSpec> worlds;
  std::vector<std::int64_t> context_sizes{10, 100, 1000};
  int sample_sets = 2;       // independent training draws per (world, size)
  std::int64_t test_count = 5;
  std::uint64_t master_seed = 1;
};

struct IclExperiment {
  std::string world;
  std::int64_t train_n = 0;
  int sample_set = 0;
  std::string prompt;
  std::vector<VisibleInput> test_inputs;
  std::vector<double> true_probs;
};

// One experiment per (world, context size, sample set), with train and test
// draws derived from the master seed.
std::vector<IclExperiment> make_icl_experiments(const IclRunConfig& config);

struct IclScore {
  bool parsed = false;
  std::string failure;       // endpoint or parse failure, empty when parsed
  std::vector<double> probs; // returned probability of L per test input
  std::vector<double> tv;    // |returned - true| per test input
  double mean_tv = 1.0;      // any failure counts as distance 1
};

// Scores one completion against the experiment's true conditionals.
IclScore score_icl_completion(const IclExperiment& experiment, const ChatResult& response);

struct IclSummary {
  double mean_tv = 1.0;        // mean of per-experiment mean distances
  double ratio_below_0_1 = 0;  // fraction of experiments with mean TV < 0.1
  int experiments = 0;
  int failures = 0;
};

IclSummary summarize_icl(std::span<const IclScore> scores);

struct IclReport {
  IclExperiment experiment;
  ChatResult response;
  IclScore score;
};

struct IclRun {
  std::vector<IclReport> reports;
  IclSummary summary;
};

// Runs every experiment sequentially through the client and scores it.
IclRun run_icl(const IclRunConfig& config, ChatClient& client);

nlohmann::json icl_run_to_json(const IclRun& run);

// Pipeline mode: ask for parser code, record the completion, stop. The
// returned code is data for human review; it is never evaluated, imported,
// or run in any form.
struct PipelineRunConfig {
  std::vector<WorldSpec> worlds;
  int sample_sets = 3;
  std::int64_t train_n = 100;
  int hint_level = 0;
  std::uint64_t master_seed = 1;
};

struct PipelineReport {
  std::string world;
  int sample_set = 0;
  int hint_level = 0;
  std::string prompt;
  ChatResult response;
};

std::vector<PipelineReport> run_pipeline(const PipelineRunConfig& config, ChatClient& client);

// ---------------------------------------------------------------------------
// Offline endpoint double

// Loopback chat-completion server for tests and the CLI's --mock mode.
// Responses come from an explicit queue (text or raw status), then fall back
// to a default text. Never binds beyond 127.0.0.1.
class MockChatServer {
 public:
  MockChatServer();
  ~MockChatServer();
  MockChatServer(const MockChatServer&) = delete;
  MockChatServer& operator=(const MockChatServer&) = delete;

  int port() const;
  std::string url() const;  // http://127.0.0.1:<port>

  void enqueue_text(const std::string& assistant_text);   // 200 + chat body
  void enqueue_status(int status, const std::string& body);
  void set_default_text(const std::string& assistant_text);
  void set_require_auth(bool on);  // 401 unless Authorization is present

  int request_count() const;
  std::vector<nlohmann::json> request_bodies() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lever
