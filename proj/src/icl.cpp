#include "lever/icl.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <deque>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "lever/rng.hpp"
#include "lever/sampler.hpp"

namespace lever {

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

constexpr const char* kIclTemplate =
    R"(Assume we have a model representing a lever on a fulcrum, with two objects on it. The first object is on the right and the second is on the left.

I'll give you a list of partial observations of the states of the model. Notice that some values might be latent. Then I'll ask you to give me the probability for the continuation of some prompt, based on the distribution you can derive from the samples. Be prompt in your answer.

Samples:
<list of samples>

Question:
I'll give you a list of prompts. Give me a python list with the probabilities of "L", one probability for each input.
Samples:
<list of test samples>
Give me a list only with no additional explanations.
)";

constexpr const char* kRegressionSnippet =
    R"(```python
def fit_lr(X, y):
    from sklearn.linear_model \
        import LogisticRegression
    model = LogisticRegression(
        max_iter=10000,
        solver='saga')
    model.fit(X, y)
    return model

def predict_lr(model, X):
    return model.predict_proba(X)
```
)";

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) out += '\n';
    out += lines[i];
  }
  return out;
}

std::string replace_once(std::string text, const std::string& needle,
                         const std::string& value) {
  const auto pos = text.find(needle);
  if (pos == std::string::npos) fail("template is missing " + needle);
  text.replace(pos, needle.size(), value);
  return text;
}

void check_lines(const std::vector<std::string>& lines, const char* what) {
  for (const std::string& line : lines)
    if (line.find('\n') != std::string::npos)
      fail(std::string(what) + " must be single lines");
}

std::string iso_timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char base[24];
  std::strftime(base, sizeof base, "%Y-%m-%dT%H:%M:%S", &tm);
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()) % 1000;
  char out[32];
  std::snprintf(out, sizeof out, "%s.%03dZ", base, static_cast<int>(ms.count()));
  return out;
}

}  // namespace

std::string build_icl_prompt(const PromptSpec& spec) {
  if (spec.train_lines.empty()) fail("in-context prompt needs at least one sample line");
  if (spec.test_lines.empty()) fail("in-context prompt needs at least one test line");
  check_lines(spec.train_lines, "sample lines");
  check_lines(spec.test_lines, "test lines");
  for (const std::string& line : spec.test_lines)
    if (line.find("balance:") != std::string::npos)
      fail("test lines must not carry the outcome");
  std::string text = replace_once(kIclTemplate, "<list of samples>", join_lines(spec.train_lines));
  return replace_once(text, "<list of test samples>", join_lines(spec.test_lines));
}

std::string build_pipeline_prompt(const PromptSpec& spec) {
  if (spec.train_lines.empty()) fail("pipeline prompt needs at least one sample line");
  if (spec.hint_level < 0 || spec.hint_level > 3) fail("hint level must be 0..3");
  check_lines(spec.train_lines, "sample lines");

  std::string out = "Assume we have a model representing physical setting.\n";
  if (spec.hint_level >= 1) out += "We have a lever on a fulcrum with objects on the lever.\n";
  out += "\nHere's a list of partial observations of the states of the model.\n";
  if (spec.hint_level >= 2) out += "Notice that some variables might be latent.\n";
  if (spec.hint_level >= 3) out += "Notice that the distance of the last object is latent.\n";
  out += "\nSamples:\n";
  out += join_lines(spec.train_lines);
  out +=
      "\n\nI want to learn the distribution using Statistics or Machine Learning.\n"
      "Specifically, I want to use Logistic Regression to predict the balance "
      "probabilities of new samples. Here is an example of the code:\n\n";
  out += kRegressionSnippet;
  out +=
      "\nWrite me python function parse_samples(), that parses each sample and creates a "
      "feature function that can be used in the snippet above.\n"
      "Make sure the function is appropriate for both training and inference.\n"
      "Give me code only.\n";
  return out;
}

std::optional<std::vector<double>> parse_probability_list(const std::string& text,
                                                          std::size_t expected_count) {
  const auto open = text.find('[');
  if (open == std::string::npos) return std::nullopt;
  const auto close = text.find(']', open);
  if (close == std::string::npos) return std::nullopt;

  std::vector<double> values;
  std::size_t pos = open + 1;
  while (pos < close) {
    std::size_t end = text.find(',', pos);
    if (end == std::string::npos || end > close) end = close;
    std::string token = text.substr(pos, end - pos);
    pos = end + 1;

    const auto a = token.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) {
      if (values.empty() && pos >= close) break;  // "[]" or "[ ]"
      return std::nullopt;                        // empty entry like "[0.1,,0.2]"
    }
    const auto b = token.find_last_not_of(" \t\r\n");
    token = token.substr(a, b - a + 1);

    char* parse_end = nullptr;
    const double v = std::strtod(token.c_str(), &parse_end);
    if (parse_end != token.c_str() + token.size()) return std::nullopt;
    if (!(v >= 0.0 && v <= 1.0)) return std::nullopt;
    values.push_back(v);
  }
  if (values.size() != expected_count) return std::nullopt;
  return values;
}

std::string format_probability_list(std::span<const double> probs) {
  std::string out = "[";
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (i > 0) out += ", ";
    out += format_value(probs[i]);
  }
  out += "]";
  return out;
}

// ---------------------------------------------------------------------------
// Chat client

const char* to_string(ChatErrorKind kind) {
  switch (kind) {
    case ChatErrorKind::none: return "none";
    case ChatErrorKind::auth: return "auth";
    case ChatErrorKind::quota: return "quota";
    case ChatErrorKind::transport: return "transport";
    case ChatErrorKind::format: return "format";
  }
  return "unknown";
}

struct ChatClient::Impl {
  EndpointConfig config;
  std::string origin;       // scheme://authority
  std::string path;         // <prefix>/chat/completions
  httplib::Client http;
  std::ofstream audit;
  std::mutex mutex;
  std::chrono::steady_clock::time_point last_request{};
  bool any_request = false;

  explicit Impl(EndpointConfig cfg, std::string origin_, std::string path_)
      : config(std::move(cfg)), origin(std::move(origin_)), path(std::move(path_)),
        http(origin) {
    const auto timeout = std::chrono::milliseconds(
        static_cast<std::int64_t>(config.timeout_s * 1000.0));
    http.set_connection_timeout(timeout);
    http.set_read_timeout(timeout);
    if (!config.audit_log.empty()) {
      if (config.audit_log.has_parent_path())
        std::filesystem::create_directories(config.audit_log.parent_path());
      audit.open(config.audit_log, std::ios::app);
    }
  }

  void log(nlohmann::json entry) {
    if (!audit.is_open()) return;
    entry["ts"] = iso_timestamp();
    audit << entry.dump() << std::endl;
  }

  void rate_limit() {
    if (config.min_request_interval_s <= 0.0) return;
    const auto interval =
        std::chrono::duration<double>(config.min_request_interval_s);
    const auto now = std::chrono::steady_clock::now();
    if (any_request && now < last_request + interval)
      std::this_thread::sleep_for(last_request + interval - now);
    last_request = std::chrono::steady_clock::now();
    any_request = true;
  }
};

namespace {

// scheme://authority[/prefix] -> origin + prefix
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  const auto scheme = base_url.find("://");
  if (scheme == std::string::npos) fail("base_url needs a scheme, got " + base_url);
  const auto slash = base_url.find('/', scheme + 3);
  std::string origin = slash == std::string::npos ? base_url : base_url.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : base_url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {origin, prefix};
}

}  // namespace

ChatClient::ChatClient(EndpointConfig config) {
  auto [origin, prefix] = split_base_url(config.base_url);
  impl_ = std::make_unique<Impl>(std::move(config), origin, prefix + "/chat/completions");
}

ChatClient::~ChatClient() = default;

const EndpointConfig& ChatClient::config() const { return impl_->config; }

ChatResult ChatClient::complete(const std::string& prompt) {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  const EndpointConfig& cfg = impl_->config;

  const nlohmann::json body{
      {"model", cfg.model},
      {"temperature", cfg.temperature},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  ChatResult out;
  for (int attempt = 1; attempt <= cfg.max_retries + 1; ++attempt) {
    out.attempts = attempt;
    impl_->rate_limit();
    impl_->log({{"event", "request"},
                {"attempt", attempt},
                {"url", impl_->origin + impl_->path},
                {"body", body}});

    auto res = impl_->http.Post(impl_->path, headers, payload, "application/json");
    bool retryable = false;
    if (!res) {
      out.http_status = 0;
      out.error_kind = ChatErrorKind::transport;
      out.error = httplib::to_string(res.error());
      retryable = true;
      impl_->log({{"event", "transport_error"}, {"attempt", attempt}, {"error", out.error}});
    } else {
      out.http_status = res->status;
      impl_->log({{"event", "response"},
                  {"attempt", attempt},
                  {"status", res->status},
                  {"body", res->body}});
      if (res->status == 200) {
        try {
          const auto doc = nlohmann::json::parse(res->body);
          out.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
          out.ok = true;
          out.error_kind = ChatErrorKind::none;
          out.error.clear();
          return out;
        } catch (const nlohmann::json::exception& ex) {
          out.error_kind = ChatErrorKind::format;
          out.error = std::string("malformed completion body: ") + ex.what();
          return out;
        }
      }
      std::string detail = "HTTP " + std::to_string(res->status);
      try {
        const auto doc = nlohmann::json::parse(res->body);
        detail += ": " + doc.at("error").at("message").get<std::string>();
      } catch (const nlohmann::json::exception&) {
      }
      out.error = detail;
      if (res->status == 401 || res->status == 403) {
        out.error_kind = ChatErrorKind::auth;
        return out;  // bad credentials never improve on retry
      }
      if (res->status == 429) {
        out.error_kind = ChatErrorKind::quota;
        retryable = true;
      } else if (res->status >= 500) {
        out.error_kind = ChatErrorKind::transport;
        retryable = true;
      } else {
        out.error_kind = ChatErrorKind::transport;
        retryable = false;
      }
    }
    if (!retryable || attempt == cfg.max_retries + 1) return out;
    const double delay = cfg.retry_initial_delay_s * std::pow(2.0, attempt - 1);
    std::this_thread::sleep_for(std::chrono::duration<double>(delay));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

constexpr std::uint64_t kIclTrainStream = 0x69636c2d74726e00ull;
constexpr std::uint64_t kIclTestStream = 0x69636c2d74737400ull;
constexpr std::uint64_t kPipelineStream = 0x7069706500000000ull;

}  // namespace

std::vector<IclExperiment> make_icl_experiments(const IclRunConfig& config) {
  if (config.worlds.empty()) fail("icl run needs at least one world");
  if (config.context_sizes.empty()) fail("icl run needs context sizes");
  for (std::int64_t n : config.context_sizes)
    if (n < 1) fail("context sizes must be >= 1");
  if (config.sample_sets < 1) fail("sample_sets must be >= 1");
  if (config.test_count < 1) fail("test_count must be >= 1");

  std::vector<IclExperiment> experiments;
  for (std::size_t w = 0; w < config.worlds.size(); ++w) {
    const WorldSpec& world = config.worlds[w];
    for (std::int64_t n : config.context_sizes) {
      for (int set = 0; set < config.sample_sets; ++set) {
        IclExperiment exp;
        exp.world = world.name;
        exp.train_n = n;
        exp.sample_set = set;

        const auto train_seed = static_cast<std::int64_t>(
            mix_seed(config.master_seed, kIclTrainStream,
                     mix_seed(w, static_cast<std::uint64_t>(n)),
                     static_cast<std::uint64_t>(set)));
        const Dataset data = sample_dataset(world, n, train_seed);
        std::vector<std::string> train_lines;
        train_lines.reserve(data.samples.size());
        for (const Sample& s : data.samples) train_lines.push_back(render_sample(world, s));

        Rng rng(mix_seed(config.master_seed, kIclTestStream,
                         mix_seed(w, static_cast<std::uint64_t>(n)),
                         static_cast<std::uint64_t>(set)));
        std::vector<std::string> test_lines;
        for (std::int64_t i = 0; i < config.test_count; ++i) {
          VisibleInput x = draw_visible(world, rng);
          exp.test_inputs.push_back(x);
          exp.true_probs.push_back(true_conditional(world, x));
          test_lines.push_back(render_visible(world, x));
        }

        PromptSpec spec;
        spec.mode = PromptSpec::Mode::icl;
        spec.train_lines = std::move(train_lines);
        spec.test_lines = std::move(test_lines);
        exp.prompt = build_icl_prompt(spec);
        experiments.push_back(std::move(exp));
      }
    }
  }
  return experiments;
}

IclScore score_icl_completion(const IclExperiment& experiment, const ChatResult& response) {
  IclScore score;
  if (!response.ok) {
    score.failure = std::string(to_string(response.error_kind)) + ": " + response.error;
    return score;  // mean_tv stays 1
  }
  auto probs = parse_probability_list(response.text, experiment.true_probs.size());
  if (!probs) {
    score.failure = "no parsable probability list in completion";
    return score;
  }
  score.parsed = true;
  score.probs = std::move(*probs);
  double sum = 0.0;
  for (std::size_t i = 0; i < score.probs.size(); ++i) {
    score.tv.push_back(std::abs(score.probs[i] - experiment.true_probs[i]));
    sum += score.tv.back();
  }
  score.mean_tv = score.tv.empty() ? 0.0 : sum / static_cast<double>(score.tv.size());
  return score;
}

IclSummary summarize_icl(std::span<const IclScore> scores) {
  IclSummary summary;
  summary.experiments = static_cast<int>(scores.size());
  if (scores.empty()) return summary;
  double sum = 0.0;
  int below = 0;
  for (const IclScore& s : scores) {
    sum += s.mean_tv;
    if (s.mean_tv < 0.1) ++below;
    if (!s.parsed) ++summary.failures;
  }
  summary.mean_tv = sum / static_cast<double>(scores.size());
  summary.ratio_below_0_1 = static_cast<double>(below) / static_cast<double>(scores.size());
  return summary;
}

IclRun run_icl(const IclRunConfig& config, ChatClient& client) {
  IclRun run;
  std::vector<IclScore> scores;
  for (IclExperiment& exp : make_icl_experiments(config)) {
    IclReport report;
    report.response = client.complete(exp.prompt);
    report.score = score_icl_completion(exp, report.response);
    report.experiment = std::move(exp);
    scores.push_back(report.score);
    run.reports.push_back(std::move(report));
  }
  run.summary = summarize_icl(scores);
  return run;
}

nlohmann::json icl_run_to_json(const IclRun& run) {
  nlohmann::json experiments = nlohmann::json::array();
  for (const IclReport& r : run.reports) {
    experiments.push_back(
        {{"world", r.experiment.world},
         {"train_n", r.experiment.train_n},
         {"sample_set", r.experiment.sample_set},
         {"prompt", r.experiment.prompt},
         {"true_probs", r.experiment.true_probs},
         {"response",
          {{"ok", r.response.ok},
           {"text", r.response.text},
           {"error_kind", to_string(r.response.error_kind)},
           {"error", r.response.error},
           {"http_status", r.response.http_status},
           {"attempts", r.response.attempts}}},
         {"score",
          {{"parsed", r.score.parsed},
           {"failure", r.score.failure},
           {"probs", r.score.probs},
           {"tv", r.score.tv},
           {"mean_tv", r.score.mean_tv}}}});
  }
  return {{"format", "lever-icl/1"},
          {"experiments", experiments},
          {"summary",
           {{"mean_tv", run.summary.mean_tv},
            {"ratio_below_0_1", run.summary.ratio_below_0_1},
            {"experiments", run.summary.experiments},
            {"failures", run.summary.failures}}}};
}

std::vector<PipelineReport> run_pipeline(const PipelineRunConfig& config, ChatClient& client) {
  if (config.worlds.empty()) fail("pipeline run needs at least one world");
  if (config.sample_sets < 1) fail("sample_sets must be >= 1");
  if (config.train_n < 1) fail("train_n must be >= 1");

  std::vector<PipelineReport> reports;
  for (std::size_t w = 0; w < config.worlds.size(); ++w) {
    const WorldSpec& world = config.worlds[w];
    for (int set = 0; set < config.sample_sets; ++set) {
      const auto seed = static_cast<std::int64_t>(
          mix_seed(config.master_seed, kPipelineStream, w, static_cast<std::uint64_t>(set)));
      const Dataset data = sample_dataset(world, config.train_n, seed);
      PromptSpec spec;
      spec.mode = PromptSpec::Mode::pipeline;
      spec.hint_level = config.hint_level;
      for (const Sample& s : data.samples)
        spec.train_lines.push_back(render_sample(world, s));

      PipelineReport report;
      report.world = world.name;
      report.sample_set = set;
      report.hint_level = config.hint_level;
      report.prompt = build_pipeline_prompt(spec);
      // The completion is recorded as text and goes no further: model-written
      // code is never executed.
      report.response = client.complete(report.prompt);
      reports.push_back(std::move(report));
    }
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Mock endpoint

struct MockChatServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  struct QueueItem {
    int status = 200;
    std::string payload;  // assistant text, or the raw body when raw
    bool raw = false;
  };

  mutable std::mutex mutex;
  std::deque<QueueItem> queue;
  std::string default_text = "[]";
  bool require_auth = false;
  int requests = 0;
  std::vector<nlohmann::json> bodies;

  void handle(const httplib::Request& req, httplib::Response& res) {
    std::lock_guard<std::mutex> lock(mutex);
    ++requests;
    try {
      bodies.push_back(nlohmann::json::parse(req.body));
    } catch (const nlohmann::json::exception&) {
      bodies.push_back(nlohmann::json{{"raw", req.body}});
    }
    if (require_auth && !req.has_header("Authorization")) {
      res.status = 401;
      res.set_content(R"({"error":{"message":"missing api key"}})", "application/json");
      return;
    }
    QueueItem item{200, default_text, false};
    if (!queue.empty()) {
      item = queue.front();
      queue.pop_front();
    }
    if (item.raw) {
      res.status = item.status;
      res.set_content(item.payload, "application/json");
    } else {
      const nlohmann::json body{
          {"id", "mock"},
          {"object", "chat.completion"},
          {"model", "mock"},
          {"choices",
           nlohmann::json::array(
               {{{"index", 0},
                 {"message", {{"role", "assistant"}, {"content", item.payload}}},
                 {"finish_reason", "stop"}}})}};
      res.set_content(body.dump(), "application/json");
    }
  }
};

MockChatServer::MockChatServer() : impl_(std::make_unique<Impl>()) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    impl_->handle(req, res);
  };
  impl_->server.Post("/chat/completions", handler);
  impl_->server.Post("/v1/chat/completions", handler);
  impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  if (impl_->port <= 0) throw std::runtime_error("mock chat server failed to bind");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  while (!impl_->server.is_running())
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
}

MockChatServer::~MockChatServer() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int MockChatServer::port() const { return impl_->port; }

std::string MockChatServer::url() const {
  return "http://127.0.0.1:" + std::to_string(impl_->port);
}

void MockChatServer::enqueue_text(const std::string& assistant_text) {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  impl_->queue.push_back({200, assistant_text, false});
}

void MockChatServer::enqueue_status(int status, const std::string& body) {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  impl_->queue.push_back({status, body, true});
}

void MockChatServer::set_default_text(const std::string& assistant_text) {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  impl_->default_text = assistant_text;
}

void MockChatServer::set_require_auth(bool on) {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  impl_->require_auth = on;
}

int MockChatServer::request_count() const {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  return impl_->requests;
}

std::vector<nlohmann::json> MockChatServer::request_bodies() const {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  return impl_->bodies;
}

}  // namespace lever
