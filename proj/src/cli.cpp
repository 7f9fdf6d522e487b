#include "memgrain/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>

#include "http_util.hpp"
#include "memgrain/codec.hpp"
#include "memgrain/harness.hpp"
#include "memgrain/llm.hpp"
#include "memgrain/service.hpp"
#include "memgrain/store.hpp"

namespace memgrain {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<OutputMode> output_mode(std::string_view s) {
  if (s == "table") return OutputMode::kTable;
  if (s == "json") return OutputMode::kJson;
  return std::nullopt;
}

// Usage problems found after parsing, reported like CLI11 errors.
struct UsageError {
  std::string message;
};

struct ApiReply {
  int status = 0;
  std::string body;
  Json json;
};

class ApiClient {
 public:
  ApiClient(const CliConfig& config, std::ostream& err) : config_(config), err_(err) {}

  // Empty optional when the server cannot be reached; the reason is printed.
  std::optional<ApiReply> call(const std::string& method, const std::string& path,
                               const std::vector<std::pair<std::string, std::string>>& query = {},
                               const Json& body = nullptr) const {
    const auto [base, prefix] = detail::split_url(config_.server_url);
    httplib::Client client(base);
    client.set_connection_timeout(5);
    client.set_read_timeout(300);
    httplib::Headers headers;
    if (config_.token) headers.emplace("Authorization", "Bearer " + *config_.token);
    std::string target = prefix + path;
    for (std::size_t i = 0; i < query.size(); ++i) {
      target += (i == 0 ? "?" : "&") + query[i].first + "=" + httplib::detail::encode_query_param(query[i].second);
    }
    httplib::Result res = method == "POST"
                              ? client.Post(target, headers, body.is_null() ? "{}" : body.dump(), "application/json")
                              : client.Get(target, headers);
    if (!res) {
      err_ << "error: cannot reach the memgrain server at " << config_.server_url << " ("
           << httplib::to_string(res.error())
           << "). Start one with `memgrain serve` or point MEMGRAIN_URL / --url at a running server.\n";
      return std::nullopt;
    }
    ApiReply reply{res->status, res->body, Json::parse(res->body, nullptr, false)};
    return reply;
  }

 private:
  const CliConfig& config_;
  std::ostream& err_;
};

std::string one_line(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  }
  return out;
}

std::string time_text(const Json& v) {
  return v.is_number_integer() ? format_iso8601(v.get<TimestampMs>()) : std::string("-");
}

void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c + 1 == cells.size()) {
        s += cells[c];
      } else {
        s += cells[c] + std::string(width[c] - cells[c].size() + 2, ' ');
      }
    }
    out << s << "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
}

std::vector<std::string> record_row(const Json& r) {
  return {r.at("id").get<std::string>(), r.at("type").get<std::string>(), r.at("state").get<std::string>(),
          time_text(r.at("created_at")), one_line(r.at("content").get<std::string>())};
}

void print_records(std::ostream& out, const Json& records) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : records) rows.push_back(record_row(r));
  print_table(out, {"id", "type", "state", "created", "content"}, rows);
}

void print_hits(std::ostream& out, const Json& hits) {
  std::vector<std::vector<std::string>> rows;
  std::size_t rank = 0;
  for (const auto& h : hits) {
    char score[32];
    std::snprintf(score, sizeof score, "%.4f", h.at("score").get<double>());
    auto row = record_row(h.at("record"));
    row.insert(row.begin(), {std::to_string(++rank), score});
    rows.push_back(std::move(row));
  }
  print_table(out, {"#", "score", "id", "type", "state", "created", "content"}, rows);
}

void print_conflicts(std::ostream& out, const Json& conflicts) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : conflicts) {
    std::string candidates;
    for (const auto& cand : c.at("candidates")) {
      if (!candidates.empty()) candidates += " ";
      candidates += cand.at("id").get<std::string>();
    }
    rows.push_back({c.at("conflict_id").get<std::string>(), c.at("state").get<std::string>(),
                    time_text(c.at("opened_at")), c.at("new_record").get<std::string>(), candidates});
  }
  print_table(out, {"conflict", "state", "opened", "new record", "candidates"}, rows);
}

void print_sessions(std::ostream& out, const Json& sessions) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : sessions) {
    rows.push_back({s.at("session_id").get<std::string>(), time_text(s.at("start")), time_text(s.at("end"))});
  }
  print_table(out, {"session", "start", "end"}, rows);
}

std::string require_time(const std::string& text, const std::string& flag) {
  if (!parse_timestamp(text)) {
    throw UsageError{flag + " must be milliseconds since the epoch or an ISO-8601 UTC timestamp"};
  }
  return std::to_string(*parse_timestamp(text));
}

std::optional<std::string> env_or(const CliEnvironment& env, const char* key) {
  auto v = env.get(key);
  if (v && v->empty()) return std::nullopt;
  return v;
}

int serve(const CliEnvironment& env, const std::string& data_dir, const std::string& host_flag, int port,
          const std::string& ui_dir, double threshold, const std::string& llm_endpoint, const std::string& llm_model,
          const std::string& embed_endpoint, std::size_t dimension, bool fsync, unsigned threads, std::ostream& out,
          std::ostream& err) {
  EmbedderConfig embed;
  embed.dimension = dimension;
  if (!embed_endpoint.empty()) {
    embed.backend = EmbedderBackend::kExternal;
    embed.external_endpoint = embed_endpoint;
    embed.external_auth = env_or(env, "MEMGRAIN_EMBED_TOKEN");
  }
  StoreOptions options;
  options.root = data_dir;
  options.dimension = dimension;
  options.contradiction_threshold = threshold;
  options.fsync = fsync;
  options.search_threads = threads;
  options.embedder = make_embedder(embed);
  MemoryStore store(options);
  for (const auto& d : store.recovery_diagnostics()) err << "recovery: " << d << "\n";

  std::unique_ptr<LlmClient> llm;
  if (llm_endpoint.empty()) {
    llm = std::make_unique<OfflineLlm>();
  } else {
    llm = std::make_unique<ExternalLlm>(llm_endpoint, llm_model, env_or(env, "MEMGRAIN_LLM_TOKEN"));
  }
  ServiceOptions service_options;
  service_options.token = env_or(env, "MEMGRAIN_TOKEN");
  MemoryService service(store, *llm, service_options);
  HttpServer server(service, ui_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(ui_dir));
  const std::string host = host_flag.empty() ? default_bind_host(service_options.token) : host_flag;
  const int bound = server.bind(host, port);
  const StoreCounters c = store.counters();
  out << "memgrain listening on http://" << host << ":" << bound << " (data " << data_dir << ", " << c.records
      << " records in " << c.namespaces << " namespaces)" << std::endl;
  server.listen();
  return 0;
}

}  // namespace

CliEnvironment CliEnvironment::from_process(char** envp) {
  CliEnvironment env;
  for (char** e = envp; e && *e; ++e) {
    const std::string_view kv(*e);
    const auto eq = kv.find('=');
    if (eq != std::string_view::npos) env.vars.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
  }
  if (auto h = env.get("HOME"); h && !h->empty()) env.home = *h;
  return env;
}

std::optional<std::string> CliEnvironment::get(const std::string& key) const {
  const auto it = vars.find(key);
  if (it == vars.end()) return std::nullopt;
  return it->second;
}

CliConfig load_cli_config(const CliEnvironment& env) {
  CliConfig config;
  auto apply = [&](const std::string& key, const std::string& value) {
    if (key == "server_url" || key == "url") {
      config.server_url = value;
    } else if (key == "token") {
      config.token = value.empty() ? std::nullopt : std::optional<std::string>(value);
    } else if (key == "output") {
      if (auto m = output_mode(value)) config.output = *m;
    } else if (key == "namespace") {
      config.ns = value;
    }
  };
  if (env.home) {
    std::ifstream in(*env.home / ".memgrain.toml");
    std::string line;
    while (std::getline(in, line)) {
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == '[') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) continue;
      std::string value = trim(std::string_view(t).substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      apply(trim(std::string_view(t).substr(0, eq)), value);
    }
  }
  if (auto v = env.get("MEMGRAIN_URL")) apply("url", *v);
  if (auto v = env.get("MEMGRAIN_TOKEN")) apply("token", *v);
  if (auto v = env.get("MEMGRAIN_OUTPUT")) apply("output", *v);
  if (auto v = env.get("MEMGRAIN_NAMESPACE")) apply("namespace", *v);
  return config;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliEnvironment& env) {
  CliConfig config = load_cli_config(env);

  CLI::App app{"memgrain: typed long-term memory for agents", "memgrain"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string url, token, output;
  app.add_option("--url", url, "Server URL (env MEMGRAIN_URL)");
  app.add_option("--token", token, "Bearer token (env MEMGRAIN_TOKEN)");
  app.add_option("-o,--output", output, "Output mode (env MEMGRAIN_OUTPUT)")->check(CLI::IsMember({"table", "json"}));

  std::string ns;
  auto add_ns = [&](CLI::App* sub) {
    sub->add_option("-n,--namespace", ns, "Namespace (env MEMGRAIN_NAMESPACE)");
  };
  double threshold = 0.05;
  std::size_t max_k = 100;
  auto add_retrieval = [&](CLI::App* sub) {
    sub->add_option("--threshold", threshold, "ITS threshold")->capture_default_str();
    sub->add_option("--max-k", max_k, "Maximum hits")->capture_default_str();
  };

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP server");
  std::string data_dir = env.get("MEMGRAIN_DATA_DIR").value_or("memgrain-data");
  std::string host;
  int port = kDefaultPort;
  if (auto p = env.get("MEMGRAIN_PORT")) {
    try {
      port = std::stoi(*p);
    } catch (const std::exception&) {
      err << "error: MEMGRAIN_PORT must be a port number\n";
      return 2;
    }
  }
  std::string ui_dir, llm_endpoint, llm_model = "default", embed_endpoint;
  double contradiction = kDefaultContradictionThreshold;
  std::size_t dimension = 256;
  bool fsync = false;
  unsigned threads = 1;
  serve_cmd->add_option("--data-dir", data_dir, "Data directory (env MEMGRAIN_DATA_DIR)")->capture_default_str();
  serve_cmd->add_option("--host", host, "Bind address (default: loopback unless MEMGRAIN_TOKEN is set)");
  serve_cmd->add_option("--port", port, "Port (env MEMGRAIN_PORT)")->capture_default_str();
  serve_cmd->add_option("--ui-dir", ui_dir, "Dashboard files served under /ui/");
  serve_cmd->add_option("--contradiction-threshold", contradiction, "Conflict detection threshold")
      ->capture_default_str();
  serve_cmd->add_option("--llm-endpoint", llm_endpoint, "OpenAI-compatible endpoint for /v1/answer (default offline)");
  serve_cmd->add_option("--llm-model", llm_model, "Model name sent to the LLM endpoint")->capture_default_str();
  serve_cmd->add_option("--embed-endpoint", embed_endpoint, "External embedding service (default hash embedder)");
  serve_cmd->add_option("--dimension", dimension, "Embedding dimension")->capture_default_str();
  serve_cmd->add_flag("--fsync", fsync, "fdatasync after every write");
  serve_cmd->add_option("--search-threads", threads, "Threads per search")->capture_default_str();

  // remember
  auto* remember_cmd = app.add_subcommand("remember", "Store a memory");
  std::string content, type, session, at;
  std::vector<std::string> tags;
  add_ns(remember_cmd);
  remember_cmd->add_option("-t,--type", type, "Memory type (default fact)");
  remember_cmd->add_option("--tag", tags, "Tag (repeatable)");
  remember_cmd->add_option("--session", session, "Session id");
  remember_cmd->add_option("--at", at, "Write time (ms or ISO-8601, default now)");
  remember_cmd->add_option("content", content, "Memory text")->required();

  // recall
  auto* recall_cmd = app.add_subcommand("recall", "Search memories");
  std::string query, as_of;
  std::vector<std::string> types;
  bool include_superseded = false;
  add_ns(recall_cmd);
  recall_cmd->add_option("-q,--query", query, "Query text")->required();
  add_retrieval(recall_cmd);
  recall_cmd->add_option("--type", types, "Restrict to a memory type (repeatable)");
  recall_cmd->add_option("--as-of", as_of, "Search the store as it was at this time");
  recall_cmd->add_flag("--include-superseded", include_superseded, "Also search superseded records");

  // answer
  auto* answer_cmd = app.add_subcommand("answer", "Answer a question from memory");
  add_ns(answer_cmd);
  answer_cmd->add_option("-q,--question", query, "Question text")->required();
  add_retrieval(answer_cmd);

  // conflicts
  auto* conflicts_cmd = app.add_subcommand("conflicts", "List or resolve conflicts");
  conflicts_cmd->require_subcommand(1);
  auto* conflicts_list = conflicts_cmd->add_subcommand("list", "List conflicts");
  std::string state = "open";
  add_ns(conflicts_list);
  conflicts_list->add_option("--state", state, "open, resolved or all")
      ->check(CLI::IsMember({"open", "resolved", "all"}))
      ->capture_default_str();
  auto* conflicts_resolve = conflicts_cmd->add_subcommand("resolve", "Resolve a conflict");
  std::string conflict_id, action, actor = "cli";
  conflicts_resolve->add_option("id", conflict_id, "Conflict id")->required();
  conflicts_resolve->add_option("--action", action, "supersede, retain or annotate")
      ->required()
      ->check(CLI::IsMember({"supersede", "retain", "annotate"}));
  conflicts_resolve->add_option("--actor", actor, "Recorded resolver")->capture_default_str();

  // sessions
  auto* sessions_cmd = app.add_subcommand("sessions", "List sessions");
  add_ns(sessions_cmd);

  // asof
  auto* asof_cmd = app.add_subcommand("asof", "Records valid at a point in time");
  std::string t;
  add_ns(asof_cmd);
  asof_cmd->add_option("-t,--time", t, "Time (ms or ISO-8601)")->required();

  // changed-since
  auto* changed_cmd = app.add_subcommand("changed-since", "Records with lifecycle changes in a window");
  std::string since, until;
  add_ns(changed_cmd);
  changed_cmd->add_option("--since", since, "Window start, inclusive")->required();
  changed_cmd->add_option("--until", until, "Window end, exclusive");

  // daily-summary
  auto* daily_cmd = app.add_subcommand("daily-summary", "Daily Markdown digest");
  std::string date;
  add_ns(daily_cmd);
  daily_cmd->add_option("--date", date, "UTC day YYYY-MM-DD (default today)");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Run the retrieval ablation locally");
  std::uint64_t seed = 1;
  std::size_t distractors = 100000, needles = 500;
  std::string out_dir = "results";
  bool uncapped = false;
  bench_cmd->add_option("--seed", seed, "Corpus seed")->capture_default_str();
  bench_cmd->add_option("--distractors", distractors, "Distractor sentences")->capture_default_str();
  bench_cmd->add_option("--needles", needles, "Planted facts")->capture_default_str();
  bench_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
  bench_cmd->add_flag("--uncapped", uncapped, "Add a threshold-only stage without a k cap");
  bench_cmd->add_option("--search-threads", threads, "Threads per search")->capture_default_str();

  std::vector<const char*> argv{"memgrain"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  if (!url.empty()) config.server_url = url;
  if (!token.empty()) config.token = token;
  if (!output.empty()) config.output = *output_mode(output);
  if (!ns.empty()) config.ns = ns;
  const bool json = config.output == OutputMode::kJson;

  try {
    if (*serve_cmd) {
      return serve(env, data_dir, host, port, ui_dir, contradiction, llm_endpoint, llm_model, embed_endpoint,
                   dimension, fsync, threads, out, err);
    }
    if (*bench_cmd) {
      const auto corpus = harness::generate_corpus(seed, distractors, needles);
      auto stages = harness::shipped_stages();
      if (uncapped) stages.push_back(harness::uncapped_stage());
      const auto metrics = harness::run_ablation(corpus, stages, threads);
      std::filesystem::create_directories(out_dir);
      const std::string csv = harness::report_csv(metrics);
      const std::string md = harness::report_markdown(metrics, seed, distractors, needles);
      std::ofstream(std::filesystem::path(out_dir) / "ablation.csv", std::ios::binary) << csv;
      std::ofstream(std::filesystem::path(out_dir) / "ablation.md", std::ios::binary) << md;
      if (json) {
        Json rows = Json::array();
        for (const auto& m : metrics) {
          rows.push_back({{"stage", m.stage},
                          {"k", m.max_k == kUnlimited ? Json(nullptr) : Json(m.max_k)},
                          {"tau", m.threshold},
                          {"needle_recall", m.needle_recall},
                          {"mean_retrieved", m.mean_retrieved},
                          {"ingest_p99_ms", m.ingest_p99_ms},
                          {"retrieve_p99_ms", m.retrieve_p99_ms}});
        }
        out << canonical_dump(Json{{"stages", rows}}) << "\n";
      } else {
        out << md;
      }
      return 0;
    }

    const ApiClient api(config, err);
    std::optional<ApiReply> reply;
    std::function<void(const Json&)> render;

    if (*remember_cmd) {
      Json body{{"namespace", config.ns}, {"content", content}};
      if (!type.empty()) body["type"] = type;
      if (!tags.empty()) body["tags"] = tags;
      if (!session.empty()) body["session_id"] = session;
      if (!at.empty()) body["at"] = std::stoll(require_time(at, "--at"));
      reply = api.call("POST", "/v1/remember", {}, body);
      render = [&](const Json& j) {
        out << j.at("id").get<std::string>() << "\n";
        const auto& conflicts = j.at("conflicts");
        if (!conflicts.empty()) {
          out << "state " << j.at("state").get<std::string>() << ": " << conflicts.size()
              << " conflict(s) opened; review with `memgrain conflicts list`\n";
        }
      };
    } else if (*recall_cmd || *answer_cmd) {
      Json body{{"namespace", config.ns}, {"threshold", threshold}, {"max_k", max_k}};
      if (*recall_cmd) {
        body["query"] = query;
        if (!types.empty()) body["types"] = types;
        if (!as_of.empty()) body["as_of"] = std::stoll(require_time(as_of, "--as-of"));
        if (include_superseded) body["include_superseded"] = true;
        reply = api.call("POST", "/v1/recall", {}, body);
        render = [&](const Json& j) { print_hits(out, j.at("hits")); };
      } else {
        body["question"] = query;
        reply = api.call("POST", "/v1/answer", {}, body);
        render = [&](const Json& j) {
          out << j.at("answer").get<std::string>() << "\n";
          for (const auto& c : j.at("citations")) out << "  cites " << c.get<std::string>() << "\n";
        };
      }
    } else if (*conflicts_list) {
      reply = api.call("GET", "/v1/conflicts", {{"namespace", config.ns}, {"state", state}});
      render = [&](const Json& j) { print_conflicts(out, j.at("conflicts")); };
    } else if (*conflicts_resolve) {
      reply = api.call("POST", "/v1/conflicts/" + conflict_id + "/resolve", {},
                       Json{{"action", action}, {"actor", actor}});
      render = [&](const Json& j) {
        out << "resolved " << j.at("conflict").at("conflict_id").get<std::string>() << " (" << action << ")\n";
        print_records(out, j.at("records"));
      };
    } else if (*sessions_cmd) {
      reply = api.call("GET", "/v1/sessions", {{"namespace", config.ns}});
      render = [&](const Json& j) { print_sessions(out, j.at("sessions")); };
    } else if (*asof_cmd) {
      reply = api.call("GET", "/v1/memories/asof", {{"namespace", config.ns}, {"t", require_time(t, "--time")}});
      render = [&](const Json& j) { print_records(out, j.at("records")); };
    } else if (*changed_cmd) {
      std::vector<std::pair<std::string, std::string>> q{{"namespace", config.ns},
                                                         {"changed_since", require_time(since, "--since")}};
      if (!until.empty()) q.emplace_back("until", require_time(until, "--until"));
      reply = api.call("GET", "/v1/memories", q);
      render = [&](const Json& j) { print_records(out, j.at("records")); };
    } else if (*daily_cmd) {
      std::vector<std::pair<std::string, std::string>> q{{"namespace", config.ns}};
      if (!date.empty()) q.emplace_back("date", date);
      if (!json) q.emplace_back("format", "markdown");
      reply = api.call("GET", "/v1/daily-summary", q);
      if (reply && reply->status == 200 && !json) {
        out << reply->body;
        return 0;
      }
      render = [&](const Json&) {};
    }

    if (!reply) return 1;
    const bool ok = reply->status >= 200 && reply->status < 300;
    if (json) {
      out << reply->body;
      if (!reply->body.empty() && reply->body.back() != '\n') out << "\n";
      return ok ? 0 : 1;
    }
    if (!ok || reply->json.is_discarded()) {
      if (reply->json.is_object() && reply->json.contains("code")) {
        err << "error: " << reply->json["code"].get<std::string>() << ": "
            << reply->json.value("message", std::string()) << "\n";
      } else {
        err << "error: server returned HTTP " << reply->status << "\n";
      }
      return 1;
    }
    render(reply->json);
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.message << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace memgrain
