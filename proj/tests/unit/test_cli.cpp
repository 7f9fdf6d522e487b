#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "memgrain/cli.hpp"
#include "memgrain/codec.hpp"
#include "memgrain/service.hpp"
#include "stub_server.hpp"
#include "test_support.hpp"

using namespace memgrain;
using namespace memgrain::testing;

namespace {

const std::filesystem::path kHelpFixtures = std::filesystem::path(MEMGRAIN_FIXTURE_DIR) / "cli";

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args, const CliEnvironment& env = {}) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err, env);
  return {code, out.str(), err.str()};
}

// A live server over an in-memory store with a frozen clock.
struct LiveServer {
  ManualClock clock{kT0 + 8 * 3'600'000};
  MemoryStore store{deterministic_options(clock, 3)};
  OfflineLlm llm;
  MemoryService service{store, llm};
  HttpServer server{service};
  std::string url;

  LiveServer() {
    url = "http://127.0.0.1:" + std::to_string(server.bind("127.0.0.1", 0));
    server.start();
  }
  ~LiveServer() { server.stop(); }

  Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), {"--url", url});
    return run(args);
  }
  std::string api(std::string method, std::string path, Json body = nullptr,
                  std::multimap<std::string, std::string> query = {}) {
    return service.handle({std::move(method), std::move(path), std::move(query),
                           body.is_null() ? std::string() : body.dump(), std::nullopt})
        .body;
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help output of every subcommand matches its snapshot and lists its flags") {
    const std::map<std::string, std::vector<std::string>> flags = {
        {"", {"--url", "--token", "--output", "serve", "remember", "recall", "answer", "conflicts", "sessions",
              "asof", "changed-since", "daily-summary", "bench"}},
        {"serve", {"--data-dir", "--host", "--port", "--ui-dir", "--contradiction-threshold", "--llm-endpoint",
                   "--llm-model", "--embed-endpoint", "--dimension", "--fsync", "--search-threads"}},
        {"remember", {"--namespace", "--type", "--tag", "--session", "--at", "content"}},
        {"recall", {"--namespace", "--query", "--threshold", "--max-k", "--type", "--as-of",
                    "--include-superseded"}},
        {"answer", {"--namespace", "--question", "--threshold", "--max-k"}},
        {"conflicts", {"list", "resolve"}},
        {"conflicts list", {"--namespace", "--state"}},
        {"conflicts resolve", {"id", "--action", "--actor"}},
        {"sessions", {"--namespace"}},
        {"asof", {"--namespace", "--time"}},
        {"changed-since", {"--namespace", "--since", "--until"}},
        {"daily-summary", {"--namespace", "--date"}},
        {"bench", {"--seed", "--distractors", "--needles", "--out", "--uncapped", "--search-threads"}},
    };
    const bool regenerate = std::getenv("MEMGRAIN_REGENERATE_FIXTURES") != nullptr;
    for (const auto& [command, expected] : flags) {
      std::vector<std::string> args;
      std::istringstream words(command);
      for (std::string w; words >> w;) args.push_back(w);
      args.push_back("--help");
      const Run r = run(args);
      INFO("memgrain " << command << " --help");
      CHECK(r.code == 0);
      for (const auto& f : expected) CHECK_MESSAGE(r.out.find(f) != std::string::npos, f);

      std::string name = command.empty() ? "memgrain" : command;
      std::replace(name.begin(), name.end(), ' ', '-');
      const auto path = kHelpFixtures / ("help-" + name + ".txt");
      if (regenerate) {
        std::ofstream(path, std::ios::binary) << r.out;
      } else {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        CHECK(r.out == s.str());
      }
    }
  }

  TEST_CASE("configuration precedence: file, then environment, then flags") {
    TempDir home;
    std::ofstream(home.path() / ".memgrain.toml") << "# local settings\n"
                                                     "url = \"http://file:1\"\n"
                                                     "token = file-token\n"
                                                     "namespace = filens\n"
                                                     "output = json\n";
    CliEnvironment env;
    env.home = home.path();
    CliConfig c = load_cli_config(env);
    CHECK(c.server_url == "http://file:1");
    CHECK(c.token == "file-token");
    CHECK(c.ns == "filens");
    CHECK(c.output == OutputMode::kJson);

    env.vars = {{"MEMGRAIN_URL", "http://env:2"}, {"MEMGRAIN_NAMESPACE", "envns"}, {"MEMGRAIN_OUTPUT", "table"}};
    c = load_cli_config(env);
    CHECK(c.server_url == "http://env:2");
    CHECK(c.token == "file-token");
    CHECK(c.ns == "envns");
    CHECK(c.output == OutputMode::kTable);

    const CliConfig defaults = load_cli_config(CliEnvironment{});
    CHECK(defaults.server_url == "http://127.0.0.1:7749");
    CHECK(defaults.ns == "default");
    CHECK_FALSE(defaults.token);
  }

  TEST_CASE("flags override the environment") {
    LiveServer s;
    CliEnvironment env;
    env.vars = {{"MEMGRAIN_URL", dead_url()}, {"MEMGRAIN_NAMESPACE", "envns"}};
    const Run r = run({"--url", s.url, "remember", "-n", "flagns", "hello there"}, env);
    CHECK(r.code == 0);
    CHECK(s.store.has_namespace("flagns"));
    CHECK_FALSE(s.store.has_namespace("envns"));
  }

  TEST_CASE("exit codes") {
    LiveServer s;
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"recall"}).code == 2);
    CHECK(run({"-o", "yaml", "sessions"}).code == 2);
    CHECK(run({"asof", "-t", "yesterday"}).code == 2);

    const Run refused = run({"--url", dead_url(), "sessions"});
    CHECK(refused.code == 1);
    CHECK(refused.err.find("memgrain serve") != std::string::npos);

    const Run ok = s.cli({"remember", "-n", "a1", "-t", "decision", "Ship v2 Friday"});
    CHECK(ok.code == 0);
    CHECK(RecordId::is_valid_hex(ok.out.substr(0, 32)));

    const Run bad_type = s.cli({"remember", "-n", "a1", "-t", "opinion", "x"});
    CHECK(bad_type.code == 1);
    CHECK(bad_type.err.find("unknown_type") != std::string::npos);
  }

  TEST_CASE("conflict resolution through the cli") {
    LiveServer s;
    s.cli({"remember", "-n", "a1", "Project deadline is April 15"});
    const Run second = s.cli({"remember", "-n", "a1", "Project deadline is May 1"});
    CHECK(second.out.find("1 conflict(s) opened") != std::string::npos);
    const auto open = s.store.list_conflicts("a1", ConflictFilter::kOpen);
    REQUIRE(open.size() == 1);
    const Run listed = s.cli({"conflicts", "list", "-n", "a1"});
    CHECK(listed.out.find(open[0].conflict_id.hex()) != std::string::npos);
    const Run resolved = s.cli({"conflicts", "resolve", open[0].conflict_id.hex(), "--action", "supersede"});
    CHECK(resolved.code == 0);
    CHECK(s.store.counters().open_conflicts == 0);
    const Run again = s.cli({"conflicts", "resolve", open[0].conflict_id.hex(), "--action", "supersede"});
    CHECK(again.code == 1);
    CHECK(again.err.find("already_resolved") != std::string::npos);
  }

  TEST_CASE("json mode prints exactly the api body") {
    LiveServer s;
    s.cli({"remember", "-n", "a1", "Project deadline is April 15"});
    s.cli({"remember", "-n", "a1", "-t", "decision", "Ship v2 Friday"});

    const Json recall_body{{"namespace", "a1"}, {"query", "deadline"}, {"threshold", 0.05}, {"max_k", 100}};
    CHECK(s.cli({"-o", "json", "recall", "-n", "a1", "-q", "deadline"}).out == s.api("POST", "/v1/recall", recall_body));
    const Json answer_body{{"namespace", "a1"}, {"question", "deadline"}, {"threshold", 0.05}, {"max_k", 100}};
    CHECK(s.cli({"-o", "json", "answer", "-n", "a1", "-q", "deadline"}).out ==
          s.api("POST", "/v1/answer", answer_body));
    CHECK(s.cli({"-o", "json", "sessions", "-n", "a1"}).out ==
          s.api("GET", "/v1/sessions", nullptr, {{"namespace", "a1"}}));
    CHECK(s.cli({"-o", "json", "conflicts", "list", "-n", "a1", "--state", "all"}).out ==
          s.api("GET", "/v1/conflicts", nullptr, {{"namespace", "a1"}, {"state", "all"}}));
    const std::string t = std::to_string(s.clock.now());
    CHECK(s.cli({"-o", "json", "asof", "-n", "a1", "-t", t}).out ==
          s.api("GET", "/v1/memories/asof", nullptr, {{"namespace", "a1"}, {"t", t}}));
    CHECK(s.cli({"-o", "json", "changed-since", "-n", "a1", "--since", "0"}).out ==
          s.api("GET", "/v1/memories", nullptr, {{"namespace", "a1"}, {"changed_since", "0"}}));
    CHECK(s.cli({"-o", "json", "daily-summary", "-n", "a1", "--date", "2026-10-16"}).out ==
          s.api("GET", "/v1/daily-summary", nullptr, {{"namespace", "a1"}, {"date", "2026-10-16"}}));
    const Run err = s.cli({"-o", "json", "conflicts", "resolve", "0123456789abcdef0011223344556677", "--action",
                           "retain"});
    CHECK(err.code == 1);
    CHECK(Json::parse(err.out)["code"] == "not_found");
  }

  TEST_CASE("table mode renders readable output") {
    LiveServer s;
    s.cli({"remember", "-n", "a1", "Project deadline is April 15"});
    const Run r = s.cli({"recall", "-n", "a1", "-q", "Project deadline is April 15"});
    CHECK(r.code == 0);
    CHECK(r.out.find("Project deadline is April 15") != std::string::npos);
    CHECK(r.out.find("1.0000") != std::string::npos);
    const Run d = s.cli({"daily-summary", "-n", "a1", "--date", "2026-10-16"});
    CHECK(d.out.starts_with("# Daily summary: a1 2026-10-16"));
  }

  TEST_CASE("bench writes csv and markdown reports") {
    TempDir dir;
    const Run r = run({"bench", "--seed", "2", "--distractors", "300", "--needles", "10", "--out",
                       dir.path().string(), "--uncapped"});
    CHECK(r.code == 0);
    CHECK(std::filesystem::exists(dir.path() / "ablation.csv"));
    CHECK(std::filesystem::exists(dir.path() / "ablation.md"));
    std::ifstream in(dir.path() / "ablation.csv");
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    CHECK(lines == 5);
  }
}
