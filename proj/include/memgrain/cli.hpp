#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace memgrain {

struct CliEnvironment {
  std::map<std::string, std::string> vars;
  std::optional<std::filesystem::path> home;

  static CliEnvironment from_process(char** envp);
  std::optional<std::string> get(const std::string& key) const;
};

enum class OutputMode { kTable, kJson };

struct CliConfig {
  std::string server_url = "http://127.0.0.1:7749";
  std::optional<std::string> token;
  OutputMode output = OutputMode::kTable;
  std::string ns = "default";
};

// ~/.memgrain.toml (key = value lines), then MEMGRAIN_URL, MEMGRAIN_TOKEN,
// MEMGRAIN_OUTPUT and MEMGRAIN_NAMESPACE. Flags are applied by run_cli.
CliConfig load_cli_config(const CliEnvironment& env);

// Exit codes: 0 success, 1 domain or connection error, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliEnvironment& env);

}  // namespace memgrain
