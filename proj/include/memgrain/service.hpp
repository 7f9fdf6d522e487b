#pragma once

// REST surface. MemoryService::handle is transport independent; HttpServer
// binds it to a socket.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "memgrain/error.hpp"
#include "memgrain/llm.hpp"
#include "memgrain/store.hpp"

namespace memgrain {

inline constexpr int kDefaultPort = 7749;

struct HttpRequest {
  std::string method;
  std::string path;
  std::multimap<std::string, std::string> query;
  std::string body;
  std::optional<std::string> authorization;  // raw Authorization header
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// The (HTTP status, machine code) pair for each error.
int http_status(ErrorCode code);
std::string_view api_code(ErrorCode code);

struct ServiceOptions {
  std::optional<std::string> token;  // bearer token; unset disables auth
};

class MemoryService {
 public:
  MemoryService(MemoryStore& store, LlmClient& llm, ServiceOptions options = {});

  HttpResponse handle(const HttpRequest& request) const;

  MemoryStore& store() const { return store_; }
  LlmClient& llm() const { return llm_; }

 private:
  MemoryStore& store_;
  LlmClient& llm_;
  ServiceOptions options_;
};

// Loopback unless a token is configured.
std::string default_bind_host(const std::optional<std::string>& token);

class HttpServer {
 public:
  // `ui_dir`, when it exists, is served under /ui/.
  explicit HttpServer(const MemoryService& service, std::optional<std::filesystem::path> ui_dir = std::nullopt);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws on failure.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void start();   // listen() on a background thread
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace memgrain
