#include "memgrain/service.hpp"

#include <thread>

#include <httplib.h>

#include "memgrain/codec.hpp"
#include "memgrain/daily.hpp"

namespace memgrain {

namespace {

// Malformed request: wrong JSON, missing or mistyped fields.
struct BadRequest {
  std::string message;
};

constexpr std::string_view kUiPlaceholder =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>memgrain</title></head>"
    "<body><p>The memgrain dashboard is not installed. Start the server with --ui-dir.</p></body></html>\n";

HttpResponse json_response(const MemoryStore& store, int status, Json body) {
  body["served_at"] = format_iso8601(store.now());
  return {status, "application/json", canonical_dump(body) + "\n"};
}

HttpResponse error_response(const MemoryStore& store, int status, std::string_view code, std::string_view message,
                            Json detail = nullptr) {
  Json body{{"code", code}, {"message", message}};
  if (!detail.is_null()) body["detail"] = std::move(detail);
  return json_response(store, status, std::move(body));
}

Json parse_body(const HttpRequest& req) {
  Json body = Json::parse(req.body.empty() ? std::string_view("{}") : std::string_view(req.body), nullptr, false);
  if (body.is_discarded()) throw BadRequest{"request body is not valid JSON"};
  if (!body.is_object()) throw BadRequest{"request body must be a JSON object"};
  return body;
}

const Json* field(const Json& body, const char* key) {
  const auto it = body.find(key);
  return it == body.end() || it->is_null() ? nullptr : &*it;
}

std::string require_string(const Json& body, const char* key) {
  const Json* v = field(body, key);
  if (!v) throw BadRequest{std::string("missing field '") + key + "'"};
  if (!v->is_string()) throw BadRequest{std::string("field '") + key + "' must be a string"};
  return v->get<std::string>();
}

std::optional<std::string> optional_string(const Json& body, const char* key) {
  const Json* v = field(body, key);
  if (!v) return std::nullopt;
  if (!v->is_string()) throw BadRequest{std::string("field '") + key + "' must be a string"};
  return v->get<std::string>();
}

TimestampMs timestamp_value(std::string_view text, std::string_view key) {
  if (auto t = parse_timestamp(text)) return *t;
  throw BadRequest{"'" + std::string(key) + "' must be milliseconds or an ISO-8601 UTC timestamp"};
}

std::optional<TimestampMs> optional_timestamp(const Json& body, const char* key) {
  const Json* v = field(body, key);
  if (!v) return std::nullopt;
  if (v->is_number_integer()) return v->get<TimestampMs>();
  if (v->is_string()) return timestamp_value(v->get<std::string>(), key);
  throw BadRequest{std::string("field '") + key + "' must be a timestamp"};
}

std::optional<std::string> query_param(const HttpRequest& req, const char* key) {
  const auto it = req.query.find(key);
  if (it == req.query.end()) return std::nullopt;
  return it->second;
}

std::string require_query(const HttpRequest& req, const char* key) {
  auto v = query_param(req, key);
  if (!v || v->empty()) throw BadRequest{std::string("missing query parameter '") + key + "'"};
  return *v;
}

RecordId path_id(std::string_view hex) {
  if (!RecordId::is_valid_hex(hex)) throw BadRequest{"'" + std::string(hex) + "' is not a record id"};
  return RecordId::parse(hex);
}

RetrievalParams retrieval_params(const Json& body) {
  RetrievalParams p;
  if (const Json* v = field(body, "threshold")) {
    if (!v->is_number()) throw BadRequest{"field 'threshold' must be a number"};
    p.threshold = v->get<double>();
  }
  if (const Json* v = field(body, "max_k")) {
    if (!v->is_number_integer()) throw BadRequest{"field 'max_k' must be an integer"};
    const auto k = v->get<std::int64_t>();
    if (k < 1) throw Error(ErrorCode::kInvalidArgument, "max_k must be at least 1");
    p.max_k = static_cast<std::size_t>(k);
  }
  if (const Json* v = field(body, "types")) {
    if (!v->is_array()) throw BadRequest{"field 'types' must be an array of type names"};
    TypeMask mask;
    for (const auto& t : *v) {
      if (!t.is_string()) throw BadRequest{"field 'types' must be an array of type names"};
      mask.insert(memory_type_from_string(t.get<std::string>()));
    }
    if (!mask.empty()) p.types = mask;
  }
  p.as_of = optional_timestamp(body, "as_of");
  if (const Json* v = field(body, "include_superseded")) {
    if (!v->is_boolean()) throw BadRequest{"field 'include_superseded' must be a boolean"};
    p.include_superseded = v->get<bool>();
  }
  return p;
}

Json error_detail(const Error& e) {
  Json detail = nullptr;
  if (e.index) detail["index"] = *e.index;
  if (e.seq) detail["seq"] = *e.seq;
  return detail;
}

HttpResponse remember(MemoryStore& store, const HttpRequest& req) {
  const Json body = parse_body(req);
  RememberRequest r;
  r.ns = require_string(body, "namespace");
  r.content = require_string(body, "content");
  if (auto t = optional_string(body, "type")) r.type = memory_type_from_string(*t);
  if (const Json* tags = field(body, "tags")) {
    if (!tags->is_array()) throw BadRequest{"field 'tags' must be an array of strings"};
    for (const auto& t : *tags) {
      if (!t.is_string()) throw BadRequest{"field 'tags' must be an array of strings"};
      r.tags.insert(t.get<std::string>());
    }
  }
  r.session_id = optional_string(body, "session_id");
  r.at = optional_timestamp(body, "at");
  if (auto p = optional_string(body, "provenance")) r.provenance = provenance_from_string(*p);
  const WriteOutcome out = store.remember(r);
  return json_response(store, 201,
                       Json{{"id", out.records.front().id},
                            {"state", std::string(to_string(out.records.front().state))},
                            {"records", out.records},
                            {"conflicts", out.opened_conflicts}});
}

HttpResponse recall(MemoryStore& store, const HttpRequest& req) {
  const Json body = parse_body(req);
  const std::string ns = require_string(body, "namespace");
  const std::string query = require_string(body, "query");
  const RetrievalParams params = retrieval_params(body);
  require_valid_namespace(ns);
  return json_response(store, 200, Json{{"hits", store.recall(ns, query, params)}});
}

HttpResponse answer_route(MemoryStore& store, LlmClient& llm, const HttpRequest& req) {
  const Json body = parse_body(req);
  const std::string ns = require_string(body, "namespace");
  const std::string question = require_string(body, "question");
  const RetrievalParams params = retrieval_params(body);
  require_valid_namespace(ns);
  const AnswerResult a = answer(store, llm, ns, question, params);
  return json_response(store, 200,
                       Json{{"answer", a.answer}, {"citations", a.citations}, {"retrieved", a.retrieved}});
}

HttpResponse resolve(MemoryStore& store, const HttpRequest& req, std::string_view id) {
  const RecordId conflict_id = path_id(id);
  const Json body = parse_body(req);
  const ResolutionAction action = resolution_action_from_string(require_string(body, "action"));
  const std::string actor = optional_string(body, "actor").value_or("api");
  const ResolutionOutcome out = store.resolve_conflict(conflict_id, action, actor, optional_timestamp(body, "at"));
  return json_response(store, 200, Json{{"conflict", out.conflict}, {"records", out.records}});
}

HttpResponse daily_summary(MemoryStore& store, const HttpRequest& req) {
  const std::string ns = require_query(req, "namespace");
  const std::string date = query_param(req, "date").value_or(format_utc_date(store.now()));
  const std::string format = query_param(req, "format").value_or("json");
  if (format != "json" && format != "markdown") throw BadRequest{"format must be json or markdown"};
  const DailySummary s = generate_daily_summary(store, ns, date);
  if (format == "markdown") return {200, "text/markdown; charset=utf-8", s.rendered};
  Json counts = Json::object();
  for (const auto& [type, n] : s.counts_by_type) counts[std::string(to_string(type))] = n;
  Json sessions = Json::array();
  for (const auto& d : s.sessions) {
    Json j = d.session;
    j["records"] = d.records;
    sessions.push_back(std::move(j));
  }
  return json_response(store, 200,
                       Json{{"namespace", s.ns},
                            {"date", s.date},
                            {"sessions", sessions},
                            {"counts_by_type", counts},
                            {"total_records", s.total_records()},
                            {"new_conflicts", s.new_conflicts},
                            {"unresolved_conflicts", s.unresolved_conflicts},
                            {"rendered", s.rendered}});
}

bool authorized(const ServiceOptions& options, const HttpRequest& req) {
  if (!options.token) return true;
  return req.authorization && *req.authorization == "Bearer " + *options.token;
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kIllegalTransition:
    case ErrorCode::kAlreadyResolved:
      return 409;
    case ErrorCode::kStorageFailure:
    case ErrorCode::kCorruptLog:
      return 500;
    case ErrorCode::kExternalUnavailable:
    case ErrorCode::kLlmUnavailable:
      return 503;
    case ErrorCode::kUnknownType:
    case ErrorCode::kClockOutOfRange:
    case ErrorCode::kEmptyContent:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidRange:
    case ErrorCode::kFutureDate:
      return 422;
  }
  return 500;
}

std::string_view api_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownType: return "unknown_type";
    case ErrorCode::kClockOutOfRange: return "clock_out_of_range";
    case ErrorCode::kEmptyContent: return "empty_content";
    case ErrorCode::kExternalUnavailable: return "embedder_unavailable";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kInvalidRange: return "invalid_range";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kIllegalTransition: return "illegal_transition";
    case ErrorCode::kAlreadyResolved: return "already_resolved";
    case ErrorCode::kStorageFailure: return "storage_failure";
    case ErrorCode::kCorruptLog: return "corrupt_log";
    case ErrorCode::kFutureDate: return "future_date";
    case ErrorCode::kLlmUnavailable: return "llm_unavailable";
  }
  return "internal";
}

MemoryService::MemoryService(MemoryStore& store, LlmClient& llm, ServiceOptions options)
    : store_(store), llm_(llm), options_(std::move(options)) {}

HttpResponse MemoryService::handle(const HttpRequest& req) const {
  const std::string_view path = req.path;
  const bool get = req.method == "GET";
  const bool post = req.method == "POST";
  try {
    if (get && (path == "/ui" || path.starts_with("/ui/"))) {
      return {200, "text/html; charset=utf-8", std::string(kUiPlaceholder)};
    }
    if (!authorized(options_, req)) {
      return error_response(store_, 401, "unauthorized", "missing or invalid bearer token");
    }

    if (post && path == "/v1/remember") return remember(store_, req);
    if (post && path == "/v1/recall") return recall(store_, req);
    if (post && path == "/v1/answer") return answer_route(store_, llm_, req);

    if (get && path == "/healthz") {
      const StoreCounters c = store_.counters();
      return json_response(store_, 200,
                           Json{{"status", "ok"},
                                {"namespaces", c.namespaces},
                                {"records", c.records},
                                {"open_conflicts", c.open_conflicts}});
    }
    if (get && path == "/v1/memories") {
      const std::string ns = require_query(req, "namespace");
      require_valid_namespace(ns);
      const TimestampMs since = timestamp_value(require_query(req, "changed_since"), "changed_since");
      std::optional<TimestampMs> until;
      if (auto u = query_param(req, "until"); u && !u->empty()) until = timestamp_value(*u, "until");
      return json_response(store_, 200, Json{{"records", store_.changed_since(ns, since, until)}});
    }
    if (get && path == "/v1/memories/asof") {
      const std::string ns = require_query(req, "namespace");
      require_valid_namespace(ns);
      const TimestampMs t = timestamp_value(require_query(req, "t"), "t");
      return json_response(store_, 200, Json{{"records", store_.as_of(ns, t)}});
    }
    if (get && path.starts_with("/v1/memories/") && path.find('/', 13) == std::string_view::npos) {
      const RecordId id = path_id(path.substr(13));
      const auto record = store_.get(id);
      if (!record) throw Error(ErrorCode::kNotFound, "record " + id.hex() + " not found");
      return json_response(store_, 200, Json{{"record", *record}});
    }
    if (get && path == "/v1/conflicts") {
      const std::string ns = require_query(req, "namespace");
      require_valid_namespace(ns);
      const ConflictFilter filter = conflict_filter_from_string(query_param(req, "state").value_or("open"));
      return json_response(store_, 200, Json{{"conflicts", store_.list_conflicts(ns, filter)}});
    }
    if (post && path.starts_with("/v1/conflicts/") && path.ends_with("/resolve")) {
      const std::string_view id = path.substr(14, path.size() - 14 - 8);
      if (id.find('/') == std::string_view::npos) return resolve(store_, req, id);
    }
    if (get && path == "/v1/sessions") {
      const std::string ns = require_query(req, "namespace");
      require_valid_namespace(ns);
      return json_response(store_, 200, Json{{"sessions", store_.sessions(ns)}});
    }
    if (get && path == "/v1/daily-summary") return daily_summary(store_, req);

    return error_response(store_, 404, "unknown_route", req.method + " " + req.path + " is not a route");
  } catch (const BadRequest& e) {
    return error_response(store_, 400, "bad_request", e.message);
  } catch (const Error& e) {
    return error_response(store_, http_status(e.code()), api_code(e.code()), e.what(), error_detail(e));
  } catch (const Json::exception& e) {
    return error_response(store_, 400, "bad_request", e.what());
  } catch (const std::exception& e) {
    return error_response(store_, 500, "internal", e.what());
  }
}

std::string default_bind_host(const std::optional<std::string>& token) {
  return token ? "0.0.0.0" : "127.0.0.1";
}

struct HttpServer::Impl {
  explicit Impl(const MemoryService& s) : service(s) {}
  const MemoryService& service;
  httplib::Server server;
  std::thread thread;
};

HttpServer::HttpServer(const MemoryService& service, std::optional<std::filesystem::path> ui_dir)
    : impl_(std::make_unique<Impl>(service)) {
  if (ui_dir && std::filesystem::is_directory(*ui_dir)) impl_->server.set_mount_point("/ui", ui_dir->string());
  auto route = [this](const httplib::Request& in, httplib::Response& out) {
    HttpRequest req;
    req.method = in.method;
    req.path = in.path;
    for (const auto& [k, v] : in.params) req.query.emplace(k, v);
    req.body = in.body;
    if (in.has_header("Authorization")) req.authorization = in.get_header_value("Authorization");
    const HttpResponse res = impl_->service.handle(req);
    out.status = res.status;
    out.set_content(res.body, res.content_type);
  };
  impl_->server.Get(".*", route);
  impl_->server.Post(".*", route);
  impl_->server.Put(".*", route);
  impl_->server.Delete(".*", route);
  impl_->server.Patch(".*", route);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace memgrain
