#include <httplib.h>

#include <algorithm>

#include "arabeval/annotate.hpp"
#include "arabeval/error.hpp"

namespace arabeval::annotate {

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

void fail(httplib::Response& res, int status, const std::string& msg) { reply(res, status, {{"error", msg}}); }

std::string bearer(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  constexpr std::string_view kPrefix = "Bearer ";
  return h.starts_with(kPrefix) ? h.substr(kPrefix.size()) : std::string();
}

// 401 without a token, 403 when the token belongs to someone else.
bool authorized(const Session& s, const httplib::Request& req, const std::string& annotator,
                httplib::Response& res) {
  const auto& roster = s.roster();
  if (std::find(roster.begin(), roster.end(), annotator) == roster.end()) {
    fail(res, 403, "unknown annotator " + annotator);
    return false;
  }
  const auto token = bearer(req);
  if (token.empty()) {
    fail(res, 401, "missing bearer token");
    return false;
  }
  if (s.annotator_for_token(token) != annotator) {
    fail(res, 403, "token does not belong to " + annotator);
    return false;
  }
  return true;
}

}  // namespace

AnnotationServer::AnnotationServer(SessionStore& store)
    : store_(store), server_(std::make_unique<httplib::Server>()) {
  // The default also sets SO_REUSEPORT, which lets a second server share a busy port.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  // Resolves the session or answers 404.
  auto session = [this](const httplib::Request& req, httplib::Response& res) -> Session* {
    const std::string id = req.matches[1];
    if (!store_.exists(id)) {
      fail(res, 404, "no such session " + id);
      return nullptr;
    }
    try {
      return &store_.get(id);
    } catch (const std::exception& e) {
      fail(res, 500, e.what());
      return nullptr;
    }
  };

  server_->Post("/api/session", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto body = json::parse(req.body);
      std::vector<Item> items;
      for (const auto& j : body.at("items")) items.push_back(Item::from_json(j));
      const auto schema = parse_schema(body.at("schema").get<std::string>());
      auto roster = body.at("roster").get<std::vector<std::string>>();
      const auto seed = body.value("seed", std::uint64_t{0});
      const auto id = store_.create(std::move(items), schema, std::move(roster), seed);
      reply(res, 201, {{"session", id}, {"tokens", store_.get(id).tokens()}});
    } catch (const std::exception& e) {
      fail(res, 400, e.what());
    }
  });

  server_->Get(R"(/api/session/([^/]+)/next)", [session](const httplib::Request& req, httplib::Response& res) {
    Session* s = session(req, res);
    if (s == nullptr) return;
    const auto annotator = req.get_param_value("annotator");
    if (!authorized(*s, req, annotator, res)) return;
    const auto prompt = s->next_item(annotator);
    if (!prompt) return reply(res, 200, {{"complete", true}});
    auto body = prompt->to_json();
    body["complete"] = false;
    reply(res, 200, body);
  });

  server_->Post(R"(/api/session/([^/]+)/label)", [session](const httplib::Request& req, httplib::Response& res) {
    Session* s = session(req, res);
    if (s == nullptr) return;
    json body;
    try {
      body = json::parse(req.body);
      body.at("annotator").get<std::string>();
      body.at("item").get<std::string>();
      body.at("answer");
    } catch (const std::exception& e) {
      return fail(res, 400, std::string("malformed label request: ") + e.what());
    }
    const auto annotator = body["annotator"].get<std::string>();
    if (!authorized(*s, req, annotator, res)) return;
    try {
      s->submit(annotator, body["item"].get<std::string>(), body["answer"]);
    } catch (const Error& e) {
      const std::string msg = e.what();
      return fail(res, msg == "already labeled" ? 409 : 400, msg);
    }
    reply(res, 200, {{"ok", true}});
  });

  server_->Get(R"(/api/session/([^/]+)/stats)", [session](const httplib::Request& req, httplib::Response& res) {
    Session* s = session(req, res);
    if (s == nullptr) return;
    try {
      reply(res, 200, s->stats());
    } catch (const std::exception& e) {
      fail(res, 422, e.what());
    }
  });
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port = server_->bind_to_any_port(host);
    if (port < 0) throw Error("cannot bind " + host);
  } else if (!server_->bind_to_port(host, port)) {
    throw Error("cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
  }
  return port;
}

void AnnotationServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void AnnotationServer::listen_blocking() { server_->listen_after_bind(); }

void AnnotationServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace arabeval::annotate
