#include "arabeval/remote.hpp"

#include <httplib.h>

#include <condition_variable>
#include <mutex>

#include "arabeval/error.hpp"

namespace arabeval::model {

struct RemoteModel::Gate {
  std::mutex mu;
  std::condition_variable cv;
  std::size_t in_flight = 0;
  std::size_t limit;

  explicit Gate(std::size_t l) : limit(l == 0 ? 1 : l) {}

  void acquire() {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return in_flight < limit; });
    ++in_flight;
  }
  void release() {
    {
      std::lock_guard lock(mu);
      --in_flight;
    }
    cv.notify_one();
  }
};

RemoteModel::RemoteModel(std::string endpoint, RemoteOptions options)
    : endpoint_(std::move(endpoint)), options_(options), gate_(std::make_unique<Gate>(options.max_in_flight)) {
  while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
  if (endpoint_.empty()) throw ConfigError("remote model: empty endpoint");
}

RemoteModel::~RemoteModel() = default;

json RemoteModel::post(const std::string& path, const json& body) const {
  const auto request_id = next_request_.fetch_add(1);
  const std::string rid = std::to_string(request_id);
  const std::string payload = body.dump();
  std::string last_error;
  auto delay = options_.backoff;

  gate_->acquire();
  struct Release {
    Gate* g;
    ~Release() { g->release(); }
  } release{gate_.get()};

  for (int attempt = 1; attempt <= std::max(1, options_.max_attempts); ++attempt) {
    httplib::Client client(endpoint_);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    httplib::Headers headers{{"X-Request-Id", rid}};
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw Error(endpoint_ + path + " request " + rid + ": HTTP " + std::to_string(res->status) +
                  " " + res->body);
    } else {
      try {
        return json::parse(res->body);
      } catch (const json::parse_error&) {
        throw Error(endpoint_ + path + " request " + rid + ": malformed response");
      }
    }
    if (attempt < options_.max_attempts) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  throw Error(endpoint_ + path + " request " + rid + ": failed after " +
              std::to_string(std::max(1, options_.max_attempts)) + " attempts (" + last_error + ")");
}

std::vector<double> RemoteModel::logprobs(std::span<const TokenId> seq) const {
  if (seq.empty()) throw Error("logprobs of an empty sequence");
  const auto res = post("/v1/logprobs", json{{"tokens", std::vector<TokenId>(seq.begin(), seq.end())}});
  auto it = res.find("logprobs");
  if (it == res.end() || !it->is_array() || it->size() != seq.size()) {
    throw Error(endpoint_ + "/v1/logprobs: malformed response");
  }
  std::vector<double> out;
  out.reserve(seq.size());
  for (const auto& v : *it) {
    if (!v.is_number()) throw Error(endpoint_ + "/v1/logprobs: malformed response");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<TokenSequence> RemoteModel::generate(std::span<const TokenId> prompt,
                                                 const SamplingParams& params) const {
  params.validate();
  if (params.temperature != 1.0) {
    throw ConfigError("remote model: the wire protocol has no temperature field");
  }
  const json body{{"prompt", std::vector<TokenId>(prompt.begin(), prompt.end())},
                  {"top_k", params.top_k},
                  {"top_p", params.top_p},
                  {"max_tokens", params.max_tokens},
                  {"n", params.n_samples},
                  {"seed", params.seed}};
  const auto res = post("/v1/generate", body);
  auto it = res.find("samples");
  if (it == res.end() || !it->is_array() || it->size() != params.n_samples) {
    throw Error(endpoint_ + "/v1/generate: malformed response");
  }
  std::vector<TokenSequence> out;
  try {
    for (const auto& s : *it) out.push_back(s.get<TokenSequence>());
  } catch (const json::exception&) {
    throw Error(endpoint_ + "/v1/generate: malformed response");
  }
  return out;
}

ModelServer::ModelServer(const LanguageModel& model)
    : model_(model), server_(std::make_unique<httplib::Server>()) {
  // The default also sets SO_REUSEPORT, which lets a second server share a busy port.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  auto fail = [](httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    res.set_content(json{{"error", msg}}.dump(), "application/json");
  };
  server_->Post("/v1/logprobs", [this, fail](const httplib::Request& req, httplib::Response& res) {
    TokenSequence tokens;
    try {
      tokens = json::parse(req.body).at("tokens").get<TokenSequence>();
    } catch (const std::exception& e) {
      return fail(res, 400, e.what());
    }
    try {
      res.set_content(json{{"logprobs", model_.logprobs(tokens)}}.dump(), "application/json");
    } catch (const std::exception& e) {
      fail(res, 422, e.what());
    }
  });
  server_->Post("/v1/generate", [this, fail](const httplib::Request& req, httplib::Response& res) {
    TokenSequence prompt;
    SamplingParams p;
    try {
      const auto j = json::parse(req.body);
      prompt = j.at("prompt").get<TokenSequence>();
      p.top_k = j.at("top_k").get<std::size_t>();
      p.top_p = j.at("top_p").get<double>();
      p.max_tokens = j.at("max_tokens").get<std::size_t>();
      p.n_samples = j.at("n").get<std::size_t>();
      p.seed = j.at("seed").get<std::uint64_t>();
      p.validate();
    } catch (const std::exception& e) {
      return fail(res, 400, e.what());
    }
    try {
      res.set_content(json{{"samples", model_.generate(prompt, p)}}.dump(), "application/json");
    } catch (const std::exception& e) {
      fail(res, 422, e.what());
    }
  });
}

ModelServer::~ModelServer() { stop(); }

int ModelServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port = server_->bind_to_any_port(host);
    if (port < 0) throw Error("cannot bind " + host);
  } else if (!server_->bind_to_port(host, port)) {
    throw Error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ModelServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void ModelServer::listen_blocking() { server_->listen_after_bind(); }

void ModelServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace arabeval::model
