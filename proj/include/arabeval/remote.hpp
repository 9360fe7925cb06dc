#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include "arabeval/model.hpp"

namespace httplib {
class Server;
}

namespace arabeval::model {

struct RemoteOptions {
  int max_attempts = 3;
  std::chrono::milliseconds backoff{50};  // doubles after each failed attempt
  std::chrono::seconds timeout{30};
  std::size_t max_in_flight = 8;
  std::size_t vocab_size = 0;  // not carried by the protocol; 0 = unknown
};

// Client for the model wire protocol:
//   POST /v1/logprobs {"tokens":[...]}                      -> {"logprobs":[...]}
//   POST /v1/generate {"prompt":[...],"top_k","top_p",
//                      "max_tokens","n","seed"}              -> {"samples":[[...],...]}
// 5xx responses and transport failures are retried with exponential
// backoff; the final error names the endpoint and the request id.
class RemoteModel final : public LanguageModel {
 public:
  explicit RemoteModel(std::string endpoint, RemoteOptions options = {});
  ~RemoteModel() override;

  std::string id() const override { return "remote:" + endpoint_; }
  std::size_t vocab_size() const override { return options_.vocab_size; }
  std::vector<double> logprobs(std::span<const TokenId> seq) const override;
  // Throws ConfigError for temperature != 1, which the protocol cannot carry.
  std::vector<TokenSequence> generate(std::span<const TokenId> prompt,
                                      const SamplingParams& params) const override;

 private:
  json post(const std::string& path, const json& body) const;

  std::string endpoint_;
  RemoteOptions options_;
  struct Gate;
  std::unique_ptr<Gate> gate_;
  mutable std::atomic<std::uint64_t> next_request_{1};
};

// Serves a LanguageModel over the wire protocol. Used by the remote
// client's loopback tests and by `arabeval serve-model`.
class ModelServer {
 public:
  explicit ModelServer(const LanguageModel& model);
  ~ModelServer();
  ModelServer(const ModelServer&) = delete;
  ModelServer& operator=(const ModelServer&) = delete;

  // Binds to an ephemeral port (port == 0) or the given one; returns it.
  int bind(const std::string& host = "127.0.0.1", int port = 0);
  void start();  // serves on a background thread
  void listen_blocking();
  void stop();

 private:
  const LanguageModel& model_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace arabeval::model
