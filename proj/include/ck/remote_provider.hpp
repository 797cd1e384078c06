#pragma once

#include <cstddef>
#include <mutex>
#include <optional>
#include <string>

#include "ck/embedding.hpp"

namespace ck {

struct RemoteConfig {
  std::string url;  // e.g. http://127.0.0.1:8080, optionally with a path prefix
  int timeout_ms = 30000;
  int retries = 2;  // extra attempts after the first failure
  std::size_t max_batch = 32;
  std::size_t max_length = 512;
};

/// Client for an embedding sidecar speaking the JSON-over-HTTP protocol:
///
///   POST /embed         {"texts": [str]}  ->  {"dim": int, "vectors": [[float]]}
///   POST /embed_joined  same shape; each text is a rendered JoinedSequence
///   GET  /health        {"status": "ok", "dim": int, "model": str}
///
/// Vectors come back in request order. Requests larger than max_batch are
/// split. Connection failures and 5xx responses are retried; when attempts run
/// out the call throws ProviderUnavailable. A dim that disagrees with
/// /health, or a vector count that disagrees with the request, throws
/// DimensionMismatch.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(RemoteConfig config);

  std::string name() const override;
  std::size_t dimension() const override;
  bool deterministic() const override { return true; }
  std::size_t max_length() const override { return config_.max_length; }

  std::vector<Vector> embed_texts(std::span<const std::string> texts) const override;
  std::vector<Vector> embed_joined(std::span<const JoinedSequence> joined) const override;

  /// Sequences the service reported as truncated across all /embed_joined calls.
  std::size_t service_truncations() const;

 private:
  struct Health {
    std::size_t dim = 0;
    std::string model;
  };

  const Health& health() const;
  std::vector<Vector> post(const std::string& route, std::span<const std::string> texts) const;
  std::string send(const std::string& method, const std::string& route,
                   const std::string& body) const;

  RemoteConfig config_;
  std::string origin_;  // scheme://host:port
  std::string prefix_;  // path prefix without trailing slash
  mutable std::mutex mutex_;
  mutable std::optional<Health> health_;
  mutable std::size_t truncations_ = 0;
};

}  // namespace ck
