#include "ck/remote_provider.hpp"

#include <httplib.h>

#include <chrono>
#include <thread>

#include <json.hpp>

#include "ck/error.hpp"

namespace ck {

using nlohmann::json;

RemoteEmbeddingProvider::RemoteEmbeddingProvider(RemoteConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.url.find("://");
  if (config_.url.empty() || scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidConfig, "remote provider url must look like http://host:port, got '" +
                                              config_.url + "'");
  }
  if (config_.url.compare(0, scheme_end, "http") != 0) {
    throw Error(ErrorCode::InvalidConfig, "only http:// remote providers are supported");
  }
  const auto path_start = config_.url.find('/', scheme_end + 3);
  origin_ = config_.url.substr(0, path_start);
  if (path_start != std::string::npos) {
    prefix_ = config_.url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }
  if (config_.max_batch == 0) config_.max_batch = 1;
}

std::string RemoteEmbeddingProvider::send(const std::string& method, const std::string& route,
                                          const std::string& body) const {
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
    httplib::Client client(origin_);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = method == "GET" ? client.Get(prefix_ + route)
                               : client.Post(prefix_ + route, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::ProviderUnavailable, config_.url + route + " rejected request: HTTP " +
                                                      std::to_string(res->status) + " " + res->body);
    }
    return res->body;
  }
  throw Error(ErrorCode::ProviderUnavailable, config_.url + route + " unreachable after " +
                                                  std::to_string(config_.retries + 1) +
                                                  " attempts: " + last_error);
}

const RemoteEmbeddingProvider::Health& RemoteEmbeddingProvider::health() const {
  {
    std::lock_guard lock(mutex_);
    if (health_) return *health_;
  }
  const auto body = send("GET", "/health", "");
  Health h;
  try {
    const auto doc = json::parse(body);
    if (doc.at("status").get<std::string>() != "ok") {
      throw Error(ErrorCode::ProviderUnavailable, "provider not ready: " + body);
    }
    h.dim = doc.at("dim").get<std::size_t>();
    if (doc.contains("model")) h.model = doc.at("model").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable, std::string("bad /health response: ") + e.what());
  }
  if (h.dim == 0) throw Error(ErrorCode::DimensionMismatch, "provider declared dim 0");
  std::lock_guard lock(mutex_);
  if (!health_) health_ = std::move(h);
  return *health_;
}

std::string RemoteEmbeddingProvider::name() const {
  const auto& h = health();
  return "remote:" + (h.model.empty() ? config_.url : h.model) + "/d=" + std::to_string(h.dim);
}

std::size_t RemoteEmbeddingProvider::dimension() const { return health().dim; }

std::size_t RemoteEmbeddingProvider::service_truncations() const {
  std::lock_guard lock(mutex_);
  return truncations_;
}

std::vector<Vector> RemoteEmbeddingProvider::post(const std::string& route,
                                                  std::span<const std::string> texts) const {
  const std::size_t dim = dimension();
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (std::size_t begin = 0; begin < texts.size(); begin += config_.max_batch) {
    const std::size_t end = std::min(texts.size(), begin + config_.max_batch);
    json request;
    request["texts"] = json::array();
    for (std::size_t i = begin; i < end; ++i) request["texts"].push_back(texts[i]);

    const auto body = send("POST", route, request.dump());
    json doc;
    try {
      doc = json::parse(body);
      if (!doc.contains("dim") || !doc.contains("vectors") || !doc["vectors"].is_array()) {
        throw Error(ErrorCode::ProviderUnavailable, route + " response lacks dim/vectors");
      }
      if (doc["dim"].get<std::size_t>() != dim) {
        throw Error(ErrorCode::DimensionMismatch, route + " answered dim " + doc["dim"].dump() +
                                                      ", /health declared " + std::to_string(dim));
      }
      const auto& vectors = doc["vectors"];
      if (vectors.size() != end - begin) {
        throw Error(ErrorCode::DimensionMismatch,
                    route + " returned " + std::to_string(vectors.size()) + " vectors for " +
                        std::to_string(end - begin) + " texts");
      }
      for (const auto& row : vectors) {
        if (!row.is_array() || row.size() != dim) {
          throw Error(ErrorCode::DimensionMismatch, route + " returned a vector of the wrong length");
        }
        Vector v(static_cast<Eigen::Index>(dim));
        for (std::size_t k = 0; k < dim; ++k) v[static_cast<Eigen::Index>(k)] = row[k].get<double>();
        out.push_back(std::move(v));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ProviderUnavailable, route + " returned malformed JSON: " + e.what());
    }
    if (doc.contains("truncated") && doc["truncated"].is_number_integer()) {
      std::lock_guard lock(mutex_);
      truncations_ += doc["truncated"].get<std::size_t>();
    }
  }
  return out;
}

std::vector<Vector> RemoteEmbeddingProvider::embed_texts(std::span<const std::string> texts) const {
  return post("/embed", texts);
}

std::vector<Vector> RemoteEmbeddingProvider::embed_joined(std::span<const JoinedSequence> joined) const {
  std::vector<std::string> rendered;
  rendered.reserve(joined.size());
  for (const auto& j : joined) rendered.push_back(j.render());
  return post("/embed_joined", rendered);
}

}  // namespace ck
