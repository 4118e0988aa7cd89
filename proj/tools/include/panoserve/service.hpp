#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include "nefnet/nefnet.hpp"
#include "nefnet/scratchsynth.hpp"

namespace httplib {
class Server;
}

namespace panoserve {

struct Session {
  std::string id;
  nef::ElectrocardioField field;
  std::string model_version;
  std::chrono::steady_clock::time_point created;
  std::chrono::steady_clock::time_point last_used;
};

/// Synchronized id -> session map with idle expiry.
class SessionStore {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  explicit SessionStore(std::chrono::seconds idle_ttl = std::chrono::minutes(30), Clock clock = {});

  std::string create(nef::ElectrocardioField field, std::string model_version);
  /// Refreshes the idle timer. Fields are immutable once stored.
  std::shared_ptr<const Session> get(const std::string& id);
  std::size_t size();
  std::size_t purge_expired();

 private:
  std::chrono::steady_clock::time_point now() const;

  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::chrono::seconds ttl_;
  Clock clock_;
  std::mt19937_64 ids_;
};

struct Response {
  int status = 200;
  std::string body;  // JSON
};

/// Request handlers, independent of the transport so tests can call them
/// directly. Error bodies are {"error": {"kind": ..., "message": ...}}.
class Service {
 public:
  Service(nef::NefNet model, std::optional<nef::MemoryBank> bank = std::nullopt,
          std::chrono::seconds session_ttl = std::chrono::minutes(30));

  Response encode(const std::string& body);
  Response panorama(const std::string& session, const std::string& theta, const std::string& phi);
  Response synthesize(const std::string& body);
  Response leads() const;
  Response healthz() const;

  const nef::NefNet& model() const { return model_; }
  const std::string& version() const { return version_; }
  SessionStore& sessions() { return sessions_; }

  /// Registers every /v1 route on `server`.
  void mount(httplib::Server& server);

 private:
  nef::NefNet model_;
  std::optional<nef::MemoryBank> bank_;
  std::string version_;
  SessionStore sessions_;
};

/// Blocks until the server stops. Returns false if the address cannot be bound.
bool serve(Service& service, const std::string& host, int port);

}  // namespace panoserve
