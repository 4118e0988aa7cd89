#include "panoserve/service.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "nefnet/checkpoint.hpp"
#include "nefnet/dipole.hpp"
#include "nefnet/errors.hpp"

namespace panoserve {

using nlohmann::json;
using nef::Error;
using nef::ErrorKind;

namespace {

constexpr int kMaxSynthesisCount = 256;

Response error_response(int status, std::string_view kind, const std::string& message) {
  return {status, json{{"error", {{"kind", kind}, {"message", message}}}}.dump()};
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInsufficientData:
      return 422;
    case ErrorKind::kConfiguration:
      return 409;
    case ErrorKind::kNumericFailure:
    case ErrorKind::kIo:
      return 500;
    default:
      return 400;
  }
}

template <typename F>
Response guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    return error_response(status_for(e.kind()), nef::to_string(e.kind()), e.what());
  } catch (const json::exception& e) {
    return error_response(400, "invalid_argument", std::string("malformed request: ") + e.what());
  }
}

double parse_angle(const std::string& text, const char* name) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw Error(ErrorKind::kInvalidArgument, std::string("query parameter '") + name +
                                                 "' must be a finite number");
  }
  return v;
}

nef::Demarcations demarcations_of(const nef::ElectrocardioField& f) {
  return nef::demarcations_from_lengths(f.lengths);
}

std::vector<nef::NamedViewpoint> parse_viewpoints(const json& j) {
  std::vector<nef::NamedViewpoint> out;
  for (const auto& item : j) {
    if (item.is_string()) {
      const auto name = item.get<std::string>();
      const auto v = nef::lead_viewpoint(name);
      if (!v) throw Error(ErrorKind::kInvalidArgument, "unknown lead '" + name + "'");
      out.push_back({name, *v});
    } else {
      const nef::Viewpoint v = nef::canonicalize({item.at("theta").get<double>(), item.at("phi").get<double>()});
      out.push_back({item.contains("name") ? item.at("name").get<std::string>() : nef::default_view_name(v), v});
    }
  }
  return out;
}

std::vector<nef::NamedViewpoint> twelve_leads() {
  std::vector<nef::NamedViewpoint> out;
  for (const auto& lead : nef::kLeadAngleTable) out.push_back({std::string(lead.name), lead.viewpoint});
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

SessionStore::SessionStore(std::chrono::seconds idle_ttl, Clock clock)
    : ttl_(idle_ttl), clock_(std::move(clock)), ids_(std::random_device{}()) {}

std::chrono::steady_clock::time_point SessionStore::now() const {
  return clock_ ? clock_() : std::chrono::steady_clock::now();
}

std::string SessionStore::create(nef::ElectrocardioField field, std::string model_version) {
  std::lock_guard lock(mutex_);
  const auto t = now();
  std::erase_if(sessions_, [&](const auto& kv) { return t - kv.second->last_used > ttl_; });
  std::string id;
  do {
    std::ostringstream s;
    s << std::hex << ids_() << ids_();
    id = s.str();
  } while (sessions_.contains(id));
  auto session = std::make_shared<Session>();
  session->id = id;
  session->field = std::move(field);
  session->model_version = std::move(model_version);
  session->created = t;
  session->last_used = t;
  sessions_.emplace(id, std::move(session));
  return id;
}

std::shared_ptr<const Session> SessionStore::get(const std::string& id) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) return nullptr;
  const auto t = now();
  if (t - it->second->last_used > ttl_) {
    sessions_.erase(it);
    return nullptr;
  }
  it->second->last_used = t;
  return it->second;
}

std::size_t SessionStore::size() {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

std::size_t SessionStore::purge_expired() {
  std::lock_guard lock(mutex_);
  const auto t = now();
  return std::erase_if(sessions_, [&](const auto& kv) { return t - kv.second->last_used > ttl_; });
}

// ---------------------------------------------------------------------------

Service::Service(nef::NefNet model, std::optional<nef::MemoryBank> bank, std::chrono::seconds session_ttl)
    : model_(std::move(model)),
      bank_(std::move(bank)),
      version_(nef::model_version(model_.parameters())),
      sessions_(session_ttl) {
  if (bank_ && bank_->model_version != version_) {
    throw Error(ErrorKind::kConfiguration, "memory bank was built with model " + bank_->model_version +
                                               ", service runs " + version_);
  }
}

Response Service::encode(const std::string& body) {
  return guarded([&] {
    const json req = json::parse(body);
    const auto& views = req.at("views");
    if (!views.is_array() || views.empty()) {
      throw Error(ErrorKind::kInvalidArgument, "'views' must be a non-empty array");
    }
    const auto length = static_cast<std::size_t>(model_.config().signal_length);
    std::vector<nef::ElectrocardioField> fields;
    for (const auto& v : views) {
      const auto samples = v.at("samples").get<std::vector<double>>();
      if (samples.size() != length) {
        throw Error(ErrorKind::kShapeMismatch, "each view needs " + std::to_string(length) + " samples, got " +
                                                   std::to_string(samples.size()));
      }
      const auto d = v.at("demarcations").get<std::vector<int>>();
      if (d.size() != nef::kNumDemarcations) {
        throw Error(ErrorKind::kInvalidArgument, "'demarcations' needs 7 entries");
      }
      nef::Demarcations dem{};
      std::copy(d.begin(), d.end(), dem.begin());
      nef::validate_demarcations(dem, static_cast<int>(length));
      fields.push_back(model_.encode_view(samples, dem, {v.at("theta").get<double>(), v.at("phi").get<double>()}));
    }
    auto fused = nef::fuse_views(fields);
    const auto dem = demarcations_of(fused);
    const std::string id = sessions_.create(std::move(fused), version_);
    return Response{200, json{{"session", id}, {"model", version_}, {"demarcations", dem}}.dump()};
  });
}

Response Service::panorama(const std::string& session, const std::string& theta, const std::string& phi) {
  return guarded([&] {
    if (session.empty()) throw Error(ErrorKind::kInvalidArgument, "missing 'session'");
    const nef::Viewpoint v{parse_angle(theta, "theta"), parse_angle(phi, "phi")};
    const auto s = sessions_.get(session);
    if (!s) return error_response(404, "not_found", "unknown or expired session '" + session + "'");
    const auto samples = model_.decode_view(s->field, v);
    return Response{200, json{{"samples", samples}, {"demarcations", demarcations_of(s->field)}}.dump()};
  });
}

Response Service::synthesize(const std::string& body) {
  return guarded([&] {
    if (!bank_) return error_response(503, "unavailable", "service was started without a memory bank");
    const json req = json::parse(body);
    nef::ScratchOptions opt;
    opt.label = req.value("label", std::string());
    opt.n = req.value("n", 1);
    opt.seed = req.value("seed", std::uint64_t{0});
    opt.alpha = req.value("alpha", 1.0);
    opt.beta = req.value("beta", 1.0);
    if (opt.n < 0 || opt.n > kMaxSynthesisCount) {
      throw Error(ErrorKind::kInvalidArgument, "'n' must lie in [0, " + std::to_string(kMaxSynthesisCount) + "]");
    }
    const auto viewpoints = req.contains("viewpoints") ? parse_viewpoints(req.at("viewpoints")) : twelve_leads();
    const auto cycles = nef::synthesize_scratch(model_, *bank_, viewpoints, opt);
    json out = json::array();
    for (const auto& c : cycles) {
      json views = json::array();
      for (const auto& v : c.views) {
        views.push_back({{"name", v.name},
                         {"theta", v.viewpoint.theta},
                         {"phi", v.viewpoint.phi},
                         {"samples", v.cycle.samples}});
      }
      out.push_back({{"id", c.record_id},
                     {"label", c.label ? json(*c.label) : json(nullptr)},
                     {"demarcations", c.demarcations()},
                     {"views", std::move(views)}});
    }
    return Response{200, json{{"cycles", std::move(out)}}.dump()};
  });
}

Response Service::leads() const {
  json out = json::array();
  for (const auto& lead : nef::kLeadAngleTable) {
    out.push_back({{"name", lead.name}, {"theta", lead.viewpoint.theta}, {"phi", lead.viewpoint.phi}});
  }
  return {200, json{{"leads", std::move(out)}}.dump()};
}

Response Service::healthz() const { return {200, json{{"status", "ok"}, {"model", version_}}.dump()}; }

void Service::mount(httplib::Server& server) {
  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  // Headers and body go out in separate writes; without this a keep-alive
  // client waits out the delayed ACK on every response.
  server.set_tcp_nodelay(true);
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Post("/v1/encode", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, encode(req.body));
  });
  server.Get("/v1/panorama", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, panorama(req.get_param_value("session"), req.get_param_value("theta"),
                        req.get_param_value("phi")));
  });
  server.Post("/v1/synthesize", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, synthesize(req.body));
  });
  server.Get("/v1/leads", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, leads()); });
  server.Get("/v1/healthz", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, healthz());
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      const bool missing = res.status == 404;
      res.set_content(error_response(res.status, missing ? "not_found" : "http_error",
                                     missing ? "no such endpoint" : "request failed")
                          .body,
                      "application/json");
    }
  });
}

bool serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  service.mount(server);
  return server.listen(host, port);
}

}  // namespace panoserve
