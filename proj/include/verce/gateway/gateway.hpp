#pragma once

#include <filesystem>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "verce/enactment/enactor.hpp"
#include "verce/provenance/store.hpp"
#include "verce/registry/registry.hpp"
#include "verce/seismo/catalog.hpp"

namespace httplib {
class Server;
}

namespace verce::gateway {

struct GatewayConfig {
  std::string host = "127.0.0.1";
  int port = 8765; ///< 0 picks a free port
  /// prov.log, registry/, work/ (blobs, spill) and events.jsonl live here.
  std::filesystem::path dataDir = "verce-data";
  /// Bearer token -> agent id.
  std::map<std::string, std::string> tokens;
  std::filesystem::path eventsFixture;
  std::filesystem::path stationsFixture;
  std::filesystem::path regionsFixture;
  /// Static files served under /ui; unset or missing means no /ui.
  std::filesystem::path uiDir;
  /// Prefix for URLs in download scripts; defaults to http://host:port.
  std::string publicUrl;

  /// Config document: {"listen": "host:port", "dataDir", "tokenFile",
  /// "tokens": [...], "events", "stations", "regions", "ui", "publicUrl"}.
  /// Relative paths resolve against `base`. Errors: BadConfig.
  static GatewayConfig fromJson(const Json& j, const std::filesystem::path& base = {});
  /// Reads `file` (when non-empty) then applies GATEWAY_ADDR,
  /// GATEWAY_DATA_DIR and GATEWAY_TOKENS from `env`.
  static GatewayConfig load(const std::filesystem::path& file,
                            const std::function<const char*(const char*)>& env = [](const char* k) { return std::getenv(k); });
  /// GATEWAY_ADDR is host:port; GATEWAY_TOKENS names a token file or is a
  /// comma-separated token list.
  void applyEnvironment(const std::function<const char*(const char*)>& env);
};

/// Token file: one `token [agent]` per line, `#` starts a comment.
/// Errors: BadConfig.
std::map<std::string, std::string> readTokenFile(const std::filesystem::path& p);

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string authorization; ///< raw Authorization header
  std::string body;
};

struct Response {
  int status = 200;
  std::string body;
  std::string contentType = "application/json";
};

/// Module error code -> HTTP status.
int statusForError(const std::string& code);

/// The HTTP facade. `handle` is the whole API; `start`/`listen` only put a
/// socket in front of it and add the /ui static mount.
///
/// Every POST requires `Authorization: Bearer <token>` and is rejected with
/// 401 before any state is touched. GETs never modify state.
class Gateway {
public:
  explicit Gateway(GatewayConfig config);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  Response handle(const Request& req);

  /// Binds and serves on a background thread; returns the bound port.
  /// Errors: BindFailed.
  int start();
  /// Binds and serves on the calling thread until stop().
  void listen();
  void stop();
  int port() const noexcept { return boundPort_; }

  provenance::ProvStore& prov() noexcept { return *prov_; }
  registry::Registry& registry() noexcept { return *registry_; }
  enactment::Enactor& enactor() noexcept { return *enactor_; }
  const GatewayConfig& config() const noexcept { return config_; }

private:
  Response route(const Request& req);
  std::optional<std::string> agentFor(const Request& req) const;
  std::string baseUrl() const;
  void configureServer();

  Response postRun(const Request& req, const std::string& agent);
  Response catalogEvents(const Request& req) const;
  Response catalogStations(const Request& req) const;
  Response waveforms(const Request& req) const;
  Response downloadScript(const Request& req) const;

  GatewayConfig config_;
  std::unique_ptr<provenance::ProvStore> prov_;
  std::unique_ptr<registry::Registry> registry_;
  std::unique_ptr<enactment::Enactor> enactor_;
  std::vector<seismo::EventRecord> events_;
  std::vector<seismo::StationMeta> stations_;
  std::map<std::string, seismo::BBox> regions_;
  std::unique_ptr<httplib::Server> server_;
  std::thread serverThread_;
  int boundPort_ = 0;
};

/// Text of the bulk-download script for `entities`: a fixed header, then one
/// `fetch '<url>' <digest> '<destination>'` line per entity.
std::string downloadScriptText(const std::vector<provenance::ProvEntity>& entities, const std::string& baseUrl);

/// Parses "a,b,c,d" into a box (minLat,maxLat,minLon,maxLon) and "lo,hi"
/// into an interval. Errors: MalformedBBox / MalformedRange.
seismo::BBox parseBBox(const std::string& s);
seismo::Interval parseInterval(const std::string& s, const char* what);

} // namespace verce::gateway
