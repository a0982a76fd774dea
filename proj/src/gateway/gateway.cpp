#include "verce/gateway/gateway.hpp"

#include <httplib.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "verce/dataflow/graph_io.hpp"
#include "verce/hash.hpp"
#include "verce/provenance/prov_document.hpp"
#include "verce/seismo/ingest.hpp"

namespace verce::gateway {

namespace fs = std::filesystem;
using enactment::BackendKind;

namespace {

Error badConfig(const std::string& msg) { return Error("BadConfig", msg); }

std::pair<std::string, int> parseListen(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw badConfig("listen address must be host:port, got '" + s + "'");
  int port = -1;
  const std::string p = s.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), port);
  if (ec != std::errc() || ptr != p.data() + p.size() || port < 0 || port > 65535)
    throw badConfig("bad port in listen address '" + s + "'");
  return {colon == 0 ? std::string("127.0.0.1") : s.substr(0, colon), port};
}

fs::path under(const fs::path& base, const std::string& p) {
  fs::path q(p);
  return q.is_relative() && !base.empty() ? base / q : q;
}

/// Agents named after a token would leak it into provenance records.
std::string defaultAgent(const std::string& token) { return "agent-" + sha256Hex(token).substr(0, 8); }

double parseNumber(const std::string& s, const char* what, const char* code) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw Error(code, std::string(what) + ": '" + s + "' is not a number");
  return v;
}

std::vector<std::string> splitComma(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!s.empty() && s.back() == ',') out.emplace_back();
  return out;
}

Response json(int status, const Json& body) { return {status, canonicalDump(body), "application/json"}; }

Response errorResponse(const std::string& code, const std::string& message) {
  return json(statusForError(code), Json{{"code", code}, {"message", message}});
}

Json parseBody(const Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw Error("BadRequest", std::string("request body is not JSON: ") + e.what());
  }
}

std::optional<std::string> param(const Request& req, const std::string& key) {
  auto it = req.query.find(key);
  if (it == req.query.end()) return std::nullopt;
  return it->second;
}

/// Registry routes take the workspace as `ws` or `workspace`.
std::string workspaceParam(const Request& req) {
  if (auto v = param(req, "ws")) return *v;
  return param(req, "workspace").value_or("root");
}

std::string requireParam(const Request& req, const std::string& key) {
  auto v = param(req, key);
  if (!v || v->empty()) throw Error("BadParams", "missing query parameter '" + key + "'");
  return *v;
}

std::string requireString(const Json& body, const char* key) {
  if (!body.is_object() || !body.contains(key) || !body[key].is_string())
    throw Error("BadParams", std::string("body needs string field '") + key + "'");
  return body[key].get<std::string>();
}

provenance::Criteria criteriaParam(const Request& req) {
  auto text = param(req, "criteria");
  if (!text || text->empty()) return {};
  Json j;
  try {
    j = Json::parse(*text);
  } catch (const Json::parse_error&) {
    throw Error("MalformedCriteria", "criteria parameter is not JSON");
  }
  return provenance::Criteria::fromJson(j);
}

std::string shellQuote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

} // namespace

std::map<std::string, std::string> readTokenFile(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw badConfig("cannot read token file " + p.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string token, agent, extra;
    if (!(ls >> token)) continue;
    ls >> agent;
    if (ls >> extra) throw badConfig("token file line has more than two fields: " + line);
    out[token] = agent.empty() ? defaultAgent(token) : agent;
  }
  return out;
}

GatewayConfig GatewayConfig::fromJson(const Json& j, const fs::path& base) {
  if (!j.is_object()) throw badConfig("gateway config must be an object");
  GatewayConfig c;
  auto str = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key)) return std::nullopt;
    if (!j[key].is_string()) throw badConfig(std::string("'") + key + "' must be a string");
    return j[key].get<std::string>();
  };
  if (auto v = str("listen")) std::tie(c.host, c.port) = parseListen(*v);
  if (auto v = str("dataDir")) c.dataDir = under(base, *v);
  if (auto v = str("tokenFile")) c.tokens = readTokenFile(under(base, *v));
  if (j.contains("tokens")) {
    if (!j["tokens"].is_array()) throw badConfig("'tokens' must be a list");
    for (const auto& t : j["tokens"]) {
      if (t.is_string()) {
        c.tokens[t.get<std::string>()] = defaultAgent(t.get<std::string>());
      } else if (t.is_object() && t.contains("token") && t["token"].is_string()) {
        const auto tok = t["token"].get<std::string>();
        c.tokens[tok] = t.contains("agent") && t["agent"].is_string() ? t["agent"].get<std::string>() : defaultAgent(tok);
      } else {
        throw badConfig("token entries are strings or {token, agent}");
      }
    }
  }
  if (auto v = str("events")) c.eventsFixture = under(base, *v);
  if (auto v = str("stations")) c.stationsFixture = under(base, *v);
  if (auto v = str("regions")) c.regionsFixture = under(base, *v);
  if (auto v = str("ui")) c.uiDir = under(base, *v);
  if (auto v = str("publicUrl")) c.publicUrl = *v;
  return c;
}

GatewayConfig GatewayConfig::load(const fs::path& file, const std::function<const char*(const char*)>& env) {
  GatewayConfig c;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw badConfig("cannot read config " + file.string());
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw badConfig(std::string("config is not JSON: ") + e.what());
    }
    c = fromJson(j, file.parent_path());
  }
  c.applyEnvironment(env);
  return c;
}

void GatewayConfig::applyEnvironment(const std::function<const char*(const char*)>& env) {
  if (const char* v = env("GATEWAY_ADDR"); v && *v) std::tie(host, port) = parseListen(v);
  if (const char* v = env("GATEWAY_DATA_DIR"); v && *v) dataDir = v;
  if (const char* v = env("GATEWAY_TOKENS"); v && *v) {
    std::error_code ec;
    if (fs::is_regular_file(v, ec)) {
      tokens = readTokenFile(v);
    } else {
      tokens.clear();
      for (const auto& t : splitComma(v))
        if (!t.empty()) tokens[t] = defaultAgent(t);
    }
  }
}

int statusForError(const std::string& code) {
  static const std::map<std::string, int> table = {
      {"BadRequest", 400},      {"Unauthorized", 401},   {"NotFound", 404},        {"UnknownRun", 404},
      {"UnknownEntity", 404},   {"UnknownStation", 404}, {"UnknownWorkspace", 404}, {"UnknownRegion", 404},
      {"UnknownBlob", 404},     {"NoRoute", 404},        {"MethodNotAllowed", 405}, {"AlreadyTerminal", 409},
      {"DuplicateName", 409},   {"DuplicateRun", 409},   {"OutsideHoldings", 416}, {"Internal", 500},
  };
  auto it = table.find(code);
  // Every other module error is a request the modules refused as invalid.
  return it == table.end() ? 422 : it->second;
}

std::string downloadScriptText(const std::vector<provenance::ProvEntity>& entities, const std::string& baseUrl) {
  std::ostringstream out;
  out << "#!/bin/sh\n"
      << "# verce bulk download, " << entities.size() << " item(s): fetch <url> <sha256> <destination>\n"
      << "set -e\n"
      << "fetch() { curl -fsS -o \"$3\" \"$1\" && echo \"$2  $3\" | sha256sum -c --quiet -; }\n";
  for (const auto& e : entities) {
    out << "fetch " << shellQuote(baseUrl + "/blobs/" + e.payloadDigest) << ' ' << e.payloadDigest << ' '
        << shellQuote(e.entityId + ".json") << '\n';
  }
  return out.str();
}

seismo::BBox parseBBox(const std::string& s) {
  const auto parts = splitComma(s);
  if (parts.size() != 4) throw Error("MalformedBBox", "bbox is minLat,maxLat,minLon,maxLon; got '" + s + "'");
  seismo::BBox b;
  b.minLat = parseNumber(parts[0], "bbox", "MalformedBBox");
  b.maxLat = parseNumber(parts[1], "bbox", "MalformedBBox");
  b.minLon = parseNumber(parts[2], "bbox", "MalformedBBox");
  b.maxLon = parseNumber(parts[3], "bbox", "MalformedBBox");
  b.validate();
  return b;
}

seismo::Interval parseInterval(const std::string& s, const char* what) {
  const auto parts = splitComma(s);
  if (parts.size() != 2) throw Error("MalformedRange", std::string(what) + " is lo,hi; got '" + s + "'");
  seismo::Interval iv;
  iv.lo = parseNumber(parts[0], what, "MalformedRange");
  iv.hi = parseNumber(parts[1], what, "MalformedRange");
  if (iv.lo > iv.hi) throw Error("MalformedRange", std::string(what) + " has lo > hi");
  return iv;
}

Gateway::Gateway(GatewayConfig config) : config_(std::move(config)) {
  fs::create_directories(config_.dataDir);
  prov_ = std::make_unique<provenance::ProvStore>(config_.dataDir / "prov.log");
  registry::RegistryConfig rc;
  rc.dir = config_.dataDir / "registry";
  registry_ = std::make_unique<registry::Registry>(rc);
  if (registry_->workspaces().empty()) registry_->ensureWorkspacePath("root");
  enactment::EnactorConfig ec;
  ec.provStore = prov_.get();
  ec.workDir = config_.dataDir / "work";
  ec.eventMirror = config_.dataDir / "events.jsonl";
  enactor_ = std::make_unique<enactment::Enactor>(ec);
  if (!config_.eventsFixture.empty()) events_ = seismo::loadEvents(config_.eventsFixture);
  if (!config_.stationsFixture.empty()) stations_ = seismo::loadStations(config_.stationsFixture);
  if (!config_.regionsFixture.empty()) regions_ = seismo::loadRegions(config_.regionsFixture);
}

Gateway::~Gateway() { stop(); }

std::optional<std::string> Gateway::agentFor(const Request& req) const {
  static const std::string prefix = "Bearer ";
  if (req.authorization.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
  auto it = config_.tokens.find(req.authorization.substr(prefix.size()));
  if (it == config_.tokens.end()) return std::nullopt;
  return it->second;
}

std::string Gateway::baseUrl() const {
  if (!config_.publicUrl.empty()) return config_.publicUrl;
  return "http://" + config_.host + ":" + std::to_string(boundPort_ ? boundPort_ : config_.port);
}

Response Gateway::handle(const Request& req) {
  try {
    return route(req);
  } catch (const Error& e) {
    return errorResponse(e.code(), e.what());
  } catch (const std::exception& e) {
    return errorResponse("Internal", e.what());
  }
}

Response Gateway::route(const Request& req) {
  static const std::regex runRe("^/runs/([^/]+)$"), eventsRe("^/runs/([^/]+)/events$"), cancelRe("^/runs/([^/]+)/cancel$"),
      entityRe("^/prov/entities/([^/]+)$"), lineageRe("^/prov/lineage/([^/]+)$"), ancestorRe("^/prov/ancestor/([^/]+)$"),
      exportRe("^/prov/export/([^/]+)$"), provRunRe("^/prov/runs/([^/]+)$"), blobRe("^/blobs/([0-9a-f]{64})$");
  const std::string& p = req.path;
  std::smatch m;

  if (req.method == "POST") {
    auto agent = agentFor(req);
    if (!agent) throw Error("Unauthorized", "POST requests need a valid bearer token");
    if (p == "/runs") return postRun(req, *agent);
    if (std::regex_match(p, m, cancelRe)) return json(200, enactor_->cancelRun(m[1]).toJson());
    if (p == "/ingest") {
      const Json body = parseBody(req);
      const auto format = seismo::ingestFormatFromName(body.value("format", std::string("traceDoc")));
      auto report = seismo::ingestDirectory(requireString(body, "path"), format, enactor_->blobStore(), *prov_, *agent);
      return json(200, report.toJson());
    }
    if (p == "/downloads/script") return downloadScript(req);
    if (p == "/registry/workspaces") {
      const Json body = parseBody(req);
      std::optional<std::string> parent;
      if (body.contains("parent")) parent = requireString(body, "parent");
      return json(201, registry_->createWorkspace(requireString(body, "name"), parent).toJson());
    }
    if (p == "/registry/components") {
      const Json body = parseBody(req);
      std::map<std::string, std::string> annotations;
      if (body.contains("annotations")) {
        if (!body["annotations"].is_object()) throw Error("BadParams", "annotations must be an object of strings");
        for (const auto& [k, v] : body["annotations"].items()) {
          if (!v.is_string()) throw Error("BadParams", "annotation '" + k + "' is not a string");
          annotations[k] = v.get<std::string>();
        }
      }
      if (!body.contains("body")) throw Error("BadParams", "body needs field 'body'");
      auto rec = registry_->registerComponent(body.value("workspace", std::string("root")),
                                              registry::kindFromName(requireString(body, "kind")),
                                              requireString(body, "name"), body["body"], annotations);
      return json(201, rec.toJson());
    }
    throw Error("NoRoute", "no POST route for " + p);
  }
  if (req.method != "GET") throw Error("MethodNotAllowed", req.method + " is not supported");

  if (p == "/health") return json(200, Json{{"status", "ok"}});
  if (p == "/runs") {
    Json out = Json::array();
    for (const auto& id : enactor_->runIds()) out.push_back(enactor_->record(id).toJson());
    return json(200, out);
  }
  if (std::regex_match(p, m, runRe)) return json(200, enactor_->record(m[1]).toJson());
  if (std::regex_match(p, m, eventsRe)) {
    const auto sinceText = param(req, "since").value_or("0");
    std::uint64_t since = 0;
    auto [ptr, ec] = std::from_chars(sinceText.data(), sinceText.data() + sinceText.size(), since);
    if (ec != std::errc() || ptr != sinceText.data() + sinceText.size())
      throw Error("BadParams", "since must be a non-negative integer");
    Json events = Json::array();
    std::uint64_t last = since;
    for (const auto& e : enactor_->eventsSince(m[1], since)) {
      events.push_back(e.toJson());
      last = e.seq;
    }
    const auto rec = enactor_->record(m[1]);
    return json(200, Json{{"runId", m[1].str()},
                          {"events", events},
                          {"lastSeq", last},
                          {"status", std::string(enactment::statusName(rec.status))}});
  }

  if (p == "/catalog/events") return catalogEvents(req);
  if (p == "/catalog/stations") return catalogStations(req);
  if (p == "/catalog/regions") {
    Json out = Json::object();
    for (const auto& [name, box] : regions_) out[name] = box.toJson();
    return json(200, out);
  }
  if (p == "/waveforms") return waveforms(req);

  if (p == "/prov/runs") return json(200, provenance::toJsonList(prov_->queryRuns(criteriaParam(req))));
  if (std::regex_match(p, m, provRunRe)) {
    auto r = prov_->run(m[1]);
    if (!r) throw Error("UnknownRun", "no run " + m[1].str());
    return json(200, provenance::toJson(*r));
  }
  if (p == "/prov/entities") return json(200, provenance::toJsonList(prov_->queryEntities(criteriaParam(req))));
  if (std::regex_match(p, m, entityRe)) {
    auto e = prov_->entity(m[1]);
    if (!e) throw Error("UnknownEntity", "no entity " + m[1].str());
    return json(200, provenance::toJson(*e));
  }
  if (std::regex_match(p, m, lineageRe)) {
    const auto dirText = param(req, "direction").value_or("ancestors");
    provenance::LineageDirection dir;
    if (dirText == "ancestors") dir = provenance::LineageDirection::Ancestors;
    else if (dirText == "descendants") dir = provenance::LineageDirection::Descendants;
    else throw Error("BadParams", "direction is ancestors or descendants");
    const int depth = static_cast<int>(parseNumber(param(req, "depth").value_or("1"), "depth", "BadParams"));
    return json(200, prov_->traceLineage(m[1], dir, depth).toJson());
  }
  if (std::regex_match(p, m, ancestorRe)) return json(200, prov_->hasAncestorMatching(m[1], criteriaParam(req)).toJson());
  if (std::regex_match(p, m, exportRe)) return json(200, provenance::exportProvDocument(*prov_, m[1]));
  if (std::regex_match(p, m, blobRe)) {
    auto payload = enactor_->blobStore().getPayload(m[1]);
    if (!payload) throw Error("UnknownBlob", "no blob " + m[1].str());
    return json(200, dataflow::payloadToJson(*payload));
  }

  if (p == "/registry/workspaces") {
    Json out = Json::array();
    for (const auto& w : registry_->workspaces()) out.push_back(w.toJson());
    return json(200, out);
  }
  if (p == "/registry/components") {
    Json out = Json::array();
    for (const auto& h : registry_->searchComponents(workspaceParam(req), param(req, "q").value_or("")))
      out.push_back(h.toJson());
    return json(200, out);
  }
  if (p == "/registry/resolve") {
    std::optional<int> version;
    if (auto v = param(req, "version")) version = static_cast<int>(parseNumber(*v, "version", "BadParams"));
    auto rec = registry_->resolveComponent(workspaceParam(req), requireParam(req, "name"), version);
    return json(200, rec.toJson());
  }
  throw Error("NoRoute", "no GET route for " + p);
}

Response Gateway::postRun(const Request& req, const std::string& agent) {
  const Json body = parseBody(req);
  if (!body.is_object() || !body.contains("graphRef")) throw Error("BadParams", "body needs 'graphRef'");
  const std::string ws = body.value("workspace", std::string("root"));
  const Json& ref = body["graphRef"];

  std::optional<dataflow::WorkflowGraph> graph;
  std::string refText;
  if (ref.is_string()) {
    refText = ref.get<std::string>();
    graph = registry_->loadGraph(ws, refText);
  } else if (ref.is_object()) {
    try {
      graph = dataflow::graphFromJson(ref, registry_->peResolver(ws));
    } catch (const Error& e) {
      // An inline document that does not build is the caller's document
      // being invalid, whatever the underlying code.
      throw Error(e.code() == "NotFound" ? "InvalidDescriptor" : e.code(), e.what());
    }
    refText = "inline:" + dataflow::graphContentHash(*graph);
  } else {
    throw Error("BadParams", "graphRef is a registry ref or a graph document");
  }

  const auto backend = enactment::backendFromName(body.value("backend", std::string("sequential")));
  enactment::RunOptions opts;
  opts.provenance = body.value("provenance", true);
  opts.workers = body.value("workers", 2);
  opts.retainPayloads = true;
  opts.agentId = agent;
  opts.metadata = body.value("parameters", Json::object());
  opts.metadata["graphRef"] = refText;
  const auto feeds = enactment::feedsFromJson(body.value("feeds", Json::object()));
  const auto runId = enactor_->submit(std::move(*graph), backend, std::nullopt, feeds, opts);
  return json(202, Json{{"runId", runId}});
}

Response Gateway::catalogEvents(const Request& req) const {
  seismo::RegionQuery q;
  if (auto r = param(req, "region")) {
    auto it = regions_.find(*r);
    if (it == regions_.end()) throw Error("UnknownRegion", "no region named " + *r);
    q.bbox = it->second;
  }
  if (auto b = param(req, "bbox")) q.bbox = parseBBox(*b);
  if (auto t = param(req, "time")) q.timeRange = parseInterval(*t, "time");
  if (auto mg = param(req, "mag")) q.magnitudeRange = parseInterval(*mg, "mag");
  Json out = Json::array();
  for (const auto& e : seismo::filterEvents(events_, q)) out.push_back(e.toJson());
  return json(200, out);
}

Response Gateway::catalogStations(const Request& req) const {
  seismo::BBox box;
  if (auto r = param(req, "region")) {
    auto it = regions_.find(*r);
    if (it == regions_.end()) throw Error("UnknownRegion", "no region named " + *r);
    box = it->second;
  }
  if (auto b = param(req, "bbox")) box = parseBBox(*b);
  Json out = Json::array();
  for (const auto& s : seismo::filterStations(stations_, box)) out.push_back(s.toJson());
  return json(200, out);
}

Response Gateway::waveforms(const Request& req) const {
  const auto sta = requireParam(req, "sta");
  const double start = parseNumber(requireParam(req, "start"), "start", "BadParams");
  const double end = parseNumber(requireParam(req, "end"), "end", "BadParams");
  Json out = Json::array();
  for (const auto& t : seismo::queryWaveforms(*prov_, enactor_->blobStore(), sta, start, end)) out.push_back(t.toJson());
  return json(200, out);
}

Response Gateway::downloadScript(const Request& req) const {
  const Json body = parseBody(req);
  const auto criteria = provenance::Criteria::fromJson(body.value("criteria", Json::object()));
  return {200, downloadScriptText(prov_->queryEntities(criteria), baseUrl()), "text/x-shellscript"};
}

void Gateway::configureServer() {
  server_ = std::make_unique<httplib::Server>();
  std::error_code ec;
  if (!config_.uiDir.empty() && fs::is_directory(config_.uiDir, ec)) {
    server_->set_mount_point("/ui", config_.uiDir.string());
  }
  auto adapt = [this](const httplib::Request& hreq, httplib::Response& hres) {
    Request req;
    req.method = hreq.method;
    req.path = hreq.path;
    for (const auto& [k, v] : hreq.params) req.query[k] = v;
    req.authorization = hreq.get_header_value("Authorization");
    req.body = hreq.body;
    const Response res = handle(req);
    hres.status = res.status;
    hres.set_content(res.body, res.contentType);
  };
  server_->Get(".*", adapt);
  server_->Post(".*", adapt);
  server_->Put(".*", adapt);
  server_->Delete(".*", adapt);
}

int Gateway::start() {
  configureServer();
  boundPort_ = config_.port == 0 ? server_->bind_to_any_port(config_.host)
                                 : (server_->bind_to_port(config_.host, config_.port) ? config_.port : -1);
  if (boundPort_ < 0) {
    boundPort_ = 0;
    throw Error("BindFailed", "cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  serverThread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return boundPort_;
}

void Gateway::listen() {
  configureServer();
  boundPort_ = config_.port == 0 ? server_->bind_to_any_port(config_.host)
                                 : (server_->bind_to_port(config_.host, config_.port) ? config_.port : -1);
  if (boundPort_ < 0) {
    boundPort_ = 0;
    throw Error("BindFailed", "cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  server_->listen_after_bind();
}

void Gateway::stop() {
  if (server_) server_->stop();
  if (serverThread_.joinable()) serverThread_.join();
}

} // namespace verce::gateway
