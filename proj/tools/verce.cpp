// verce: command-line front end. Each command is a thin shim over the
// library; the data directory has the same layout the gateway uses.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include "verce/dataflow/graph_io.hpp"
#include "verce/dataflow/library.hpp"
#include "verce/enactment/enactor.hpp"
#include "verce/gateway/gateway.hpp"
#include "verce/provenance/prov_document.hpp"
#include "verce/registry/registry.hpp"
#include "verce/seismo/demo.hpp"
#include "verce/seismo/ingest.hpp"

using namespace verce;
namespace fs = std::filesystem;

namespace {

struct Context {
  fs::path dataDir = "verce-data";
  bool json = false;
  std::string gatewayUrl;
  std::string token;
};

/// Integral values keep a trailing ".0" so they read as numbers, not counts.
std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  std::string s = buf;
  if (s.find_first_of(".eni") == std::string::npos) s += ".0";
  return s;
}

Json readJsonFile(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("PathUnreadable", "cannot read " + p.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error("MalformedDocument", p.string() + ": " + e.what());
  }
}

void writeJsonFile(const fs::path& p, const Json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error("PathUnwritable", "cannot write " + p.string());
  out << j.dump(2) << '\n';
}

fs::path provPath(const Context& ctx) { return ctx.dataDir / "prov.log"; }

std::unique_ptr<provenance::ProvStore> openExistingProv(const Context& ctx) {
  if (!fs::exists(provPath(ctx))) throw Error("PathUnreadable", "no provenance store at " + provPath(ctx).string());
  return std::make_unique<provenance::ProvStore>(provPath(ctx));
}

std::unique_ptr<registry::Registry> openRegistry(const Context& ctx) {
  registry::RegistryConfig rc;
  rc.dir = ctx.dataDir / "registry";
  auto reg = std::make_unique<registry::Registry>(rc);
  if (reg->workspaces().empty()) reg->ensureWorkspacePath("root");
  return reg;
}

/// Registry PEs when the data directory has a registry, else the standard
/// library. Does not create anything.
dataflow::PeResolver resolverFor(const Context& ctx, const std::string& ws, std::unique_ptr<registry::Registry>& keep) {
  if (fs::exists(ctx.dataDir / "registry")) {
    registry::RegistryConfig rc;
    rc.dir = ctx.dataDir / "registry";
    keep = std::make_unique<registry::Registry>(rc);
    return keep->peResolver(ws);
  }
  return dataflow::standardLibrary().resolver();
}

enactment::Enactor makeEnactor(const Context& ctx, provenance::ProvStore* prov) {
  enactment::EnactorConfig ec;
  ec.provStore = prov;
  ec.workDir = ctx.dataDir / "work";
  ec.eventMirror = ctx.dataDir / "events.jsonl";
  return enactment::Enactor(ec);
}

Json outputsJson(const enactment::RunRecord& rec) {
  Json out = Json::object();
  for (const auto& [port, units] : rec.outputs) {
    Json list = Json::array();
    for (const auto& u : units) list.push_back({{"payload", dataflow::payloadToJson(u.payload)}, {"metadata", u.metadata}});
    out[port] = std::move(list);
  }
  return out;
}

void printRecord(const Context& ctx, const enactment::RunRecord& rec, const fs::path& outputsFile) {
  if (ctx.json) {
    Json j = rec.toJson();
    j["outputsFile"] = outputsFile.string();
    std::cout << canonicalDump(j) << '\n';
    return;
  }
  std::cout << "run " << rec.runId << ' ' << enactment::statusName(rec.status) << " (" << enactment::backendName(rec.backend)
            << ", " << rec.unitsProcessed << " units processed)\n";
  for (const auto& [port, units] : rec.outputs) std::cout << "  " << port << ": " << units.size() << " units\n";
  for (const auto& e : rec.errorLog) std::cout << "  error " << e.code << " in " << e.peInstance << ": " << e.message << '\n';
  std::cout << "outputs: " << outputsFile.string() << '\n';
}

/// A run that did not complete is a runtime failure of the command.
void requireCompleted(const enactment::RunRecord& rec) {
  if (rec.status == enactment::RunStatus::Completed) return;
  const std::string code = rec.errorLog.empty() ? "Run" + std::string(enactment::statusName(rec.status)) : rec.errorLog.front().code;
  const std::string msg = rec.errorLog.empty() ? "run " + rec.runId + " ended " + std::string(enactment::statusName(rec.status))
                                               : rec.errorLog.front().message;
  throw Error(code.empty() ? "RunFailed" : code, msg);
}

struct RunArgs {
  std::string graph;
  std::string backend = "sequential";
  int workers = 2;
  double maxLoad = 0.0;
  std::string provenance;
  bool provenanceFlag = false;
  bool spill = false;
  std::string feeds;
  std::string workspace = "root";
  std::string runId;
};

int remoteRun(const Context& ctx, const RunArgs& a) {
  httplib::Client cli(ctx.gatewayUrl);
  Json body = {{"graphRef", readJsonFile(a.graph)}, {"backend", a.backend}, {"workers", a.workers},
               {"provenance", true}, {"workspace", a.workspace}};
  if (!a.feeds.empty()) body["feeds"] = readJsonFile(a.feeds);
  const httplib::Headers auth = {{"Authorization", "Bearer " + ctx.token}};
  auto res = cli.Post("/runs", auth, body.dump(), "application/json");
  if (!res) throw Error("GatewayUnreachable", "no response from " + ctx.gatewayUrl);
  const Json reply = Json::parse(res->body, nullptr, false);
  if (res->status != 202) throw Error(reply.value("code", std::string("GatewayError")), reply.value("message", res->body));
  const auto id = reply.at("runId").get<std::string>();
  std::uint64_t since = 0;
  for (;;) {
    auto ev = cli.Get(("/runs/" + id + "/events?since=" + std::to_string(since)).c_str());
    if (!ev || ev->status != 200) throw Error("GatewayUnreachable", "lost the event feed of " + id);
    const Json page = Json::parse(ev->body);
    for (const auto& e : page["events"])
      if (!ctx.json) std::cout << e["seq"] << ' ' << e["kind"].get<std::string>() << ' ' << canonicalDump(e["detail"]) << '\n';
    since = page["lastSeq"].get<std::uint64_t>();
    const auto status = page["status"].get<std::string>();
    if (enactment::isTerminal(enactment::statusFromName(status))) {
      auto rec = cli.Get(("/runs/" + id).c_str());
      if (ctx.json && rec) std::cout << rec->body << '\n';
      if (status != "completed") throw Error("Run" + status, "run " + id + " ended " + status);
      return 0;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
}

int cmdRun(const Context& ctx, const RunArgs& a) {
  if (!ctx.gatewayUrl.empty()) return remoteRun(ctx, a);
  std::unique_ptr<registry::Registry> reg;
  auto graph = dataflow::loadGraphFile(a.graph, resolverFor(ctx, a.workspace, reg));
  const auto feeds = a.feeds.empty() ? enactment::InputFeeds{} : enactment::feedsFromJson(readJsonFile(a.feeds));

  std::unique_ptr<provenance::ProvStore> prov;
  enactment::RunOptions opts;
  if (a.provenanceFlag) {
    const fs::path path = a.provenance.empty() ? provPath(ctx) : fs::path(a.provenance);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    prov = std::make_unique<provenance::ProvStore>(path);
    opts.provenance = true;
    opts.retainPayloads = true;
  }
  opts.spill = a.spill;
  opts.workers = a.workers;
  opts.maxLoad = a.maxLoad;
  opts.runId = a.runId;
  opts.agentId = "cli";
  opts.metadata["graphRef"] = fs::path(a.graph).filename().string();
  auto enactor = makeEnactor(ctx, prov.get());
  const auto rec = enactor.executeGraph(graph, enactment::backendFromName(a.backend), std::nullopt, feeds, opts);
  const fs::path outFile = ctx.dataDir / "runs" / (rec.runId + ".outputs.json");
  writeJsonFile(outFile, outputsJson(rec));
  printRecord(ctx, rec, outFile);
  requireCompleted(rec);
  return 0;
}

int cmdValidate(const Context& ctx, const std::string& graphPath, const std::string& ws) {
  std::unique_ptr<registry::Registry> reg;
  const auto g = dataflow::loadGraphFile(graphPath, resolverFor(ctx, ws, reg));
  const auto hash = dataflow::graphContentHash(g);
  if (ctx.json) {
    std::cout << canonicalDump({{"valid", true}, {"contentHash", hash}, {"nodes", g.size()}, {"edges", g.edges().size()}})
              << '\n';
  } else {
    std::cout << "valid: " << g.size() << " nodes, " << g.edges().size() << " edges, content hash " << hash << '\n';
  }
  return 0;
}

int cmdProvQuery(const Context& ctx, const std::string& criteriaText, bool runs) {
  const Json critJson = criteriaText.empty() ? Json::object() : Json::parse(criteriaText, nullptr, false);
  if (critJson.is_discarded()) throw Error("MalformedCriteria", "criteria is not JSON");
  if (!ctx.gatewayUrl.empty()) {
    httplib::Client cli(ctx.gatewayUrl);
    const std::string path = std::string(runs ? "/prov/runs" : "/prov/entities") + "?criteria=" +
                             httplib::detail::encode_query_param(critJson.dump());
    auto res = cli.Get(path.c_str());
    if (!res) throw Error("GatewayUnreachable", "no response from " + ctx.gatewayUrl);
    if (res->status != 200) {
      const Json err = Json::parse(res->body, nullptr, false);
      throw Error(err.value("code", std::string("GatewayError")), err.value("message", res->body));
    }
    std::cout << res->body << '\n';
    return 0;
  }
  const auto criteria = provenance::Criteria::fromJson(critJson);
  auto prov = openExistingProv(ctx);
  if (runs) {
    const auto found = prov->queryRuns(criteria);
    if (ctx.json) {
      std::cout << canonicalDump(provenance::toJsonList(found)) << '\n';
    } else {
      for (const auto& r : found) std::cout << r.runId << ' ' << r.status << ' ' << r.graphRef << ' ' << r.agentId << '\n';
    }
    return 0;
  }
  const auto found = prov->queryEntities(criteria);
  if (ctx.json) {
    std::cout << canonicalDump(provenance::toJsonList(found)) << '\n';
  } else {
    for (const auto& e : found) std::cout << e.entityId << ' ' << e.payloadDigest.substr(0, 12) << ' ' << canonicalDump(e.metadata) << '\n';
  }
  return 0;
}

int cmdProvLineage(const Context& ctx, const std::string& entity, const std::string& direction, int depth) {
  auto prov = openExistingProv(ctx);
  provenance::LineageDirection dir;
  if (direction == "ancestors") dir = provenance::LineageDirection::Ancestors;
  else if (direction == "descendants") dir = provenance::LineageDirection::Descendants;
  else throw Error("BadParams", "direction is ancestors or descendants");
  const auto slice = prov->traceLineage(entity, dir, depth);
  if (ctx.json) {
    std::cout << canonicalDump(slice.toJson()) << '\n';
    return 0;
  }
  for (const auto& e : slice.entities) std::cout << e.entityId << ' ' << canonicalDump(e.metadata) << '\n';
  for (const auto& d : slice.edges) std::cout << d.derived << " <- " << d.source << " (" << d.activityId << ")\n";
  if (!slice.frontier.empty()) {
    std::cout << "frontier:";
    for (const auto& f : slice.frontier) std::cout << ' ' << f;
    std::cout << '\n';
  }
  return 0;
}

int cmdProvExport(const Context& ctx, const std::string& runId, const std::string& out) {
  auto prov = openExistingProv(ctx);
  const auto doc = provenance::exportProvDocument(*prov, runId);
  if (out.empty()) {
    std::cout << canonicalDump(doc) << '\n';
  } else {
    std::ofstream f(out);
    if (!f) throw Error("PathUnwritable", "cannot write " + out);
    f << canonicalDump(doc) << '\n';
  }
  return 0;
}

int cmdRegistryAdd(const Context& ctx, const std::string& kind, const std::string& name, const std::string& file,
                   const std::string& ws, const std::vector<std::string>& annotate) {
  std::map<std::string, std::string> annotations;
  for (const auto& a : annotate) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw Error("BadParams", "annotations are key=value, got '" + a + "'");
    annotations[a.substr(0, eq)] = a.substr(eq + 1);
  }
  auto reg = openRegistry(ctx);
  const auto rec = reg->registerComponent(ws, registry::kindFromName(kind), name, readJsonFile(file), annotations);
  if (ctx.json) std::cout << canonicalDump(rec.toJson(false)) << '\n';
  else std::cout << rec.ref() << " registered in " << ws << '\n';
  return 0;
}

int cmdRegistryResolve(const Context& ctx, const std::string& name, std::optional<int> version, const std::string& ws) {
  auto reg = openRegistry(ctx);
  const auto rec = reg->resolveComponent(ws, name, version);
  if (ctx.json) std::cout << canonicalDump(rec.toJson()) << '\n';
  else std::cout << rec.ref() << " from " << rec.workspaceId << '\n';
  return 0;
}

int cmdGatewayServe(const Context& ctx, const std::string& configFile, const std::string& listen, bool dataDirGiven,
                    const std::string& events, const std::string& stations, const std::string& regions, const std::string& ui) {
  auto cfg = gateway::GatewayConfig::load(configFile);
  if (!listen.empty()) cfg.applyEnvironment([&](const char* k) { return std::string(k) == "GATEWAY_ADDR" ? listen.c_str() : nullptr; });
  if (dataDirGiven) cfg.dataDir = ctx.dataDir;
  if (!events.empty()) cfg.eventsFixture = events;
  if (!stations.empty()) cfg.stationsFixture = stations;
  if (!regions.empty()) cfg.regionsFixture = regions;
  if (!ui.empty()) cfg.uiDir = ui;
  if (cfg.tokens.empty()) std::cerr << "warning: no tokens configured; every POST will be rejected\n";

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  gateway::Gateway gw(cfg);
  const int port = gw.start();
  std::cout << "listening on http://" << cfg.host << ':' << port << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  gw.stop();
  return 0;
}

int cmdIngest(const Context& ctx, const std::string& dir, const std::string& format) {
  fs::create_directories(ctx.dataDir);
  provenance::ProvStore prov(provPath(ctx));
  auto enactor = makeEnactor(ctx, &prov);
  const auto report = seismo::ingestDirectory(dir, seismo::ingestFormatFromName(format), enactor.blobStore(), prov, "cli");
  if (ctx.json) {
    std::cout << canonicalDump(report.toJson()) << '\n';
    return 0;
  }
  std::cout << report.cataloged.size() << " cataloged, " << report.duplicates.size() << " duplicates, "
            << report.rejected.size() << " rejected" << (report.runId.empty() ? "" : " (run " + report.runId + ")") << '\n';
  for (const auto& [f, why] : report.rejected) std::cout << "  rejected " << f << ": " << why << '\n';
  for (const auto& [f, id] : report.duplicates) std::cout << "  duplicate " << f << " of " << id << '\n';
  return 0;
}

int cmdDemoNoise(const Context& ctx, const seismo::NoiseDemoConfig& cfg, const std::string& backend, int workers) {
  fs::create_directories(ctx.dataDir);
  provenance::ProvStore prov(provPath(ctx));
  auto enactor = makeEnactor(ctx, &prov);
  enactment::RunOptions opts;
  opts.provenance = true;
  opts.workers = workers;
  opts.agentId = "cli";
  opts.metadata = {{"demo", "noise"}, {"seed", cfg.seed}, {"channels", cfg.channels}, {"windows", cfg.windows}};
  const auto result = seismo::runNoiseDemo(cfg, enactor, enactment::backendFromName(backend), opts);

  std::set<std::string> groups;
  for (const auto& a : prov.activitiesOfRun(result.record.runId))
    if (a.peName == "xcorr") groups.insert(a.peInstanceId);

  Json stacks = Json::array();
  for (const auto& s : result.stacks) stacks.push_back(s.toJson());
  const fs::path out = ctx.dataDir / "demo" / ("noise-" + result.record.runId + ".json");
  writeJsonFile(out, stacks);
  if (ctx.json) {
    std::cout << canonicalDump({{"runId", result.record.runId},
                                {"stacks", result.stacks.size()},
                                {"correlationGroups", groups.size()},
                                {"correlationActivities", result.correlationActivities},
                                {"stacksFile", out.string()}})
              << '\n';
    return 0;
  }
  std::cout << "run " << result.record.runId << " completed: " << cfg.channels << " channels, " << cfg.windows
            << " windows, seed " << cfg.seed << '\n'
            << "stacked correlations: " << result.stacks.size() << '\n'
            << "correlation activity groups: " << groups.size() << " (" << result.correlationActivities << " activities)\n"
            << "stacks: " << out.string() << '\n';
  return 0;
}

int cmdDemoMisfit(const Context& ctx, const seismo::MisfitDemoConfig& cfg) {
  const auto result = seismo::runMisfitDemo(cfg);
  const fs::path out = ctx.dataDir / "demo" / "misfit.json";
  writeJsonFile(out, result.toJson());
  if (ctx.json) {
    Json j = result.toJson();
    j["reportsFile"] = out.string();
    std::cout << canonicalDump(j) << '\n';
    return 0;
  }
  std::cout << "receiver  self-l2  l2  cc-shift\n";
  for (const auto& r : result.rows) {
    std::cout << num(r.receiver) << "  " << num(r.selfL2.value) << "  " << num(r.l2.value) << "  " << num(r.ccShift.value) << '\n';
  }
  std::cout << "reports: " << out.string() << '\n';
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"verce: streaming dataflow workflows with provenance, for seismology"};
  app.require_subcommand(1);
  Context ctx;
  if (const char* d = std::getenv("VERCE_DATA_DIR"); d && *d) ctx.dataDir = d;
  std::string dataDir = ctx.dataDir.string();
  auto* dataDirOpt = app.add_option("--data-dir", dataDir, "Provenance log, registry, blobs and run outputs");
  app.add_flag("--json", ctx.json, "Machine-readable output");
  app.add_option("--gateway", ctx.gatewayUrl, "Gateway URL; run and prov query go through it instead of local files");
  app.add_option("--token", ctx.token, "Bearer token for --gateway")->envname("VERCE_TOKEN");

  std::function<int()> action;

  std::string graphPath, workspace = "root";
  auto* validate = app.add_subcommand("validate", "Check a graph document");
  validate->add_option("graph", graphPath)->required();
  validate->add_option("--workspace", workspace);
  validate->callback([&] { action = [&] { return cmdValidate(ctx, graphPath, workspace); }; });

  RunArgs runArgs;
  auto* run = app.add_subcommand("run", "Execute a graph document");
  run->add_option("graph", runArgs.graph)->required();
  run->add_option("--backend", runArgs.backend)->check(CLI::IsMember({"sequential", "threaded", "multiprocess"}));
  run->add_option("--workers", runArgs.workers)->check(CLI::PositiveNumber);
  run->add_option("--max-load", runArgs.maxLoad)->check(CLI::NonNegativeNumber);
  auto* provOpt = run->add_option("--provenance", runArgs.provenance, "Record provenance (default log: <data-dir>/prov.log)")
                      ->expected(0, 1);
  run->add_flag("--spill", runArgs.spill);
  run->add_option("--feeds", runArgs.feeds, "Feeds document");
  run->add_option("--workspace", runArgs.workspace);
  run->add_option("--run-id", runArgs.runId);
  run->callback([&] {
    runArgs.provenanceFlag = provOpt->count() > 0;
    action = [&] { return cmdRun(ctx, runArgs); };
  });

  auto* prov = app.add_subcommand("prov", "Query the provenance store");
  prov->require_subcommand(1);
  std::string criteria, entity, direction = "ancestors", runId, exportOut;
  bool queryRuns = false;
  int depth = 1;
  auto* pq = prov->add_subcommand("query", "Entities (or runs) matching metadata criteria");
  pq->add_option("--criteria", criteria, R"(JSON, e.g. {"station":"IV.AQU","magnitude":{"min":5}})");
  pq->add_flag("--runs", queryRuns, "Query runs instead of entities");
  pq->callback([&] { action = [&] { return cmdProvQuery(ctx, criteria, queryRuns); }; });
  auto* pl = prov->add_subcommand("lineage", "Lineage slice around an entity");
  pl->add_option("entity", entity)->required();
  pl->add_option("--direction", direction)->check(CLI::IsMember({"ancestors", "descendants"}));
  pl->add_option("--depth", depth)->check(CLI::PositiveNumber);
  pl->callback([&] { action = [&] { return cmdProvLineage(ctx, entity, direction, depth); }; });
  auto* pe = prov->add_subcommand("export", "PROV document of one run");
  pe->add_option("run", runId)->required();
  pe->add_option("-o,--output", exportOut);
  pe->callback([&] { action = [&] { return cmdProvExport(ctx, runId, exportOut); }; });

  auto* reg = app.add_subcommand("registry", "Component registry");
  reg->require_subcommand(1);
  std::string kind, name, file;
  std::vector<std::string> annotate;
  std::optional<int> version;
  auto* ra = reg->add_subcommand("add", "Register a component version");
  ra->add_option("kind", kind)->required()->check(CLI::IsMember({"pe", "function", "graph"}));
  ra->add_option("name", name)->required();
  ra->add_option("file", file, "JSON body")->required();
  ra->add_option("--workspace", workspace);
  ra->add_option("--annotate", annotate, "key=value");
  ra->callback([&] { action = [&] { return cmdRegistryAdd(ctx, kind, name, file, workspace, annotate); }; });
  auto* rr = reg->add_subcommand("resolve", "Resolve a name from a workspace");
  rr->add_option("name", name)->required();
  rr->add_option("--version", version);
  rr->add_option("--workspace", workspace);
  rr->callback([&] { action = [&] { return cmdRegistryResolve(ctx, name, version, workspace); }; });

  std::string configFile, listen, events, stations, regions, ui;
  auto addServeOptions = [&](CLI::App* s) {
    s->add_option("--config", configFile, "Gateway config document");
    s->add_option("--listen", listen, "host:port");
    s->add_option("--events", events);
    s->add_option("--stations", stations);
    s->add_option("--regions", regions);
    s->add_option("--ui", ui, "Static files served under /ui");
    s->callback([&] {
      action = [&] { return cmdGatewayServe(ctx, configFile, listen, dataDirOpt->count() > 0, events, stations, regions, ui); };
    });
  };
  // The registry is served by the gateway's /registry routes.
  addServeOptions(reg->add_subcommand("serve", "Serve the registry (and the rest of the API) over HTTP"));
  auto* gw = app.add_subcommand("gateway", "HTTP gateway");
  gw->require_subcommand(1);
  addServeOptions(gw->add_subcommand("serve", "Serve the API"));

  std::string ingestDir, ingestFormat = "traceDoc";
  auto* ingest = app.add_subcommand("ingest", "Catalog a directory of waveform files");
  ingest->add_option("dir", ingestDir)->required();
  ingest->add_option("--format", ingestFormat)->check(CLI::IsMember({"traceDoc", "trc", "csv"}));
  ingest->callback([&] { action = [&] { return cmdIngest(ctx, ingestDir, ingestFormat); }; });

  auto* demo = app.add_subcommand("demo", "Seeded demonstrations");
  demo->require_subcommand(1);
  seismo::NoiseDemoConfig noise;
  std::string demoBackend = "sequential";
  int demoWorkers = 2;
  auto* dn = demo->add_subcommand("noise", "All-pairs ambient-noise correlation of synthetic channels");
  dn->add_option("--channels", noise.channels)->check(CLI::Range(2, 4096));
  dn->add_option("--windows", noise.windows)->check(CLI::Range(1, 1000));
  dn->add_option("--window-samples", noise.windowSamples)->check(CLI::Range(16, 1 << 20));
  dn->add_option("--max-lag", noise.maxLag)->check(CLI::NonNegativeNumber);
  dn->add_option("--seed", noise.seed);
  dn->add_option("--backend", demoBackend)->check(CLI::IsMember({"sequential", "threaded", "multiprocess"}));
  dn->add_option("--workers", demoWorkers)->check(CLI::PositiveNumber);
  dn->callback([&] { action = [&] { return cmdDemoNoise(ctx, noise, demoBackend, demoWorkers); }; });
  seismo::MisfitDemoConfig misfit;
  auto* dm = demo->add_subcommand("misfit", "Forward simulation, perturbed model, misfit reports");
  dm->add_option("--perturbation", misfit.perturbation, "Fractional velocity change");
  dm->add_option("--velocity", misfit.velocity);
  dm->callback([&] { action = [&] { return cmdDemoMisfit(ctx, misfit); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  ctx.dataDir = dataDir;
  if (!ctx.gatewayUrl.empty() && ctx.token.empty() && run->parsed()) {
    std::cerr << "error: --gateway runs need --token or VERCE_TOKEN\n";
    return 2;
  }
  try {
    return action();
  } catch (const Error& e) {
    if (ctx.json) std::cerr << canonicalDump({{"code", e.code()}, {"message", e.what()}}) << '\n';
    else std::cerr << "error: " << e.code() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    if (ctx.json) std::cerr << canonicalDump({{"code", "Internal"}, {"message", e.what()}}) << '\n';
    else std::cerr << "error: Internal: " << e.what() << '\n';
    return 1;
  }
}
