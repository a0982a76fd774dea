#include <gtest/gtest.h>

#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "verce/gateway/gateway.hpp"
#include "verce/provenance/prov_document.hpp"
#include "verce/seismo/trace_io.hpp"

using namespace verce;
using namespace verce::gateway;
namespace fs = std::filesystem;

namespace {

const std::string kToken = "s3cret-token";

fs::path freshDir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("verce-gw-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

GatewayConfig testConfig(const std::string& name) {
  GatewayConfig c;
  c.port = 0;
  c.dataDir = freshDir(name) / "data";
  c.tokens = {{kToken, "alice"}};
  c.eventsFixture = "fixtures/events.json";
  c.stationsFixture = "fixtures/stations.json";
  c.regionsFixture = "fixtures/regions.json";
  return c;
}

Request get(const std::string& path, std::map<std::string, std::string> query = {}) {
  return {"GET", path, std::move(query), "", ""};
}

Request post(const std::string& path, const Json& body, const std::string& auth = "Bearer " + kToken) {
  return {"POST", path, {}, auth, body.dump()};
}

Json scaleGraph(double factor = 2.0) {
  return Json::parse(R"({"edges":[],"format":"verce-wfg/1","nodes":{"S":{"params":{"factor":)" + std::to_string(factor) +
                     R"(},"pe":"scale@1"}},"sourceFeeds":{"x":[{"node":"S","port":"in"}]}})");
}

std::string runScale(Gateway& g, Json feed = Json::array({1.0, 2.0, 3.0})) {
  auto res = g.handle(post("/runs", {{"graphRef", scaleGraph()}, {"feeds", {{"x", feed}}}}));
  EXPECT_EQ(res.status, 202) << res.body;
  const auto id = Json::parse(res.body).at("runId").get<std::string>();
  g.enactor().wait(id);
  return id;
}

seismo::Trace waveform(const std::string& sta, double start, std::size_t n, double dt = 0.5) {
  seismo::Trace t;
  t.net = "IV";
  t.sta = sta;
  t.cha = "HHZ";
  t.dt = dt;
  t.startTime = start;
  for (std::size_t i = 0; i < n; ++i) t.samples.push_back(static_cast<double>(i));
  return t;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

/// Snapshot of everything a request could change.
std::string stateOf(Gateway& g) {
  return g.prov().stateDigest() + "|" + std::to_string(g.registry().componentCount()) + "|" +
         std::to_string(g.registry().workspaces().size()) + "|" + std::to_string(g.enactor().runIds().size()) + "|" +
         std::to_string(g.enactor().blobStore().filesWritten());
}

} // namespace

TEST(GatewayCatalog, RegionBoxExample) {
  Gateway g(testConfig("box"));
  auto res = g.handle(get("/catalog/events", {{"bbox", "40,45,10,20"}}));
  ASSERT_EQ(res.status, 200) << res.body;
  const auto events = Json::parse(res.body);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0]["eventId"], "C201604240000A");
  const auto stations = Json::parse(g.handle(get("/catalog/stations", {{"bbox", "42,42.5,13,14"}})).body);
  ASSERT_EQ(stations.size(), 1u);
  EXPECT_EQ(stations[0]["sta"], "AQU");
  EXPECT_EQ(Json::parse(g.handle(get("/catalog/stations", {{"region", "central-italy"}})).body).size(), 2u);
}

TEST(GatewayCatalog, RandomBoxesMatchDirectFilter) {
  Gateway g(testConfig("boxrand"));
  const auto all = seismo::loadEvents("fixtures/events.json");
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180), mag(0, 9);
  for (int trial = 0; trial < 200; ++trial) {
    double a = lat(rng), b = lat(rng), c = lon(rng), d = lon(rng), m1 = mag(rng), m2 = mag(rng);
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    if (m1 > m2) std::swap(m1, m2);
    std::ostringstream box, range;
    box.precision(17);
    range.precision(17);
    box << a << ',' << b << ',' << c << ',' << d;
    range << m1 << ',' << m2;
    const bool useMag = trial % 2 == 1;
    std::map<std::string, std::string> q = {{"bbox", box.str()}};
    if (useMag) q["mag"] = range.str();
    auto res = g.handle(get("/catalog/events", q));
    ASSERT_EQ(res.status, 200) << res.body;
    std::set<std::string> got, want;
    for (const auto& e : Json::parse(res.body)) got.insert(e["eventId"].get<std::string>());
    for (const auto& e : all) {
      const bool inBox = e.latitude >= a && e.latitude <= b && e.longitude >= c && e.longitude <= d;
      const bool inMag = !useMag || (e.magnitude >= m1 && e.magnitude <= m2);
      if (inBox && inMag) want.insert(e.eventId);
    }
    EXPECT_EQ(got, want) << box.str();
  }
}

TEST(GatewayCatalog, MalformedQueriesAre422) {
  Gateway g(testConfig("badbox"));
  EXPECT_EQ(g.handle(get("/catalog/events", {{"bbox", "45,40,10,20"}})).status, 422);
  EXPECT_EQ(g.handle(get("/catalog/events", {{"bbox", "1,2,3"}})).status, 422);
  EXPECT_EQ(g.handle(get("/catalog/events", {{"mag", "7,5"}})).status, 422);
  EXPECT_EQ(g.handle(get("/catalog/events", {{"time", "x,5"}})).status, 422);
  auto res = g.handle(get("/catalog/events", {{"region", "atlantis"}}));
  EXPECT_EQ(res.status, 404);
  EXPECT_EQ(Json::parse(res.body)["code"], "UnknownRegion");
  EXPECT_EQ(Json::parse(g.handle(get("/catalog/regions")).body).size(), 6u);
}

TEST(GatewayRuns, SubmitPollAndComplete) {
  Gateway g(testConfig("runs"));
  const auto id = runScale(g);
  auto rec = Json::parse(g.handle(get("/runs/" + id)).body);
  EXPECT_EQ(rec["status"], "completed");

  auto first = Json::parse(g.handle(get("/runs/" + id + "/events", {{"since", "0"}})).body);
  ASSERT_FALSE(first["events"].empty());
  std::uint64_t prev = 0;
  for (const auto& e : first["events"]) {
    EXPECT_GT(e["seq"].get<std::uint64_t>(), prev);
    prev = e["seq"].get<std::uint64_t>();
  }
  EXPECT_EQ(first["lastSeq"].get<std::uint64_t>(), prev);
  EXPECT_EQ(first["events"].back()["kind"], "stateChange");

  // Polling from the middle returns exactly the tail.
  const auto mid = first["events"][first["events"].size() / 2]["seq"].get<std::uint64_t>();
  auto tail = Json::parse(g.handle(get("/runs/" + id + "/events", {{"since", std::to_string(mid)}})).body);
  ASSERT_FALSE(tail["events"].empty());
  EXPECT_EQ(tail["events"][0]["seq"].get<std::uint64_t>(), mid + 1);
  EXPECT_EQ(tail["events"].back(), first["events"].back());

  auto none = Json::parse(g.handle(get("/runs/" + id + "/events", {{"since", std::to_string(prev)}})).body);
  EXPECT_TRUE(none["events"].empty());
  EXPECT_EQ(none["lastSeq"].get<std::uint64_t>(), prev);

  EXPECT_EQ(g.handle(get("/runs/nope")).status, 404);
  EXPECT_EQ(g.handle(get("/runs/" + id + "/events", {{"since", "-1"}})).status, 422);
  EXPECT_EQ(Json::parse(g.handle(get("/runs")).body).size(), 1u);
  // A finished run cannot be cancelled.
  EXPECT_EQ(g.handle(post("/runs/" + id + "/cancel", Json::object())).status, 409);
}

TEST(GatewayRuns, UnknownAndInvalidGraphs) {
  Gateway g(testConfig("badgraph"));
  auto res = g.handle(post("/runs", {{"graphRef", "nosuch@1"}}));
  EXPECT_EQ(res.status, 404);
  EXPECT_EQ(Json::parse(res.body)["code"], "NotFound");
  Json bad = scaleGraph();
  bad["nodes"]["S"]["pe"] = "nosuch@1";
  EXPECT_EQ(g.handle(post("/runs", {{"graphRef", bad}})).status, 422);
  bad = scaleGraph();
  bad["edges"] = Json::array({{{"from", {{"node", "S"}, {"port", "out"}}}, {"to", {{"node", "S"}, {"port", "in"}}}}});
  EXPECT_EQ(g.handle(post("/runs", {{"graphRef", bad}})).status, 422);
  EXPECT_EQ(g.handle(post("/runs", {{"graphRef", scaleGraph()}, {"backend", "quantum"}})).status, 422);
  EXPECT_EQ(g.handle(post("/runs", {{"graphRef", scaleGraph()}, {"feeds", {{"x", "nope"}}}})).status, 422);
  EXPECT_EQ(g.handle({"POST", "/runs", {}, "Bearer " + kToken, "{not json"}).status, 400);
  EXPECT_TRUE(g.enactor().runIds().empty());
}

TEST(GatewayRuns, RegisteredGraphRunsByRef) {
  Gateway g(testConfig("byref"));
  auto ws = g.handle(post("/registry/workspaces", {{"name", "lab"}, {"parent", "root"}}));
  ASSERT_EQ(ws.status, 201) << ws.body;
  auto comp = g.handle(post("/registry/components",
                            {{"workspace", "root/lab"}, {"kind", "graph"}, {"name", "doubler"}, {"body", scaleGraph()},
                             {"annotations", {{"purpose", "scales its input"}}}}));
  ASSERT_EQ(comp.status, 201) << comp.body;
  EXPECT_EQ(Json::parse(comp.body)["version"], 1);

  auto resolved = g.handle(get("/registry/resolve", {{"workspace", "root/lab"}, {"name", "doubler"}}));
  ASSERT_EQ(resolved.status, 200) << resolved.body;
  EXPECT_EQ(g.handle(get("/registry/resolve", {{"workspace", "root"}, {"name", "doubler"}})).status, 404);
  EXPECT_EQ(g.handle(get("/registry/resolve", {{"ws", "root/lab"}, {"name", "doubler"}})).body, resolved.body);
  auto hits = Json::parse(g.handle(get("/registry/components", {{"workspace", "root/lab"}, {"q", "scales"}})).body);
  ASSERT_EQ(hits.size(), 1u);

  auto res = g.handle(post("/runs", {{"graphRef", "doubler@1"}, {"workspace", "root/lab"}, {"feeds", {{"x", {5.0}}}}}));
  ASSERT_EQ(res.status, 202) << res.body;
  const auto rec = g.enactor().wait(Json::parse(res.body)["runId"].get<std::string>());
  EXPECT_EQ(enactment::statusName(rec.status), "completed");
  ASSERT_EQ(rec.outputs.at("S.out").size(), 1u);
  EXPECT_EQ(std::get<double>(rec.outputs.at("S.out")[0].payload), 10.0);
  auto run = g.prov().run(rec.runId);
  ASSERT_TRUE(run);
  EXPECT_EQ(run->agentId, "alice");
}

TEST(GatewayProv, ResponsesAreByteEqualToModuleSerialization) {
  Gateway g(testConfig("prov"));
  const auto id = runScale(g);
  auto& prov = g.prov();
  EXPECT_EQ(g.handle(get("/prov/runs")).body, canonicalDump(provenance::toJsonList(prov.queryRuns({}))));
  EXPECT_EQ(g.handle(get("/prov/entities")).body, canonicalDump(provenance::toJsonList(prov.queryEntities({}))));

  const Json crit = {{"port", "out"}};
  EXPECT_EQ(g.handle(get("/prov/entities", {{"criteria", crit.dump()}})).body,
            canonicalDump(provenance::toJsonList(prov.queryEntities(provenance::Criteria::fromJson(crit)))));
  const auto entities = prov.entitiesOfRun(id);
  ASSERT_FALSE(entities.empty());
  for (const auto& e : entities) {
    EXPECT_EQ(g.handle(get("/prov/entities/" + e.entityId)).body, canonicalDump(provenance::toJson(e)));
    for (const char* dir : {"ancestors", "descendants"}) {
      const auto d = std::string(dir) == "ancestors" ? provenance::LineageDirection::Ancestors
                                                     : provenance::LineageDirection::Descendants;
      EXPECT_EQ(g.handle(get("/prov/lineage/" + e.entityId, {{"direction", dir}, {"depth", "3"}})).body,
                canonicalDump(prov.traceLineage(e.entityId, d, 3).toJson()));
    }
    EXPECT_EQ(g.handle(get("/prov/ancestor/" + e.entityId, {{"criteria", crit.dump()}})).body,
              canonicalDump(prov.hasAncestorMatching(e.entityId, provenance::Criteria::fromJson(crit)).toJson()));
  }
  EXPECT_EQ(g.handle(get("/prov/export/" + id)).body, canonicalDump(provenance::exportProvDocument(prov, id)));
  EXPECT_EQ(g.handle(get("/prov/runs/" + id)).body, canonicalDump(provenance::toJson(*prov.run(id))));

  EXPECT_EQ(g.handle(get("/prov/entities/nope")).status, 404);
  EXPECT_EQ(g.handle(get("/prov/export/nope")).status, 404);
  EXPECT_EQ(g.handle(get("/prov/entities", {{"criteria", "{"}})).status, 422);
  EXPECT_EQ(g.handle(get("/prov/lineage/" + entities[0].entityId, {{"depth", "0"}})).status, 422);
}

TEST(GatewayProv, BlobsServeRetainedPayloads) {
  Gateway g(testConfig("blobs"));
  const auto id = runScale(g, Json::array({4.0}));
  for (const auto& e : g.prov().entitiesOfRun(id)) {
    auto res = g.handle(get("/blobs/" + e.payloadDigest));
    ASSERT_EQ(res.status, 200) << e.entityId;
    EXPECT_EQ(dataflow::payloadDigest(dataflow::payloadFromJson(Json::parse(res.body))), e.payloadDigest);
  }
  EXPECT_EQ(g.handle(get("/blobs/" + std::string(64, '0'))).status, 404);
}

TEST(GatewayAuth, EveryMutatingEndpointRejectsMissingOrBadTokens) {
  Gateway g(testConfig("auth"));
  runScale(g);
  const auto runId = g.enactor().runIds().front();
  const fs::path dir = g.config().dataDir.parent_path() / "incoming";
  fs::create_directories(dir);
  seismo::writeTraceFile(dir / "a.trc", waveform("AQU", 0, 10));

  const std::vector<std::pair<std::string, Json>> posts = {
      {"/runs", {{"graphRef", scaleGraph()}, {"feeds", {{"x", {1.0}}}}}},
      {"/runs/" + runId + "/cancel", Json::object()},
      {"/ingest", {{"path", dir.string()}, {"format", "traceDoc"}}},
      {"/downloads/script", {{"criteria", Json::object()}}},
      {"/registry/workspaces", {{"name", "x"}, {"parent", "root"}}},
      {"/registry/components", {{"kind", "graph"}, {"name", "g"}, {"body", scaleGraph()}}},
      {"/nowhere", Json::object()},
  };
  const auto before = stateOf(g);
  for (const auto& [path, body] : posts) {
    for (const std::string auth : {std::string(), std::string("Bearer wrong"), std::string("Basic ") + kToken, kToken}) {
      auto res = g.handle(post(path, body, auth));
      EXPECT_EQ(res.status, 401) << path << " with '" << auth << "'";
      EXPECT_EQ(Json::parse(res.body)["code"], "Unauthorized");
    }
  }
  EXPECT_EQ(stateOf(g), before);
}

TEST(GatewayAuth, GetsNeverChangeState) {
  Gateway g(testConfig("gets"));
  const auto id = runScale(g);
  const auto e = g.prov().entitiesOfRun(id).front().entityId;
  const auto before = stateOf(g);
  for (const auto& r : {get("/health"), get("/runs"), get("/runs/" + id), get("/runs/" + id + "/events"),
                        get("/catalog/events"), get("/catalog/stations"), get("/catalog/regions"),
                        get("/prov/runs"), get("/prov/entities"), get("/prov/entities/" + e), get("/prov/lineage/" + e),
                        get("/prov/ancestor/" + e), get("/prov/export/" + id), get("/registry/workspaces"),
                        get("/registry/components"), get("/waveforms", {{"sta", "AQU"}, {"start", "0"}, {"end", "1"}}),
                        get("/nowhere")}) {
    g.handle(r);
  }
  EXPECT_EQ(stateOf(g), before);
}

TEST(GatewayWaveforms, IngestThenQueryTrimsAndRejects) {
  Gateway g(testConfig("wave"));
  const fs::path dir = g.config().dataDir.parent_path() / "incoming";
  fs::create_directories(dir);
  seismo::writeTraceFile(dir / "a.trc", waveform("AQU", 100.0, 21));
  seismo::writeTraceFile(dir / "b.trc", waveform("ARVD", 100.0, 21));
  seismo::writeTraceFile(dir / "c.trc", waveform("CAMP", 200.0, 5));
  auto res = g.handle(post("/ingest", {{"path", dir.string()}, {"format", "traceDoc"}}));
  ASSERT_EQ(res.status, 200) << res.body;
  EXPECT_EQ(Json::parse(res.body)["cataloged"].size(), 3u);

  auto w = g.handle(get("/waveforms", {{"sta", "IV.AQU"}, {"start", "102"}, {"end", "104.2"}}));
  ASSERT_EQ(w.status, 200) << w.body;
  const auto traces = Json::parse(w.body);
  ASSERT_EQ(traces.size(), 1u);
  const auto t = seismo::Trace::fromJson(traces[0]);
  EXPECT_EQ(t.startTime, 102.0);
  EXPECT_EQ(t.samples, (dataflow::Array{4, 5, 6, 7, 8}));

  EXPECT_EQ(g.handle(get("/waveforms", {{"sta", "AQU"}, {"start", "500"}, {"end", "600"}})).status, 416);
  EXPECT_EQ(g.handle(get("/waveforms", {{"sta", "ZZZ"}, {"start", "100"}, {"end", "101"}})).status, 404);
  EXPECT_EQ(g.handle(get("/waveforms", {{"sta", "AQU"}, {"start", "105"}, {"end", "101"}})).status, 422);
  EXPECT_EQ(g.handle(get("/waveforms", {{"sta", "AQU"}})).status, 422);

  // Re-ingesting reports duplicates and writes nothing new.
  const auto before = g.prov().stateDigest();
  auto again = Json::parse(g.handle(post("/ingest", {{"path", dir.string()}})).body);
  EXPECT_EQ(again["duplicates"].size(), 3u);
  EXPECT_EQ(g.prov().stateDigest(), before);
}

TEST(GatewayDownloads, ScriptHasOneLinePerEntity) {
  Gateway g(testConfig("dl"));
  const fs::path dir = g.config().dataDir.parent_path() / "incoming";
  fs::create_directories(dir);
  for (const char* sta : {"AQU", "ARVD", "CAMP"}) seismo::writeTraceFile(dir / (std::string(sta) + ".trc"), waveform(sta, 0, 8));
  ASSERT_EQ(g.handle(post("/ingest", {{"path", dir.string()}})).status, 200);

  auto res = g.handle(post("/downloads/script", {{"criteria", {{"kind", "waveform"}}}}));
  ASSERT_EQ(res.status, 200);
  EXPECT_EQ(res.contentType, "text/x-shellscript");
  const auto all = lines(res.body);
  std::vector<std::string> fetches;
  std::copy_if(all.begin(), all.end(), std::back_inserter(fetches), [](const std::string& l) { return l.rfind("fetch ", 0) == 0; });
  ASSERT_EQ(fetches.size(), 3u);
  const auto entities = g.prov().queryEntities(provenance::Criteria::fromJson({{"kind", "waveform"}}));
  for (std::size_t i = 0; i < entities.size(); ++i) {
    EXPECT_NE(fetches[i].find("/blobs/" + entities[i].payloadDigest + "' " + entities[i].payloadDigest), std::string::npos)
        << fetches[i];
  }

  auto empty = g.handle(post("/downloads/script", {{"criteria", {{"kind", "nothing"}}}}));
  ASSERT_EQ(empty.status, 200);
  const auto header = lines(empty.body);
  EXPECT_EQ(header.size(), all.size() - 3);
  EXPECT_TRUE(std::none_of(header.begin(), header.end(), [](const std::string& l) { return l.rfind("fetch ", 0) == 0; }));
  EXPECT_EQ(header[0], "#!/bin/sh");
}

TEST(GatewayHttp, ServesApiAndUiOverLoopback) {
  auto cfg = testConfig("http");
  cfg.uiDir = cfg.dataDir.parent_path() / "ui";
  fs::create_directories(cfg.uiDir);
  std::ofstream(cfg.uiDir / "index.html") << "<html>verce</html>";
  Gateway g(cfg);
  const int port = g.start();
  ASSERT_GT(port, 0);
  httplib::Client cli("127.0.0.1", port);

  auto ui = cli.Get("/ui/index.html");
  ASSERT_TRUE(ui);
  EXPECT_EQ(ui->status, 200);
  EXPECT_EQ(ui->body, "<html>verce</html>");

  auto health = cli.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);

  auto box = cli.Get("/catalog/events?bbox=40,45,10,20");
  ASSERT_TRUE(box);
  EXPECT_EQ(Json::parse(box->body).size(), 1u);

  const std::string body = Json{{"graphRef", scaleGraph()}, {"feeds", {{"x", {1.0, 2.0}}}}}.dump();
  auto denied = cli.Post("/runs", body, "application/json");
  ASSERT_TRUE(denied);
  EXPECT_EQ(denied->status, 401);

  auto ok = cli.Post("/runs", {{"Authorization", "Bearer " + kToken}}, body, "application/json");
  ASSERT_TRUE(ok);
  ASSERT_EQ(ok->status, 202) << ok->body;
  const auto id = Json::parse(ok->body)["runId"].get<std::string>();
  g.enactor().wait(id);
  auto events = cli.Get(("/runs/" + id + "/events?since=0").c_str());
  ASSERT_TRUE(events);
  EXPECT_EQ(Json::parse(events->body)["status"], "completed");
  g.stop();
}

TEST(GatewayConfig, JsonEnvironmentAndTokenFile) {
  const auto dir = freshDir("cfg");
  std::ofstream(dir / "tokens.txt") << "# team tokens\nabc alice\n\ndef   # no agent\n";
  std::ofstream(dir / "gw.json") << R"({"listen":"0.0.0.0:9000","dataDir":"d","tokenFile":"tokens.txt","ui":"www"})";
  auto noEnv = [](const char*) -> const char* { return nullptr; };
  auto c = GatewayConfig::load(dir / "gw.json", noEnv);
  EXPECT_EQ(c.host, "0.0.0.0");
  EXPECT_EQ(c.port, 9000);
  EXPECT_EQ(c.dataDir, dir / "d");
  EXPECT_EQ(c.uiDir, dir / "www");
  ASSERT_EQ(c.tokens.size(), 2u);
  EXPECT_EQ(c.tokens.at("abc"), "alice");
  EXPECT_EQ(c.tokens.at("def").rfind("agent-", 0), 0u);
  EXPECT_EQ(c.tokens.at("def").find("def"), std::string::npos);

  std::map<std::string, std::string> env = {{"GATEWAY_ADDR", "127.0.0.1:0"}, {"GATEWAY_TOKENS", "x,y"}, {"GATEWAY_DATA_DIR", "/tmp/z"}};
  auto lookup = [&](const char* k) -> const char* {
    auto it = env.find(k);
    return it == env.end() ? nullptr : it->second.c_str();
  };
  c.applyEnvironment(lookup);
  EXPECT_EQ(c.port, 0);
  EXPECT_EQ(c.dataDir, "/tmp/z");
  EXPECT_EQ(c.tokens.size(), 2u);
  EXPECT_TRUE(c.tokens.count("x"));
  env["GATEWAY_TOKENS"] = (dir / "tokens.txt").string();
  c.applyEnvironment(lookup);
  EXPECT_EQ(c.tokens.at("abc"), "alice");

  auto code = [](auto f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return std::string("none");
  };
  EXPECT_EQ(code([] { GatewayConfig::fromJson({{"listen", "nocolon"}}); }), "BadConfig");
  EXPECT_EQ(code([] { GatewayConfig::fromJson({{"listen", "h:99999"}}); }), "BadConfig");
  EXPECT_EQ(code([] { GatewayConfig::fromJson({{"tokens", {1}}}); }), "BadConfig");
  EXPECT_EQ(code([&] { GatewayConfig::load(dir / "missing.json", noEnv); }), "BadConfig");
}

TEST(GatewayParsing, BBoxAndIntervalStrings) {
  const auto b = parseBBox("40,45,10,20");
  EXPECT_EQ(b.minLat, 40);
  EXPECT_EQ(b.maxLon, 20);
  for (const char* bad : {"", "1,2,3", "1,2,3,4,5", "a,2,3,4", "91,92,0,1", "1,2,3,4,"}) {
    EXPECT_THROW(parseBBox(bad), Error) << bad;
  }
  const auto iv = parseInterval("-1.5,2", "mag");
  EXPECT_EQ(iv.lo, -1.5);
  EXPECT_EQ(iv.hi, 2);
  EXPECT_THROW(parseInterval("2,1", "mag"), Error);
  EXPECT_THROW(parseInterval("2", "mag"), Error);
  EXPECT_EQ(statusForError("OutsideHoldings"), 416);
  EXPECT_EQ(statusForError("SomethingInvalid"), 422);
}
