#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "../support/seismo_oracles.hpp"
#include "verce/dataflow/graph_io.hpp"
#include "verce/dataflow/library.hpp"
#include "verce/enactment/enactor.hpp"
#include "verce/gateway/gateway.hpp"
#include "verce/provenance/prov_document.hpp"
#include "verce/registry/registry.hpp"
#include "verce/seismo/demo.hpp"
#include "verce/seismo/trace_io.hpp"

using namespace verce;
namespace fs = std::filesystem;

namespace {

struct Result {
  int exit = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("verce-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "-" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  /// Runs the binary with --data-dir pointing into the test directory.
  Result verce(const std::string& args) const {
    const auto errFile = dir_ / "stderr.txt";
    const std::string cmd = std::string(VERCE_CLI_PATH) + " --data-dir '" + data().string() + "' " + args + " 2>'" +
                            errFile.string() + "'";
    Result r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = ::pclose(p);
    r.exit = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(errFile);
    return r;
  }

  fs::path data() const { return dir_ / "data"; }
  static std::string fixture(const std::string& name) { return fs::absolute("fixtures/" + name).string(); }

  fs::path dir_;
};

std::string trimmed(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

} // namespace

TEST_F(Cli, ValidateMatchesDirectLoad) {
  auto r = verce("--json validate " + fixture("pipeline.wfg.json"));
  ASSERT_EQ(r.exit, 0) << r.err;
  const auto g = dataflow::loadGraphFile(fixture("pipeline.wfg.json"), dataflow::standardLibrary().resolver());
  const auto j = Json::parse(r.out);
  EXPECT_EQ(j["contentHash"], dataflow::graphContentHash(g));
  EXPECT_EQ(j["nodes"], 3);
  EXPECT_EQ(j["edges"], 2);
}

TEST_F(Cli, RunPipelineMatchesDirectExecution) {
  auto r = verce("--json run " + fixture("pipeline.wfg.json") + " --backend sequential --feeds " + fixture("pipeline.feeds.json"));
  ASSERT_EQ(r.exit, 0) << r.err;
  const auto rec = Json::parse(r.out);
  EXPECT_EQ(rec["status"], "completed");
  const auto written = Json::parse(slurp(rec["outputsFile"].get<std::string>()));

  const auto g = dataflow::loadGraphFile(fixture("pipeline.wfg.json"), dataflow::standardLibrary().resolver());
  enactment::EnactorConfig ec;
  ec.workDir = dir_ / "direct";
  enactment::Enactor enactor(ec);
  const auto direct = enactor.executeGraph(g, enactment::BackendKind::Sequential, std::nullopt,
                                           enactment::feedsFromJson(Json::parse(slurp(fixture("pipeline.feeds.json")))));
  ASSERT_EQ(direct.outputs.size(), written.size());
  for (const auto& [port, units] : direct.outputs) {
    ASSERT_TRUE(written.contains(port)) << port;
    ASSERT_EQ(written[port].size(), units.size());
    for (std::size_t i = 0; i < units.size(); ++i) {
      EXPECT_EQ(dataflow::payloadDigest(dataflow::payloadFromJson(written[port][i]["payload"])),
                dataflow::payloadDigest(units[i].payload));
      EXPECT_EQ(written[port][i]["metadata"], units[i].metadata);
    }
  }
  EXPECT_EQ(direct.outputs.at("decimate.out").size(), 6u);
}

TEST_F(Cli, ProvQueryMatchesDirectQuery) {
  ASSERT_EQ(verce("run " + fixture("pipeline.wfg.json") + " --provenance --feeds " + fixture("pipeline.feeds.json")).exit, 0);
  const Json crit = {{"sta", "AQU"}};
  auto r = verce("--json prov query --criteria '" + crit.dump() + "'");
  ASSERT_EQ(r.exit, 0) << r.err;
  provenance::ProvStore store(data() / "prov.log");
  const auto direct = store.queryEntities(provenance::Criteria::fromJson(crit));
  EXPECT_FALSE(direct.empty());
  EXPECT_EQ(trimmed(r.out), canonicalDump(provenance::toJsonList(direct)));

  auto runs = verce("--json prov query --runs");
  ASSERT_EQ(runs.exit, 0);
  EXPECT_EQ(trimmed(runs.out), canonicalDump(provenance::toJsonList(store.queryRuns({}))));

  const auto id = direct.front().entityId;
  auto lin = verce("--json prov lineage " + id + " --depth 2");
  ASSERT_EQ(lin.exit, 0) << lin.err;
  EXPECT_EQ(trimmed(lin.out), canonicalDump(store.traceLineage(id, provenance::LineageDirection::Ancestors, 2).toJson()));

  const auto runId = store.queryRuns({}).front().runId;
  auto exp = verce("prov export " + runId);
  ASSERT_EQ(exp.exit, 0);
  EXPECT_EQ(trimmed(exp.out), canonicalDump(provenance::exportProvDocument(store, runId)));
}

TEST_F(Cli, RegistryAddThenResolveMatchesDirect) {
  std::ofstream(dir_ / "g.json") << slurp(fixture("pipeline.wfg.json"));
  auto add = verce("--json registry add graph prep-pipeline " + (dir_ / "g.json").string() + " --annotate purpose=prep");
  ASSERT_EQ(add.exit, 0) << add.err;
  ASSERT_EQ(verce("registry add graph prep-pipeline " + (dir_ / "g.json").string()).exit, 0);
  auto res = verce("--json registry resolve prep-pipeline --version 1");
  ASSERT_EQ(res.exit, 0) << res.err;

  registry::RegistryConfig rc;
  rc.dir = data() / "registry";
  registry::Registry reg(rc);
  EXPECT_EQ(trimmed(res.out), canonicalDump(reg.resolveComponent("root", "prep-pipeline", 1).toJson()));
  auto latest = Json::parse(verce("--json registry resolve prep-pipeline").out);
  EXPECT_EQ(latest["version"], 2);
}

TEST_F(Cli, DemoNoiseFourChannelsHasSixCorrelationGroups) {
  auto r = verce("--json demo noise --channels 4");
  ASSERT_EQ(r.exit, 0) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_EQ(j["stacks"], 6);
  EXPECT_EQ(j["correlationActivities"], 18);

  // Counted again from the store the command wrote.
  provenance::ProvStore store(data() / "prov.log");
  std::set<std::string> groups;
  for (const auto& a : store.activitiesOfRun(j["runId"].get<std::string>()))
    if (a.peName == "xcorr") groups.insert(a.peInstanceId);
  EXPECT_EQ(groups.size(), 6u);
  EXPECT_EQ(j["correlationGroups"], 6);

  // Same seed, same stacks as calling the library directly.
  enactment::EnactorConfig ec;
  ec.workDir = dir_ / "direct";
  enactment::Enactor enactor(ec);
  seismo::NoiseDemoConfig cfg;
  cfg.channels = 4;
  const auto direct = seismo::runNoiseDemo(cfg, enactor);
  const auto written = Json::parse(slurp(j["stacksFile"].get<std::string>()));
  ASSERT_EQ(written.size(), direct.stacks.size());
  for (std::size_t i = 0; i < written.size(); ++i) EXPECT_EQ(written[i], direct.stacks[i].toJson());
}

TEST_F(Cli, DemoMisfitPrintsZeroSelfMisfit) {
  auto r = verce("demo misfit");
  ASSERT_EQ(r.exit, 0) << r.err;
  std::istringstream in(r.out);
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "receiver  self-l2  l2  cc-shift");
  int rows = 0;
  while (std::getline(in, line) && line.rfind("reports:", 0) != 0) {
    std::istringstream ls(line);
    std::string receiver, self;
    ls >> receiver >> self;
    EXPECT_EQ(self, "0.0") << line;
    ++rows;
  }
  EXPECT_EQ(rows, 3);
  EXPECT_TRUE(fs::exists(data() / "demo" / "misfit.json"));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(verce("").exit, 2);
  EXPECT_EQ(verce("run").exit, 2);
  EXPECT_EQ(verce("run x.json --backend quantum").exit, 2);
  EXPECT_EQ(verce("frobnicate").exit, 2);
  EXPECT_EQ(verce("--help").exit, 0);

  auto missing = verce("run " + (dir_ / "absent.json").string());
  EXPECT_EQ(missing.exit, 1);
  EXPECT_NE(missing.err.find("PathUnreadable"), std::string::npos) << missing.err;

  std::ofstream(dir_ / "bad.json") << R"({"format":"verce-wfg/1","nodes":{"A":{"pe":"nosuch@1"}},"edges":[],"sourceFeeds":{}})";
  auto bad = verce("--json validate " + (dir_ / "bad.json").string());
  EXPECT_EQ(bad.exit, 1);
  EXPECT_EQ(Json::parse(bad.err)["code"], "NotFound");

  auto noStore = verce("prov query");
  EXPECT_EQ(noStore.exit, 1);
  EXPECT_NE(noStore.err.find("PathUnreadable"), std::string::npos);

  auto crit = verce("prov query --criteria '{oops'");
  EXPECT_EQ(crit.exit, 1);
  EXPECT_NE(crit.err.find("MalformedCriteria"), std::string::npos);
}

TEST_F(Cli, IngestCatalogsAndReportsDuplicates) {
  const auto in = dir_ / "in";
  fs::create_directories(in);
  seismo::writeTraceFile(in / "a.trc", verce::testing::makeTrace({1, 2, 3, 4}, 0.5, "AQU"));
  std::ofstream(in / "notes.txt") << "hello";
  auto first = verce("--json ingest " + in.string());
  ASSERT_EQ(first.exit, 0) << first.err;
  const auto rep = Json::parse(first.out);
  EXPECT_EQ(rep["cataloged"].size(), 1u);
  EXPECT_EQ(rep["rejected"].size(), 1u);
  auto again = Json::parse(verce("--json ingest " + in.string()).out);
  EXPECT_EQ(again["duplicates"].size(), 1u);
  EXPECT_TRUE(again["cataloged"].empty());
}

TEST_F(Cli, RemoteModeGoesThroughTheGateway) {
  gateway::GatewayConfig cfg;
  cfg.port = 0;
  cfg.dataDir = dir_ / "gw";
  cfg.tokens = {{"tok", "remote-user"}};
  gateway::Gateway gw(cfg);
  const auto url = "http://127.0.0.1:" + std::to_string(gw.start());

  auto denied = verce("--gateway " + url + " --token wrong run " + fixture("pipeline.wfg.json"));
  EXPECT_EQ(denied.exit, 1);
  EXPECT_NE(denied.err.find("Unauthorized"), std::string::npos) << denied.err;

  auto r = verce("--gateway " + url + " --token tok run " + fixture("pipeline.wfg.json") + " --feeds " +
                 fixture("pipeline.feeds.json"));
  ASSERT_EQ(r.exit, 0) << r.err;
  ASSERT_EQ(gw.prov().queryRuns({}).size(), 1u);
  EXPECT_EQ(gw.prov().queryRuns({}).front().agentId, "remote-user");

  auto q = verce("--gateway " + url + " prov query --criteria '{\"sta\":\"ARVD\"}'");
  ASSERT_EQ(q.exit, 0) << q.err;
  EXPECT_EQ(trimmed(q.out), canonicalDump(provenance::toJsonList(
                                gw.prov().queryEntities(provenance::Criteria::fromJson({{"sta", "ARVD"}})))));
  // Remote commands leave the local data directory alone.
  EXPECT_FALSE(fs::exists(data() / "prov.log"));
  gw.stop();
}
