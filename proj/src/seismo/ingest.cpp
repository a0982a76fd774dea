#include "verce/seismo/ingest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <tuple>

#include "verce/hash.hpp"
#include "verce/seismo/trace_io.hpp"

namespace verce::seismo {

namespace fs = std::filesystem;

namespace {

bool isSidecar(const fs::path& p) {
  const auto name = p.filename().string();
  return name.size() > 10 && name.compare(name.size() - 10, 10, ".meta.json") == 0;
}

double wallClock() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

/// Same samples alone are not enough: quiet channels can be bit-identical.
bool sameRecording(const Json& meta, const Trace& t) {
  return meta.value("net", "") == t.net && meta.value("sta", "") == t.sta && meta.value("cha", "") == t.cha &&
         meta.value("startTime", 0.0) == t.startTime;
}

struct Parsed {
  fs::path file;
  Trace trace;
  std::string digest;
};

} // namespace

std::string_view ingestFormatName(IngestFormat f) { return f == IngestFormat::Csv ? "csv" : "traceDoc"; }

IngestFormat ingestFormatFromName(std::string_view s) {
  if (s == "traceDoc" || s == "trc") return IngestFormat::TraceDoc;
  if (s == "csv") return IngestFormat::Csv;
  throw Error("BadParams", "unknown ingest format '" + std::string(s) + "' (traceDoc or csv)");
}

Json IngestReport::toJson() const {
  Json rej = Json::array(), dup = Json::array();
  for (const auto& [f, why] : rejected) rej.push_back({{"file", f}, {"reason", why}});
  for (const auto& [f, id] : duplicates) dup.push_back({{"file", f}, {"entityId", id}});
  return {{"cataloged", cataloged}, {"rejected", rej}, {"duplicates", dup},
          {"runId", runId.empty() ? Json(nullptr) : Json(runId)}};
}

IngestReport ingestDirectory(const fs::path& dir, IngestFormat format, BlobStore& blobs, provenance::ProvStore& prov,
                             const std::string& agentId, const std::function<double()>& clock) {
  const auto now = clock ? clock : std::function<double()>(wallClock);
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error("PathUnreadable", "not a readable directory: " + dir.string());
  std::vector<fs::path> files;
  fs::directory_iterator it(dir, ec);
  if (ec) throw Error("PathUnreadable", "cannot list " + dir.string() + ": " + ec.message());
  for (const auto& e : it) {
    const auto name = e.path().filename().string();
    if (!e.is_regular_file() || name.empty() || name[0] == '.' || isSidecar(e.path())) continue;
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  IngestReport report;
  std::vector<Parsed> fresh;
  const std::string wanted = format == IngestFormat::Csv ? ".csv" : ".trc";
  for (const auto& f : files) {
    const auto name = f.filename().string();
    if (f.extension() != wanted) {
      report.rejected.emplace_back(name, "not a " + wanted + " file");
      continue;
    }
    Trace t;
    try {
      t = format == IngestFormat::Csv ? readCsvTrace(f) : readTraceFile(f);
    } catch (const Error& e) {
      report.rejected.emplace_back(name, e.code() + ": " + e.what());
      continue;
    }
    const auto digest = dataflow::payloadDigest(dataflow::Payload(t.samples));
    std::string existing;
    for (const auto& id : prov.entitiesWithDigest(digest)) {
      const auto ent = prov.entity(id);
      if (ent && ent->metadata.value("kind", "") == "waveform" && sameRecording(ent->metadata, t)) {
        existing = id;
        break;
      }
    }
    if (existing.empty()) {
      for (const auto& p : fresh)
        if (p.digest == digest && p.trace.id() == t.id() && p.trace.startTime == t.startTime)
          existing = "(" + p.file.filename().string() + ")";
    }
    if (!existing.empty()) {
      report.duplicates.emplace_back(name, existing);
      continue;
    }
    fresh.push_back({f, std::move(t), digest});
  }
  if (fresh.empty()) return report;

  std::string seed = fs::absolute(dir).string();
  for (const auto& p : fresh) seed += "|" + p.digest;
  const std::string base = "ingest-" + sha256Hex(seed).substr(0, 12);
  report.runId = base;
  for (int k = 2; prov.hasRun(report.runId); ++k) report.runId = base + "-" + std::to_string(k);

  const double started = now();
  provenance::RunSummary run;
  run.runId = report.runId;
  run.agentId = agentId;
  run.graphRef = "ingest";
  run.backend = "ingest";
  run.status = "running";
  run.startedAt = started;
  run.metadata = {{"directory", fs::absolute(dir).string()}, {"format", ingestFormatName(format)}};
  prov.beginRun(run, agentId);

  provenance::ProvActivity act;
  act.runId = report.runId;
  act.peInstanceId = "ingest";
  act.peName = "ingest";
  act.peVersion = "1";
  act.parameters = {{"format", ingestFormatName(format)}};
  act.startedAt = started;
  std::vector<provenance::OutputRecord> outputs;
  std::vector<dataflow::Payload> payloads;
  payloads.reserve(fresh.size());
  for (const auto& p : fresh) {
    blobs.putPayload(p.trace.samples);
    const auto& t = p.trace;
    provenance::OutputRecord o;
    o.port = "out";
    o.payloadDigest = p.digest;
    o.metadata = {{"kind", "waveform"},       {"net", t.net},          {"sta", t.sta},
                  {"cha", t.cha},             {"station", t.net + "." + t.sta},
                  {"channel", t.id()},        {"startTime", t.startTime}, {"endTime", t.endTime()},
                  {"dt", t.dt},               {"npts", t.samples.size()}, {"units", t.units},
                  {"file", p.file.filename().string()}};
    o.derivedFrom = std::vector<std::string>{};
    outputs.push_back(std::move(o));
  }
  act.endedAt = now();
  const auto step = prov.recordStep(report.runId, std::move(act), {}, std::move(outputs));
  report.cataloged = step.outputEntityIds;
  prov.updateRunStatus(report.runId, "completed", now());
  return report;
}

std::vector<Trace> queryWaveforms(const provenance::ProvStore& prov, const BlobStore& blobs, const std::string& station,
                                  double start, double end) {
  if (!std::isfinite(start) || !std::isfinite(end) || start > end) {
    throw Error("BadParams", "waveform interval needs finite start <= end");
  }
  provenance::Criteria c;
  c.addExact("kind", "waveform");
  std::vector<provenance::ProvEntity> held;
  for (auto& e : prov.queryEntities(c)) {
    const auto& m = e.metadata;
    if (m.value("sta", "") == station || m.value("station", "") == station || m.value("channel", "") == station) {
      held.push_back(std::move(e));
    }
  }
  if (held.empty()) throw Error("UnknownStation", "no waveforms held for station '" + station + "'");

  std::vector<Trace> out;
  for (const auto& e : held) {
    const auto& m = e.metadata;
    const double t0 = m.at("startTime").get<double>(), dt = m.at("dt").get<double>();
    const auto npts = m.at("npts").get<long long>();
    // First and last sample index inside [start, end], with a little slack for rounding.
    const auto i0 = std::max(0LL, static_cast<long long>(std::ceil((start - t0) / dt - 1e-9)));
    const auto i1 = std::min(npts - 1, static_cast<long long>(std::floor((end - t0) / dt + 1e-9)));
    if (i0 > i1) continue;
    const auto payload = blobs.getPayload(e.payloadDigest);
    const auto* samples = payload ? std::get_if<Array>(&*payload) : nullptr;
    if (!samples || static_cast<long long>(samples->size()) != npts) {
      throw Error("BlobMissing", "samples of " + e.entityId + " are not in the blob store");
    }
    Json header = m;
    Trace t = Trace::fromHeader(header, Array(samples->begin() + i0, samples->begin() + i1 + 1));
    t.startTime = t0 + static_cast<double>(i0) * dt;
    out.push_back(std::move(t));
  }
  if (out.empty()) throw Error("OutsideHoldings", "no samples of '" + station + "' inside the requested interval");
  std::sort(out.begin(), out.end(), [](const Trace& a, const Trace& b) {
    return std::tie(a.startTime, a.net, a.sta, a.cha) < std::tie(b.startTime, b.net, b.sta, b.cha);
  });
  return out;
}

} // namespace verce::seismo
