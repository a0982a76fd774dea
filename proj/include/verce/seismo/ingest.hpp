#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "verce/blob_store.hpp"
#include "verce/provenance/store.hpp"
#include "verce/seismo/types.hpp"

namespace verce::seismo {

enum class IngestFormat { TraceDoc, Csv };

std::string_view ingestFormatName(IngestFormat f);
/// "traceDoc" / "trc" or "csv". Errors: BadParams.
IngestFormat ingestFormatFromName(std::string_view s);

struct IngestReport {
  std::vector<std::string> cataloged;                         ///< new entity ids
  std::vector<std::pair<std::string, std::string>> rejected;  ///< (file, reason)
  std::vector<std::pair<std::string, std::string>> duplicates; ///< (file, existing entity id)
  std::string runId; ///< empty when nothing new was cataloged

  Json toJson() const;
};

/// Reads every regular file of `dir` (sorted, non-recursive, sidecars and
/// dot-files skipped). Parseable traces go to the blob store and become
/// provenance entities of one ingest activity, with metadata kind
/// "waveform", net, sta, cha, station (NET.STA), channel, startTime,
/// endTime, dt, npts, units and file. A trace whose samples, channel and start
/// time are already held as a waveform is reported as a duplicate, not
/// re-cataloged.
/// Errors: PathUnreadable (only for `dir` itself).
IngestReport ingestDirectory(const std::filesystem::path& dir, IngestFormat format, BlobStore& blobs,
                             provenance::ProvStore& prov, const std::string& agentId = "ingest",
                             const std::function<double()>& clock = {});

/// Waveforms held for `station` (STA, NET.STA or NET.STA.CHA) trimmed to the
/// samples inside [start, end]. Errors: UnknownStation, OutsideHoldings,
/// BadParams (start > end).
std::vector<Trace> queryWaveforms(const provenance::ProvStore& prov, const BlobStore& blobs, const std::string& station,
                                  double start, double end);

} // namespace verce::seismo
