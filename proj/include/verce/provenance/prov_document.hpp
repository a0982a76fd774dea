#pragma once

#include "verce/provenance/store.hpp"

namespace verce::provenance {

/// PROV-JSON style document for one run. Records are keyed by id and
/// relations by blank-node ids (`_:g1`, `_:d1`, `_:w1`), so serializing with
/// sorted keys gives a canonical byte form.
using ProvDocument = Json;

/// Errors: UnknownRun.
ProvDocument exportProvDocument(const ProvStore& store, const std::string& runId);

/// Inserts the run described by `doc` into `store`, keeping every id.
/// Errors: MalformedDocument, DuplicateId, UnknownEntity.
void importProvDocument(ProvStore& store, const ProvDocument& doc);

} // namespace verce::provenance
