#pragma once

#include <filesystem>
#include <string>

#include "verce/dataflow/library.hpp"

namespace verce::dataflow {

inline constexpr const char* kGraphFormat = "verce-wfg/1";

/// Canonical graph document (`.wfg.json`): nodes keyed by instance id,
/// edges sorted by (from, to), sourceFeeds, format tag. Atomic nodes refer to
/// their PE as `name@version`; composite nodes embed their inner document.
Json graphToJson(const GraphParts& parts);
inline Json graphToJson(const WorkflowGraph& g) { return graphToJson(g.parts()); }

GraphParts graphPartsFromJson(const Json& doc, const PeResolver& resolve);
WorkflowGraph graphFromJson(const Json& doc, const PeResolver& resolve);

/// Canonical document text; byte-stable for equal graphs.
std::string canonicalGraphText(const WorkflowGraph& g);
/// Content hash of the canonical document.
std::string graphContentHash(const WorkflowGraph& g);

WorkflowGraph loadGraphFile(const std::filesystem::path& path, const PeResolver& resolve);
void saveGraphFile(const std::filesystem::path& path, const WorkflowGraph& g);

/// Registry body for a PE descriptor: ports, schema, statefulness and the
/// implementation it is bound to.
Json descriptorToJson(const PEDescriptor& d);

} // namespace verce::dataflow
