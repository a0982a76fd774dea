#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "verce/dataflow/graph.hpp"

namespace verce::dataflow {

/// Maps a `name@version` (or bare `name`, meaning latest) to a descriptor.
/// Returns null when unknown.
using PeResolver = std::function<PEDescriptorPtr(const std::string& ref)>;

/// In-process catalog of PE implementations that graph documents can refer to.
class PeLibrary {
public:
  void add(PEDescriptorPtr d);
  PEDescriptorPtr find(std::string_view ref) const;
  std::vector<PEDescriptorPtr> all() const;
  PeResolver resolver() const;

private:
  std::map<std::string, std::map<std::string, PEDescriptorPtr>> byName_;
};

/// Splits `name@version`; version is empty when absent.
std::pair<std::string, std::string> splitRef(std::string_view ref);

/// Numeric-aware version ordering ("2" < "10").
bool versionLess(std::string_view a, std::string_view b);

/// General-purpose PEs: identity, scale, offset, counter_source, fail_at,
/// sink, accumulate.
void addGenericPEs(PeLibrary& lib);

/// Generic PEs plus the seismology PEs.
const PeLibrary& standardLibrary();

} // namespace verce::dataflow
