#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "verce/dataflow/payload.hpp"

namespace verce::dataflow {

/// Sink for units produced by a PE during one step.
///
/// `derivedFrom` names the provenance ids the unit was computed from. When
/// empty, the runtime derives the unit from every input consumed by this PE
/// instance since its previous emission.
class Emitter {
public:
  virtual ~Emitter() = default;
  virtual void emit(std::string_view port, Payload payload, Json metadata = Json::object(),
                    std::vector<std::string> derivedFrom = {}) = 0;
};

/// Runtime body of an atomic PE. One instance per graph node per run; the
/// runtime never calls into one instance from two threads.
class ProcessingElement {
public:
  virtual ~ProcessingElement() = default;

  /// Called once before any input is delivered. PEs without inputs produce here.
  virtual void start(Emitter&) {}
  virtual void process(const std::string& inputPort, const DataUnit& unit, Emitter& out) = 0;
  /// Called once after every input stream is closed.
  virtual void finish(Emitter&) {}
};

using PEFactory = std::function<std::unique_ptr<ProcessingElement>(const Json& params)>;

enum class ParamKind { Int, Float, String, Bool, Array };

std::string_view paramKindName(ParamKind k);
ParamKind paramKindFromName(std::string_view name);
bool valueMatchesKind(const Json& v, ParamKind k);

struct ParamSpec {
  ParamKind kind = ParamKind::Float;
  bool required = false;
  Json defaultValue; ///< null when there is no default
};

using ParameterSchema = std::map<std::string, ParamSpec>;

enum class PEKind { Atomic, Composite };

struct CompositeBody;

struct PEDescriptor {
  std::string name;
  std::string version = "1";
  std::vector<std::string> inputPorts;
  std::vector<std::string> outputPorts;
  bool stateful = false;
  ParameterSchema parameterSchema;
  PEKind kind = PEKind::Atomic;
  PEFactory factory;                              ///< atomic only
  std::shared_ptr<const CompositeBody> composite; ///< composite only

  std::string ref() const { return name + "@" + version; }
  bool hasInput(std::string_view port) const;
  bool hasOutput(std::string_view port) const;
};

using PEDescriptorPtr = std::shared_ptr<const PEDescriptor>;

/// Builds an atomic descriptor, enforcing port uniqueness and that every
/// schema default satisfies its own kind.
PEDescriptorPtr makeAtomicPE(std::string name, std::string version, std::vector<std::string> inputs,
                             std::vector<std::string> outputs, PEFactory factory, ParameterSchema schema = {},
                             bool stateful = false);

/// Checks a parameter binding against a schema. Returns an empty string when
/// valid, otherwise a description of the first violation.
std::string checkParameters(const ParameterSchema& schema, const Json& params);

/// Binding with schema defaults filled in.
Json withDefaults(const ParameterSchema& schema, const Json& params);

Json schemaToJson(const ParameterSchema& schema);
ParameterSchema schemaFromJson(const Json& j);

/// Adapts a callable `void(const std::string& port, const DataUnit&, Emitter&)`
/// into a stateless PE.
template <typename Fn>
class FunctionPE final : public ProcessingElement {
public:
  explicit FunctionPE(Fn fn) : fn_(std::move(fn)) {}
  void process(const std::string& port, const DataUnit& unit, Emitter& out) override { fn_(port, unit, out); }

private:
  Fn fn_;
};

template <typename Fn>
std::unique_ptr<ProcessingElement> makeFunctionPE(Fn fn) {
  return std::make_unique<FunctionPE<Fn>>(std::move(fn));
}

} // namespace verce::dataflow
