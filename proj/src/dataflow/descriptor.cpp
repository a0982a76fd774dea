#include "verce/dataflow/descriptor.hpp"

#include <algorithm>
#include <set>

namespace verce::dataflow {

std::string_view paramKindName(ParamKind k) {
  switch (k) {
  case ParamKind::Int: return "int";
  case ParamKind::Float: return "float";
  case ParamKind::String: return "string";
  case ParamKind::Bool: return "bool";
  case ParamKind::Array: return "array";
  }
  return "float";
}

ParamKind paramKindFromName(std::string_view name) {
  if (name == "int") return ParamKind::Int;
  if (name == "float") return ParamKind::Float;
  if (name == "string") return ParamKind::String;
  if (name == "bool") return ParamKind::Bool;
  if (name == "array") return ParamKind::Array;
  throw Error("ParameterMismatch", "unknown parameter kind '" + std::string(name) + "'");
}

bool valueMatchesKind(const Json& v, ParamKind k) {
  switch (k) {
  case ParamKind::Int: return v.is_number_integer();
  case ParamKind::Float: return v.is_number();
  case ParamKind::String: return v.is_string();
  case ParamKind::Bool: return v.is_boolean();
  case ParamKind::Array: return v.is_array();
  }
  return false;
}

bool PEDescriptor::hasInput(std::string_view port) const {
  return std::find(inputPorts.begin(), inputPorts.end(), port) != inputPorts.end();
}

bool PEDescriptor::hasOutput(std::string_view port) const {
  return std::find(outputPorts.begin(), outputPorts.end(), port) != outputPorts.end();
}

namespace {

void requireUnique(const std::vector<std::string>& ports, const std::string& what) {
  std::set<std::string> seen;
  for (const auto& p : ports) {
    if (p.empty()) throw Error("InvalidDescriptor", what + " port name must not be empty");
    if (!seen.insert(p).second) throw Error("InvalidDescriptor", "duplicate " + what + " port '" + p + "'");
  }
}

} // namespace

PEDescriptorPtr makeAtomicPE(std::string name, std::string version, std::vector<std::string> inputs,
                             std::vector<std::string> outputs, PEFactory factory, ParameterSchema schema,
                             bool stateful) {
  requireUnique(inputs, "input");
  requireUnique(outputs, "output");
  for (const auto& [key, spec] : schema) {
    if (!spec.defaultValue.is_null() && !valueMatchesKind(spec.defaultValue, spec.kind)) {
      throw Error("InvalidDescriptor", "default for '" + key + "' is not a " + std::string(paramKindName(spec.kind)));
    }
  }
  if (!factory) throw Error("InvalidDescriptor", "atomic PE '" + name + "' needs a factory");
  auto d = std::make_shared<PEDescriptor>();
  d->name = std::move(name);
  d->version = std::move(version);
  d->inputPorts = std::move(inputs);
  d->outputPorts = std::move(outputs);
  d->factory = std::move(factory);
  d->parameterSchema = std::move(schema);
  d->stateful = stateful;
  d->kind = PEKind::Atomic;
  return d;
}

std::string checkParameters(const ParameterSchema& schema, const Json& params) {
  if (!params.is_null() && !params.is_object()) return "parameters must be an object";
  if (params.is_object()) {
    for (const auto& [key, value] : params.items()) {
      auto it = schema.find(key);
      if (it == schema.end()) return "unknown parameter '" + key + "'";
      if (!valueMatchesKind(value, it->second.kind)) {
        return "parameter '" + key + "' must be " + std::string(paramKindName(it->second.kind));
      }
    }
  }
  for (const auto& [key, spec] : schema) {
    const bool bound = params.is_object() && params.contains(key);
    if (spec.required && !bound && spec.defaultValue.is_null()) return "missing required parameter '" + key + "'";
  }
  return {};
}

Json withDefaults(const ParameterSchema& schema, const Json& params) {
  Json out = params.is_object() ? params : Json::object();
  for (const auto& [key, spec] : schema) {
    if (!out.contains(key) && !spec.defaultValue.is_null()) out[key] = spec.defaultValue;
  }
  return out;
}

Json schemaToJson(const ParameterSchema& schema) {
  Json j = Json::object();
  for (const auto& [key, spec] : schema) {
    Json s = {{"kind", paramKindName(spec.kind)}, {"required", spec.required}};
    if (!spec.defaultValue.is_null()) s["default"] = spec.defaultValue;
    j[key] = std::move(s);
  }
  return j;
}

ParameterSchema schemaFromJson(const Json& j) {
  ParameterSchema schema;
  if (j.is_null()) return schema;
  for (const auto& [key, s] : j.items()) {
    ParamSpec spec;
    spec.kind = paramKindFromName(s.at("kind").get<std::string>());
    spec.required = s.value("required", false);
    if (s.contains("default")) spec.defaultValue = s.at("default");
    schema.emplace(key, std::move(spec));
  }
  return schema;
}

} // namespace verce::dataflow
