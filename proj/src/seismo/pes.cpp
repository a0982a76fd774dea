#include "verce/seismo/pes.hpp"

#include <deque>
#include <map>

#include "verce/seismo/correlation.hpp"
#include "verce/seismo/misfit.hpp"
#include "verce/seismo/transforms.hpp"

namespace verce::seismo {

using dataflow::DataUnit;
using dataflow::Emitter;
using dataflow::makeAtomicPE;
using dataflow::makeFunctionPE;
using dataflow::ParamKind;
using dataflow::ProcessingElement;

namespace {

DataUnit traceUnit(const Trace& t, const Json& inherited) {
  auto u = t.toUnit();
  if (inherited.is_object() && inherited.contains("window")) u.metadata["window"] = inherited.at("window");
  return u;
}

/// Keyed pairing of two input streams; unkeyed units pair in arrival order.
class XCorr final : public ProcessingElement {
public:
  explicit XCorr(const Json& p) : maxLag_(p.at("maxLag").get<int>()) {}

  void process(const std::string& port, const DataUnit& u, Emitter& out) override {
    const bool isA = port == "a";
    const Json key = u.metadata.contains("window") ? u.metadata.at("window") : Json(nextKey_[isA ? 0 : 1]++);
    auto& mine = isA ? a_ : b_;
    auto& other = isA ? b_ : a_;
    auto it = other.find(key.dump());
    if (it == other.end()) {
      mine.emplace(key.dump(), u);
      return;
    }
    const DataUnit& ua = isA ? u : it->second;
    const DataUnit& ub = isA ? it->second : u;
    auto r = crossCorrelate(Trace::fromUnit(ua), Trace::fromUnit(ub), maxLag_);
    auto unit = r.toUnit();
    unit.metadata["window"] = key;
    std::vector<std::string> from;
    if (!ua.provId.empty()) from.push_back(ua.provId);
    if (!ub.provId.empty()) from.push_back(ub.provId);
    out.emit("out", std::move(unit.payload), std::move(unit.metadata), std::move(from));
    other.erase(it);
  }

  void finish(Emitter&) override {
    if (!a_.empty() || !b_.empty()) {
      throw Error("UnpairedWindows", std::to_string(a_.size() + b_.size()) + " windows never met a partner");
    }
  }

private:
  int maxLag_;
  std::map<std::string, DataUnit> a_, b_;
  long long nextKey_[2] = {0, 0};
};

class Stack final : public ProcessingElement {
public:
  void process(const std::string&, const DataUnit& u, Emitter&) override { parts_.push_back(CorrelationResult::fromUnit(u)); }
  void finish(Emitter& out) override {
    if (parts_.empty()) return;
    auto u = stackCorrelations(parts_).toUnit();
    out.emit("out", std::move(u.payload), std::move(u.metadata));
  }

private:
  std::vector<CorrelationResult> parts_;
};

class Misfit final : public ProcessingElement {
public:
  explicit Misfit(const Json& p) : kind_(misfitKindFromName(p.value("kind", "l2"))) {}
  void process(const std::string& port, const DataUnit& u, Emitter& out) override {
    auto& mine = port == "obs" ? obs_ : syn_;
    auto& other = port == "obs" ? syn_ : obs_;
    if (other.empty()) {
      mine.push_back(u);
      return;
    }
    const DataUnit partner = std::move(other.front());
    other.pop_front();
    const DataUnit& o = port == "obs" ? u : partner;
    const DataUnit& s = port == "obs" ? partner : u;
    const auto report = computeMisfit(Trace::fromUnit(o), Trace::fromUnit(s), kind_);
    Json meta = report.toJson();
    meta["kind"] = "misfit";
    meta["misfitKind"] = misfitKindName(kind_);
    meta["observed"] = o.metadata.value("id", "");
    meta["synthetic"] = s.metadata.value("id", "");
    std::vector<std::string> from;
    if (!o.provId.empty()) from.push_back(o.provId);
    if (!s.provId.empty()) from.push_back(s.provId);
    out.emit("out", report.value, std::move(meta), std::move(from));
  }

private:
  MisfitKind kind_;
  std::deque<DataUnit> obs_, syn_;
};

dataflow::ParameterSchema transformSchema(TransformKind k) {
  switch (k) {
  case TransformKind::Taper: return {{"fraction", {ParamKind::Float, false, 0.05}}};
  case TransformKind::Bandpass: return {{"lo", {ParamKind::Float, true, {}}}, {"hi", {ParamKind::Float, true, {}}}};
  case TransformKind::Decimate: return {{"factor", {ParamKind::Int, true, {}}}};
  case TransformKind::Whiten: return {{"smoothBins", {ParamKind::Int, false, 11}}};
  default: return {};
  }
}

} // namespace

void addSeismoPEs(dataflow::PeLibrary& lib) {
  lib.add(makeAtomicPE(
      "trace_window", "1", {"in"}, {"out"},
      [](const Json& p) {
        const double seconds = p.at("windowSeconds").get<double>();
        return makeFunctionPE([seconds](const std::string&, const DataUnit& u, Emitter& out) {
          const auto windows = splitWindows(Trace::fromUnit(u), seconds);
          for (std::size_t k = 0; k < windows.size(); ++k) {
            auto w = windows[k].toUnit();
            w.metadata["window"] = k;
            out.emit("out", std::move(w.payload), std::move(w.metadata));
          }
        });
      },
      {{"windowSeconds", {ParamKind::Float, true, {}}}}));

  lib.add(makeAtomicPE(
      "trace_prep", "1", {"in"}, {"out"},
      [](const Json& p) {
        auto prep = prepFromJson(p.value("steps", Json::array()));
        return makeFunctionPE([prep = std::move(prep)](const std::string&, const DataUnit& u, Emitter& out) {
          auto w = traceUnit(applyPrep(prep, Trace::fromUnit(u)), u.metadata);
          out.emit("out", std::move(w.payload), std::move(w.metadata));
        });
      },
      {{"steps", {ParamKind::Array, false, Json::array()}}}));

  for (auto kind : allTransforms()) {
    lib.add(makeAtomicPE(
        std::string(transformName(kind)), "1", {"in"}, {"out"},
        [kind](const Json& p) {
          return makeFunctionPE([kind, p](const std::string&, const DataUnit& u, Emitter& out) {
            auto w = traceUnit(applyTraceTransform(kind, p, Trace::fromUnit(u)), u.metadata);
            out.emit("out", std::move(w.payload), std::move(w.metadata));
          });
        },
        transformSchema(kind)));
  }

  lib.add(makeAtomicPE(
      "xcorr", "1", {"a", "b"}, {"out"}, [](const Json& p) { return std::make_unique<XCorr>(p); },
      {{"maxLag", {ParamKind::Int, true, {}}}}, true));

  lib.add(makeAtomicPE("stack", "1", {"in"}, {"out"}, [](const Json&) { return std::make_unique<Stack>(); }, {}, true));

  lib.add(makeAtomicPE(
      "misfit", "1", {"obs", "syn"}, {"out"}, [](const Json& p) { return std::make_unique<Misfit>(p); },
      {{"kind", {ParamKind::String, false, "l2"}}}, true));
}

const dataflow::PeLibrary& seismoPEs() {
  static const dataflow::PeLibrary lib = [] {
    dataflow::PeLibrary l;
    addSeismoPEs(l);
    return l;
  }();
  return lib;
}

} // namespace verce::seismo

namespace verce::dataflow {

const PeLibrary& standardLibrary() {
  static const PeLibrary lib = [] {
    PeLibrary l;
    addGenericPEs(l);
    seismo::addSeismoPEs(l);
    return l;
  }();
  return lib;
}

} // namespace verce::dataflow
