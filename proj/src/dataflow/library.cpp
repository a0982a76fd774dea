#include "verce/dataflow/library.hpp"

#include <algorithm>
#include <charconv>

namespace verce::dataflow {

std::pair<std::string, std::string> splitRef(std::string_view ref) {
  const auto at = ref.rfind('@');
  if (at == std::string_view::npos) return {std::string(ref), {}};
  return {std::string(ref.substr(0, at)), std::string(ref.substr(at + 1))};
}

bool versionLess(std::string_view a, std::string_view b) {
  long long x = 0, y = 0;
  auto ra = std::from_chars(a.data(), a.data() + a.size(), x);
  auto rb = std::from_chars(b.data(), b.data() + b.size(), y);
  const bool na = ra.ec == std::errc() && ra.ptr == a.data() + a.size();
  const bool nb = rb.ec == std::errc() && rb.ptr == b.data() + b.size();
  if (na && nb) return x < y;
  return a < b;
}

void PeLibrary::add(PEDescriptorPtr d) { byName_[d->name][d->version] = std::move(d); }

PEDescriptorPtr PeLibrary::find(std::string_view ref) const {
  auto [name, version] = splitRef(ref);
  auto it = byName_.find(name);
  if (it == byName_.end() || it->second.empty()) return nullptr;
  if (version.empty()) {
    auto best = it->second.begin();
    for (auto v = it->second.begin(); v != it->second.end(); ++v)
      if (versionLess(best->first, v->first)) best = v;
    return best->second;
  }
  auto v = it->second.find(version);
  return v == it->second.end() ? nullptr : v->second;
}

std::vector<PEDescriptorPtr> PeLibrary::all() const {
  std::vector<PEDescriptorPtr> out;
  for (const auto& [_, versions] : byName_)
    for (const auto& [__, d] : versions) out.push_back(d);
  return out;
}

PeResolver PeLibrary::resolver() const {
  return [this](const std::string& ref) { return find(ref); };
}

namespace {

Payload mapNumbers(const Payload& p, const std::function<double(double)>& f) {
  if (const auto* s = std::get_if<double>(&p)) return f(*s);
  if (const auto* a = std::get_if<Array>(&p)) {
    Array out(a->size());
    std::transform(a->begin(), a->end(), out.begin(), f);
    return out;
  }
  throw Error("UnsupportedPayload", "expected scalar or array payload, got " + std::string(payloadKindName(p)));
}

class CounterSource final : public ProcessingElement {
public:
  explicit CounterSource(const Json& params)
      : count_(params.at("count").get<long long>()), start_(params.value("start", 0.0)) {}
  void start(Emitter& out) override {
    for (long long i = 0; i < count_; ++i) out.emit("out", start_ + static_cast<double>(i));
  }
  void process(const std::string&, const DataUnit&, Emitter&) override {}

private:
  long long count_;
  double start_;
};

class Accumulate final : public ProcessingElement {
public:
  void process(const std::string&, const DataUnit& unit, Emitter&) override {
    if (const auto* s = std::get_if<double>(&unit.payload)) {
      total_ += *s;
    } else if (const auto* a = std::get_if<Array>(&unit.payload)) {
      for (double x : *a) total_ += x;
    }
    ++count_;
  }
  void finish(Emitter& out) override { out.emit("out", total_, {{"count", count_}}); }

private:
  double total_ = 0.0;
  long long count_ = 0;
};

} // namespace

void addGenericPEs(PeLibrary& lib) {
  lib.add(makeAtomicPE("identity", "1", {"in"}, {"out"}, [](const Json&) {
    return makeFunctionPE([](const std::string&, const DataUnit& u, Emitter& out) {
      out.emit("out", u.payload, u.metadata);
    });
  }));

  lib.add(makeAtomicPE(
      "scale", "1", {"in"}, {"out"},
      [](const Json& p) {
        const double factor = p.value("factor", 1.0);
        return makeFunctionPE([factor](const std::string&, const DataUnit& u, Emitter& out) {
          out.emit("out", mapNumbers(u.payload, [factor](double x) { return x * factor; }), u.metadata);
        });
      },
      {{"factor", {ParamKind::Float, false, 1.0}}}));

  lib.add(makeAtomicPE(
      "offset", "1", {"in"}, {"out"},
      [](const Json& p) {
        const double delta = p.value("delta", 0.0);
        return makeFunctionPE([delta](const std::string&, const DataUnit& u, Emitter& out) {
          out.emit("out", mapNumbers(u.payload, [delta](double x) { return x + delta; }), u.metadata);
        });
      },
      {{"delta", {ParamKind::Float, false, 0.0}}}));

  lib.add(makeAtomicPE(
      "counter_source", "1", {}, {"out"}, [](const Json& p) { return std::make_unique<CounterSource>(p); },
      {{"count", {ParamKind::Int, true, {}}}, {"start", {ParamKind::Float, false, 0.0}}}));

  lib.add(makeAtomicPE(
      "fail_at", "1", {"in"}, {"out"},
      [](const Json& p) {
        const auto failSeq = p.at("seq").get<std::uint64_t>();
        return makeFunctionPE([failSeq](const std::string&, const DataUnit& u, Emitter& out) {
          if (u.seq == failSeq) throw Error("PEFailure", "forced failure at unit " + std::to_string(failSeq));
          out.emit("out", u.payload, u.metadata);
        });
      },
      {{"seq", {ParamKind::Int, true, {}}}}));

  lib.add(makeAtomicPE("sink", "1", {"in"}, {}, [](const Json&) {
    return makeFunctionPE([](const std::string&, const DataUnit&, Emitter&) {});
  }));

  lib.add(makeAtomicPE(
      "accumulate", "1", {"in"}, {"out"}, [](const Json&) { return std::make_unique<Accumulate>(); }, {}, true));
}

} // namespace verce::dataflow
