#include "verce/registry/registry.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include <unistd.h>

#include "verce/dataflow/graph_io.hpp"
#include "verce/hash.hpp"

namespace verce::registry {

namespace fs = std::filesystem;

std::string_view kindName(ComponentKind k) {
  switch (k) {
  case ComponentKind::Pe: return "pe";
  case ComponentKind::Function: return "function";
  case ComponentKind::Graph: return "graph";
  }
  return "pe";
}

ComponentKind kindFromName(std::string_view s) {
  if (s == "pe") return ComponentKind::Pe;
  if (s == "function") return ComponentKind::Function;
  if (s == "graph") return ComponentKind::Graph;
  throw Error("MalformedBody", "unknown component kind '" + std::string(s) + "'");
}

Json Workspace::toJson() const {
  Json j = {{"workspaceId", workspaceId}, {"name", name}, {"createdAt", createdAt}};
  j["parent"] = parent ? Json(*parent) : Json(nullptr);
  return j;
}

Workspace Workspace::fromJson(const Json& j) {
  Workspace w;
  w.workspaceId = j.at("workspaceId").get<std::string>();
  w.name = j.at("name").get<std::string>();
  if (j.contains("parent") && !j.at("parent").is_null()) w.parent = j.at("parent").get<std::string>();
  w.createdAt = j.value("createdAt", 0.0);
  return w;
}

Json ComponentRecord::toJson(bool withBody) const {
  Json j = {{"componentId", componentId}, {"workspaceId", workspaceId}, {"kind", kindName(kind)}, {"name", name},
            {"version", version}, {"annotations", annotations}, {"registeredAt", registeredAt}};
  if (withBody) j["body"] = body;
  return j;
}

Json SearchHit::toJson() const {
  Json j = record.toJson(false);
  j["depth"] = depth;
  j["shadowed"] = shadowed;
  j["score"] = score;
  return j;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

void checkName(const std::string& name, const char* what) {
  if (name.empty() || name.find('/') != std::string::npos || name.find('@') != std::string::npos ||
      name.find(':') != std::string::npos) {
    throw Error("MalformedName", std::string(what) + " name must be non-empty without '/', '@' or ':': '" + name + "'");
  }
}

bool stringArray(const Json& j) {
  if (!j.is_array()) return false;
  std::set<std::string> seen;
  for (const auto& x : j) {
    if (!x.is_string() || !seen.insert(x.get<std::string>()).second) return false;
  }
  return true;
}

void writeAtomically(const fs::path& target, const std::string& text) {
  fs::create_directories(target.parent_path());
  const auto tmp = target.parent_path() / ("." + target.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("PathUnwritable", "cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw Error("PathUnwritable", "cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::pair<std::string, std::optional<int>> splitVersioned(const std::string& ref) {
  auto [name, version] = dataflow::splitRef(ref);
  if (version.empty()) return {name, std::nullopt};
  try {
    std::size_t used = 0;
    int v = std::stoi(version, &used);
    if (used != version.size() || v < 1) throw std::invalid_argument("version");
    return {name, v};
  } catch (const std::exception&) {
    throw Error("NotFound", "registry versions are positive integers: '" + ref + "'");
  }
}

} // namespace

Registry::Registry(RegistryConfig config) : config_(std::move(config)) {
  impls_ = config_.implementations ? config_.implementations : &dataflow::standardLibrary();
  if (!config_.clock) {
    config_.clock = [] {
      return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    };
  }
  if (!config_.dir.empty()) load();
}

Workspace Registry::createWorkspace(const std::string& name, const std::optional<std::string>& parent) {
  checkName(name, "workspace");
  std::unique_lock lock(mu_);
  if (parent && !workspaces_.count(*parent)) throw Error("UnknownParent", "no workspace " + *parent);
  Workspace w{parent ? *parent + "/" + name : name, name, parent, config_.clock()};
  if (workspaces_.count(w.workspaceId)) {
    throw Error("DuplicateName", "workspace '" + name + "' already exists" + (parent ? " under " + *parent : " at top level"));
  }
  workspaces_[w.workspaceId] = w;
  persist(nullptr);
  return w;
}

Workspace Registry::ensureWorkspacePath(const std::string& path) {
  std::optional<std::string> parent;
  std::stringstream ss(path);
  Workspace last;
  for (std::string part; std::getline(ss, part, '/');) {
    const auto id = parent ? *parent + "/" + part : part;
    {
      std::shared_lock lock(mu_);
      auto it = workspaces_.find(id);
      if (it != workspaces_.end()) {
        last = it->second;
        parent = id;
        continue;
      }
    }
    last = createWorkspace(part, parent);
    parent = id;
  }
  if (!parent) throw Error("MalformedName", "empty workspace path");
  return last;
}

std::vector<Workspace> Registry::workspaces() const {
  std::shared_lock lock(mu_);
  std::vector<Workspace> out;
  for (const auto& [_, w] : workspaces_) out.push_back(w);
  return out;
}

Workspace Registry::workspace(const std::string& workspaceId) const {
  std::shared_lock lock(mu_);
  auto it = workspaces_.find(workspaceId);
  if (it == workspaces_.end()) throw Error("UnknownWorkspace", "no workspace " + workspaceId);
  return it->second;
}

std::vector<std::string> Registry::ancestryLocked(const std::string& workspaceId) const {
  std::vector<std::string> chain;
  auto it = workspaces_.find(workspaceId);
  if (it == workspaces_.end()) throw Error("UnknownWorkspace", "no workspace " + workspaceId);
  while (true) {
    chain.push_back(it->first);
    if (!it->second.parent) break;
    it = workspaces_.find(*it->second.parent);
  }
  return chain;
}

std::vector<std::string> Registry::ancestry(const std::string& workspaceId) const {
  std::shared_lock lock(mu_);
  return ancestryLocked(workspaceId);
}

void Registry::validateBody(const std::string& workspaceId, ComponentKind kind, const Json& body) const {
  auto malformed = [](const std::string& why) { return Error("MalformedBody", why); };
  if (!body.is_object()) throw malformed("component body must be a JSON object");
  switch (kind) {
  case ComponentKind::Pe: {
    if (!body.contains("inputs") || !stringArray(body.at("inputs"))) throw malformed("pe body needs unique string 'inputs'");
    if (!body.contains("outputs") || !stringArray(body.at("outputs"))) throw malformed("pe body needs unique string 'outputs'");
    if (!body.contains("impl") || !body.at("impl").is_string()) throw malformed("pe body needs an 'impl' reference");
    if (body.contains("stateful") && !body.at("stateful").is_boolean()) throw malformed("'stateful' must be boolean");
    try {
      auto schema = dataflow::schemaFromJson(body.value("parameters", Json::object()));
      for (const auto& [key, spec] : schema) {
        if (!spec.defaultValue.is_null() && !dataflow::valueMatchesKind(spec.defaultValue, spec.kind)) {
          throw malformed("default for parameter '" + key + "' does not match its kind");
        }
      }
    } catch (const Error& e) {
      if (e.code() == "MalformedBody") throw;
      throw malformed(std::string("bad parameter schema: ") + e.what());
    } catch (const Json::exception& e) {
      throw malformed(std::string("bad parameter schema: ") + e.what());
    }
    return;
  }
  case ComponentKind::Function: {
    const bool hasSource = body.contains("source") && body.at("source").is_string();
    const bool hasConnection = body.contains("connection") && body.at("connection").is_object();
    if (!hasSource && !hasConnection) throw malformed("function body needs a string 'source' or a 'connection' object");
    return;
  }
  case ComponentKind::Graph: {
    try {
      auto resolve = [this, &workspaceId](const std::string& ref) -> dataflow::PEDescriptorPtr {
        auto [name, version] = splitVersioned(ref);
        if (const auto* rec = resolveLocked(workspaceId, name, version); rec && rec->kind == ComponentKind::Pe) {
          return descriptorFromRecord(*rec);
        }
        return impls_->find(ref);
      };
      dataflow::graphFromJson(body, resolve);
    } catch (const Error& e) {
      throw malformed(e.code() + ": " + e.what());
    } catch (const Json::exception& e) {
      throw malformed(e.what());
    }
    return;
  }
  }
}

dataflow::PEDescriptorPtr Registry::descriptorFromRecord(const ComponentRecord& rec) const {
  const auto implRef = rec.body.at("impl").get<std::string>();
  auto impl = impls_->find(implRef);
  if (!impl) throw Error("NotFound", "no implementation '" + implRef + "' for " + rec.componentId);
  if (impl->kind != dataflow::PEKind::Atomic) throw Error("NotFound", "implementation '" + implRef + "' is not atomic");
  auto d = std::make_shared<dataflow::PEDescriptor>(*impl);
  d->name = rec.name;
  d->version = std::to_string(rec.version);
  d->inputPorts = rec.body.at("inputs").get<std::vector<std::string>>();
  d->outputPorts = rec.body.at("outputs").get<std::vector<std::string>>();
  d->stateful = rec.body.value("stateful", impl->stateful);
  d->parameterSchema = dataflow::schemaFromJson(rec.body.value("parameters", Json::object()));
  return d;
}

ComponentRecord Registry::registerComponent(const std::string& workspaceId, ComponentKind kind, const std::string& name,
                                            Json body, std::map<std::string, std::string> annotations) {
  checkName(name, "component");
  std::unique_lock lock(mu_);
  if (!workspaces_.count(workspaceId)) throw Error("UnknownWorkspace", "no workspace " + workspaceId);
  validateBody(workspaceId, kind, body);
  auto& versions = components_[{workspaceId, name}];
  ComponentRecord rec;
  rec.workspaceId = workspaceId;
  rec.kind = kind;
  rec.name = name;
  rec.version = static_cast<int>(versions.size()) + 1;
  rec.componentId = workspaceId + ":" + rec.ref();
  // Stored in canonical form so equal documents compare byte-equal.
  rec.body = Json::parse(canonicalDump(body));
  rec.annotations = std::move(annotations);
  rec.registeredAt = config_.clock();
  versions.push_back(rec);
  try {
    persist(&versions.back());
  } catch (...) {
    versions.pop_back();
    if (versions.empty()) components_.erase({workspaceId, name});
    throw;
  }
  return rec;
}

const ComponentRecord* Registry::resolveLocked(const std::string& workspaceId, const std::string& name,
                                               std::optional<int> version) const {
  for (const auto& ws : ancestryLocked(workspaceId)) {
    auto it = components_.find({ws, name});
    if (it == components_.end() || it->second.empty()) continue;
    if (!version) return &it->second.back();
    if (*version >= 1 && *version <= static_cast<int>(it->second.size())) return &it->second[*version - 1];
  }
  return nullptr;
}

ComponentRecord Registry::resolveComponent(const std::string& workspaceId, const std::string& name,
                                           std::optional<int> version) const {
  std::shared_lock lock(mu_);
  const auto* rec = resolveLocked(workspaceId, name, version);
  if (!rec) {
    throw Error("NotFound", "'" + name + (version ? "@" + std::to_string(*version) : "") + "' is not visible from " + workspaceId);
  }
  return *rec;
}

ComponentRecord Registry::resolveRef(const std::string& workspaceId, const std::string& ref) const {
  auto [name, version] = splitVersioned(ref);
  return resolveComponent(workspaceId, name, version);
}

std::vector<ComponentRecord> Registry::components(const std::string& workspaceId) const {
  std::shared_lock lock(mu_);
  if (!workspaces_.count(workspaceId)) throw Error("UnknownWorkspace", "no workspace " + workspaceId);
  std::vector<ComponentRecord> out;
  for (auto it = components_.lower_bound({workspaceId, ""}); it != components_.end() && it->first.workspaceId == workspaceId; ++it) {
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

std::vector<SearchHit> Registry::searchComponents(const std::string& workspaceId, const std::string& terms) const {
  std::vector<std::string> needles;
  {
    std::stringstream ss(lower(terms));
    for (std::string t; ss >> t;) needles.push_back(t);
  }
  std::shared_lock lock(mu_);
  const auto chain = ancestryLocked(workspaceId);
  std::set<std::string> nearer;
  std::vector<SearchHit> hits;
  for (std::size_t depth = 0; depth < chain.size(); ++depth) {
    std::set<std::string> here;
    for (auto it = components_.lower_bound({chain[depth], ""}); it != components_.end() && it->first.workspaceId == chain[depth];
         ++it) {
      if (it->second.empty()) continue;
      const auto& rec = it->second.back();
      here.insert(rec.name);
      const auto name = lower(rec.name);
      std::string annotations;
      for (const auto& [k, v] : rec.annotations) annotations += lower(k) + "\n" + lower(v) + "\n";
      int score = 0;
      bool all = true;
      for (const auto& t : needles) {
        const bool inName = name.find(t) != std::string::npos;
        score += inName;
        all = all && (inName || annotations.find(t) != std::string::npos);
      }
      if (!all) continue;
      hits.push_back({rec, static_cast<int>(depth), nearer.count(rec.name) > 0, score});
    }
    nearer.insert(here.begin(), here.end());
  }
  std::stable_sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.record.name < b.record.name;
  });
  return hits;
}

dataflow::PeResolver Registry::peResolver(const std::string& workspaceId) const {
  workspace(workspaceId);
  return [this, workspaceId](const std::string& ref) -> dataflow::PEDescriptorPtr {
    auto [name, version] = splitVersioned(ref);
    {
      std::shared_lock lock(mu_);
      if (const auto* rec = resolveLocked(workspaceId, name, version); rec && rec->kind == ComponentKind::Pe) {
        return descriptorFromRecord(*rec);
      }
    }
    return impls_->find(ref);
  };
}

dataflow::WorkflowGraph Registry::loadGraph(const std::string& workspaceId, const std::string& ref) const {
  const auto rec = resolveRef(workspaceId, ref);
  if (rec.kind != ComponentKind::Graph) throw Error("NotFound", rec.componentId + " is a " + std::string(kindName(rec.kind)) + ", not a graph");
  // Resolved against the workspace the graph lives in, not the caller's.
  return dataflow::graphFromJson(rec.body, peResolver(rec.workspaceId));
}

std::size_t Registry::componentCount() const {
  std::shared_lock lock(mu_);
  std::size_t n = 0;
  for (const auto& [_, v] : components_) n += v.size();
  return n;
}

void Registry::persist(const ComponentRecord* newRecord) const {
  if (config_.dir.empty()) return;
  if (newRecord) {
    const auto text = canonicalDump(newRecord->body);
    const auto file = config_.dir / "bodies" / (sha256Hex(text) + ".json");
    if (!fs::exists(file)) writeAtomically(file, text);
  }
  Json ws = Json::array();
  for (const auto& [_, w] : workspaces_) ws.push_back(w.toJson());
  Json comps = Json::array();
  for (const auto& [_, versions] : components_) {
    for (const auto& rec : versions) {
      Json j = rec.toJson(false);
      j["body"] = sha256Hex(canonicalDump(rec.body));
      comps.push_back(std::move(j));
    }
  }
  writeAtomically(config_.dir / "index.json", Json{{"workspaces", ws}, {"components", comps}}.dump(1) + "\n");
}

void Registry::load() {
  const auto indexPath = config_.dir / "index.json";
  if (!fs::exists(indexPath)) return;
  std::ifstream in(indexPath);
  Json index;
  try {
    index = Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error("MalformedDocument", indexPath.string() + ": " + e.what());
  }
  for (const auto& w : index.at("workspaces")) {
    auto ws = Workspace::fromJson(w);
    workspaces_[ws.workspaceId] = ws;
  }
  for (const auto& c : index.at("components")) {
    ComponentRecord rec;
    rec.componentId = c.at("componentId").get<std::string>();
    rec.workspaceId = c.at("workspaceId").get<std::string>();
    rec.kind = kindFromName(c.at("kind").get<std::string>());
    rec.name = c.at("name").get<std::string>();
    rec.version = c.at("version").get<int>();
    rec.annotations = c.value("annotations", Json::object()).get<std::map<std::string, std::string>>();
    rec.registeredAt = c.value("registeredAt", 0.0);
    const auto bodyPath = config_.dir / "bodies" / (c.at("body").get<std::string>() + ".json");
    std::ifstream b(bodyPath);
    if (!b) throw Error("MalformedDocument", "missing body " + bodyPath.string());
    rec.body = Json::parse(b);
    auto& versions = components_[{rec.workspaceId, rec.name}];
    if (rec.version != static_cast<int>(versions.size()) + 1) {
      throw Error("MalformedDocument", "index versions for " + rec.name + " are not dense");
    }
    versions.push_back(std::move(rec));
  }
}

} // namespace verce::registry
