#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "verce/dataflow/library.hpp"

namespace verce::registry {

enum class ComponentKind { Pe, Function, Graph };

std::string_view kindName(ComponentKind k);
/// Errors: MalformedBody for an unknown kind.
ComponentKind kindFromName(std::string_view s);

/// A namespace in the hierarchy. The id is the slash-joined name path from
/// the root ("root/seismo"), which sibling-unique names make unambiguous.
struct Workspace {
  std::string workspaceId;
  std::string name;
  std::optional<std::string> parent;
  double createdAt = 0.0;

  Json toJson() const;
  static Workspace fromJson(const Json& j);
};

struct ComponentRecord {
  std::string componentId; ///< "<workspaceId>:<name>@<version>"
  std::string workspaceId;
  ComponentKind kind = ComponentKind::Pe;
  std::string name;
  int version = 1;
  Json body;
  std::map<std::string, std::string> annotations;
  double registeredAt = 0.0;

  std::string ref() const { return name + "@" + std::to_string(version); }
  Json toJson(bool withBody = true) const;
};

struct SearchHit {
  ComponentRecord record;
  int depth = 0;         ///< 0 for the searched workspace, 1 for its parent, ...
  bool shadowed = false; ///< a nearer workspace defines the same name
  int score = 0;         ///< terms found in the name

  Json toJson() const;
};

struct RegistryConfig {
  /// Empty keeps everything in memory. Otherwise an index file plus one
  /// canonical document per body, reloaded on construction.
  std::filesystem::path dir;
  std::function<double()> clock;
  /// Implementations that registered PE descriptors bind to through their
  /// `impl` field; also consulted for refs the registry does not know.
  /// Defaults to the standard library.
  const dataflow::PeLibrary* implementations = nullptr;
};

/// Hierarchical, versioned component store with nearest-wins resolution.
/// Single writer, many readers.
class Registry {
public:
  explicit Registry(RegistryConfig config = {});

  /// Errors: UnknownParent, DuplicateName, MalformedName.
  Workspace createWorkspace(const std::string& name, const std::optional<std::string>& parent = std::nullopt);
  /// Creates any missing workspaces along a slash-separated path.
  Workspace ensureWorkspacePath(const std::string& path);
  std::vector<Workspace> workspaces() const;
  /// Errors: UnknownWorkspace.
  Workspace workspace(const std::string& workspaceId) const;
  /// The workspace followed by its ancestors up to the root.
  std::vector<std::string> ancestry(const std::string& workspaceId) const;

  /// Errors: UnknownWorkspace, MalformedBody, MalformedName.
  ComponentRecord registerComponent(const std::string& workspaceId, ComponentKind kind, const std::string& name, Json body,
                                    std::map<std::string, std::string> annotations = {});

  /// Walks from the workspace towards the root; the first workspace holding
  /// the name wins, and the default version is its highest. With an explicit
  /// version the first workspace holding that exact version wins.
  /// Errors: NotFound, UnknownWorkspace.
  ComponentRecord resolveComponent(const std::string& workspaceId, const std::string& name,
                                   std::optional<int> version = std::nullopt) const;
  /// Accepts "name" or "name@version".
  ComponentRecord resolveRef(const std::string& workspaceId, const std::string& ref) const;

  /// Records registered directly in the workspace, by (name, version).
  std::vector<ComponentRecord> components(const std::string& workspaceId) const;

  /// Case-insensitive substring search over names and annotations of every
  /// component visible from the workspace. A hit must contain every
  /// whitespace-separated term. One hit per (workspace, name) at its highest
  /// version; order is score descending, then depth, then name.
  std::vector<SearchHit> searchComponents(const std::string& workspaceId, const std::string& terms) const;

  /// Resolves PE refs in graph documents: registered PE descriptors first,
  /// then the implementation library.
  dataflow::PeResolver peResolver(const std::string& workspaceId) const;
  /// Builds the graph stored under a graph component ref.
  /// Errors: NotFound, MalformedBody, plus graph validation errors.
  dataflow::WorkflowGraph loadGraph(const std::string& workspaceId, const std::string& ref) const;

  std::size_t componentCount() const;

private:
  struct Key {
    std::string workspaceId;
    std::string name;
    friend auto operator<=>(const Key&, const Key&) = default;
  };

  void validateBody(const std::string& workspaceId, ComponentKind kind, const Json& body) const;
  dataflow::PEDescriptorPtr descriptorFromRecord(const ComponentRecord& rec) const;
  std::vector<std::string> ancestryLocked(const std::string& workspaceId) const;
  const ComponentRecord* resolveLocked(const std::string& workspaceId, const std::string& name, std::optional<int> version) const;
  void load();
  void persist(const ComponentRecord* newRecord) const;

  RegistryConfig config_;
  const dataflow::PeLibrary* impls_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Workspace> workspaces_;
  /// Versions in order; index v-1 holds version v.
  std::map<Key, std::vector<ComponentRecord>> components_;
};

} // namespace verce::registry
