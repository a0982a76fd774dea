#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

namespace verce {

using Json = nlohmann::json;

/// Error raised by every module. `code()` is the stable, machine-readable
/// name (e.g. "DanglingPort", "UnknownRun") surfaced by the CLI and gateway.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

/// Canonical JSON text: sorted object keys, no whitespace, UTF-8.
inline std::string canonicalDump(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::strict); }

} // namespace verce
