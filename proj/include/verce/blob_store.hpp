#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>

#include "verce/dataflow/payload.hpp"

namespace verce {

/// Content-addressed byte store on local disk. Files are named by the
/// SHA-256 of their contents and written with write-temp-then-rename, so
/// concurrent writers (threads or forked workers) never see partial files.
///
/// The directory is created lazily on the first write; `filesWritten()`
/// counts files this instance created, which tests use to assert that a run
/// stayed off disk.
class BlobStore {
public:
  explicit BlobStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const noexcept { return dir_; }

  dataflow::BlobRef put(std::string_view bytes);
  std::optional<std::string> get(const std::string& digest) const;
  bool contains(const std::string& digest) const;

  /// Stores the canonical binary encoding of a payload; the digest equals
  /// `dataflow::payloadDigest(p)`.
  dataflow::BlobRef putPayload(const dataflow::Payload& p);
  std::optional<dataflow::Payload> getPayload(const std::string& digest) const;

  /// Replaces an oversized array by a BlobRef, and back.
  dataflow::Payload externalize(dataflow::Payload p);
  dataflow::Payload internalize(dataflow::Payload p) const;

  std::size_t filesWritten() const noexcept { return written_.load(); }

private:
  std::filesystem::path pathFor(const std::string& digest) const;

  std::filesystem::path dir_;
  std::atomic<std::size_t> written_{0};
};

} // namespace verce
