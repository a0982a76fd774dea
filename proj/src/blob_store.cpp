#include "verce/blob_store.hpp"

#include <fstream>
#include <sstream>

#include <unistd.h>

#include "verce/hash.hpp"

namespace fs = std::filesystem;

namespace verce {

using dataflow::Array;
using dataflow::BlobRef;
using dataflow::Payload;

fs::path BlobStore::pathFor(const std::string& digest) const {
  if (digest.size() < 3 || digest.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw Error("BadDigest", "malformed digest '" + digest + "'");
  }
  return dir_ / digest.substr(0, 2) / digest;
}

BlobRef BlobStore::put(std::string_view bytes) {
  BlobRef ref{sha256Hex(bytes), bytes.size()};
  const auto target = pathFor(ref.digest);
  if (fs::exists(target)) return ref;
  fs::create_directories(target.parent_path());
  static std::atomic<unsigned> counter{0};
  auto tmp = target;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("BlobWriteFailed", "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("BlobWriteFailed", "short write to " + tmp.string());
  }
  fs::rename(tmp, target);
  ++written_;
  return ref;
}

std::optional<std::string> BlobStore::get(const std::string& digest) const {
  std::ifstream in(pathFor(digest), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool BlobStore::contains(const std::string& digest) const { return fs::exists(pathFor(digest)); }

BlobRef BlobStore::putPayload(const Payload& p) {
  dataflow::ByteWriter w;
  dataflow::encodePayload(w, p);
  return put(w.bytes());
}

std::optional<Payload> BlobStore::getPayload(const std::string& digest) const {
  auto bytes = get(digest);
  if (!bytes) return std::nullopt;
  dataflow::ByteReader r(*bytes);
  return dataflow::decodePayload(r);
}

Payload BlobStore::externalize(Payload p) {
  if (const auto* a = std::get_if<Array>(&p); a && a->size() * sizeof(double) > dataflow::kInlineArrayLimitBytes) {
    return putPayload(p);
  }
  return p;
}

Payload BlobStore::internalize(Payload p) const {
  if (const auto* b = std::get_if<BlobRef>(&p)) {
    auto bytes = get(b->digest);
    if (!bytes) throw Error("BlobMissing", "blob " + b->digest + " not in store");
    if (sha256Hex(*bytes) != b->digest) throw Error("BlobCorrupt", "blob " + b->digest + " does not match its digest");
    dataflow::ByteReader r(*bytes);
    return dataflow::decodePayload(r);
  }
  return p;
}

} // namespace verce
