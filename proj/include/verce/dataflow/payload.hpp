#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "verce/common.hpp"

namespace verce::dataflow {

/// Reference to bytes held in a run's blob store.
struct BlobRef {
  std::string digest;
  std::uint64_t length = 0;

  friend bool operator==(const BlobRef&, const BlobRef&) = default;
};

/// Structured payload: string-keyed fields.
struct Record {
  Json fields = Json::object();

  friend bool operator==(const Record& a, const Record& b) { return a.fields == b.fields; }
};

using Array = std::vector<double>;

/// The closed set of payload kinds that may travel on a stream.
using Payload = std::variant<double, Array, Record, BlobRef>;

/// Arrays larger than this travel as a BlobRef.
inline constexpr std::size_t kInlineArrayLimitBytes = 1u << 20;

/// One item on a stream.
struct DataUnit {
  Payload payload;
  Json metadata = Json::object();
  std::string provId;
  std::uint64_t seq = 0;
};

std::string_view payloadKindName(const Payload& p);

/// Bit-exact comparison (NaN payloads compare equal to themselves).
bool samePayload(const Payload& a, const Payload& b);

/// JSON form used by graph documents, feeds files and the gateway.
/// Non-finite doubles are written as the strings "NaN", "Infinity", "-Infinity".
Json payloadToJson(const Payload& p);
Payload payloadFromJson(const Json& j);

Json numberToJson(double v);
double numberFromJson(const Json& j);

/// Little-endian binary writer used for frames, spill files and digests.
class ByteWriter {
public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(std::string_view s);
  void raw(std::string_view s) { buf_.append(s); }

  const std::string& bytes() const noexcept { return buf_; }
  std::string take() { return std::move(buf_); }

private:
  std::string buf_;
};

class ByteReader {
public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  bool done() const noexcept { return pos_ == data_.size(); }

private:
  void need(std::size_t n) const;

  std::string_view data_;
  std::size_t pos_ = 0;
};

void encodePayload(ByteWriter& w, const Payload& p);
Payload decodePayload(ByteReader& r);

void encodeUnit(ByteWriter& w, const DataUnit& u);
DataUnit decodeUnit(ByteReader& r);

/// Content digest of the canonical binary encoding of a payload.
std::string payloadDigest(const Payload& p);

} // namespace verce::dataflow
