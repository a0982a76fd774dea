#include "verce/dataflow/payload.hpp"

#include <bit>
#include <cmath>
#include <limits>

#include "verce/hash.hpp"

namespace verce::dataflow {

namespace {

enum class Kind : std::uint8_t { Scalar = 1, Array = 2, Record = 3, Blob = 4 };

} // namespace

std::string_view payloadKindName(const Payload& p) {
  switch (p.index()) {
  case 0: return "scalar";
  case 1: return "array";
  case 2: return "record";
  default: return "blobRef";
  }
}

bool samePayload(const Payload& a, const Payload& b) {
  ByteWriter wa, wb;
  encodePayload(wa, a);
  encodePayload(wb, b);
  return wa.bytes() == wb.bytes();
}

Json numberToJson(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Infinity" : "-Infinity";
  return v;
}

double numberFromJson(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    if (s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-Infinity") return -std::numeric_limits<double>::infinity();
  }
  throw Error("MalformedPayload", "expected a number, got " + j.dump());
}

Json payloadToJson(const Payload& p) {
  return std::visit(
      [](const auto& v) -> Json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return {{"scalar", numberToJson(v)}};
        } else if constexpr (std::is_same_v<T, Array>) {
          Json arr = Json::array();
          for (double x : v) arr.push_back(numberToJson(x));
          return {{"array", std::move(arr)}};
        } else if constexpr (std::is_same_v<T, Record>) {
          return {{"record", v.fields}};
        } else {
          return {{"blobRef", {{"digest", v.digest}, {"length", v.length}}}};
        }
      },
      p);
}

Payload payloadFromJson(const Json& j) {
  if (j.is_number() || j.is_string()) return numberFromJson(j);
  if (j.is_array()) {
    Array a;
    a.reserve(j.size());
    for (const auto& x : j) a.push_back(numberFromJson(x));
    return a;
  }
  if (!j.is_object() || j.size() != 1) throw Error("MalformedPayload", "payload must be a single-key object: " + j.dump());
  const auto& [key, val] = *j.items().begin();
  if (key == "scalar") return numberFromJson(val);
  if (key == "array") return payloadFromJson(val.is_array() ? val : Json::array());
  if (key == "record") {
    if (!val.is_object()) throw Error("MalformedPayload", "record payload must be an object");
    return Record{val};
  }
  if (key == "blobRef") return BlobRef{val.at("digest").get<std::string>(), val.at("length").get<std::uint64_t>()};
  throw Error("MalformedPayload", "unknown payload kind '" + key + "'");
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.append(s);
}

void ByteReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) throw Error("MalformedFrame", "truncated binary frame");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const auto n = u32();
  need(n);
  std::string s(data_.substr(pos_, n));
  pos_ += n;
  return s;
}

void encodePayload(ByteWriter& w, const Payload& p) {
  std::visit(
      [&w](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          w.u8(static_cast<std::uint8_t>(Kind::Scalar));
          w.f64(v);
        } else if constexpr (std::is_same_v<T, Array>) {
          w.u8(static_cast<std::uint8_t>(Kind::Array));
          w.u64(v.size());
          for (double x : v) w.f64(x);
        } else if constexpr (std::is_same_v<T, Record>) {
          w.u8(static_cast<std::uint8_t>(Kind::Record));
          w.str(canonicalDump(v.fields));
        } else {
          w.u8(static_cast<std::uint8_t>(Kind::Blob));
          w.str(v.digest);
          w.u64(v.length);
        }
      },
      p);
}

Payload decodePayload(ByteReader& r) {
  switch (static_cast<Kind>(r.u8())) {
  case Kind::Scalar: return r.f64();
  case Kind::Array: {
    const auto n = r.u64();
    Array a;
    a.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) a.push_back(r.f64());
    return a;
  }
  case Kind::Record: return Record{Json::parse(r.str())};
  case Kind::Blob: {
    BlobRef b;
    b.digest = r.str();
    b.length = r.u64();
    return b;
  }
  }
  throw Error("MalformedFrame", "unknown payload tag");
}

void encodeUnit(ByteWriter& w, const DataUnit& u) {
  w.u64(u.seq);
  w.str(u.provId);
  w.str(canonicalDump(u.metadata));
  encodePayload(w, u.payload);
}

DataUnit decodeUnit(ByteReader& r) {
  DataUnit u;
  u.seq = r.u64();
  u.provId = r.str();
  u.metadata = Json::parse(r.str());
  u.payload = decodePayload(r);
  return u;
}

std::string payloadDigest(const Payload& p) {
  ByteWriter w;
  encodePayload(w, p);
  return sha256Hex(w.bytes());
}

} // namespace verce::dataflow
