#include "verce/seismo/trace_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace verce::seismo {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "trace encoding assumes a little-endian host");

Error malformed(const std::string& msg) { return Error("MalformedTrace", msg); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("PathUnreadable", "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const fs::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("PathUnreadable", "cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("PathUnreadable", "short write to " + p.string());
}

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parseNumber(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (trim(s.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw malformed("line " + std::to_string(line) + ": '" + s + "' is not a number");
}

} // namespace

std::string encodeTrace(const Trace& t) {
  const std::string header = t.header().dump();
  std::string out(kTraceMagic);
  const auto len = static_cast<std::uint32_t>(header.size());
  char lenBytes[4];
  std::memcpy(lenBytes, &len, 4);
  out.append(lenBytes, 4);
  out += header;
  const std::size_t at = out.size();
  out.resize(at + 8 * t.samples.size());
  if (!t.samples.empty()) std::memcpy(out.data() + at, t.samples.data(), 8 * t.samples.size());
  return out;
}

Trace decodeTrace(std::string_view bytes) {
  if (bytes.size() < 8 || bytes.substr(0, 4) != kTraceMagic) throw malformed("missing VTRC magic");
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 4, 4);
  if (bytes.size() - 8 < len) throw malformed("header truncated");
  Json header;
  try {
    header = Json::parse(bytes.substr(8, len));
  } catch (const Json::exception& e) {
    throw malformed(std::string("header is not JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains("npts") || !header.at("npts").is_number_unsigned()) {
    throw malformed("header lacks a sample count");
  }
  const auto npts = header.at("npts").get<std::uint64_t>();
  const std::size_t body = bytes.size() - 8 - len;
  if (body / 8 < npts) {
    throw malformed("samples truncated: header says " + std::to_string(npts) + ", file holds " + std::to_string(body / 8));
  }
  if (body != 8 * npts) throw malformed(std::to_string(body - 8 * npts) + " trailing bytes after samples");
  Array s(npts);
  if (npts) std::memcpy(s.data(), bytes.data() + 8 + len, 8 * npts);
  try {
    return Trace::fromHeader(header, std::move(s));
  } catch (const Error& e) {
    throw malformed(e.what());
  }
}

Trace readTraceFile(const fs::path& p) { return decodeTrace(slurp(p)); }

void writeTraceFile(const fs::path& p, const Trace& t) { spill(p, encodeTrace(t)); }

fs::path csvSidecar(const fs::path& csv) {
  fs::path side = csv;
  side.replace_extension(".meta.json");
  return side;
}

Trace readCsvTrace(const fs::path& csv) {
  const std::string text = slurp(csv);
  const auto sidePath = csvSidecar(csv);
  if (!fs::exists(sidePath)) throw malformed("missing sidecar " + sidePath.filename().string());
  Json meta;
  try {
    meta = Json::parse(slurp(sidePath));
  } catch (const Json::exception& e) {
    throw malformed("sidecar is not JSON: " + std::string(e.what()));
  }
  if (!meta.is_object()) throw malformed("sidecar must be an object");

  std::vector<double> times, values;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(lines, line)) {
    ++lineNo;
    line = trim(line);
    if (line.empty()) continue;
    if (lineNo == 1 && line == "time,value") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw malformed("line " + std::to_string(lineNo) + ": expected 'time,value'");
    }
    times.push_back(parseNumber(trim(line.substr(0, comma)), lineNo));
    values.push_back(parseNumber(trim(line.substr(comma + 1)), lineNo));
  }
  if (values.empty()) throw malformed("no samples");

  double dt;
  if (times.size() >= 2) {
    dt = times[1] - times[0];
    for (std::size_t i = 1; i < times.size(); ++i) {
      const double step = times[i] - times[i - 1];
      if (!(std::fabs(step - dt) <= 1e-6 * std::fabs(dt))) throw malformed("row " + std::to_string(i + 1) + " breaks the uniform time grid");
    }
  } else if (meta.contains("dt") && meta.at("dt").is_number()) {
    dt = meta.at("dt").get<double>();
  } else {
    throw malformed("a single row needs dt in the sidecar");
  }

  Json header = meta;
  header["dt"] = dt;
  header["startTime"] = times.front();
  try {
    return Trace::fromHeader(header, std::move(values));
  } catch (const Error& e) {
    throw malformed(e.what());
  }
}

void writeCsvTrace(const fs::path& csv, const Trace& t) {
  std::ostringstream out;
  out.precision(17);
  out << "time,value\n";
  for (std::size_t i = 0; i < t.samples.size(); ++i) {
    out << t.startTime + static_cast<double>(i) * t.dt << ',' << t.samples[i] << '\n';
  }
  spill(csv, out.str());
  Json meta = {{"net", t.net}, {"sta", t.sta}, {"cha", t.cha}, {"units", t.units}, {"dt", t.dt}};
  spill(csvSidecar(csv), meta.dump(2));
}

} // namespace verce::seismo
