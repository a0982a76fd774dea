#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "verce/seismo/types.hpp"

namespace verce::seismo {

/// `.trc` layout: the 4 bytes "VTRC", a little-endian u32 header length, the
/// header as JSON text (Trace::header, including npts), then npts float64
/// little-endian samples. Nothing may follow.
inline constexpr std::string_view kTraceMagic = "VTRC";

std::string encodeTrace(const Trace& t);
/// Errors: MalformedTrace (bad magic, truncated or trailing data, bad header).
Trace decodeTrace(std::string_view bytes);

/// Errors: PathUnreadable, MalformedTrace.
Trace readTraceFile(const std::filesystem::path& p);
/// Errors: PathUnreadable.
void writeTraceFile(const std::filesystem::path& p, const Trace& t);

/// Sidecar of `x.csv` is `x.meta.json`: {net, sta, cha, units?, dt?}.
std::filesystem::path csvSidecar(const std::filesystem::path& csv);

/// `time,value` rows (an optional `time,value` header line is skipped) on a
/// uniform time grid; dt comes from the rows, or from the sidecar when there
/// is a single row. Errors: PathUnreadable, MalformedTrace.
Trace readCsvTrace(const std::filesystem::path& csv);
void writeCsvTrace(const std::filesystem::path& csv, const Trace& t);

} // namespace verce::seismo
