#pragma once

namespace microcav {

inline constexpr const char* version_string = "0.1.0";

// bumped when a file layout changes incompatibly
inline constexpr const char* trace_format = "microcav-trace/1";
inline constexpr const char* scan_format = "microcav-scan/1";
inline constexpr const char* table_format = "microcav-table/1";
inline constexpr const char* results_format = "microcav-results/1";

}  // namespace microcav
