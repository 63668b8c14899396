#pragma once

namespace pkghall {

inline constexpr const char* toolkit_version = "0.1.0";

// Schema version stamped into every persisted artifact (transcripts, run
// records, datasets, reports, config). Bump on breaking layout changes.
inline constexpr int schema_version = 1;

} // namespace pkghall
