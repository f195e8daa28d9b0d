#pragma once

#include <filesystem>
#include <iosfwd>

#include "epnet/trainer.hpp"

namespace epnet {

// Container layout:
//   "EPCK" | u32 header_bytes | JSON header | float64 sections | u32 CRC32
// The JSON header carries version, dimensions, assignment, configuration and
// the offset/count of every section. Sections are raw little-endian IEEE
// doubles; matrices are stored column-major. The CRC32 covers the header and
// section bytes.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
void save_checkpoint(const Checkpoint& ckpt, std::ostream& out);

// Throws VersionError for an unsupported version and CorruptionError for
// truncated or checksum-failing files.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint load_checkpoint(std::istream& in);

}  // namespace epnet
