#pragma once

#include <cstdint>
#include <string>

#include "nmt/model.hpp"
#include "nmt/offsets.hpp"

namespace nmt {

// Binary model and offset files. Both formats are little-endian with float32
// tensor payloads and end in a CRC-32 of every preceding byte. Writes go to a
// temporary file that is renamed into place, so a crash cannot leave a
// half-written file under the final name.
//
// Checkpoint ("NMTB"): magic, format version, model config, tensor records in
// canonical (name-sorted) order, checksum.
//
// Offset file ("NMTO"): magic, format version, the checksum of the baseline
// checkpoint the offsets were trained against, offset records, checksum.
// Zero-kind records carry only the name and kind tag.

std::uint32_t crc32_bytes(const void* data, std::size_t len);

// Returns the checkpoint's checksum (also the offset-file binding value).
std::uint32_t save_checkpoint(const std::string& path, const ParameterSet& params);

struct LoadedCheckpoint {
  ParameterSet params;
  std::uint32_t checksum = 0;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

void save_offsets(const std::string& path, const OffsetSet& offsets,
                  std::uint32_t baseline_checksum);

struct LoadedOffsets {
  OffsetSet offsets;
  std::uint32_t baseline_checksum = 0;
};
LoadedOffsets load_offsets(const std::string& path);

// Guards composition: offsets may only be applied to the baseline checkpoint
// they were trained against, identified by its checksum.
void require_matching_baseline(const LoadedOffsets& offsets, std::uint32_t baseline_checksum);

}  // namespace nmt
