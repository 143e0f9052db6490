#pragma once

#include <string>

#include "edr/tape.hpp"

namespace edr {

/// Binary parameter snapshot. Layout: the 8-byte magic "EDRNMT01"; a
/// little-endian u32 tensor count; per tensor a u32 name length, the name
/// bytes, a u32 rank, and rank u64 extents; then every tensor's values as
/// little-endian IEEE-754 doubles, in manifest order. The map's name ordering
/// makes the bytes a pure function of the parameter values.
void save_checkpoint(const std::string& path, const ParameterMap& params);

/// Throws CheckpointError on unreadable, truncated, or malformed files.
ParameterMap load_checkpoint(const std::string& path);

}  // namespace edr
