#pragma once

#include <string>

#include "pare/train.hpp"

namespace pare {

// Single binary container: versioned header, config as canonical JSON text,
// then named little-endian float32 tensor records (parameters, optimizer
// velocities, prototype banks, warm-up buffers). Layout documented in
// docs/formats.md; reload reproduces forward outputs bit-for-bit.
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace pare
