#pragma once

#include <cstdint>
#include <string>

#include "mvod/autoencoder.hpp"

namespace mvod {

// Serialized training state: every parameter tensor with its shape, the full
// Adam state, and the resolved configuration (text plus hash) that produced
// it. Binary container, little-endian, versioned; format changes bump
// kCheckpointVersion.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    AutoencoderStack stack;
    AdamState adam;
    std::string config_text;
    std::uint64_t config_hash = 0;
};

void save_checkpoint(const std::string& path, const AutoencoderStack& stack,
                     const AdamState& adam, const std::string& config_text,
                     std::uint64_t config_hash);

// Throws ConfigError on a bad magic, an unsupported version, or truncation.
Checkpoint load_checkpoint(const std::string& path);

} // namespace mvod
