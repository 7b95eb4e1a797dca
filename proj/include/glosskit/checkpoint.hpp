#pragma once

#include <string>

#include <json.hpp>

#include "glosskit/encoder.hpp"

namespace glosskit {

// Checkpoint file layout:
//   bytes 0..3   magic "GLSK"
//   bytes 4..7   format version, little-endian u32 (currently 1)
//   bytes 8..15  header byte length, little-endian u64
//   header       UTF-8 JSON: {"config": ..., "extras": ...,
//                "tensors": [{"name", "shape", "offset"}, ...]}
//   payload      raw little-endian float32 arrays in manifest order;
//                offsets are relative to the payload start
//
// Weights are stored as float32 regardless of the in-memory scalar type, so
// a save/load round trip of float parameters is bit-exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json encoder_config_to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::string& path, const EncoderParamsF& params,
                     const nlohmann::json& extras = nlohmann::json::object());

struct Checkpoint {
    EncoderParamsF params;
    nlohmann::json extras;
};

Checkpoint load_checkpoint(const std::string& path);

} // namespace glosskit
