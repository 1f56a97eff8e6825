#pragma once

#include "psg/model.hpp"

#include <string>

namespace psg {

/// Writes a versioned, CRC-protected checkpoint: "PSGW" magic, JSON meta
/// (model config + named parameter index), then one little-endian f64 payload
/// per parameter, each individually checksummed. Returns the checkpoint id.
std::string save_checkpoint(const std::string& path, const RelationModel& model);

struct LoadedCheckpoint {
    RelationModel model;
    std::string checkpoint_id;
};

/// Exact inverse of save_checkpoint; throws FormatError on version mismatch,
/// checksum failure or shape drift, naming the parameter involved.
LoadedCheckpoint load_checkpoint(const std::string& path);

std::string model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json_text);

} // namespace psg
