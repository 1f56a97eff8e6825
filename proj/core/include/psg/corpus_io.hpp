#pragma once

#include "psg/scene.hpp"

#include <string>
#include <vector>

namespace psg {

struct Corpus {
    CorpusConfig config;
    std::vector<Scene> scenes;
    std::string corpus_id;
};

/// Writes a .psgc corpus file: "PSGC" magic, u32 version, CRC-protected JSON
/// manifest (config + scene index + hidden-relation records), then one
/// CRC-protected binary record per scene (features as little-endian f64,
/// masks as RLE runs, labels and triplets as u16). Returns the corpus id.
std::string save_corpus(const std::string& path, const CorpusConfig& config,
                        const std::vector<Scene>& scenes);

/// Exact inverse of save_corpus. Throws FormatError on version mismatch or
/// any checksum failure, naming the offending scene where possible.
Corpus load_corpus(const std::string& path);

/// Canonical JSON for a corpus config (used by the manifest and run snapshots).
std::string corpus_config_json(const CorpusConfig& config);
CorpusConfig corpus_config_from_json(const std::string& json_text);

} // namespace psg
