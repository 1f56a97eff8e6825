#include "psg/checkpoint.hpp"

#include "psg/errors.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>

namespace psg {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'P', 'S', 'G', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_u32(const std::string& bytes, std::size_t& at) {
    if (at + 4 > bytes.size()) throw FormatError("checkpoint: truncated file");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + at);
    at += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t crc_of(const char* data, std::size_t len) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

std::string payload_of(const Parameter& p) {
    std::string bytes;
    bytes.reserve(p.value.numel() * 8);
    for (double v : p.value.data()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    return bytes;
}

} // namespace

std::string model_config_json(const ModelConfig& c) {
    json j;
    j["kind"] = to_string(c.kind);
    j["hidden"] = c.hidden;
    j["patches"] = c.patches;
    j["layers"] = c.layers;
    j["heads"] = c.heads;
    j["key_dim"] = c.key_dim;
    j["predicates"] = c.predicates;
    j["object_classes"] = c.object_classes;
    j["ffn_hidden"] = c.ffn_hidden;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("model config: bad JSON: ") + e.what());
    }
    try {
        ModelConfig c;
        c.kind = model_kind_from_string(j.at("kind").get<std::string>());
        c.hidden = j.at("hidden").get<std::size_t>();
        c.patches = j.at("patches").get<std::size_t>();
        c.layers = j.at("layers").get<std::size_t>();
        c.heads = j.at("heads").get<std::size_t>();
        c.key_dim = j.at("key_dim").get<std::size_t>();
        c.predicates = j.at("predicates").get<std::size_t>();
        c.object_classes = j.at("object_classes").get<std::size_t>();
        c.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("model config: missing field: ") + e.what());
    }
}

std::string save_checkpoint(const std::string& path, const RelationModel& model) {
    const ParamStore& params = model.params();

    std::vector<std::string> payloads;
    payloads.reserve(params.size());
    std::uint32_t content_crc = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        payloads.push_back(payload_of(params[i]));
        content_crc = ::crc32(content_crc, reinterpret_cast<const Bytef*>(payloads.back().data()),
                              static_cast<uInt>(payloads.back().size()));
    }
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "ckpt-%08x", content_crc);
    const std::string checkpoint_id = idbuf;

    json meta;
    meta["format"] = "psgw";
    meta["checkpoint_id"] = checkpoint_id;
    meta["model"] = json::parse(model_config_json(model.config()));
    json index = json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        json entry;
        entry["name"] = params[i].name;
        entry["shape"] = params[i].value.shape();
        index.push_back(std::move(entry));
    }
    meta["params"] = std::move(index);
    const std::string meta_bytes = meta.dump();

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(meta_bytes.size()));
    out.append(meta_bytes);
    put_u32(out, crc_of(out.data(), out.size()));
    for (const std::string& payload : payloads) {
        out.append(payload);
        put_u32(out, crc_of(payload.data(), payload.size()));
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw FormatError("cannot open '" + path + "' for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    file.flush();
    if (!file) throw FormatError("failed writing '" + path + "'");
    return checkpoint_id;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw FormatError("cannot open checkpoint '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

    std::size_t at = 0;
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("checkpoint: bad magic");
    at = 4;
    const std::uint32_t version = read_u32(bytes, at);
    if (version != kVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t meta_len = read_u32(bytes, at);
    if (at + meta_len > bytes.size()) throw FormatError("checkpoint: truncated meta");
    const std::string meta_bytes = bytes.substr(at, meta_len);
    at += meta_len;
    const std::uint32_t stored_meta_crc = read_u32(bytes, at);
    if (stored_meta_crc != crc_of(bytes.data(), 12 + meta_len))
        throw FormatError("checkpoint: meta checksum mismatch");

    json meta;
    try {
        meta = json::parse(meta_bytes);
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: bad meta JSON: ") + e.what());
    }

    ModelConfig config = model_config_from_json(meta.at("model").dump());
    RelationModel model(config, 0);
    ParamStore& params = model.params();

    const json& index = meta.at("params");
    if (index.size() != params.size())
        throw FormatError("checkpoint: parameter count mismatch for this model config");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = params[i];
        const std::string name = index[i].at("name").get<std::string>();
        const auto shape = index[i].at("shape").get<std::vector<std::size_t>>();
        if (name != p.name || shape != p.value.shape()) {
            throw FormatError("checkpoint: parameter '" + name + "' does not match model's '" +
                              p.name + "' (" + shape_str(shape) + " vs " +
                              shape_str(p.value) + ")");
        }
        const std::size_t payload_len = p.value.numel() * 8;
        if (at + payload_len + 4 > bytes.size())
            throw FormatError("checkpoint: truncated payload for '" + name + "'");
        const std::uint32_t payload_crc = crc_of(bytes.data() + at, payload_len);
        for (std::size_t e = 0; e < p.value.numel(); ++e) {
            std::uint64_t bits = 0;
            const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + at + e * 8);
            for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(src[b]) << (8 * b);
            double v;
            std::memcpy(&v, &bits, sizeof v);
            p.value[e] = v;
        }
        at += payload_len;
        const std::uint32_t stored_crc = read_u32(bytes, at);
        if (stored_crc != payload_crc)
            throw FormatError("checkpoint: checksum mismatch in parameter '" + name + "'");
    }
    if (at != bytes.size()) throw FormatError("checkpoint: trailing bytes");

    return LoadedCheckpoint{std::move(model),
                            meta.at("checkpoint_id").get<std::string>()};
}

} // namespace psg
