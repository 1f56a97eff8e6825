#include "psg/corpus_io.hpp"

#include "psg/errors.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace psg {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'P', 'S', 'G', 'C'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc_of(const std::string& bytes) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
                static_cast<uInt>(bytes.size())));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::string& bytes, std::size_t at = 0) : bytes_(bytes), at_(at) {}

    std::uint16_t u16() {
        need(2);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + at_);
        at_ += 2;
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }

    std::uint32_t u32() {
        need(4);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + at_);
        at_ += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) |
               (static_cast<std::uint32_t>(p[3]) << 24);
    }

    double f64() {
        need(8);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + at_);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        at_ += 8;
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    std::string raw(std::size_t len) {
        need(len);
        std::string out = bytes_.substr(at_, len);
        at_ += len;
        return out;
    }

    std::size_t pos() const { return at_; }
    bool at_end() const { return at_ == bytes_.size(); }

private:
    void need(std::size_t len) const {
        if (at_ + len > bytes_.size()) throw FormatError("corpus: truncated file");
    }
    const std::string& bytes_;
    std::size_t at_;
};

std::string encode_record(const Scene& scene) {
    std::string body;
    if (scene.id.size() > std::numeric_limits<std::uint16_t>::max())
        throw FormatError("scene id too long");
    put_u16(body, static_cast<std::uint16_t>(scene.id.size()));
    body.append(scene.id);
    put_u16(body, static_cast<std::uint16_t>(scene.masks.size()));
    put_u16(body, static_cast<std::uint16_t>(scene.triplets.size()));
    for (double v : scene.features.data()) put_f64(body, v);
    for (const Mask& m : scene.masks) {
        const RleMask rle = encode_rle(m);
        put_u32(body, static_cast<std::uint32_t>(rle.runs.size()));
        for (std::uint32_t r : rle.runs) put_u32(body, r);
    }
    for (std::uint16_t label : scene.labels) put_u16(body, label);
    for (const Triplet& t : scene.triplets) {
        put_u16(body, t.subject);
        put_u16(body, t.object);
        put_u16(body, t.predicate);
    }
    return body;
}

Scene decode_record(const std::string& body, const CorpusConfig& config) {
    Reader r(body);
    Scene scene;
    const std::uint16_t id_len = r.u16();
    scene.id = r.raw(id_len);
    const std::uint16_t n = r.u16();
    const std::uint16_t n_triplets = r.u16();

    const std::size_t numel = config.height * config.width * config.channels;
    std::vector<double> fdata(numel);
    for (double& v : fdata) v = r.f64();
    scene.features = Array({config.height, config.width, config.channels}, std::move(fdata));

    scene.masks.reserve(n);
    for (std::uint16_t k = 0; k < n; ++k) {
        RleMask rle;
        rle.height = config.height;
        rle.width = config.width;
        const std::uint32_t run_count = r.u32();
        rle.runs.reserve(run_count);
        for (std::uint32_t i = 0; i < run_count; ++i) rle.runs.push_back(r.u32());
        scene.masks.push_back(decode_rle(rle));
    }
    scene.labels.reserve(n);
    for (std::uint16_t k = 0; k < n; ++k) scene.labels.push_back(r.u16());
    scene.triplets.reserve(n_triplets);
    for (std::uint16_t k = 0; k < n_triplets; ++k) {
        Triplet t;
        t.subject = r.u16();
        t.object = r.u16();
        t.predicate = r.u16();
        scene.triplets.push_back(t);
    }
    if (!r.at_end()) throw FormatError("scene '" + scene.id + "': trailing bytes in record");
    return scene;
}

} // namespace

std::string corpus_config_json(const CorpusConfig& c) {
    json j;
    j["num_scenes"] = c.num_scenes;
    j["height"] = c.height;
    j["width"] = c.width;
    j["channels"] = c.channels;
    j["min_objects"] = c.min_objects;
    j["max_objects"] = c.max_objects;
    j["object_classes"] = c.object_classes;
    j["predicates"] = c.predicates;
    j["predicate_weights"] = c.predicate_weights;
    j["context_mode"] = c.context_mode;
    j["ambiguity_rate"] = c.ambiguity_rate;
    j["pair_density"] = c.pair_density;
    j["primary_share"] = c.primary_share;
    j["feature_noise"] = c.feature_noise;
    j["patches"] = c.patches;
    j["seed"] = c.seed;
    return j.dump();
}

CorpusConfig corpus_config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("corpus config: bad JSON: ") + e.what());
    }
    try {
        CorpusConfig c;
        c.num_scenes = j.at("num_scenes").get<std::size_t>();
        c.height = j.at("height").get<std::size_t>();
        c.width = j.at("width").get<std::size_t>();
        c.channels = j.at("channels").get<std::size_t>();
        c.min_objects = j.at("min_objects").get<std::size_t>();
        c.max_objects = j.at("max_objects").get<std::size_t>();
        c.object_classes = j.at("object_classes").get<std::size_t>();
        c.predicates = j.at("predicates").get<std::size_t>();
        c.predicate_weights = j.at("predicate_weights").get<std::vector<double>>();
        c.context_mode = j.at("context_mode").get<bool>();
        c.ambiguity_rate = j.at("ambiguity_rate").get<double>();
        c.pair_density = j.at("pair_density").get<double>();
        c.primary_share = j.at("primary_share").get<double>();
        c.feature_noise = j.at("feature_noise").get<double>();
        c.patches = j.at("patches").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("corpus config: missing field: ") + e.what());
    }
}

std::string save_corpus(const std::string& path, const CorpusConfig& config,
                        const std::vector<Scene>& scenes) {
    std::vector<std::string> records;
    records.reserve(scenes.size());
    std::uint32_t content_crc = 0;
    for (const Scene& s : scenes) {
        records.push_back(encode_record(s));
        content_crc = ::crc32(content_crc,
                              reinterpret_cast<const Bytef*>(records.back().data()),
                              static_cast<uInt>(records.back().size()));
    }
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "psgc-%08x", content_crc);
    const std::string corpus_id = idbuf;

    json manifest;
    manifest["format"] = "psgc";
    manifest["corpus_id"] = corpus_id;
    manifest["config"] = json::parse(corpus_config_json(config));
    json index = json::array();
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        json entry;
        entry["id"] = scenes[i].id;
        entry["objects"] = scenes[i].masks.size();
        entry["triplets"] = scenes[i].triplets.size();
        entry["bytes"] = records[i].size();
        json hidden = json::array();
        for (const Triplet& t : scenes[i].hidden_triplets)
            hidden.push_back({t.subject, t.object, t.predicate});
        entry["hidden"] = hidden;
        index.push_back(std::move(entry));
    }
    manifest["scenes"] = std::move(index);
    const std::string manifest_bytes = manifest.dump();

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(manifest_bytes.size()));
    out.append(manifest_bytes);
    put_u32(out, crc_of(out)); // covers magic, version, length and manifest
    for (const std::string& body : records) {
        put_u32(out, static_cast<std::uint32_t>(body.size()));
        out.append(body);
        put_u32(out, crc_of(body));
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw FormatError("cannot open '" + path + "' for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    file.flush();
    if (!file) throw FormatError("failed writing '" + path + "'");
    return corpus_id;
}

Corpus load_corpus(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw FormatError("cannot open corpus '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

    Reader header(bytes);
    if (header.raw(4) != std::string(kMagic, 4)) throw FormatError("corpus: bad magic");
    const std::uint32_t version = header.u32();
    if (version != kVersion) {
        throw FormatError("corpus: unsupported version " + std::to_string(version));
    }
    const std::uint32_t manifest_len = header.u32();
    const std::string manifest_bytes = header.raw(manifest_len);
    const std::uint32_t stored_header_crc = header.u32();
    if (stored_header_crc != crc_of(bytes.substr(0, 12 + manifest_len))) {
        throw FormatError("corpus: manifest checksum mismatch");
    }

    json manifest;
    try {
        manifest = json::parse(manifest_bytes);
    } catch (const json::exception& e) {
        throw FormatError(std::string("corpus: bad manifest JSON: ") + e.what());
    }

    Corpus corpus;
    try {
        corpus.corpus_id = manifest.at("corpus_id").get<std::string>();
        corpus.config = corpus_config_from_json(manifest.at("config").dump());
    } catch (const json::exception& e) {
        throw FormatError(std::string("corpus: bad manifest: ") + e.what());
    }
    const json& scene_index = manifest.at("scenes");

    Reader r(bytes, header.pos());
    std::size_t record_no = 0;
    while (!r.at_end()) {
        if (record_no >= scene_index.size())
            throw FormatError("corpus: more records than manifest entries");
        const std::uint32_t len = r.u32();
        const std::string body = r.raw(len);
        const std::uint32_t stored_crc = r.u32();
        const std::string manifest_id =
            scene_index[record_no].value("id", "record " + std::to_string(record_no));
        if (stored_crc != crc_of(body)) {
            throw FormatError("corpus: checksum mismatch in record " + std::to_string(record_no) +
                              " ('" + manifest_id + "')");
        }
        Scene scene = decode_record(body, corpus.config);
        if (scene.id != manifest_id) {
            throw FormatError("corpus: record " + std::to_string(record_no) +
                              " id mismatch: '" + scene.id + "' vs manifest '" + manifest_id +
                              "'");
        }
        for (const json& h : scene_index[record_no].at("hidden")) {
            scene.hidden_triplets.push_back({h.at(0).get<std::uint16_t>(),
                                             h.at(1).get<std::uint16_t>(),
                                             h.at(2).get<std::uint16_t>()});
        }
        validate_scene(scene, corpus.config.object_classes, corpus.config.predicates);
        corpus.scenes.push_back(std::move(scene));
        ++record_no;
    }
    if (record_no != scene_index.size()) {
        throw FormatError("corpus: manifest lists " + std::to_string(scene_index.size()) +
                          " scenes but file has " + std::to_string(record_no));
    }
    return corpus;
}

} // namespace psg
