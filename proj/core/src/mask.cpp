#include "psg/mask.hpp"

#include "psg/errors.hpp"

#include <string>

namespace psg {

std::size_t Mask::area() const {
    std::size_t n = 0;
    for (std::uint8_t v : data) n += (v != 0) ? 1 : 0;
    return n;
}

bool Mask::binary() const {
    for (std::uint8_t v : data) {
        if (v > 1) return false;
    }
    return true;
}

RleMask encode_rle(const Mask& mask) {
    if (!mask.binary()) throw FormatError("encode_rle: mask is not binary");
    RleMask rle;
    rle.height = mask.height;
    rle.width = mask.width;
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (std::uint8_t v : mask.data) {
        if (v == current) {
            ++run;
        } else {
            rle.runs.push_back(run);
            current = v;
            run = 1;
        }
    }
    rle.runs.push_back(run);
    if (mask.data.empty()) rle.runs.assign({0});
    return rle;
}

Mask decode_rle(const RleMask& rle) {
    std::uint64_t total = 0;
    for (std::uint32_t r : rle.runs) total += r;
    if (total != static_cast<std::uint64_t>(rle.height) * rle.width) {
        throw FormatError("decode_rle: runs sum to " + std::to_string(total) + ", expected " +
                          std::to_string(rle.height * rle.width) + " for " +
                          std::to_string(rle.height) + "x" + std::to_string(rle.width));
    }
    Mask mask(rle.height, rle.width);
    std::size_t at = 0;
    std::uint8_t value = 0;
    for (std::uint32_t r : rle.runs) {
        for (std::uint32_t i = 0; i < r; ++i) mask.data[at++] = value;
        value = static_cast<std::uint8_t>(1 - value);
    }
    return mask;
}

} // namespace psg
