#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace psg {

/// Binary H x W mask, row-major, values in {0, 1}.
struct Mask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(std::size_t h, std::size_t w) : height(h), width(w), data(h * w, 0) {}

    std::uint8_t at(std::size_t r, std::size_t c) const { return data[r * width + c]; }
    std::uint8_t& at(std::size_t r, std::size_t c) { return data[r * width + c]; }

    std::size_t area() const;
    bool empty_mask() const { return area() == 0; }
    bool binary() const;

    bool operator==(const Mask&) const = default;
};

/// Run-length encoding over row-major order. Runs alternate values starting
/// with 0; the first run counts leading zeros and may be 0. sum(runs) == H*W.
struct RleMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint32_t> runs;

    bool operator==(const RleMask&) const = default;
};

RleMask encode_rle(const Mask& mask);

/// Exact inverse of encode_rle. Throws FormatError when the runs do not sum
/// to height*width.
Mask decode_rle(const RleMask& rle);

} // namespace psg
