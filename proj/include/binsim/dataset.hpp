// Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "binsim/errors.hpp"

namespace binsim {

// Small labeled image set. Pixels are stored raw (u8, H*W*C per sample, HWC
// order) so file round-trips stay byte-exact; consumers scale to [-1, 1].
struct Dataset {
    std::uint16_t height = 0;
    std::uint16_t width = 0;
    std::uint8_t channels = 0;
    std::uint8_t num_classes = 0;
    std::vector<std::uint8_t> pixels;  // size() * sample_bytes()
    std::vector<std::uint8_t> labels;  // size()
    std::string split;                 // runtime tag, not serialized

    std::size_t size() const { return labels.size(); }
    std::size_t sample_bytes() const {
        return static_cast<std::size_t>(height) * width * channels;
    }
    const std::uint8_t* sample(std::size_t i) const { return pixels.data() + i * sample_bytes(); }

    bool same_data(const Dataset& other) const {
        return height == other.height && width == other.width && channels == other.channels &&
               num_classes == other.num_classes && pixels == other.pixels &&
               labels == other.labels;
    }
};

// BNND wire format: magic "BNND", u8 version=1, u32 LE N, u16 LE H, u16 LE W,
// u8 C, u8 num_classes, then N records of (H*W*C pixel bytes, 1 label byte).
std::vector<std::uint8_t> serialize_dataset(const Dataset& ds);
Dataset parse_dataset(const std::vector<std::uint8_t>& bytes);

Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& ds, const std::string& path);

// Class-conditional pattern data: each class is a fixed random binary
// template (pixel 0 or 255) with per-pixel flip noise. Labels are assigned
// round-robin so every prefix stays balanced. Deterministic per seed.
Dataset synthesize_dataset(std::uint64_t seed, std::size_t n, int classes, int height, int width,
                           int channels, double noise_rate = 0.1);

// Head/tail split preserving shape metadata (train/validation).
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, std::size_t n_head);

}  // namespace binsim
