// Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#include "binsim/dataset.hpp"

#include <cstring>
#include <fstream>

#include "binsim/rng.hpp"

namespace binsim {

namespace {

constexpr char kMagic[4] = {'B', 'N', 'N', 'D'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 15;

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16le(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

std::vector<std::uint8_t> serialize_dataset(const Dataset& ds) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + ds.pixels.size() + ds.labels.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    put_u32le(out, static_cast<std::uint32_t>(ds.size()));
    put_u16le(out, ds.height);
    put_u16le(out, ds.width);
    out.push_back(ds.channels);
    out.push_back(ds.num_classes);
    const std::size_t sb = ds.sample_bytes();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out.insert(out.end(), ds.sample(i), ds.sample(i) + sb);
        out.push_back(ds.labels[i]);
    }
    return out;
}

Dataset parse_dataset(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("BNND: bad magic at offset 0");
    if (bytes.size() < kHeaderBytes)
        throw FormatError("BNND: truncated header at offset " + std::to_string(bytes.size()) +
                          " (need " + std::to_string(kHeaderBytes) + " bytes)");
    if (bytes[4] != kVersion)
        throw FormatError("BNND: unsupported version " + std::to_string(bytes[4]) +
                          " at offset 4");

    Dataset ds;
    const std::uint32_t n = get_u32le(bytes.data() + 5);
    ds.height = get_u16le(bytes.data() + 9);
    ds.width = get_u16le(bytes.data() + 11);
    ds.channels = bytes[13];
    ds.num_classes = bytes[14];
    if (ds.num_classes == 0) throw FormatError("BNND: num_classes is 0 at offset 14");
    if (ds.sample_bytes() == 0 && n > 0)
        throw FormatError("BNND: zero-sized samples with nonzero record count at offset 9");

    const std::size_t record = ds.sample_bytes() + 1;
    const std::size_t expected = kHeaderBytes + static_cast<std::size_t>(n) * record;
    if (bytes.size() < expected)
        throw FormatError("BNND: truncated payload at offset " + std::to_string(bytes.size()) +
                          " (expected " + std::to_string(expected) + " bytes)");
    if (bytes.size() > expected)
        throw FormatError("BNND: trailing bytes at offset " + std::to_string(expected));

    ds.pixels.resize(static_cast<std::size_t>(n) * ds.sample_bytes());
    ds.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::size_t off = kHeaderBytes + static_cast<std::size_t>(i) * record;
        std::memcpy(ds.pixels.data() + static_cast<std::size_t>(i) * ds.sample_bytes(),
                    bytes.data() + off, ds.sample_bytes());
        const std::uint8_t label = bytes[off + ds.sample_bytes()];
        if (label >= ds.num_classes)
            throw FormatError("BNND: label " + std::to_string(label) + " >= num_classes " +
                              std::to_string(ds.num_classes) + " at offset " +
                              std::to_string(off + ds.sample_bytes()));
        ds.labels[i] = label;
    }
    return ds;
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    Dataset ds = parse_dataset(bytes);
    ds.split = path;
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_dataset(ds);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write dataset file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to dataset file: " + path);
}

Dataset synthesize_dataset(std::uint64_t seed, std::size_t n, int classes, int height, int width,
                           int channels, double noise_rate) {
    if (classes < 2) throw ConfigError("synthesize_dataset: need at least 2 classes");
    if (classes > 255) throw ConfigError("synthesize_dataset: at most 255 classes");

    Dataset ds;
    ds.height = static_cast<std::uint16_t>(height);
    ds.width = static_cast<std::uint16_t>(width);
    ds.channels = static_cast<std::uint8_t>(channels);
    ds.num_classes = static_cast<std::uint8_t>(classes);
    ds.split = "synthetic";

    CountingRng rng(seed);
    const std::size_t sb = ds.sample_bytes();
    std::vector<std::uint8_t> templates(static_cast<std::size_t>(classes) * sb);
    for (auto& px : templates) px = rng.uniform_int(2) ? 255 : 0;

    ds.pixels.resize(n * sb);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % static_cast<std::size_t>(classes));
        ds.labels[i] = static_cast<std::uint8_t>(cls);
        const std::uint8_t* tpl = templates.data() + static_cast<std::size_t>(cls) * sb;
        std::uint8_t* dst = ds.pixels.data() + i * sb;
        for (std::size_t j = 0; j < sb; ++j) {
            const bool flip = rng.uniform_real() < noise_rate;
            dst[j] = flip ? static_cast<std::uint8_t>(255 - tpl[j]) : tpl[j];
        }
    }
    return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, std::size_t n_head) {
    if (n_head > ds.size())
        throw ConfigError("split_dataset: head size " + std::to_string(n_head) +
                          " exceeds dataset size " + std::to_string(ds.size()));
    Dataset head, tail;
    head.height = tail.height = ds.height;
    head.width = tail.width = ds.width;
    head.channels = tail.channels = ds.channels;
    head.num_classes = tail.num_classes = ds.num_classes;
    head.split = "train";
    tail.split = "validation";
    const std::size_t sb = ds.sample_bytes();
    head.pixels.assign(ds.pixels.begin(), ds.pixels.begin() + static_cast<std::ptrdiff_t>(n_head * sb));
    head.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(n_head));
    tail.pixels.assign(ds.pixels.begin() + static_cast<std::ptrdiff_t>(n_head * sb), ds.pixels.end());
    tail.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(n_head), ds.labels.end());
    return {std::move(head), std::move(tail)};
}

}  // namespace binsim
