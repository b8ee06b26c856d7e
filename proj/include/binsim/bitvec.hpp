// Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "binsim/errors.hpp"

namespace binsim {

// Bit-packed binary vector. Bit 1 encodes +1, bit 0 encodes -1; bits are
// packed little-endian within 64-bit words. Padding bits beyond length_bits
// are kept zero so complements only need masking in the last word.
class BitVector {
public:
    BitVector() = default;

    explicit BitVector(std::size_t length_bits)
        : words_((length_bits + 63) / 64, 0), length_bits_(length_bits) {}

    std::size_t length_bits() const { return length_bits_; }
    std::size_t word_count() const { return words_.size(); }
    const std::vector<std::uint64_t>& words() const { return words_; }

    bool get(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }

    void set(std::size_t i, bool value) {
        const std::uint64_t mask = std::uint64_t{1} << (i % 64);
        if (value)
            words_[i / 64] |= mask;
        else
            words_[i / 64] &= ~mask;
    }

    // Mask selecting the valid bits of the last word (all ones when the
    // length is a word multiple or the vector is empty).
    std::uint64_t tail_mask() const {
        const std::size_t rem = length_bits_ % 64;
        return rem == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << rem) - 1;
    }

    std::size_t popcount() const {
        std::size_t total = 0;
        for (std::uint64_t w : words_) total += static_cast<std::size_t>(std::popcount(w));
        return total;
    }

    friend bool operator==(const BitVector&, const BitVector&) = default;

private:
    std::vector<std::uint64_t> words_;
    std::size_t length_bits_ = 0;
};

// Match frequencies of the four bit combinations between two equal-length
// vectors: a = 1/1, b = 0/1, c = 1/0, d = 0/0. Always a+b+c+d == n.
struct QuadCounts {
    std::int64_t a = 0;
    std::int64_t b = 0;
    std::int64_t c = 0;
    std::int64_t d = 0;

    std::int64_t n() const { return a + b + c + d; }
    friend bool operator==(const QuadCounts&, const QuadCounts&) = default;
};

// Binarizes real values: bit i is 1 iff values[i] >= threshold, so an exact
// tie maps to +1.
template <typename Scalar>
BitVector pack_signs(std::span<const Scalar> values, Scalar threshold = Scalar(0)) {
    BitVector out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        if (values[i] >= threshold) out.set(i, true);
    return out;
}

template <typename Scalar>
BitVector pack_signs(const std::vector<Scalar>& values, Scalar threshold = Scalar(0)) {
    return pack_signs(std::span<const Scalar>(values.data(), values.size()), threshold);
}

namespace detail {
inline void require_same_length(const BitVector& x, const BitVector& y, const char* op) {
    if (x.length_bits() != y.length_bits())
        throw DimensionError(std::string(op) + ": length mismatch (" +
                             std::to_string(x.length_bits()) + " vs " +
                             std::to_string(y.length_bits()) + ")");
}
}  // namespace detail

// a = popcount(x & y), b = popcount(~x & y), c = popcount(x & ~y),
// d = popcount(~x & ~y); complements are computed once per word and masked in
// the tail so padding never leaks into d.
inline QuadCounts match_counts(const BitVector& x, const BitVector& y) {
    detail::require_same_length(x, y, "match_counts");
    QuadCounts counts;
    const std::size_t nw = x.word_count();
    for (std::size_t i = 0; i < nw; ++i) {
        const std::uint64_t xw = x.words()[i];
        const std::uint64_t yw = y.words()[i];
        const std::uint64_t mask = (i + 1 == nw) ? x.tail_mask() : ~std::uint64_t{0};
        const std::uint64_t nxw = ~xw & mask;
        const std::uint64_t nyw = ~yw & mask;
        counts.a += std::popcount(xw & yw);
        counts.b += std::popcount(nxw & yw);
        counts.c += std::popcount(xw & nyw);
        counts.d += std::popcount(nxw & nyw);
    }
    return counts;
}

// The +-1 dot product: 2*popcount(xnor(x,y)) - n, equal to (a+d)-(b+c).
inline std::int64_t xnor_dot(const BitVector& x, const BitVector& y) {
    detail::require_same_length(x, y, "xnor_dot");
    std::int64_t matches = 0;
    const std::size_t nw = x.word_count();
    for (std::size_t i = 0; i < nw; ++i) {
        const std::uint64_t mask = (i + 1 == nw) ? x.tail_mask() : ~std::uint64_t{0};
        matches += std::popcount(~(x.words()[i] ^ y.words()[i]) & mask);
    }
    return 2 * matches - static_cast<std::int64_t>(x.length_bits());
}

// Recovers the quad counts from the +-1 moments s = x.y, p = sum(x),
// q = sum(y) over a pair of length n:
//   a = (n+s+p+q)/4   d = (n+s-p-q)/4   b = (n-s-p+q)/4   c = (n-s+p-q)/4
// This is the closed form the float training path uses; it must agree with
// match_counts on any generating bit pair.
inline QuadCounts counts_from_moments(std::int64_t s, std::int64_t p, std::int64_t q,
                                      std::int64_t n) {
    const std::int64_t a4 = n + s + p + q;
    const std::int64_t d4 = n + s - p - q;
    const std::int64_t b4 = n - s - p + q;
    const std::int64_t c4 = n - s + p - q;
    auto bad = [](std::int64_t v) { return v < 0 || (v & 3) != 0; };
    if (bad(a4) || bad(b4) || bad(c4) || bad(d4))
        throw InvalidMomentsError("counts_from_moments: moments (s=" + std::to_string(s) +
                                  ", p=" + std::to_string(p) + ", q=" + std::to_string(q) +
                                  ", n=" + std::to_string(n) +
                                  ") do not correspond to any bit pair");
    return QuadCounts{a4 / 4, b4 / 4, c4 / 4, d4 / 4};
}

// Sum of elements read as +-1 values: 2*popcount - n.
inline std::int64_t signed_sum(const BitVector& x) {
    return 2 * static_cast<std::int64_t>(x.popcount()) -
           static_cast<std::int64_t>(x.length_bits());
}

}  // namespace binsim
