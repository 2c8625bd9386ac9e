#pragma once

#include <bit>
#include <cstdint>
#include <vector>

namespace poro {

/// Packed bit vector. Serialized form is byte-oriented with LSB-first bit
/// order (bit i lives in byte i/8 at position i%8), independent of host
/// endianness. Unused high bits of the last word are kept zero so that
/// equality and popcounts need no masking.
class BitVector {
public:
    BitVector() = default;
    explicit BitVector(size_t n, bool value = false);

    size_t size() const { return size_; }

    bool operator[](size_t i) const {
        return (words_[i >> 6] >> (i & 63)) & 1u;
    }

    void set(size_t i, bool v = true) {
        uint64_t mask = uint64_t{1} << (i & 63);
        if (v)
            words_[i >> 6] |= mask;
        else
            words_[i >> 6] &= ~mask;
    }

    /// Number of set bits.
    size_t count() const;

    /// Number of positions set in both vectors (binary dot product).
    size_t count_and(const BitVector& other) const;

    bool operator==(const BitVector&) const = default;

    std::vector<uint8_t> to_bytes() const;
    static BitVector from_bytes(const uint8_t* data, size_t n_bits);

    static size_t byte_size(size_t n_bits) { return (n_bits + 7) / 8; }

    const std::vector<uint64_t>& words() const { return words_; }

private:
    size_t size_ = 0;
    std::vector<uint64_t> words_;
};

/// Concatenation [a; b].
BitVector concat(const BitVector& a, const BitVector& b);

} // namespace poro
