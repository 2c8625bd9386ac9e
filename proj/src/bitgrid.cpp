#include "poro/bitgrid.hpp"

namespace poro {

BitVector::BitVector(size_t n, bool value) : size_(n), words_((n + 63) / 64, 0) {
    if (value) {
        for (auto& w : words_) w = ~uint64_t{0};
        if (size_ & 63) words_.back() &= (uint64_t{1} << (size_ & 63)) - 1;
    }
}

size_t BitVector::count() const {
    size_t c = 0;
    for (uint64_t w : words_) c += static_cast<size_t>(std::popcount(w));
    return c;
}

size_t BitVector::count_and(const BitVector& other) const {
    size_t n = std::min(words_.size(), other.words_.size());
    size_t c = 0;
    for (size_t i = 0; i < n; ++i)
        c += static_cast<size_t>(std::popcount(words_[i] & other.words_[i]));
    return c;
}

std::vector<uint8_t> BitVector::to_bytes() const {
    std::vector<uint8_t> out(byte_size(size_), 0);
    for (size_t b = 0; b < out.size(); ++b)
        out[b] = static_cast<uint8_t>(words_[b >> 3] >> (8 * (b & 7)));
    return out;
}

BitVector BitVector::from_bytes(const uint8_t* data, size_t n_bits) {
    BitVector v(n_bits);
    size_t n_bytes = byte_size(n_bits);
    for (size_t b = 0; b < n_bytes; ++b)
        v.words_[b >> 3] |= static_cast<uint64_t>(data[b]) << (8 * (b & 7));
    if (n_bits & 63) v.words_.back() &= (uint64_t{1} << (n_bits & 63)) - 1;
    return v;
}

BitVector concat(const BitVector& a, const BitVector& b) {
    BitVector out(a.size() + b.size());
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i]) out.set(i);
    for (size_t i = 0; i < b.size(); ++i)
        if (b[i]) out.set(a.size() + i);
    return out;
}

} // namespace poro
