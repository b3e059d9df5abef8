// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cvmsim {

using Digest = std::array<std::uint8_t, 32>;

/// Incremental SHA-256 (FIPS 180-4).
class Sha256 {
public:
    Sha256() { reset(); }

    void reset() {
        state_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
                  0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
        bit_len_ = 0;
        buf_len_ = 0;
    }

    void update(std::span<const std::uint8_t> data) {
        for (std::uint8_t byte : data) {
            buf_[buf_len_++] = byte;
            if (buf_len_ == 64) {
                compress(buf_.data());
                bit_len_ += 512;
                buf_len_ = 0;
            }
        }
    }

    void update(std::string_view s) {
        update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()),
                                             s.size()));
    }

    void update_u64(std::uint64_t v) {
        std::array<std::uint8_t, 8> le{};
        for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(v >> (8 * i));
        update(le);
    }

    Digest finish() {
        std::uint64_t total_bits = bit_len_ + buf_len_ * 8ull;
        // Padding: 0x80, zeros, 64-bit big-endian length.
        std::size_t i = buf_len_;
        buf_[i++] = 0x80;
        if (i > 56) {
            while (i < 64) buf_[i++] = 0;
            compress(buf_.data());
            i = 0;
        }
        while (i < 56) buf_[i++] = 0;
        for (int b = 7; b >= 0; --b) buf_[i++] = static_cast<std::uint8_t>(total_bits >> (8 * b));
        compress(buf_.data());

        Digest out{};
        for (int w = 0; w < 8; ++w) {
            out[w * 4 + 0] = static_cast<std::uint8_t>(state_[w] >> 24);
            out[w * 4 + 1] = static_cast<std::uint8_t>(state_[w] >> 16);
            out[w * 4 + 2] = static_cast<std::uint8_t>(state_[w] >> 8);
            out[w * 4 + 3] = static_cast<std::uint8_t>(state_[w]);
        }
        return out;
    }

private:
    static std::uint32_t rotr(std::uint32_t x, unsigned n) { return (x >> n) | (x << (32 - n)); }

    void compress(const std::uint8_t* block) {
        static constexpr std::array<std::uint32_t, 64> k = {
            0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
            0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
            0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
            0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
            0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
            0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
            0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
            0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
            0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
            0xc67178f2};

        std::array<std::uint32_t, 64> w{};
        for (int t = 0; t < 16; ++t) {
            w[t] = (std::uint32_t(block[t * 4]) << 24) | (std::uint32_t(block[t * 4 + 1]) << 16) |
                   (std::uint32_t(block[t * 4 + 2]) << 8) | std::uint32_t(block[t * 4 + 3]);
        }
        for (int t = 16; t < 64; ++t) {
            std::uint32_t s0 = rotr(w[t - 15], 7) ^ rotr(w[t - 15], 18) ^ (w[t - 15] >> 3);
            std::uint32_t s1 = rotr(w[t - 2], 17) ^ rotr(w[t - 2], 19) ^ (w[t - 2] >> 10);
            w[t] = w[t - 16] + s0 + w[t - 7] + s1;
        }

        std::uint32_t a = state_[0], b = state_[1], c = state_[2], d = state_[3];
        std::uint32_t e = state_[4], f = state_[5], g = state_[6], h = state_[7];
        for (int t = 0; t < 64; ++t) {
            std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            std::uint32_t ch = (e & f) ^ (~e & g);
            std::uint32_t t1 = h + s1 + ch + k[t] + w[t];
            std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            std::uint32_t t2 = s0 + maj;
            h = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        state_[0] += a;
        state_[1] += b;
        state_[2] += c;
        state_[3] += d;
        state_[4] += e;
        state_[5] += f;
        state_[6] += g;
        state_[7] += h;
    }

    std::array<std::uint32_t, 8> state_{};
    std::uint64_t bit_len_ = 0;
    std::array<std::uint8_t, 64> buf_{};
    std::size_t buf_len_ = 0;
};

inline Digest sha256(std::span<const std::uint8_t> data) {
    Sha256 h;
    h.update(data);
    return h.finish();
}

inline Digest sha256(std::string_view s) {
    Sha256 h;
    h.update(s);
    return h.finish();
}

inline std::string hex(std::span<const std::uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (std::uint8_t b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

inline std::string hex(const Digest& d) { return hex(std::span<const std::uint8_t>(d)); }

/// Parses a hex string back into bytes; returns empty on malformed input.
inline std::vector<std::uint8_t> from_hex(std::string_view s) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (s.size() % 2 != 0) return {};
    std::vector<std::uint8_t> out;
    out.reserve(s.size() / 2);
    for (std::size_t i = 0; i < s.size(); i += 2) {
        int hi = nibble(s[i]), lo = nibble(s[i + 1]);
        if (hi < 0 || lo < 0) return {};
        out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    }
    return out;
}

}  // namespace cvmsim
