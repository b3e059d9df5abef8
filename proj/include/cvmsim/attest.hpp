// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cvmsim/core.hpp"
#include "cvmsim/sha256.hpp"

namespace cvmsim {

/// Digest of one measured component.
struct Measurement {
    std::string subject;
    Digest digest{};

    bool operator==(const Measurement&) const = default;
};

inline Measurement measure(std::span<const std::uint8_t> bytes, std::string subject) {
    return Measurement{std::move(subject), sha256(bytes)};
}

/// Hash-based one-time signature keypair (Lamport scheme over SHA-256).
/// The private side is a 32-byte secret from which the per-bit preimages are
/// expanded on demand; the public side is the 512 preimage hashes. Signing
/// is deterministic, verification needs only the public key.
struct AttestationKey {
    std::array<std::uint8_t, 32> secret{};
    Digest key_id{};
    std::string derivation_label;
};

struct VerifyKey {
    /// pub[2*i + b] = H(preimage for bit i with value b).
    std::vector<Digest> pub;
    Digest key_id{};
};

namespace detail {

inline Digest lamport_preimage(const std::array<std::uint8_t, 32>& secret, unsigned bit,
                               unsigned value) {
    Sha256 h;
    h.update(std::span<const std::uint8_t>(secret));
    h.update("lamport");
    h.update_u64(bit);
    h.update_u64(value);
    return h.finish();
}

}  // namespace detail

inline VerifyKey public_key_of(const AttestationKey& key) {
    VerifyKey vk;
    vk.pub.reserve(512);
    Sha256 id;
    for (unsigned bit = 0; bit < 256; ++bit) {
        for (unsigned v = 0; v < 2; ++v) {
            Digest pre = detail::lamport_preimage(key.secret, bit, v);
            Digest pub = sha256(std::span<const std::uint8_t>(pre));
            id.update(std::span<const std::uint8_t>(pub));
            vk.pub.push_back(pub);
        }
    }
    vk.key_id = id.finish();
    return vk;
}

/// Derives the platform attestation key from the endorsement seed chained
/// with the boot-time measurements, so a tampered monitor or hypervisor
/// image yields a different identity.
inline AttestationKey derive_attestation_key(const std::array<std::uint8_t, 32>& seed,
                                             std::span<const Measurement> boot_measurements,
                                             std::string label = "attestation-key-v1") {
    Sha256 h;
    h.update(std::span<const std::uint8_t>(seed));
    h.update(label);
    for (const Measurement& m : boot_measurements) {
        h.update(m.subject);
        h.update(std::span<const std::uint8_t>(m.digest));
    }
    AttestationKey key;
    key.secret = h.finish();
    key.derivation_label = std::move(label);
    key.key_id = public_key_of(key).key_id;
    return key;
}

/// Signed statement binding a CVM measurement and a verifier nonce to the
/// platform's boot chain.
struct AttestationReport {
    Digest measurement{};
    std::vector<std::uint8_t> nonce;
    std::vector<Measurement> boot_chain;
    Digest key_id{};
    /// One revealed preimage per bit of the report digest.
    std::vector<Digest> signature;

    bool operator==(const AttestationReport&) const = default;

    std::string serialize() const {
        std::string out;
        out += "report-v1\n";
        out += "measurement=" + hex(measurement) + "\n";
        out += "nonce=" + hex(std::span<const std::uint8_t>(nonce)) + "\n";
        for (const Measurement& m : boot_chain) {
            out += "boot=" + m.subject + ":" + hex(m.digest) + "\n";
        }
        out += "key_id=" + hex(key_id) + "\n";
        for (const Digest& d : signature) out += "sig=" + hex(d) + "\n";
        return out;
    }
};

namespace detail {

inline Digest report_digest(const AttestationReport& r) {
    Sha256 h;
    h.update("report-body");
    h.update(std::span<const std::uint8_t>(r.measurement));
    h.update_u64(r.nonce.size());
    h.update(std::span<const std::uint8_t>(r.nonce));
    h.update_u64(r.boot_chain.size());
    for (const Measurement& m : r.boot_chain) {
        h.update(m.subject);
        h.update(std::span<const std::uint8_t>(m.digest));
    }
    h.update(std::span<const std::uint8_t>(r.key_id));
    return h.finish();
}

inline bool digest_bit(const Digest& d, unsigned i) {
    return (d[i / 8] >> (i % 8)) & 1;
}

}  // namespace detail

inline AttestationReport sign_report(const AttestationKey& key, const Digest& measurement,
                                     std::span<const std::uint8_t> nonce,
                                     std::span<const Measurement> boot_chain) {
    AttestationReport r;
    r.measurement = measurement;
    r.nonce.assign(nonce.begin(), nonce.end());
    r.boot_chain.assign(boot_chain.begin(), boot_chain.end());
    r.key_id = key.key_id;
    Digest body = detail::report_digest(r);
    r.signature.reserve(256);
    for (unsigned bit = 0; bit < 256; ++bit) {
        unsigned v = detail::digest_bit(body, bit) ? 1 : 0;
        r.signature.push_back(detail::lamport_preimage(key.secret, bit, v));
    }
    return r;
}

inline bool verify_report(const VerifyKey& vk, const AttestationReport& r) {
    if (vk.pub.size() != 512 || r.signature.size() != 256) return false;
    if (r.key_id != vk.key_id) return false;
    Digest body = detail::report_digest(r);
    for (unsigned bit = 0; bit < 256; ++bit) {
        unsigned v = detail::digest_bit(body, bit) ? 1 : 0;
        Digest h = sha256(std::span<const std::uint8_t>(r.signature[bit]));
        if (h != vk.pub[2 * bit + v]) return false;
    }
    return true;
}

}  // namespace cvmsim
