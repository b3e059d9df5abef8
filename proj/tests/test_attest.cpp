// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch.hpp>

#include "cvmsim/attest.hpp"

using namespace cvmsim;

TEST_CASE("sha256 matches the published test vectors") {
    CHECK(hex(sha256("")) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(hex(sha256("abc")) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(hex(sha256("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")) ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    // Incremental updates agree with one-shot hashing.
    Sha256 h;
    h.update("ab");
    h.update("c");
    CHECK(h.finish() == sha256("abc"));
}

TEST_CASE("measurement") {
    std::vector<std::uint8_t> image(1000, 0x7E);
    SECTION("deterministic") {
        CHECK(measure(image, "a").digest == measure(image, "b").digest);
    }
    SECTION("one flipped bit changes the digest") {
        auto tampered = image;
        tampered[500] ^= 0x01;
        CHECK(measure(image, "a").digest != measure(tampered, "a").digest);
    }
    SECTION("empty input has the digest of the empty string") {
        CHECK(measure({}, "a").digest == sha256(""));
    }
}

TEST_CASE("attestation key derivation") {
    std::array<std::uint8_t, 32> seed{};
    seed.fill(0x42);
    std::vector<Measurement> chain = {measure(std::vector<std::uint8_t>(64, 1), "monitor"),
                                      measure(std::vector<std::uint8_t>(64, 2), "hypervisor")};

    SECTION("deterministic") {
        AttestationKey a = derive_attestation_key(seed, chain);
        AttestationKey b = derive_attestation_key(seed, chain);
        CHECK(a.secret == b.secret);
        CHECK(a.key_id == b.key_id);
        CHECK(public_key_of(a).key_id == public_key_of(b).key_id);
    }
    SECTION("a tampered image changes the key") {
        auto tampered = chain;
        tampered[0] = measure(std::vector<std::uint8_t>(64, 3), "monitor");
        AttestationKey a = derive_attestation_key(seed, chain);
        AttestationKey b = derive_attestation_key(seed, tampered);
        CHECK(a.key_id != b.key_id);
    }
    SECTION("a different seed changes the key") {
        auto seed2 = seed;
        seed2[0] ^= 1;
        CHECK(derive_attestation_key(seed, chain).key_id !=
              derive_attestation_key(seed2, chain).key_id);
    }
}

TEST_CASE("report signing and verification") {
    std::array<std::uint8_t, 32> seed{};
    seed.fill(0x17);
    std::vector<Measurement> chain = {measure(std::vector<std::uint8_t>(64, 1), "monitor")};
    AttestationKey key = derive_attestation_key(seed, chain);
    VerifyKey vk = public_key_of(key);

    Digest m = sha256("victim image");
    std::vector<std::uint8_t> nonce = {1, 2, 3, 4, 5, 6, 7, 8};
    AttestationReport report = sign_report(key, m, nonce, chain);

    SECTION("round trip verifies") { CHECK(verify_report(vk, report)); }
    SECTION("any field mutation is rejected") {
        auto r = report;
        r.measurement[3] ^= 0x80;
        CHECK_FALSE(verify_report(vk, r));

        r = report;
        r.nonce[0] ^= 1;
        CHECK_FALSE(verify_report(vk, r));

        r = report;
        r.boot_chain[0].digest[0] ^= 1;
        CHECK_FALSE(verify_report(vk, r));

        r = report;
        r.key_id[0] ^= 1;
        CHECK_FALSE(verify_report(vk, r));

        r = report;
        r.signature[100][5] ^= 1;
        CHECK_FALSE(verify_report(vk, r));
    }
    SECTION("different nonces give different signatures over the same measurement") {
        std::vector<std::uint8_t> nonce2 = {9, 9, 9, 9, 9, 9, 9, 9};
        AttestationReport second = sign_report(key, m, nonce2, chain);
        CHECK(second.measurement == report.measurement);
        CHECK(second.signature != report.signature);
    }
    SECTION("a different platform's key never cross-verifies") {
        std::array<std::uint8_t, 32> seed2{};
        seed2.fill(0x18);
        AttestationKey other = derive_attestation_key(seed2, chain);
        VerifyKey other_vk = public_key_of(other);
        CHECK_FALSE(verify_report(other_vk, report));
        AttestationReport forged = sign_report(other, m, nonce, chain);
        CHECK_FALSE(verify_report(vk, forged));
        CHECK(verify_report(other_vk, forged));
    }
    SECTION("signing is deterministic") {
        CHECK(sign_report(key, m, nonce, chain) == report);
    }
    SECTION("fuzzed single-field mutations never verify") {
        std::uint64_t rng = 4242;
        auto next = [&]() {
            rng = rng * 6364136223846793005ull + 1442695040888963407ull;
            return rng >> 33;
        };
        for (int i = 0; i < 100; ++i) {
            AttestationReport r = report;
            switch (next() % 5) {
            case 0: r.measurement[next() % 32] ^= std::uint8_t(1 << (next() % 8)); break;
            case 1: r.nonce[next() % r.nonce.size()] ^= std::uint8_t(1 << (next() % 8)); break;
            case 2:
                r.boot_chain[0].digest[next() % 32] ^= std::uint8_t(1 << (next() % 8));
                break;
            case 3: r.key_id[next() % 32] ^= std::uint8_t(1 << (next() % 8)); break;
            case 4:
                r.signature[next() % 256][next() % 32] ^= std::uint8_t(1 << (next() % 8));
                break;
            }
            CHECK_FALSE(verify_report(vk, r));
        }
    }
}
