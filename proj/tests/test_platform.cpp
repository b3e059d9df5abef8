// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch.hpp>

#include <algorithm>
#include <set>

#include "cvmsim/platform.hpp"

using namespace cvmsim;

namespace {

Platform make_platform(Trace& trace, std::uint64_t pages = 64, std::uint32_t harts = 1,
                       std::uint64_t seed = 7) {
    auto p = Platform::create(pages * kPageSize, harts, seed, trace);
    REQUIRE(p.ok());
    return std::move(p).value();
}

/// Installs a config with one confidential region covering pages
/// [conf_page, conf_page+conf_pages) and a grant for the given cvm.
IsolationConfig conf_with_grant(std::uint64_t conf_page, std::uint64_t conf_pages, DomainId cvm,
                                std::vector<AddrRange> grant) {
    IsolationConfig cfg;
    cfg.confidential = {AddrRange::pages(conf_page, conf_pages)};
    if (cvm != DomainId::none()) {
        cfg.grants[cvm.raw] = std::move(grant);
        cfg.confidential_domains.insert(cvm.raw);
    }
    return cfg;
}

}  // namespace

TEST_CASE("platform creation") {
    Trace trace;
    SECTION("nominal") {
        Platform p = make_platform(trace, 64, 1);
        CHECK(p.page_count() == 64);
        CHECK(p.hart_count() == 1);
        CHECK(p.hart(0).privilege == PrivilegeLevel::Highest);
        CHECK_FALSE(p.hart(0).interrupts_enabled);
        CHECK(p.hart(0).pc == Platform::kBootBase);
    }
    SECTION("zero size is refused") {
        auto p = Platform::create(0, 1, 7, trace);
        REQUIRE_FALSE(p.ok());
        CHECK(p.error() == Err::ConfigError);
    }
    SECTION("unaligned size is refused") {
        auto p = Platform::create(kPageSize + 100, 1, 7, trace);
        REQUIRE_FALSE(p.ok());
        CHECK(p.error() == Err::ConfigError);
    }
    SECTION("all harts reset with clean microarchitectural state") {
        Platform p = make_platform(trace, 8, 2);
        for (std::uint32_t h = 0; h < 2; ++h) {
            CHECK(p.hart(h).microarch.clean());
            CHECK_FALSE(p.hart(h).microarch.taint_owner.has_value());
        }
    }
}

TEST_CASE("physical memory isolation") {
    Trace trace;
    Platform p = make_platform(trace, 64, 2);
    DomainId cvm{3};
    // Pages 32..40 confidential, page 33 granted to the cvm.
    REQUIRE(p.set_isolation(0, conf_with_grant(32, 8, cvm, {AddrRange::pages(33, 1)})).ok());

    // Hart 1 plays the untrusted side.
    REQUIRE(p.hart_exit(1, DomainId::hypervisor(), PrivilegeLevel::Middle, PhysAddr::page(1),
                        Gprs{}, true, "test", "").ok());

    SECTION("non-confidential thread cannot reach confidential memory") {
        auto r = p.read_phys(1, PhysAddr::page(33), 8);
        REQUIRE_FALSE(r.ok());
        CHECK(r.error() == Err::AccessDenied);
        auto w = p.write_phys(1, PhysAddr::page(34), 8, 1);
        REQUIRE_FALSE(w.ok());
        CHECK(w.error() == Err::AccessDenied);
    }
    SECTION("highest privilege reads any mapped address") {
        auto r = p.read_phys(0, PhysAddr::page(33), 8);
        CHECK(r.ok());
    }
    SECTION("granted domain reads its zeroized page") {
        REQUIRE(p.hart_exit(1, cvm, PrivilegeLevel::Lowest, PhysAddr::page(33), Gprs{}, true,
                            "test", "").ok());
        auto r = p.read_phys(1, PhysAddr::page(33), 8);
        REQUIRE(r.ok());
        CHECK(r.value() == 0);
        // Write then read back.
        REQUIRE(p.write_phys(1, PhysAddr::page(33).offset(16), 8, 0xAB).ok());
        auto rr = p.read_phys(1, PhysAddr::page(33).offset(16), 8);
        REQUIRE(rr.ok());
        CHECK(rr.value() == 0xAB);
        // But not its neighbour confidential page.
        CHECK_FALSE(p.read_phys(1, PhysAddr::page(34), 8).ok());
        // Nor arbitrary non-confidential memory.
        CHECK_FALSE(p.read_phys(1, PhysAddr::page(2), 8).ok());
    }
    SECTION("confidential reads set the taint buffer") {
        REQUIRE(p.read_phys(0, PhysAddr::page(33), 8).ok());
        CHECK_FALSE(p.hart(0).microarch.clean());
        CHECK(p.hart(0).microarch.taint_owner == DomainId::monitor());
        p.clear_microarch(0);
        CHECK(p.hart(0).microarch.clean());
        p.clear_microarch(0);  // idempotent
        CHECK(p.hart(0).microarch.clean());
    }
    SECTION("out of range access") {
        auto r = p.read_phys(0, PhysAddr::page(63).offset(kPageSize - 4), 8);
        REQUIRE_FALSE(r.ok());
        CHECK(r.error() == Err::OutOfRange);
    }
    SECTION("boot page is immutable at every privilege") {
        auto w = p.write_phys(0, PhysAddr{0}, 8, 1);
        REQUIRE_FALSE(w.ok());
        CHECK(w.error() == Err::AccessDenied);
    }
    SECTION("dma is denied confidential, allowed elsewhere") {
        CHECK_FALSE(p.dma_read(PhysAddr::page(33), 8).ok());
        CHECK_FALSE(p.dma_write(PhysAddr::page(35), 8, 1).ok());
        CHECK(p.dma_write(PhysAddr::page(2), 8, 0x44).ok());
        auto r = p.dma_read(PhysAddr::page(2), 8);
        REQUIRE(r.ok());
        CHECK(r.value() == 0x44);
    }
}

TEST_CASE("set_isolation validation") {
    Trace trace;
    Platform p = make_platform(trace, 64, 2);

    SECTION("only the highest privilege reconfigures") {
        REQUIRE(p.hart_exit(1, DomainId::hypervisor(), PrivilegeLevel::Middle,
                            PhysAddr::page(1), Gprs{}, true, "test", "").ok());
        auto st = p.set_isolation(1, IsolationConfig{});
        REQUIRE_FALSE(st.ok());
        CHECK(st.error() == Err::PrivilegeViolation);
    }
    SECTION("overlapping grants of two confidential domains are rejected") {
        IsolationConfig cfg = conf_with_grant(32, 8, DomainId{3}, {AddrRange::pages(33, 2)});
        cfg.grants[4] = {AddrRange::pages(34, 2)};
        cfg.confidential_domains.insert(4);
        auto st = p.set_isolation(0, cfg);
        REQUIRE_FALSE(st.ok());
        CHECK(st.error() == Err::ConfigError);
    }
    SECTION("random configs agree with a brute-force overlap detector") {
        // Independent oracle: enumerate all range pairs across confidential
        // domains; any intersection must be rejected, none must pass.
        std::uint64_t rng = 42;
        auto next = [&]() {
            rng = rng * 6364136223846793005ull + 1442695040888963407ull;
            return rng >> 33;
        };
        for (int trial = 0; trial < 200; ++trial) {
            IsolationConfig cfg;
            cfg.confidential = {AddrRange::pages(16, 40)};
            int domains = 2 + int(next() % 2);
            for (int d = 0; d < domains; ++d) {
                std::uint32_t id = 3 + d;
                cfg.confidential_domains.insert(id);
                int grants = 1 + int(next() % 2);
                for (int g = 0; g < grants; ++g) {
                    std::uint64_t base = 16 + next() % 38;
                    std::uint64_t len = 1 + next() % 3;
                    if (base + len > 56) len = 56 - base;
                    cfg.grants[id].push_back(AddrRange::pages(base, len));
                }
            }
            bool overlap = false;
            std::vector<std::pair<std::uint32_t, AddrRange>> all;
            for (const auto& [id, ranges] : cfg.grants) {
                for (const AddrRange& r : ranges) all.push_back({id, r});
            }
            for (std::size_t i = 0; i < all.size(); ++i) {
                for (std::size_t j = i + 1; j < all.size(); ++j) {
                    if (all[i].second.intersects(all[j].second)) overlap = true;
                }
            }
            bool accepted = p.set_isolation(0, cfg).ok();
            INFO("trial " << trial);
            CHECK(accepted == !overlap);
        }
    }
}

TEST_CASE("interrupt controller") {
    Trace trace;
    Platform p = make_platform(trace, 64, 2);
    REQUIRE(p.hart_exit(1, DomainId::hypervisor(), PrivilegeLevel::Middle, PhysAddr::page(1),
                        Gprs{}, true, "test", "").ok());

    SECTION("untrusted retarget of the pinned line is a privilege violation") {
        auto st = p.configure_interrupt(1, kMonitorIrq, PrivilegeLevel::Middle,
                                        PhysAddr::page(1));
        REQUIRE_FALSE(st.ok());
        CHECK(st.error() == Err::PrivilegeViolation);
    }
    SECTION("monitor delegates a timer line downward") {
        CHECK(p.configure_interrupt(0, 1, PrivilegeLevel::Middle, PhysAddr::page(1)).ok());
    }
    SECTION("even the monitor cannot unpin the monitor line") {
        auto st = p.configure_interrupt(0, kMonitorIrq, PrivilegeLevel::Middle,
                                        PhysAddr::page(1));
        REQUIRE_FALSE(st.ok());
        CHECK(st.error() == Err::PinnedInterrupt);
    }
    SECTION("untrusted code cannot route a line to the highest privilege") {
        auto st = p.configure_interrupt(1, 2, PrivilegeLevel::Highest, PhysAddr::page(1));
        REQUIRE_FALSE(st.ok());
        CHECK(st.error() == Err::PrivilegeViolation);
    }
    SECTION("delivery raises privilege and masks interrupts") {
        auto rec = p.deliver_interrupt(kMonitorIrq, 1);
        REQUIRE(rec.ok());
        REQUIRE(rec.value().delivered);
        CHECK(p.hart(1).privilege == PrivilegeLevel::Highest);
        CHECK_FALSE(p.hart(1).interrupts_enabled);
        CHECK(p.hart(1).active_domain == DomainId::monitor());
    }
    SECTION("unrouted line") {
        auto rec = p.deliver_interrupt(5, 1);
        REQUIRE_FALSE(rec.ok());
        CHECK(rec.error() == Err::UnroutedInterrupt);
    }
    SECTION("same-level delivery keeps privilege") {
        REQUIRE(p.configure_interrupt(0, 1, PrivilegeLevel::Middle, PhysAddr::page(2)).ok());
        auto rec = p.deliver_interrupt(1, 1);
        REQUIRE(rec.ok());
        REQUIRE(rec.value().delivered);
        CHECK(p.hart(1).privilege == PrivilegeLevel::Middle);
        CHECK(p.hart(1).pc == PhysAddr::page(2));
    }
    SECTION("masked delivery changes nothing") {
        REQUIRE(p.configure_interrupt(0, 1, PrivilegeLevel::Middle, PhysAddr::page(2)).ok());
        p.hart(1).interrupts_enabled = false;
        auto rec = p.deliver_interrupt(1, 1);
        REQUIRE(rec.ok());
        CHECK_FALSE(rec.value().delivered);
        CHECK(p.hart(1).pc == PhysAddr::page(1));
    }
    SECTION("pinned lines stay pinned through random reconfiguration") {
        std::uint64_t rng = 5;
        for (int i = 0; i < 200; ++i) {
            rng = rng * 6364136223846793005ull + 1;
            std::uint32_t irq = (rng >> 33) % kIrqCount;
            std::uint32_t hart = (rng >> 20) % 2;
            auto target = static_cast<PrivilegeLevel>((rng >> 11) % 3);
            (void)p.configure_interrupt(hart, irq, target, PhysAddr::page(1));
            for (std::uint32_t pinned : p.irqc().pinned) {
                REQUIRE(p.irqc().routes.at(pinned).target == PrivilegeLevel::Highest);
            }
        }
    }
}

TEST_CASE("endorsement seed") {
    Trace trace;
    Platform p = make_platform(trace, 16, 2);
    REQUIRE(p.hart_exit(1, DomainId::hypervisor(), PrivilegeLevel::Middle, PhysAddr::page(1),
                        Gprs{}, true, "test", "").ok());

    SECTION("readable at the highest privilege until locked") {
        auto seed = p.read_seed(0);
        REQUIRE(seed.ok());
        REQUIRE(p.lock_seed(0).ok());
        auto again = p.read_seed(0);
        REQUIRE_FALSE(again.ok());
        CHECK(again.error() == Err::SeedLocked);
        // The lock is sticky.
        CHECK_FALSE(p.read_seed(0).ok());
        CHECK_FALSE(p.read_seed(0).ok());
    }
    SECTION("lower privilege never reads the seed") {
        auto seed = p.read_seed(1);
        REQUIRE_FALSE(seed.ok());
        CHECK(seed.error() == Err::PrivilegeViolation);
    }
    SECTION("different platforms carry different seeds") {
        Trace t2;
        Platform q = make_platform(t2, 16, 1, 99);
        CHECK(p.read_seed(0).value() != q.read_seed(0).value());
    }
}

TEST_CASE("atomic compare-and-swap") {
    Trace trace;
    Platform p = make_platform(trace, 16, 2);
    PhysAddr lock = PhysAddr::page(2);

    SECTION("success and failure") {
        auto r = p.atomic_cas(0, lock, 0, 1);
        REQUIRE(r.ok());
        CHECK(r.value() == 0);
        CHECK(p.read_phys(0, lock, 8).value() == 1);
        auto r2 = p.atomic_cas(0, lock, 0, 2);
        REQUIRE(r2.ok());
        CHECK(r2.value() == 1);
        CHECK(p.read_phys(0, lock, 8).value() == 1);
    }
    SECTION("misaligned") {
        auto r = p.atomic_cas(0, lock.offset(4), 0, 1);
        REQUIRE_FALSE(r.ok());
        CHECK(r.error() == Err::Misaligned);
    }
    SECTION("all interleavings of two contending harts are linearizable") {
        // Each hart runs: cas(lock, 0 -> id), then cas(aux, 0 -> id).
        // Enumerate every interleaving of the two programs by hand and
        // check each outcome against the set of sequential outcomes.
        struct Op {
            std::uint32_t hart;
            PhysAddr addr;
            Word desired;
        };
        PhysAddr aux = PhysAddr::page(3);
        auto program = [&](std::uint32_t hart) {
            return std::vector<Op>{{hart, lock, hart + 1}, {hart, aux, hart + 1}};
        };
        // Interleavings = orderings of merged programs preserving each
        // hart's order: choose positions of hart 0's ops.
        std::vector<std::vector<Op>> interleavings;
        std::vector<Op> a = program(0), b = program(1);
        std::function<void(std::size_t, std::size_t, std::vector<Op>)> merge =
            [&](std::size_t i, std::size_t j, std::vector<Op> acc) {
                if (i == a.size() && j == b.size()) {
                    interleavings.push_back(acc);
                    return;
                }
                if (i < a.size()) {
                    auto next = acc;
                    next.push_back(a[i]);
                    merge(i + 1, j, next);
                }
                if (j < b.size()) {
                    auto next = acc;
                    next.push_back(b[j]);
                    merge(i, j + 1, next);
                }
            };
        merge(0, 0, {});
        CHECK(interleavings.size() == 6);

        std::set<std::pair<Word, Word>> outcomes;
        for (const auto& order : interleavings) {
            Trace t;
            Platform q = make_platform(t, 16, 2);
            for (const Op& op : order) {
                REQUIRE(q.atomic_cas(op.hart, op.addr, 0, op.desired).ok());
            }
            outcomes.insert({q.read_phys(0, lock, 8).value(), q.read_phys(0, aux, 8).value()});
        }
        // Sequential orders: hart0 first (1,1) or hart1 first (2,2); the
        // remaining interleavings split the wins ((1,2) or (2,1)), each of
        // which is consistent with a sequential order of the four CAS ops.
        for (const auto& [l, x] : outcomes) {
            CHECK((l == 1 || l == 2));
            CHECK((x == 1 || x == 2));
        }
        // Exactly one winner per word in every interleaving.
        CHECK(outcomes.count({1, 1}) == 1);
        CHECK(outcomes.count({2, 2}) == 1);
    }
}

TEST_CASE("random number generator") {
    SECTION("same seed, same stream") {
        Trace t1, t2;
        Platform p = make_platform(t1, 8, 1, 1234);
        Platform q = make_platform(t2, 8, 1, 1234);
        for (int i = 0; i < 64; ++i) REQUIRE(p.rng_next() == q.rng_next());
    }
    SECTION("different seeds diverge within 16 draws") {
        for (std::uint64_t s = 0; s < 8; ++s) {
            Trace t1, t2;
            Platform p = make_platform(t1, 8, 1, s);
            Platform q = make_platform(t2, 8, 1, s + 1);
            bool diverged = false;
            for (int i = 0; i < 16 && !diverged; ++i) {
                diverged = p.rng_next() != q.rng_next();
            }
            CHECK(diverged);
        }
    }
    SECTION("no collisions in ten thousand draws") {
        // Birthday bound for 1e4 64-bit draws is ~2.7e-12; any collision
        // means the generator is broken.
        Trace t;
        Platform p = make_platform(t, 8, 1, 7);
        std::set<Word> seen;
        for (int i = 0; i < 10000; ++i) REQUIRE(seen.insert(p.rng_next()).second);
    }
}

TEST_CASE("privilege never rises except through delivery") {
    Trace trace;
    Platform p = make_platform(trace, 32, 2);
    REQUIRE(p.set_isolation(0, conf_with_grant(16, 8, DomainId::none(), {})).ok());
    REQUIRE(p.configure_interrupt(0, 1, PrivilegeLevel::Middle, PhysAddr::page(2)).ok());
    REQUIRE(p.hart_exit(0, DomainId::hypervisor(), PrivilegeLevel::Middle, PhysAddr::page(1),
                        Gprs{}, true, "test", "").ok());
    REQUIRE(p.hart_exit(1, DomainId::hypervisor(), PrivilegeLevel::Lowest, PhysAddr::page(1),
                        Gprs{}, true, "test", "").ok());

    std::uint64_t rng = 77;
    auto next = [&]() {
        rng = rng * 6364136223846793005ull + 1442695040888963407ull;
        return rng >> 32;
    };
    for (int i = 0; i < 500; ++i) {
        std::uint32_t h = next() % 2;
        PrivilegeLevel before = p.hart(h).privilege;
        bool was_delivery = false;
        bool delivered = false;
        switch (next() % 6) {
        case 0: (void)p.read_phys(h, PhysAddr::page(next() % 32), 8); break;
        case 1: (void)p.write_phys(h, PhysAddr::page(next() % 32), 8, next()); break;
        case 2: {
            was_delivery = true;
            auto rec = p.deliver_interrupt(next() % kIrqCount, h);
            delivered = rec.ok() && rec.value().delivered;
            break;
        }
        case 3:
            (void)p.configure_interrupt(h, next() % kIrqCount,
                                        static_cast<PrivilegeLevel>(next() % 3),
                                        PhysAddr::page(2));
            break;
        case 4: (void)p.atomic_cas(h, PhysAddr::page(2), 0, next()); break;
        case 5:
            (void)p.hart_exit(h, p.hart(h).active_domain,
                              static_cast<PrivilegeLevel>(next() % 3), PhysAddr::page(1),
                              Gprs{}, true, "test", "");
            break;
        }
        PrivilegeLevel after = p.hart(h).privilege;
        if (after > before) {
            INFO("step " << i);
            REQUIRE((was_delivery && delivered));
        }
    }
}
