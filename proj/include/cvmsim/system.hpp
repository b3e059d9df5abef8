// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "cvmsim/monitor.hpp"
#include "cvmsim/platform.hpp"

namespace cvmsim {

/// One simulated universe: the hardware platform plus the monitor state
/// living on it. Value semantics via clone(); snapshots never share mutable
/// state, so exploration workers can own clones outright.
struct System {
    Platform platform;
    SecurityMonitor monitor;

    System(Platform p, SecurityMonitor m) : platform(std::move(p)), monitor(std::move(m)) {}
    System(System&&) = default;
    System& operator=(System&&) = default;

    System clone(Trace& sink) const {
        Platform p = platform;
        p.rebind_trace(sink);
        return System(std::move(p), monitor.clone());
    }

    /// Canonical byte serialization of everything that defines a state:
    /// memory, harts, isolation, interrupt routes, endorsement lock, rng,
    /// and the monitor's bookkeeping. The trace and its sequence counter are
    /// deliberately excluded.
    void serialize_state(std::string& out) const {
        auto put_u64 = [&](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
        };
        const auto& mem = platform.memory_bytes();
        out.append(reinterpret_cast<const char*>(mem.data()), mem.size());

        put_u64(platform.hart_count());
        for (std::uint32_t h = 0; h < platform.hart_count(); ++h) {
            const HartContext& ctx = platform.hart(h);
            put_u64(static_cast<std::uint64_t>(ctx.privilege));
            for (Word w : ctx.gprs) put_u64(w);
            put_u64(ctx.pc.value);
            put_u64(ctx.interrupts_enabled ? 1 : 0);
            put_u64(ctx.active_domain.raw);
            put_u64(ctx.parked ? 1 : 0);
            for (Word w : ctx.microarch.scratch) put_u64(w);
            put_u64(ctx.microarch.taint_owner ? ctx.microarch.taint_owner->raw + 1 : 0);
        }

        const IsolationConfig& iso = platform.isolation();
        put_u64(iso.confidential.size());
        for (const AddrRange& r : iso.confidential) {
            put_u64(r.base.value);
            put_u64(r.size);
        }
        put_u64(iso.grants.size());
        for (const auto& [id, ranges] : iso.grants) {
            put_u64(id);
            put_u64(ranges.size());
            for (const AddrRange& r : ranges) {
                put_u64(r.base.value);
                put_u64(r.size);
            }
        }
        put_u64(iso.shared.size());
        for (const SharedPageGrant& s : iso.shared) {
            put_u64(s.range.base.value);
            put_u64(s.cvm.raw);
        }
        put_u64(iso.confidential_domains.size());
        for (std::uint32_t d : iso.confidential_domains) put_u64(d);

        put_u64(platform.irqc().routes.size());
        for (const auto& [irq, route] : platform.irqc().routes) {
            put_u64(irq);
            put_u64(static_cast<std::uint64_t>(route.target));
            put_u64(route.handler.value);
        }
        put_u64(platform.irqc().pinned.size());
        for (std::uint32_t irq : platform.irqc().pinned) put_u64(irq);

        put_u64(platform.endorsement().locked ? 1 : 0);
        put_u64(platform.rng_state());

        monitor.serialize_state(out);
    }

    /// 64-bit FNV-1a over the canonical serialization, mixed for avalanche.
    std::uint64_t state_hash() const {
        std::string buf;
        buf.reserve(platform.memory_size() + 4096);
        serialize_state(buf);
        std::uint64_t h = 0xcbf29ce484222325ull;
        std::size_t i = 0;
        // 8-byte strides with a final byte tail.
        for (; i + 8 <= buf.size(); i += 8) {
            std::uint64_t chunk;
            std::memcpy(&chunk, buf.data() + i, 8);
            h = (h ^ chunk) * 0x100000001b3ull;
            h ^= h >> 29;
        }
        for (; i < buf.size(); ++i) {
            h = (h ^ static_cast<unsigned char>(buf[i])) * 0x100000001b3ull;
        }
        h ^= h >> 33;
        h *= 0xff51afd7ed558ccdull;
        h ^= h >> 33;
        return h;
    }
};

}  // namespace cvmsim
