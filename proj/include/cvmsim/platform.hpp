// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cvmsim/core.hpp"
#include "cvmsim/trace.hpp"

namespace cvmsim {

/// Microarchitectural residue of recent execution, modeled as an explicit
/// scratch buffer plus the domain that filled it. taint_owner is empty
/// exactly when the scratch words are all zero.
struct MicroArchState {
    std::array<Word, 4> scratch{};
    std::optional<DomainId> taint_owner;

    bool clean() const {
        for (Word w : scratch) {
            if (w != 0) return false;
        }
        return !taint_owner.has_value();
    }

    void clear() {
        scratch = {};
        taint_owner.reset();
    }

    void taint(DomainId owner, std::uint64_t stamp) {
        scratch[stamp % scratch.size()] = stamp | 1;
        taint_owner = owner;
    }
};

/// Architectural state of one hardware thread.
struct HartContext {
    std::uint32_t hart_id = 0;
    PrivilegeLevel privilege = PrivilegeLevel::Highest;
    Gprs gprs{};
    PhysAddr pc{};
    bool interrupts_enabled = false;
    /// Security domain whose code this hart currently executes.
    DomainId active_domain = DomainId::monitor();
    /// Secondary harts are held in the monitor until released after boot.
    bool parked = false;
    MicroArchState microarch;
    /// Exception bookkeeping filled in by interrupt delivery: which domain
    /// was interrupted and where it was executing.
    DomainId interrupted_domain = DomainId::none();
    PhysAddr interrupted_pc{};
};

struct IrqRoute {
    PrivilegeLevel target = PrivilegeLevel::Highest;
    PhysAddr handler{};

    bool operator==(const IrqRoute&) const = default;
};

/// Interrupt controller: per-line routes plus the set of lines that are
/// permanently wired to the highest privilege.
struct InterruptController {
    std::map<std::uint32_t, IrqRoute> routes;
    std::set<std::uint32_t> pinned;
};

struct SharedPageGrant {
    AddrRange range;
    DomainId cvm;

    bool operator==(const SharedPageGrant&) const = default;
};

/// Access-control state of the physical memory isolation component.
///
/// Confidential regions are reachable only by the highest privilege and by
/// domains holding an explicit grant. Shared pages live in non-confidential
/// memory and are visible both to their owning CVM and to the
/// non-confidential world. `confidential_domains` marks which domain ids the
/// hardware treats as confidential threads; all others fall under the
/// non-confidential rule.
struct IsolationConfig {
    std::vector<AddrRange> confidential;
    std::map<std::uint32_t, std::vector<AddrRange>> grants;  // keyed by DomainId::raw
    std::vector<SharedPageGrant> shared;
    std::set<std::uint32_t> confidential_domains;
    /// Immutable boot code; writes are refused at every privilege.
    AddrRange read_only_boot{};

    bool is_confidential_domain(DomainId d) const {
        return confidential_domains.count(d.raw) != 0;
    }

    bool in_confidential(PhysAddr addr, std::uint64_t width) const {
        AddrRange probe{addr, width};
        for (const AddrRange& r : confidential) {
            if (r.intersects(probe)) return true;
        }
        return false;
    }

    bool granted(DomainId d, PhysAddr addr, std::uint64_t width) const {
        auto it = grants.find(d.raw);
        if (it == grants.end()) return false;
        // Grants are page-granular and disjoint, so a straddling access must
        // be covered piecewise.
        std::uint64_t cur = addr.value;
        std::uint64_t end = addr.value + width;
        while (cur < end) {
            bool covered = false;
            for (const AddrRange& r : it->second) {
                if (r.contains(PhysAddr{cur})) {
                    covered = true;
                    cur = std::min(end, r.end());
                    break;
                }
            }
            if (!covered) return false;
        }
        return true;
    }

    /// Structural validation applied when a new configuration is installed.
    std::optional<Err> validate() const {
        auto pairwise_disjoint = [](const std::vector<AddrRange>& rs) {
            for (std::size_t i = 0; i < rs.size(); ++i) {
                for (std::size_t j = i + 1; j < rs.size(); ++j) {
                    if (rs[i].intersects(rs[j])) return false;
                }
            }
            return true;
        };

        if (!pairwise_disjoint(confidential)) return Err::ConfigError;
        for (const AddrRange& r : confidential) {
            if (!r.page_aligned()) return Err::Misaligned;
        }

        std::vector<AddrRange> shared_ranges;
        for (const SharedPageGrant& s : shared) {
            if (!s.range.page_aligned()) return Err::Misaligned;
            shared_ranges.push_back(s.range);
        }
        if (!pairwise_disjoint(shared_ranges)) return Err::ConfigError;

        auto inside_conf_or_shared = [&](const AddrRange& g, DomainId owner) {
            for (const AddrRange& c : confidential) {
                if (c.contains_range(g)) return true;
            }
            for (const SharedPageGrant& s : shared) {
                if (s.cvm == owner && s.range.contains_range(g)) return true;
            }
            return false;
        };

        for (const auto& [id, ranges] : grants) {
            if (!pairwise_disjoint(ranges)) return Err::ConfigError;
            DomainId d{id};
            for (const AddrRange& g : ranges) {
                if (is_confidential_domain(d)) {
                    if (!inside_conf_or_shared(g, d)) return Err::ConfigError;
                } else {
                    // A non-confidential grant must stay clear of
                    // confidential memory that is not shared out.
                    for (const AddrRange& c : confidential) {
                        if (!c.intersects(g)) continue;
                        return Err::ConfigError;
                    }
                }
            }
        }

        // Grants of two distinct confidential domains never overlap.
        for (auto it = grants.begin(); it != grants.end(); ++it) {
            for (auto jt = std::next(it); jt != grants.end(); ++jt) {
                if (!is_confidential_domain(DomainId{it->first}) ||
                    !is_confidential_domain(DomainId{jt->first})) {
                    continue;
                }
                for (const AddrRange& a : it->second) {
                    for (const AddrRange& b : jt->second) {
                        if (a.intersects(b)) return Err::ConfigError;
                    }
                }
            }
        }
        return std::nullopt;
    }
};

/// Per-platform secret enabling attestation-key derivation. Readable only at
/// the highest privilege and lockable until the next reset.
struct EndorsementDevice {
    std::array<std::uint8_t, 32> seed{};
    bool locked = false;
};

struct DeliveryRecord {
    std::uint32_t irq = 0;
    std::uint32_t hart = 0;
    PrivilegeLevel old_privilege = PrivilegeLevel::Highest;
    PrivilegeLevel new_privilege = PrivilegeLevel::Highest;
    PhysAddr handler{};
    bool delivered = false;
    DomainId interrupted = DomainId::none();
};

/// The simulated hardware platform. Every monitor and adversary action goes
/// through this interface, so the hardware contract cannot be violated from
/// above: denied accesses, privilege checks and pin rules are enforced here
/// and recorded in the trace.
///
/// The platform is a value type; snapshots for state-space exploration are
/// plain copies rebound to a fresh trace sink.
class Platform {
public:
    static constexpr std::uint32_t kDmaHart = 0xFF;

    static Outcome<Platform> create(std::uint64_t mem_size, std::uint32_t hart_count,
                                    std::uint64_t rng_seed, Trace& trace) {
        if (mem_size == 0 || mem_size % kPageSize != 0) return Err::ConfigError;
        if (hart_count == 0) return Err::ConfigError;

        Platform p;
        p.trace_ = &trace;
        p.memory_.assign(mem_size, 0);
        p.rng_state_ = rng_seed ^ 0x9e3779b97f4a7c15ull;
        for (std::uint32_t h = 0; h < hart_count; ++h) {
            HartContext ctx;
            ctx.hart_id = h;
            ctx.privilege = PrivilegeLevel::Highest;
            ctx.pc = kBootBase;
            ctx.interrupts_enabled = false;
            ctx.active_domain = DomainId::monitor();
            ctx.parked = h != 0;
            p.harts_.push_back(ctx);
        }
        // Boot code occupies page 0 and is immutable from the first cycle.
        p.isolation_.read_only_boot = AddrRange::pages(0, 1);
        // The monitor trap line is pinned to the highest privilege from
        // reset; boot repoints its handler into the monitor image.
        p.irqc_.routes[kMonitorIrq] = IrqRoute{PrivilegeLevel::Highest, kBootBase};
        p.irqc_.pinned.insert(kMonitorIrq);
        // Endorsement seed is a platform secret; derive it from the seed of
        // this simulated instance so distinct platforms attest differently.
        std::uint64_t s = rng_seed ^ 0xd1b54a32d192ed03ull;
        for (std::size_t i = 0; i < p.endorsement_.seed.size(); ++i) {
            s = splitmix(s);
            p.endorsement_.seed[i] = static_cast<std::uint8_t>(mix(s));
        }
        p.trace_->append(0, DomainId::monitor(), "reset",
                         {{"pages", arg_dec(mem_size / kPageSize)},
                          {"harts", arg_dec(hart_count)}},
                         "ok");
        return p;
    }

    static constexpr PhysAddr kBootBase = PhysAddr{0};

    std::uint64_t memory_size() const { return memory_.size(); }
    std::uint64_t page_count() const { return memory_.size() / kPageSize; }
    std::uint32_t hart_count() const { return static_cast<std::uint32_t>(harts_.size()); }

    HartContext& hart(std::uint32_t h) { return harts_.at(h); }
    const HartContext& hart(std::uint32_t h) const { return harts_.at(h); }

    const IsolationConfig& isolation() const { return isolation_; }
    const InterruptController& irqc() const { return irqc_; }
    const EndorsementDevice& endorsement() const { return endorsement_; }

    Trace& trace() { return *trace_; }
    void rebind_trace(Trace& t) { trace_ = &t; }

    /// Models the running domain updating its own registers; recorded so the
    /// trace shows when untrusted code first executes.
    void set_hart_gprs(std::uint32_t h, const Gprs& gprs) {
        HartContext& ctx = harts_.at(h);
        ctx.gprs = gprs;
        emit(h, ctx.active_domain, "hart_exec", {{"priv", to_string(ctx.privilege)}}, "ok");
    }

    // ---- Memory access (isolation component) ----

    Outcome<Word> read_phys(std::uint32_t h, PhysAddr addr, std::uint64_t width) {
        const HartContext& ctx = harts_.at(h);
        return access(h, ctx.active_domain, ctx.privilege, addr, width, false, 0);
    }

    Status write_phys(std::uint32_t h, PhysAddr addr, std::uint64_t width, Word value) {
        const HartContext& ctx = harts_.at(h);
        auto r = access(h, ctx.active_domain, ctx.privilege, addr, width, true, value);
        if (!r.ok()) return r.error();
        return ok_status();
    }

    /// Peripheral DMA, modeled as accesses by a distinguished
    /// non-confidential pseudo-domain with no hart state.
    Outcome<Word> dma_read(PhysAddr addr, std::uint64_t width) {
        return access(kDmaHart, DomainId::dma(), PrivilegeLevel::Lowest, addr, width, false, 0);
    }

    Status dma_write(PhysAddr addr, std::uint64_t width, Word value) {
        auto r = access(kDmaHart, DomainId::dma(), PrivilegeLevel::Lowest, addr, width, true,
                        value);
        if (!r.ok()) return r.error();
        return ok_status();
    }

    Status set_isolation(std::uint32_t h, IsolationConfig cfg) {
        const HartContext& ctx = harts_.at(h);
        // Hardware immutability of the boot code range survives
        // reconfiguration attempts.
        cfg.read_only_boot = isolation_.read_only_boot;
        TraceArgs args{{"conf_ranges", arg_dec(cfg.confidential.size())},
                       {"grants", arg_dec(cfg.grants.size())},
                       {"shared", arg_dec(cfg.shared.size())},
                       {"priv", to_string(ctx.privilege)}};
        if (ctx.privilege != PrivilegeLevel::Highest) {
            emit(h, ctx.active_domain, "set_isolation", std::move(args), "PrivilegeViolation");
            return Err::PrivilegeViolation;
        }
        if (auto err = cfg.validate()) {
            emit(h, ctx.active_domain, "set_isolation", std::move(args), to_string(*err));
            return *err;
        }
        isolation_ = std::move(cfg);
        emit(h, ctx.active_domain, "set_isolation", std::move(args), "ok");
        return ok_status();
    }

    // ---- Interrupt controller ----

    Status configure_interrupt(std::uint32_t h, std::uint32_t irq, PrivilegeLevel target,
                               PhysAddr handler) {
        const HartContext& ctx = harts_.at(h);
        TraceArgs args{{"irq", arg_dec(irq)},
                       {"target", to_string(target)},
                       {"handler", arg_hex(handler.value)},
                       {"priv", to_string(ctx.privilege)}};
        if (irq >= kIrqCount) {
            emit(h, ctx.active_domain, "configure_interrupt", std::move(args), "OutOfRange");
            return Err::OutOfRange;
        }
        if (ctx.privilege != PrivilegeLevel::Highest) {
            auto route = irqc_.routes.find(irq);
            bool touches_highest =
                target == PrivilegeLevel::Highest ||
                (route != irqc_.routes.end() && route->second.target == PrivilegeLevel::Highest);
            if (touches_highest) {
                emit(h, ctx.active_domain, "configure_interrupt", std::move(args),
                     "PrivilegeViolation");
                return Err::PrivilegeViolation;
            }
        }
        if (irqc_.pinned.count(irq) != 0 && target != PrivilegeLevel::Highest) {
            emit(h, ctx.active_domain, "configure_interrupt", std::move(args), "PinnedInterrupt");
            return Err::PinnedInterrupt;
        }
        irqc_.routes[irq] = IrqRoute{target, handler};
        emit(h, ctx.active_domain, "configure_interrupt", std::move(args), "ok");
        return ok_status();
    }

    /// Presents interrupt `irq` to hart `h`. Asynchronous interrupts respect
    /// the hart's interrupt-enable bit (a masked delivery changes nothing);
    /// synchronous exceptions (traps raised by the hart's own execution,
    /// e.g. environment calls) always land. Interrupts are disabled on
    /// entry; the handler is responsible for re-enabling them before exit.
    Outcome<DeliveryRecord> deliver_interrupt(std::uint32_t irq, std::uint32_t h = 0,
                                              bool synchronous = false) {
        HartContext& ctx = harts_.at(h);
        auto route = irqc_.routes.find(irq);
        TraceArgs args{{"irq", arg_dec(irq)},
                       {"priv", to_string(ctx.privilege)},
                       {"sync", synchronous ? "1" : "0"}};
        if (route == irqc_.routes.end()) {
            emit(h, ctx.active_domain, "deliver_interrupt", std::move(args),
                 "UnroutedInterrupt");
            return Err::UnroutedInterrupt;
        }
        DeliveryRecord rec;
        rec.irq = irq;
        rec.hart = h;
        rec.old_privilege = ctx.privilege;
        rec.handler = route->second.handler;
        rec.interrupted = ctx.active_domain;
        if (!synchronous && !ctx.interrupts_enabled) {
            rec.new_privilege = ctx.privilege;
            rec.delivered = false;
            emit(h, ctx.active_domain, "deliver_interrupt", std::move(args), "masked");
            return rec;
        }
        rec.new_privilege = route->second.target;
        rec.delivered = true;
        ctx.interrupted_domain = ctx.active_domain;
        ctx.interrupted_pc = ctx.pc;
        ctx.privilege = route->second.target;
        ctx.pc = route->second.handler;
        ctx.interrupts_enabled = false;
        if (route->second.target == PrivilegeLevel::Highest) {
            ctx.active_domain = DomainId::monitor();
        }
        args.push_back({"target", to_string(rec.new_privilege)});
        args.push_back({"handler", arg_hex(rec.handler.value)});
        emit(h, ctx.active_domain, "deliver_interrupt", std::move(args), "ok");
        return rec;
    }

    /// Return-from-trap: lowers the hart to `target_priv`, installs the
    /// register file and entry point of the domain being entered, and
    /// re-enables interrupts if requested. Raising privilege this way is
    /// refused; that is only possible through interrupt delivery.
    ///
    /// `declared` names the register positions that legitimately carry data
    /// across the domain boundary; `microarch_clean` reports whether the
    /// scratch state was clean at the moment of exit. Both feed the trace
    /// checkers.
    Status hart_exit(std::uint32_t h, DomainId target, PrivilegeLevel target_priv, PhysAddr pc,
                     const Gprs& gprs, bool enable_interrupts, const std::string& node,
                     const std::string& declared) {
        HartContext& ctx = harts_.at(h);
        TraceArgs args{{"node", node},
                       {"to", to_string(target)},
                       {"priv", to_string(target_priv)},
                       {"pc", arg_hex(pc.value)},
                       {"gprs", gprs_args(gprs)},
                       {"declared", declared.empty() ? "-" : declared},
                       {"microarch_clean", ctx.microarch.clean() ? "1" : "0"},
                       {"ie", enable_interrupts ? "1" : "0"}};
        if (target_priv > ctx.privilege) {
            emit(h, ctx.active_domain, "hart_exit", std::move(args), "PrivilegeViolation");
            return Err::PrivilegeViolation;
        }
        ctx.privilege = target_priv;
        ctx.pc = pc;
        ctx.gprs = gprs;
        ctx.interrupts_enabled = enable_interrupts;
        ctx.active_domain = target;
        ctx.parked = false;
        emit(h, target, "hart_exit", std::move(args), "ok");
        return ok_status();
    }

    // ---- Block transfers (monitor bulk memory work; one event each) ----

    Outcome<std::vector<std::uint8_t>> read_block(std::uint32_t h, PhysAddr addr,
                                                  std::uint64_t len) {
        const HartContext& ctx = harts_.at(h);
        TraceArgs args{{"addr", arg_hex(addr.value)},
                       {"len", arg_dec(len)},
                       {"ie", ctx.interrupts_enabled ? "1" : "0"}};
        if (addr.value + len > memory_.size()) {
            emit(h, ctx.active_domain, "read_block", std::move(args), "OutOfRange");
            return Err::OutOfRange;
        }
        if (!allowed(ctx.active_domain, ctx.privilege, addr, len, false)) {
            emit(h, ctx.active_domain, "read_block", std::move(args), "AccessDenied");
            return Err::AccessDenied;
        }
        std::vector<std::uint8_t> out(memory_.begin() + static_cast<std::ptrdiff_t>(addr.value),
                                      memory_.begin() +
                                          static_cast<std::ptrdiff_t>(addr.value + len));
        if (isolation_.in_confidential(addr, len)) {
            harts_.at(h).microarch.taint(ctx.active_domain, addr.value);
        }
        emit(h, ctx.active_domain, "read_block", std::move(args), "ok");
        return out;
    }

    Status write_block(std::uint32_t h, PhysAddr addr, std::span<const std::uint8_t> bytes) {
        const HartContext& ctx = harts_.at(h);
        TraceArgs args{{"addr", arg_hex(addr.value)},
                       {"len", arg_dec(bytes.size())},
                       {"ie", ctx.interrupts_enabled ? "1" : "0"}};
        if (addr.value + bytes.size() > memory_.size()) {
            emit(h, ctx.active_domain, "write_block", std::move(args), "OutOfRange");
            return Err::OutOfRange;
        }
        if (!allowed(ctx.active_domain, ctx.privilege, addr, bytes.size(), true)) {
            emit(h, ctx.active_domain, "write_block", std::move(args), "AccessDenied");
            return Err::AccessDenied;
        }
        std::copy(bytes.begin(), bytes.end(),
                  memory_.begin() + static_cast<std::ptrdiff_t>(addr.value));
        if (isolation_.in_confidential(addr, bytes.size())) {
            harts_.at(h).microarch.taint(ctx.active_domain, addr.value);
        }
        emit(h, ctx.active_domain, "write_block", std::move(args), "ok");
        return ok_status();
    }

    Status fill_block(std::uint32_t h, AddrRange range, std::uint8_t byte) {
        const HartContext& ctx = harts_.at(h);
        TraceArgs args{{"addr", arg_hex(range.base.value)},
                       {"len", arg_dec(range.size)},
                       {"byte", arg_dec(byte)},
                       {"ie", ctx.interrupts_enabled ? "1" : "0"}};
        if (range.end() > memory_.size()) {
            emit(h, ctx.active_domain, "fill_block", std::move(args), "OutOfRange");
            return Err::OutOfRange;
        }
        if (!allowed(ctx.active_domain, ctx.privilege, range.base, range.size, true)) {
            emit(h, ctx.active_domain, "fill_block", std::move(args), "AccessDenied");
            return Err::AccessDenied;
        }
        std::fill(memory_.begin() + static_cast<std::ptrdiff_t>(range.base.value),
                  memory_.begin() + static_cast<std::ptrdiff_t>(range.end()), byte);
        emit(h, ctx.active_domain, "fill_block", std::move(args), "ok");
        return ok_status();
    }

    /// Checker probe: would this access be permitted right now? Does not
    /// touch state or the trace.
    bool probe_allowed(DomainId domain, PrivilegeLevel priv, AddrRange range,
                       bool is_write) const {
        return allowed(domain, priv, range.base, range.size, is_write);
    }

    // ---- Microarchitectural state ----

    void clear_microarch(std::uint32_t h) {
        HartContext& ctx = harts_.at(h);
        ctx.microarch.clear();
        emit(h, ctx.active_domain, "clear_microarch", {}, "ok");
    }

    // ---- Endorsement seed ----

    Outcome<std::array<std::uint8_t, 32>> read_seed(std::uint32_t h) {
        const HartContext& ctx = harts_.at(h);
        TraceArgs args{{"priv", to_string(ctx.privilege)}};
        if (ctx.privilege != PrivilegeLevel::Highest) {
            emit(h, ctx.active_domain, "read_seed", std::move(args), "PrivilegeViolation");
            return Err::PrivilegeViolation;
        }
        if (endorsement_.locked) {
            emit(h, ctx.active_domain, "read_seed", std::move(args), "SeedLocked");
            return Err::SeedLocked;
        }
        emit(h, ctx.active_domain, "read_seed", std::move(args), "ok");
        return endorsement_.seed;
    }

    Status lock_seed(std::uint32_t h) {
        const HartContext& ctx = harts_.at(h);
        endorsement_.locked = true;
        emit(h, ctx.active_domain, "lock_seed", {{"priv", to_string(ctx.privilege)}}, "ok");
        return ok_status();
    }

    // ---- Atomics & randomness ----

    Outcome<Word> atomic_cas(std::uint32_t h, PhysAddr addr, Word expected, Word desired) {
        const HartContext& ctx = harts_.at(h);
        TraceArgs args{{"addr", arg_hex(addr.value)},
                       {"expected", arg_dec(expected)},
                       {"new", arg_dec(desired)}};
        if (addr.value % 8 != 0) {
            emit(h, ctx.active_domain, "atomic_cas", std::move(args), "Misaligned");
            return Err::Misaligned;
        }
        if (addr.value + 8 > memory_.size()) {
            emit(h, ctx.active_domain, "atomic_cas", std::move(args), "OutOfRange");
            return Err::OutOfRange;
        }
        if (!allowed(ctx.active_domain, ctx.privilege, addr, 8, true)) {
            emit(h, ctx.active_domain, "atomic_cas", std::move(args), "AccessDenied");
            return Err::AccessDenied;
        }
        Word prior = load_word(addr, 8);
        if (prior == expected) store_word(addr, 8, desired);
        args.push_back({"prior", arg_dec(prior)});
        emit(h, ctx.active_domain, "atomic_cas", std::move(args), "ok");
        return prior;
    }

    Word rng_next() {
        rng_state_ = splitmix(rng_state_);
        Word out = mix(rng_state_);
        trace_->append(0, DomainId::monitor(), "rng_next", {{"value", arg_hex(out)}}, "ok");
        return out;
    }

    // ---- Token-mediated access ----
    // Same isolation checks as read_phys/write_phys, but recorded as a
    // token-scoped operation so access events inside tracker-managed memory
    // always carry the serial of the token that authorized them.

    Outcome<Word> token_access(std::uint32_t h, std::uint64_t serial, PhysAddr addr,
                               std::uint64_t width, bool is_write, Word value) {
        const HartContext& ctx = harts_.at(h);
        const char* op = is_write ? "token_write" : "token_read";
        TraceArgs args{{"serial", arg_dec(serial)},
                       {"addr", arg_hex(addr.value)},
                       {"width", arg_dec(width)},
                       {"ie", ctx.interrupts_enabled ? "1" : "0"}};
        if (is_write) args.push_back({"val", arg_hex(value)});
        if (addr.value + width > memory_.size()) {
            emit(h, ctx.active_domain, op, std::move(args), "OutOfRange");
            return Err::OutOfRange;
        }
        if (!allowed(ctx.active_domain, ctx.privilege, addr, width, is_write)) {
            emit(h, ctx.active_domain, op, std::move(args), "AccessDenied");
            return Err::AccessDenied;
        }
        Word result = 0;
        if (is_write) {
            store_word(addr, width, value);
        } else {
            result = load_word(addr, width);
            args.push_back({"val", arg_hex(result)});
        }
        if (isolation_.in_confidential(addr, width)) {
            harts_.at(h).microarch.taint(ctx.active_domain, addr.value);
        }
        emit(h, ctx.active_domain, op, std::move(args), "ok");
        return result;
    }

    /// Block fill through a token (zeroization path). One event per call.
    Status token_fill(std::uint32_t h, std::uint64_t serial, AddrRange range,
                      std::uint8_t byte) {
        const HartContext& ctx = harts_.at(h);
        TraceArgs args{{"serial", arg_dec(serial)},
                       {"addr", arg_hex(range.base.value)},
                       {"len", arg_dec(range.size)},
                       {"byte", arg_dec(byte)},
                       {"ie", ctx.interrupts_enabled ? "1" : "0"}};
        if (range.end() > memory_.size()) {
            emit(h, ctx.active_domain, "token_fill", std::move(args), "OutOfRange");
            return Err::OutOfRange;
        }
        if (!allowed(ctx.active_domain, ctx.privilege, range.base, range.size, true)) {
            emit(h, ctx.active_domain, "token_fill", std::move(args), "AccessDenied");
            return Err::AccessDenied;
        }
        std::fill(memory_.begin() + static_cast<std::ptrdiff_t>(range.base.value),
                  memory_.begin() + static_cast<std::ptrdiff_t>(range.end()), byte);
        if (isolation_.in_confidential(range.base, range.size)) {
            harts_.at(h).microarch.taint(ctx.active_domain, range.base.value);
        }
        emit(h, ctx.active_domain, "token_fill", std::move(args), "ok");
        return ok_status();
    }

    /// Bulk copy executed at the caller's privilege (monitor use). One event.
    Status copy_block(std::uint32_t h, PhysAddr dst, PhysAddr src, std::uint64_t len,
                      std::uint64_t dst_serial) {
        const HartContext& ctx = harts_.at(h);
        TraceArgs args{{"serial", arg_dec(dst_serial)},
                       {"dst", arg_hex(dst.value)},
                       {"src", arg_hex(src.value)},
                       {"len", arg_dec(len)},
                       {"ie", ctx.interrupts_enabled ? "1" : "0"}};
        if (dst.value + len > memory_.size() || src.value + len > memory_.size()) {
            emit(h, ctx.active_domain, "copy_block", std::move(args), "OutOfRange");
            return Err::OutOfRange;
        }
        if (!allowed(ctx.active_domain, ctx.privilege, src, len, false) ||
            !allowed(ctx.active_domain, ctx.privilege, dst, len, true)) {
            emit(h, ctx.active_domain, "copy_block", std::move(args), "AccessDenied");
            return Err::AccessDenied;
        }
        std::memmove(memory_.data() + dst.value, memory_.data() + src.value, len);
        if (isolation_.in_confidential(dst, len)) {
            harts_.at(h).microarch.taint(ctx.active_domain, dst.value);
        }
        emit(h, ctx.active_domain, "copy_block", std::move(args), "ok");
        return ok_status();
    }

    /// Boot-once latches (reset-scoped write-once bits). Returns true on the
    /// first claim of a given latch since reset.
    bool latch_once(std::string_view name) {
        auto [it, inserted] = latches_.insert(std::string(name));
        (void)it;
        return inserted;
    }

    // ---- Instrumentation (outside the simulated universe) ----
    // Used by checkers, snapshot hashing and the fault injector; never by
    // modeled software.

    const std::vector<std::uint8_t>& memory_bytes() const { return memory_; }
    std::vector<std::uint8_t>& raw_memory() { return memory_; }
    IsolationConfig& raw_isolation() { return isolation_; }
    InterruptController& raw_irqc() { return irqc_; }
    EndorsementDevice& raw_endorsement() { return endorsement_; }

    bool range_is_zero(AddrRange r) const {
        if (r.end() > memory_.size()) return false;
        for (std::uint64_t i = r.base.value; i < r.end(); ++i) {
            if (memory_[i] != 0) return false;
        }
        return true;
    }

    std::uint64_t rng_state() const { return rng_state_; }

private:
    static std::uint64_t splitmix(std::uint64_t x) { return x + 0x9e3779b97f4a7c15ull; }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    bool allowed(DomainId domain, PrivilegeLevel priv, PhysAddr addr, std::uint64_t width,
                 bool is_write) const {
        if (is_write && isolation_.read_only_boot.intersects(AddrRange{addr, width})) {
            return false;
        }
        if (priv == PrivilegeLevel::Highest) return true;
        if (isolation_.is_confidential_domain(domain)) {
            return isolation_.granted(domain, addr, width);
        }
        if (!isolation_.in_confidential(addr, width)) return true;
        // Confidential memory is reachable for a non-confidential thread
        // only through an explicit grant (none exist in a healthy system).
        return isolation_.granted(domain, addr, width);
    }

    Outcome<Word> access(std::uint32_t h, DomainId domain, PrivilegeLevel priv, PhysAddr addr,
                         std::uint64_t width, bool is_write, Word value) {
        const char* op = is_write ? "write_phys" : "read_phys";
        TraceArgs args{{"addr", arg_hex(addr.value)}, {"width", arg_dec(width)}};
        if (is_write) args.push_back({"val", arg_hex(value)});
        bool conf = isolation_.in_confidential(addr, width);
        args.push_back({"conf", conf ? "1" : "0"});
        if (h != kDmaHart) {
            args.push_back({"priv", to_string(harts_.at(h).privilege)});
            args.push_back({"ie", harts_.at(h).interrupts_enabled ? "1" : "0"});
        }

        if (width == 0 || width > 8 || (width & (width - 1)) != 0) {
            emit(h, domain, op, std::move(args), "Misaligned");
            return Err::Misaligned;
        }
        if (addr.value + width > memory_.size() || addr.value + width < addr.value) {
            emit(h, domain, op, std::move(args), "OutOfRange");
            return Err::OutOfRange;
        }
        if (!allowed(domain, priv, addr, width, is_write)) {
            emit(h, domain, op, std::move(args), "AccessDenied");
            return Err::AccessDenied;
        }
        Word result = 0;
        if (is_write) {
            store_word(addr, width, value);
        } else {
            result = load_word(addr, width);
            args.push_back({"val", arg_hex(result)});
        }
        if (conf && h != kDmaHart) {
            harts_.at(h).microarch.taint(domain, addr.value);
        }
        emit(h, domain, op, std::move(args), "ok");
        return result;
    }

    Word load_word(PhysAddr addr, std::uint64_t width) const {
        Word v = 0;
        for (std::uint64_t i = 0; i < width; ++i) {
            v |= static_cast<Word>(memory_[addr.value + i]) << (8 * i);
        }
        return v;
    }

    void store_word(PhysAddr addr, std::uint64_t width, Word value) {
        for (std::uint64_t i = 0; i < width; ++i) {
            memory_[addr.value + i] = static_cast<std::uint8_t>(value >> (8 * i));
        }
    }

    void emit(std::uint32_t h, DomainId domain, std::string op, TraceArgs args,
              std::string outcome) {
        trace_->append(h, domain, std::move(op), std::move(args), std::move(outcome));
    }

    std::vector<std::uint8_t> memory_;
    std::vector<HartContext> harts_;
    IsolationConfig isolation_;
    InterruptController irqc_;
    EndorsementDevice endorsement_;
    std::set<std::string> latches_;
    std::uint64_t rng_state_ = 0;
    Trace* trace_ = nullptr;
};

}  // namespace cvmsim
