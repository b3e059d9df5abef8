// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cvmsim/attest.hpp"
#include "cvmsim/core.hpp"
#include "cvmsim/fsm.hpp"
#include "cvmsim/memory_tracker.hpp"
#include "cvmsim/mutation.hpp"
#include "cvmsim/platform.hpp"

namespace cvmsim {

enum class DomainKind : std::uint8_t { Hypervisor, Vm, Cvm };

inline const char* to_string(DomainKind k) {
    switch (k) {
    case DomainKind::Hypervisor: return "hypervisor";
    case DomainKind::Vm: return "vm";
    case DomainKind::Cvm: return "cvm";
    }
    return "?";
}

enum class Lifecycle : std::uint8_t { Created, Runnable, Terminated };

inline const char* to_string(Lifecycle l) {
    switch (l) {
    case Lifecycle::Created: return "created";
    case Lifecycle::Runnable: return "runnable";
    case Lifecycle::Terminated: return "terminated";
    }
    return "?";
}

/// Monitor call selectors placed in gpr0 by the calling domain.
/// Hypervisor-side calls:
inline constexpr Word kHvCallPromote = 1;
inline constexpr Word kHvCallResume = 2;
inline constexpr Word kHvCallTerminate = 3;
inline constexpr Word kHvCallAttest = 4;
inline constexpr Word kHvCallStartHart = 5;
/// CVM-side calls: selectors below this bound are hypercalls routed to the
/// hypervisor (subject to the declared whitelist); the rest are handled
/// inside the monitor.
inline constexpr Word kCvmHypercallLimit = 0x100;
inline constexpr Word kCvmCallYield = 0;
inline constexpr Word kCvmCallSharePage = 0x100;
inline constexpr Word kCvmCallAttest = 0x101;
inline constexpr Word kCvmCallTerminateSelf = 0x102;

/// Reason codes the hypervisor receives in gpr0 when a CVM leaves
/// confidential execution; packed as (code << 32) | selector.
enum class CvmExitCode : std::uint32_t {
    None = 0,
    Yield = 1,
    Interrupted = 2,
    Hypercall = 3,
    MmioLoad = 4,
    MmioStore = 5,
    Terminated = 6,
    Error = 7,
};

inline Word pack_exit_word(CvmExitCode code, Word selector) {
    return (static_cast<Word>(code) << 32) | (selector & 0xFFFFFFFFull);
}

inline CvmExitCode unpack_exit_code(Word w) {
    return static_cast<CvmExitCode>(static_cast<std::uint32_t>(w >> 32));
}

enum class TrapCause : std::uint8_t { EcallFromHv, EcallFromCvm, MmioLoadFault, MmioStoreFault,
                                      Interrupt };

inline const char* to_string(TrapCause c) {
    switch (c) {
    case TrapCause::EcallFromHv: return "ecall_hv";
    case TrapCause::EcallFromCvm: return "ecall_cvm";
    case TrapCause::MmioLoadFault: return "mmio_load";
    case TrapCause::MmioStoreFault: return "mmio_store";
    case TrapCause::Interrupt: return "interrupt";
    }
    return "?";
}

/// Static register-exposure table: which positions cross the domain
/// boundary for each hypercall id, and for the two MMIO shapes. Loaded from
/// a config file or seeded with the built-in defaults.
struct WhitelistTable {
    std::map<Word, RegisterWhitelist> hypercalls;
    RegisterWhitelist mmio_load{{1, 2}, {0}};
    RegisterWhitelist mmio_store{{1, 2, 3}, {}};

    const RegisterWhitelist* find(Word selector) const {
        auto it = hypercalls.find(selector);
        return it == hypercalls.end() ? nullptr : &it->second;
    }

    static WhitelistTable defaults() {
        WhitelistTable t;
        t.hypercalls[0] = RegisterWhitelist{{}, {}};        // yield
        t.hypercalls[1] = RegisterWhitelist{{1}, {0}};      // console_putchar
        t.hypercalls[2] = RegisterWhitelist{{}, {0}};       // console_getchar
        t.hypercalls[3] = RegisterWhitelist{{1, 2}, {0}};   // shared_buffer_signal
        return t;
    }
};

struct PendingCall {
    Word selector = 0;
    CvmExitCode kind = CvmExitCode::None;
    RegisterWhitelist whitelist;
};

/// One registered security domain: the hypervisor, a legacy VM awaiting
/// promotion, or a CVM with its page table and measurement.
struct SecurityDomain {
    DomainId id{};
    DomainKind kind = DomainKind::Vm;
    Lifecycle lifecycle = Lifecycle::Created;
    std::optional<PageTable> page_table;
    std::optional<Measurement> measurement;
    /// guest page -> shared non-confidential page
    std::map<std::uint64_t, AddrRange> shared;
    /// Pre-promotion image pages (guest order) in non-confidential memory.
    std::vector<PhysAddr> image_pages;
    std::optional<std::uint32_t> running_hart;
    std::optional<PendingCall> pending;

    SecurityDomain clone() const {
        SecurityDomain c;
        c.id = id;
        c.kind = kind;
        c.lifecycle = lifecycle;
        if (page_table) c.page_table = page_table->clone();
        c.measurement = measurement;
        c.shared = shared;
        c.image_pages = image_pages;
        c.running_hart = running_hart;
        c.pending = pending;
        return c;
    }
};

/// Physical memory map established at boot.
struct MonitorLayout {
    AddrRange crtm{};
    AddrRange monitor_region{};   // monitor image + one data page (gates)
    AddrRange control_region{};   // context slots page + key page
    AddrRange tracker_range{};    // token-managed confidential pages
    AddrRange confidential{};     // the single confidential region
    AddrRange nc_heap{};          // spare non-confidential pages
    PhysAddr trap_handler{};
    PhysAddr hv_entry{};

    static constexpr std::uint64_t kSlotSize = 512;
    static constexpr std::uint64_t kControlPages = 2;

    AddrRange context_slot(DomainId d) const {
        return AddrRange{control_region.base.offset(d.raw * kSlotSize), kSlotSize};
    }
    AddrRange key_slot() const {
        return AddrRange{control_region.base.offset(kPageSize), 32};
    }
    PhysAddr pool_gate() const {
        // Lock words live in the monitor data page (last page of the
        // monitor region).
        return PhysAddr{monitor_region.end() - kPageSize};
    }
    PhysAddr busy_word(DomainId d) const { return pool_gate().offset(8 * (1 + d.raw)); }
};

struct PromoteResult {
    DomainId cvm_id{};
    Digest measurement{};
};

struct CvmTrapResult {
    /// True when control went back to the CVM (monitor-handled call); false
    /// when the hart exited to the hypervisor.
    bool resumed_cvm = false;
    CvmExitCode exit_code = CvmExitCode::None;
    Word selector = 0;
    Word value = 0;
    std::optional<AttestationReport> report;
};

struct HvCallResult {
    Word exit_word = 0;
    std::optional<PromoteResult> promoted;
    std::optional<CvmExitCode> cvm_exit;
    std::optional<AttestationReport> report;
};

/// The security monitor: highest-privilege software enforcing the
/// confidential-computing guarantees. Owns the token pool, the domain table
/// and the per-hart control-flow machine; every entry runs with interrupts
/// disabled and every exit passes through sanitization.
class SecurityMonitor {
public:
    SecurityMonitor() = default;
    SecurityMonitor(SecurityMonitor&&) = default;
    SecurityMonitor& operator=(SecurityMonitor&&) = default;

    bool booted() const { return booted_; }
    const MonitorLayout& layout() const { return layout_; }
    const TokenPool& pool() const { return pool_; }
    const WhitelistTable& whitelist() const { return whitelist_; }
    void set_whitelist(WhitelistTable t) { whitelist_ = std::move(t); }
    const std::vector<Measurement>& boot_chain() const { return boot_chain_; }
    const VerifyKey& verify_key() const { return verify_key_; }

    const std::map<std::uint32_t, SecurityDomain>& domains() const { return domains_; }

    const SecurityDomain* find_domain(DomainId id) const {
        auto it = domains_.find(id.raw);
        return it == domains_.end() ? nullptr : &it->second;
    }

    const DomainContext* find_context(DomainId id) const {
        auto it = contexts_.find(id.raw);
        return it == contexts_.end() ? nullptr : &it->second;
    }

    std::optional<FsmNode> fsm_node(std::uint32_t hart) const {
        return hart < fsm_.size() ? fsm_[hart].node : std::nullopt;
    }

    // ---- Boot-phase interface (used by secure_boot only; refuses reuse) ----

    Status install_boot_state(Platform& platform, MonitorLayout layout, TokenPool pool,
                              AttestationKey key, std::vector<Measurement> chain,
                              WhitelistTable whitelist) {
        if (booted_) return Err::AlreadyInitialized;
        layout_ = layout;
        pool_ = std::move(pool);
        attestation_key_ = std::move(key);
        verify_key_ = public_key_of(attestation_key_);
        boot_chain_ = std::move(chain);
        whitelist_ = std::move(whitelist);
        fsm_.assign(platform.hart_count(), HartFsm{});

        SecurityDomain hv;
        hv.id = DomainId::hypervisor();
        hv.kind = DomainKind::Hypervisor;
        hv.lifecycle = Lifecycle::Runnable;
        domains_.emplace(hv.id.raw, std::move(hv));

        DomainContext hv_ctx;
        hv_ctx.domain = DomainId::hypervisor();
        hv_ctx.pc = layout_.hv_entry;
        hv_ctx.privilege = PrivilegeLevel::Middle;
        hv_ctx.interrupts_enabled = true;
        hv_ctx.saved_routes = platform.irqc().routes;
        hv_ctx.slot = layout_.context_slot(hv_ctx.domain);
        hv_ctx.valid = true;
        auto st = store_context(platform, 0, hv_ctx);
        if (!st.ok()) return st;
        contexts_[hv_ctx.domain.raw] = hv_ctx;

        booted_ = true;
        return ok_status();
    }

    // ---- Hypervisor-facing calls ----

    /// Registers a legacy VM: the hypervisor owns `pages` non-confidential
    /// pages holding the VM image in guest order. Bookkeeping only; the
    /// monitor touches the pages at promotion time.
    Outcome<DomainId> create_vm(Platform& platform, std::vector<PhysAddr> pages) {
        if (!booted_) return Err::BootSequenceError;
        if (next_domain_ >= kMaxDomains) return Err::DomainLimit;
        SecurityDomain vm;
        vm.id = DomainId{next_domain_++};
        vm.kind = DomainKind::Vm;
        vm.lifecycle = Lifecycle::Created;
        std::size_t page_count = pages.size();
        vm.image_pages = std::move(pages);
        DomainId id = vm.id;
        domains_.emplace(id.raw, std::move(vm));
        platform.trace().append(0, DomainId::hypervisor(), "vm_create",
                                {{"id", to_string(id)}, {"pages", arg_dec(page_count)}}, "ok");
        return id;
    }

    Outcome<PromoteResult> promote_to_cvm(Platform& platform, std::uint32_t hart,
                                          DomainId vm_id) {
        Gprs regs{};
        regs[0] = kHvCallPromote;
        regs[1] = vm_id.raw;
        auto r = sm_call_from_hv(platform, hart, regs);
        if (!r.ok()) return r.error();
        if (!r.value().promoted) return Err::UnknownDomain;
        return *r.value().promoted;
    }

    Outcome<CvmExitCode> resume_cvm(Platform& platform, std::uint32_t hart, DomainId cvm_id,
                                    const Gprs& results = Gprs{}) {
        Gprs regs = results;
        regs[0] = kHvCallResume;
        regs[1] = cvm_id.raw;
        auto r = sm_call_from_hv(platform, hart, regs);
        if (!r.ok()) return r.error();
        return r.value().cvm_exit.value_or(CvmExitCode::None);
    }

    Status terminate_cvm(Platform& platform, std::uint32_t hart, DomainId cvm_id) {
        Gprs regs{};
        regs[0] = kHvCallTerminate;
        regs[1] = cvm_id.raw;
        auto r = sm_call_from_hv(platform, hart, regs);
        if (!r.ok()) return r.error();
        return ok_status();
    }

    Outcome<AttestationReport> attest(Platform& platform, std::uint32_t hart, DomainId cvm_id,
                                      Word nonce) {
        Gprs regs{};
        regs[0] = kHvCallAttest;
        regs[1] = cvm_id.raw;
        regs[2] = nonce;
        auto r = sm_call_from_hv(platform, hart, regs);
        if (!r.ok()) return r.error();
        if (!r.value().report) return Err::UnknownDomain;
        return *r.value().report;
    }

    Status start_hart(Platform& platform, std::uint32_t hart, std::uint32_t target_hart) {
        Gprs regs{};
        regs[0] = kHvCallStartHart;
        regs[1] = target_hart;
        auto r = sm_call_from_hv(platform, hart, regs);
        if (!r.ok()) return r.error();
        return ok_status();
    }

    /// Generic hypervisor-to-monitor call: traps into the monitor, routes,
    /// and exits back to the hypervisor (or into a CVM for resume). The
    /// register file passed here is what the hypervisor loaded before the
    /// environment call.
    Outcome<HvCallResult> sm_call_from_hv(Platform& platform, std::uint32_t hart, Gprs regs) {
        if (!booted_) return Err::BootSequenceError;
        HartContext& ctx = platform.hart(hart);
        if (ctx.active_domain != DomainId::hypervisor() ||
            ctx.privilege == PrivilegeLevel::Highest) {
            return Err::PrivilegeViolation;
        }
        platform.set_hart_gprs(hart, regs);
        auto entry = trap_entry(platform, hart, TrapCause::EcallFromHv);
        if (!entry.ok()) return entry.error();

        fsm_node_step(platform, hart, FsmNode::NcRoute);
        Word selector = regs[0];
        HvCallResult result;
        Err failure = Err::UndeclaredCall;
        bool failed = false;

        switch (selector) {
        case kHvCallPromote: {
            auto r = handle_promote(platform, hart, DomainId{static_cast<std::uint32_t>(regs[1])});
            if (r.ok()) {
                result.promoted = r.value();
                result.exit_word = pack_exit_word(CvmExitCode::None, r.value().cvm_id.raw);
            } else {
                failed = true;
                failure = r.error();
            }
            break;
        }
        case kHvCallResume: {
            auto r = handle_resume(platform, hart, DomainId{static_cast<std::uint32_t>(regs[1])},
                                   regs);
            if (r.ok()) {
                // The hart is now inside the CVM; the call completes when
                // the CVM next traps. Callers observe the entry itself.
                result.cvm_exit = CvmExitCode::None;
                return result;
            }
            failed = true;
            failure = r.error();
            break;
        }
        case kHvCallTerminate: {
            auto r = handle_terminate(platform, hart,
                                      DomainId{static_cast<std::uint32_t>(regs[1])});
            if (r.ok()) {
                result.exit_word = pack_exit_word(CvmExitCode::Terminated, regs[1]);
            } else {
                failed = true;
                failure = r.error();
            }
            break;
        }
        case kHvCallAttest: {
            auto r = handle_attest(platform, hart, DomainId{static_cast<std::uint32_t>(regs[1])},
                                   regs[2]);
            if (r.ok()) {
                result.report = std::move(r).value();
                result.exit_word = pack_exit_word(CvmExitCode::None, 0);
            } else {
                failed = true;
                failure = r.error();
            }
            break;
        }
        case kHvCallStartHart: {
            auto r = handle_start_hart(platform, hart, static_cast<std::uint32_t>(regs[1]));
            if (r.ok()) {
                result.exit_word = pack_exit_word(CvmExitCode::None, regs[1]);
            } else {
                failed = true;
                failure = r.error();
            }
            break;
        }
        default:
            failed = true;
            // CVM-reserved selectors invoked from the hypervisor are a
            // distinct refusal: only the CVM itself may open those flows.
            failure = selector >= kCvmHypercallLimit ? Err::NotFromCvm : Err::UndeclaredCall;
            break;
        }

        // Exit back to the hypervisor from the NC side. Errors are data: the
        // caller gets an error word, no other domain changed state.
        Word exit_word = failed ? pack_exit_word(CvmExitCode::Error, static_cast<Word>(failure))
                                : result.exit_word;
        auto ex = exit_to_domain(platform, hart, DomainId::hypervisor(), FsmNode::NcExit,
                                 {{0, exit_word}});
        if (!ex.ok()) return ex.error();
        if (failed) return failure;
        return result;
    }

    // ---- CVM-facing trap handling ----

    /// Handles a trap raised while a CVM executes: an environment call, an
    /// MMIO fault, or an asynchronous interrupt that was already delivered
    /// to the monitor (cause Interrupt). The CVM's registers are read from
    /// the hart.
    Outcome<CvmTrapResult> cvm_trap(Platform& platform, std::uint32_t hart, TrapCause cause) {
        if (!booted_) return Err::BootSequenceError;
        const HartContext& hctx = platform.hart(hart);
        DomainId source = cause == TrapCause::Interrupt ? hctx.interrupted_domain
                                                        : hctx.active_domain;
        {
            const SecurityDomain* d = find_domain(source);
            if (!d || d->kind != DomainKind::Cvm) return Err::NotFromCvm;
        }
        auto entry = trap_entry(platform, hart, cause);
        if (!entry.ok()) return entry.error();
        DomainId cvm = fsm_[hart].interrupted;
        SecurityDomain* dom = mutable_domain(cvm);
        if (!dom) return Err::NotFromCvm;

        fsm_node_step(platform, hart, FsmNode::CRoute);
        const Gprs& saved_regs = contexts_[cvm.raw].gprs;
        Word selector = saved_regs[0];

        switch (cause) {
        case TrapCause::Interrupt:
            return route_preemption(platform, hart, *dom);
        case TrapCause::EcallFromCvm:
            if (selector >= kCvmHypercallLimit) {
                return handle_cvm_monitor_call(platform, hart, *dom, selector, saved_regs);
            }
            return route_hypercall(platform, hart, *dom, selector, CvmExitCode::Hypercall,
                                   nullptr);
        case TrapCause::MmioLoadFault:
        case TrapCause::MmioStoreFault:
            return route_mmio(platform, hart, *dom, cause, saved_regs);
        default:
            return Err::UnknownCause;
        }
    }

    /// Entry point for an asynchronous interrupt that was delivered to the
    /// monitor while untrusted code ran. A preempted CVM is suspended back
    /// to the hypervisor; an interrupted hypervisor gets control straight
    /// back after the monitor's (trivial) service.
    Outcome<CvmTrapResult> handle_interrupt(Platform& platform, std::uint32_t hart) {
        if (!booted_) return Err::BootSequenceError;
        const HartContext& hctx = platform.hart(hart);
        if (hctx.privilege != PrivilegeLevel::Highest) return Err::UnknownCause;
        DomainId source = hctx.interrupted_domain;
        const SecurityDomain* d = find_domain(source);
        if (d && d->kind == DomainKind::Cvm) {
            return cvm_trap(platform, hart, TrapCause::Interrupt);
        }
        // Non-confidential side: save, route, return to the interrupted
        // context unchanged.
        auto entry = trap_entry(platform, hart, TrapCause::Interrupt);
        if (!entry.ok()) return entry.error();
        fsm_node_step(platform, hart, FsmNode::NcRoute);
        auto ex = exit_to_domain(platform, hart, source, FsmNode::NcExit, {});
        if (!ex.ok()) return ex.error();
        CvmTrapResult res;
        res.resumed_cvm = false;
        res.exit_code = CvmExitCode::None;
        return res;
    }

    /// Shared pages registered for a CVM (what the hypervisor polls to find
    /// communication buffers).
    std::vector<AddrRange> shared_pages(DomainId cvm) const {
        std::vector<AddrRange> out;
        if (const SecurityDomain* d = find_domain(cvm)) {
            for (const auto& [g, r] : d->shared) out.push_back(r);
        }
        return out;
    }

    /// Non-confidential heap allocation (hypervisor-side plumbing used to
    /// stage VM images).
    Outcome<AddrRange> alloc_nc_page() {
        if (nc_heap_cursor_ >= layout_.nc_heap.page_count()) return Err::OutOfMemory;
        AddrRange page{layout_.nc_heap.base.offset(nc_heap_cursor_ * kPageSize), kPageSize};
        nc_heap_cursor_++;
        return page;
    }

    /// Dumps every live page token (serial, base, state, owner) into the
    /// trace, one `token_ledger` event per token, in serial order.
    void dump_token_ledger(Platform& platform) const {
        struct Row {
            std::uint64_t serial;
            PhysAddr base;
            const char* state;
            DomainId owner;
        };
        std::vector<Row> rows;
        for (const UnallocatedPage& t : pool_.free_tokens()) {
            rows.push_back({t.serial(), t.base(), "unallocated", DomainId::monitor()});
        }
        for (const auto& [raw, dom] : domains_) {
            if (!dom.page_table) continue;
            rows.push_back({dom.page_table->root().serial(), dom.page_table->root().base(),
                            "allocated", dom.id});
            for (const auto& [g, t] : dom.page_table->mappings()) {
                rows.push_back({t.serial(), t.base(), "allocated", dom.id});
            }
        }
        std::sort(rows.begin(), rows.end(),
                  [](const Row& a, const Row& b) { return a.serial < b.serial; });
        for (const Row& r : rows) {
            platform.trace().append(0, DomainId::monitor(), "token_ledger",
                                    {{"serial", arg_dec(r.serial)},
                                     {"base", arg_hex(r.base.value)},
                                     {"state", r.state},
                                     {"owner", to_string(r.owner)}},
                                    "ok");
        }
    }

    SecurityMonitor clone() const {
        SecurityMonitor c;
        c.booted_ = booted_;
        c.layout_ = layout_;
        c.pool_ = pool_.clone();
        for (const auto& [id, d] : domains_) c.domains_.emplace(id, d.clone());
        c.next_domain_ = next_domain_;
        c.contexts_ = contexts_;
        c.fsm_ = fsm_;
        c.attestation_key_ = attestation_key_;
        c.verify_key_ = verify_key_;
        c.boot_chain_ = boot_chain_;
        c.whitelist_ = whitelist_;
        c.nc_heap_cursor_ = nc_heap_cursor_;
        return c;
    }

    /// Fault-injection hooks (checker self-tests only).
    std::map<std::uint32_t, SecurityDomain>& raw_domains() { return domains_; }
    TokenPool& raw_pool() { return pool_; }
    std::map<std::uint32_t, DomainContext>& raw_contexts() { return contexts_; }
    const std::map<std::uint32_t, DomainContext>& raw_contexts_view() const {
        return contexts_;
    }

    /// Canonical serialization of monitor state for snapshot hashing.
    void serialize_state(std::string& out) const {
        auto put_u64 = [&](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
        };
        put_u64(booted_ ? 1 : 0);
        put_u64(next_domain_);
        put_u64(nc_heap_cursor_);
        put_u64(pool_.free_count());
        for (const UnallocatedPage& t : pool_.free_tokens()) {
            put_u64(t.serial());
            put_u64(t.base().value);
        }
        put_u64(domains_.size());
        for (const auto& [id, d] : domains_) {
            put_u64(id);
            put_u64(static_cast<std::uint64_t>(d.kind));
            put_u64(static_cast<std::uint64_t>(d.lifecycle));
            put_u64(d.running_hart ? *d.running_hart + 1 : 0);
            put_u64(d.pending ? d.pending->selector + 1 : 0);
            put_u64(d.shared.size());
            for (const auto& [g, r] : d.shared) {
                put_u64(g);
                put_u64(r.base.value);
            }
            if (d.page_table) {
                put_u64(d.page_table->root().serial());
                put_u64(d.page_table->mapped_count());
                for (const auto& [g, t] : d.page_table->mappings()) {
                    put_u64(g);
                    put_u64(t.serial());
                    put_u64(t.base().value);
                }
            } else {
                put_u64(0);
            }
        }
        put_u64(fsm_.size());
        for (const HartFsm& f : fsm_) {
            put_u64(f.node ? static_cast<std::uint64_t>(*f.node) + 1 : 0);
            put_u64(f.interrupted.raw);
        }
        put_u64(contexts_.size());
        for (const auto& [id, ctx] : contexts_) {
            put_u64(id);
            put_u64(ctx.valid ? 1 : 0);
            for (Word w : ctx.gprs) put_u64(w);
            put_u64(ctx.pc.value);
            put_u64(static_cast<std::uint64_t>(ctx.privilege));
        }
    }

private:
    struct HartFsm {
        std::optional<FsmNode> node;
        DomainId interrupted = DomainId::none();
        TrapCause cause = TrapCause::EcallFromHv;
    };

    SecurityDomain* mutable_domain(DomainId id) {
        auto it = domains_.find(id.raw);
        return it == domains_.end() ? nullptr : &it->second;
    }

    // ---- Context save/restore through the control data region ----

    static std::vector<std::uint8_t> serialize_context(const DomainContext& ctx) {
        std::vector<std::uint8_t> bytes;
        bytes.reserve(27 * 8);
        auto put = [&](Word w) {
            for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(w >> (8 * i)));
        };
        for (Word w : ctx.gprs) put(w);
        put(ctx.pc.value);
        put(static_cast<Word>(ctx.privilege));
        put(ctx.interrupts_enabled ? 1 : 0);
        for (std::uint32_t irq = 0; irq < kIrqCount; ++irq) {
            auto it = ctx.saved_routes.find(irq);
            if (it == ctx.saved_routes.end()) {
                put(~0ull);
                put(0);
            } else {
                put(static_cast<Word>(it->second.target));
                put(it->second.handler.value);
            }
        }
        return bytes;
    }

    static DomainContext deserialize_context(DomainId domain, AddrRange slot,
                                             std::span<const std::uint8_t> bytes) {
        DomainContext ctx;
        ctx.domain = domain;
        ctx.slot = slot;
        std::size_t pos = 0;
        auto get = [&]() {
            Word w = 0;
            for (int i = 0; i < 8; ++i) w |= static_cast<Word>(bytes[pos++]) << (8 * i);
            return w;
        };
        for (Word& w : ctx.gprs) w = get();
        ctx.pc = PhysAddr{get()};
        ctx.privilege = static_cast<PrivilegeLevel>(get());
        ctx.interrupts_enabled = get() != 0;
        for (std::uint32_t irq = 0; irq < kIrqCount; ++irq) {
            Word target = get();
            Word handler = get();
            if (target != ~0ull) {
                ctx.saved_routes[irq] =
                    IrqRoute{static_cast<PrivilegeLevel>(target), PhysAddr{handler}};
            }
        }
        ctx.valid = true;
        return ctx;
    }

    Status store_context(Platform& platform, std::uint32_t hart, const DomainContext& ctx) {
        std::vector<std::uint8_t> bytes = serialize_context(ctx);
        auto st = platform.write_block(hart, ctx.slot.base, bytes);
        if (!st.ok()) return st;
        platform.trace().append(hart, DomainId::monitor(), "ctx_save",
                                {{"domain", to_string(ctx.domain)},
                                 {"slot", arg_hex(ctx.slot.base.value)},
                                 {"len", arg_dec(bytes.size())},
                                 {"gprs", gprs_args(ctx.gprs)}},
                                "ok");
        return ok_status();
    }

    Outcome<DomainContext> load_context(Platform& platform, std::uint32_t hart, DomainId domain) {
        auto it = contexts_.find(domain.raw);
        if (it == contexts_.end() || !it->second.valid) return Err::NoSavedState;
        AddrRange slot = it->second.slot;
        auto bytes = platform.read_block(hart, slot.base, 27 * 8);
        if (!bytes.ok()) return bytes.error();
        DomainContext ctx = deserialize_context(domain, slot, bytes.value());
        platform.trace().append(hart, DomainId::monitor(), "ctx_restore",
                                {{"domain", to_string(domain)},
                                 {"slot", arg_hex(slot.base.value)},
                                 {"gprs", gprs_args(ctx.gprs)}},
                                "ok");
        return ctx;
    }

    // ---- FSM plumbing ----

    void fsm_node_step(Platform& platform, std::uint32_t hart, FsmNode node) {
        fsm_[hart].node = node;
        platform.trace().append(hart, DomainId::monitor(), "fsm_node",
                                {{"node", to_string(node)}}, "ok");
    }

    /// Entry half of the machine: capture the interrupted domain, raise to
    /// the monitor (synchronously for environment calls; interrupts arrive
    /// already delivered), and save the domain's state into its control
    /// region slot.
    Status trap_entry(Platform& platform, std::uint32_t hart, TrapCause cause) {
        HartContext& ctx = platform.hart(hart);
        DomainId interrupted;
        if (cause == TrapCause::Interrupt) {
            if (ctx.privilege != PrivilegeLevel::Highest) return Err::UnknownCause;
            interrupted = ctx.interrupted_domain;
        } else {
            interrupted = ctx.active_domain;
            auto rec = platform.deliver_interrupt(kMonitorIrq, hart, /*synchronous=*/true);
            if (!rec.ok()) return rec.error();
        }
        fsm_[hart].interrupted = interrupted;
        fsm_[hart].cause = cause;

        bool confidential_side = false;
        if (const SecurityDomain* d = find_domain(interrupted)) {
            confidential_side = d->kind == DomainKind::Cvm;
        }
        fsm_node_step(platform, hart, confidential_side ? FsmNode::CEnter : FsmNode::NcEnter);

        DomainContext save;
        save.domain = interrupted;
        save.gprs = platform.hart(hart).gprs;
        save.pc = platform.hart(hart).interrupted_pc;
        save.privilege = confidential_side ? PrivilegeLevel::Lowest : PrivilegeLevel::Middle;
        save.interrupts_enabled = true;
        save.saved_routes = contexts_.count(interrupted.raw)
                                ? contexts_[interrupted.raw].saved_routes
                                : platform.irqc().routes;
        save.slot = layout_.context_slot(interrupted);
        save.valid = true;
        auto st = store_context(platform, hart, save);
        if (!st.ok()) return st;
        contexts_[interrupted.raw] = save;
        return ok_status();
    }

    /// NC -> C crossing: grant the CVM its pages (and nothing else), snapshot
    /// the hypervisor's interrupt-delivery configuration, and pull every
    /// interrupt line to the monitor.
    Status transition_nc_to_c(Platform& platform, std::uint32_t hart, SecurityDomain& cvm) {
        std::uint32_t actions = 0;

        // Snapshot hypervisor state + irq config into its slot.
        DomainContext& hv_ctx = contexts_[DomainId::kHypervisor];
        hv_ctx.saved_routes = platform.irqc().routes;
        auto st = store_context(platform, hart, hv_ctx);
        if (!st.ok()) return st;
        actions |= kActStateSave;

        // Isolation: the CVM sees exactly its own pages plus shared ones.
        IsolationConfig cfg = platform.isolation();
        std::vector<AddrRange> grant = cvm.page_table->granted_ranges();
        for (const auto& [g, r] : cvm.shared) grant.push_back(r);
        cfg.grants[cvm.id.raw] = grant;
        cfg.confidential_domains.insert(cvm.id.raw);
        auto iso = platform.set_isolation(hart, cfg);
        if (!iso.ok()) return iso;
        actions |= kActIsolationGrant;

        // All interrupt lines land in the monitor while a CVM runs.
        for (std::uint32_t irq = 0; irq < kIrqCount; ++irq) {
            auto cf = platform.configure_interrupt(hart, irq, PrivilegeLevel::Highest,
                                                   layout_.trap_handler);
            if (!cf.ok()) return cf;
        }
        actions |= kActIrqRetarget;

        platform.trace().append(hart, DomainId::monitor(), "fsm_transition",
                                {{"dir", "nc_to_c"},
                                 {"cvm", to_string(cvm.id)},
                                 {"actions", transition_actions_string(actions)}},
                                "ok");
        return ok_status();
    }

    /// C -> NC crossing: revoke the CVM's view, restore the hypervisor's
    /// interrupt-delivery configuration saved on the way in.
    Status transition_c_to_nc(Platform& platform, std::uint32_t hart, SecurityDomain& cvm) {
        auto it = contexts_.find(DomainId::kHypervisor);
        if (it == contexts_.end() || !it->second.valid) return Err::NoSavedState;
        std::uint32_t actions = 0;

        IsolationConfig cfg = platform.isolation();
        cfg.grants.erase(cvm.id.raw);
        cfg.confidential_domains.erase(cvm.id.raw);
        auto iso = platform.set_isolation(hart, cfg);
        if (!iso.ok()) return iso;
        actions |= kActIsolationDeny;

        for (const auto& [irq, route] : it->second.saved_routes) {
            auto cf = platform.configure_interrupt(hart, irq, route.target, route.handler);
            if (!cf.ok()) return cf;
        }
        actions |= kActIrqRestore | kActStateRestore;

        if (cvm.running_hart) {
            release_busy(platform, hart, cvm);
        }

        platform.trace().append(hart, DomainId::monitor(), "fsm_transition",
                                {{"dir", "c_to_nc"},
                                 {"cvm", to_string(cvm.id)},
                                 {"actions", transition_actions_string(actions)}},
                                "ok");
        return ok_status();
    }

    /// Exit half of the machine: clear microarchitectural state, restore the
    /// target's context from the control data region (overlaying declared
    /// result positions), re-enable interrupts, drop privilege.
    Status exit_to_domain(Platform& platform, std::uint32_t hart, DomainId target, FsmNode node,
                          const std::vector<std::pair<std::size_t, Word>>& overlay) {
        const SecurityDomain* dom = find_domain(target);
        if (!dom) return Err::UnknownDomain;
        bool target_confidential = dom->kind == DomainKind::Cvm;
        if (target_confidential != (node == FsmNode::CExit)) return Err::WrongExitNode;

        fsm_node_step(platform, hart, node);

        auto loaded = load_context(platform, hart, target);
        if (!loaded.ok()) return loaded.error();
        DomainContext ctx = std::move(loaded).value();

        // Residue of monitor execution (including the restore read itself)
        // is wiped as the last step before control transfers.
        if (!mutation_flags().skip_microarch_clear) {
            platform.clear_microarch(hart);
        }
        Gprs regs = ctx.gprs;
        std::string declared;
        for (const auto& [pos, val] : overlay) {
            if (pos < regs.size()) regs[pos] = val;
            if (!declared.empty()) declared += ',';
            declared += std::to_string(pos);
        }

        auto ex = platform.hart_exit(hart, target, ctx.privilege, ctx.pc, regs,
                                     /*enable_interrupts=*/true, to_string(node), declared);
        if (!ex.ok()) return ex;
        fsm_[hart].node.reset();
        fsm_[hart].interrupted = DomainId::none();
        return ok_status();
    }

    // ---- Busy gate (atomic_cas based mutual exclusion) ----

    bool acquire_busy(Platform& platform, std::uint32_t hart, SecurityDomain& dom) {
        auto prior = platform.atomic_cas(hart, layout_.busy_word(dom.id), 0, 1);
        if (!prior.ok() || prior.value() != 0) return false;
        dom.running_hart = hart;
        return true;
    }

    void release_busy(Platform& platform, std::uint32_t hart, SecurityDomain& dom) {
        (void)platform.atomic_cas(hart, layout_.busy_word(dom.id), 1, 0);
        dom.running_hart.reset();
    }

    // ---- Call handlers (NC side) ----

    Outcome<PromoteResult> handle_promote(Platform& platform, std::uint32_t hart, DomainId vm_id) {
        SecurityDomain* vm = mutable_domain(vm_id);
        if (!vm || vm->kind != DomainKind::Vm || vm->lifecycle == Lifecycle::Terminated) {
            return Err::UnknownDomain;
        }
        if (next_domain_ >= kMaxDomains) return Err::DomainLimit;

        std::vector<PhysAddr> image = vm->image_pages;

        // Serialize pool work through the monitor's spin gate.
        auto gate = platform.atomic_cas(hart, layout_.pool_gate(), 0, 1);
        if (!gate.ok() || gate.value() != 0) return Err::DomainBusy;

        auto pt_result = PageTable::create(pool_, platform, hart, DomainId{next_domain_});
        if (!pt_result.ok()) {
            (void)platform.atomic_cas(hart, layout_.pool_gate(), 1, 0);
            return pt_result.error();
        }
        PageTable pt = std::move(pt_result).value();

        bool failed = false;
        Err failure = Err::OutOfMemory;
        for (std::uint64_t guest = 0; guest < image.size(); ++guest) {
            auto token = pool_.allocate(platform, hart);
            if (!token.ok()) {
                failed = true;
                failure = token.error();
                break;
            }
            auto page = std::move(token).value().into_allocated(platform, hart);
            if (!page.ok()) {
                failed = true;
                failure = page.error();
                break;
            }
            auto cp = platform.copy_block(hart, page.value().base(), image[guest], kPageSize,
                                          page.value().serial());
            if (!cp.ok()) {
                failed = true;
                failure = cp.error();
                (void)pool_.deallocate(platform, hart, std::move(page).value());
                break;
            }
            auto mp = pt.map_page(platform, hart, guest, std::move(page).value());
            if (!mp.ok()) {
                failed = true;
                failure = mp.error();
                break;
            }
        }

        if (failed) {
            // Unwind: every allocated page goes back, zeroized, to the pool.
            for (std::uint64_t g : pt.guest_pages()) {
                auto tok = pt.unmap_page(platform, hart, g);
                if (tok.ok()) (void)pool_.deallocate(platform, hart, std::move(tok).value());
            }
            (void)pool_.deallocate(platform, hart, std::move(pt).into_root());
            (void)platform.atomic_cas(hart, layout_.pool_gate(), 1, 0);
            return failure;
        }
        (void)platform.atomic_cas(hart, layout_.pool_gate(), 1, 0);

        // Measurement: page count header, then contents in guest order
        // (hashed from the source image the copies were taken from).
        Sha256 h;
        h.update_u64(image.size());
        for (PhysAddr src : image) {
            auto bytes = platform.read_block(hart, src, kPageSize);
            if (!bytes.ok()) return bytes.error();
            h.update(std::span<const std::uint8_t>(bytes.value()));
        }
        Digest digest = h.finish();

        SecurityDomain cvm;
        cvm.id = DomainId{next_domain_++};
        cvm.kind = DomainKind::Cvm;
        cvm.lifecycle = Lifecycle::Runnable;
        cvm.page_table = std::move(pt);
        cvm.measurement = Measurement{"cvm", digest};
        DomainId cvm_id = cvm.id;
        domains_.emplace(cvm_id.raw, std::move(cvm));

        // The promoted VM's non-confidential pages return to the hypervisor.
        vm->lifecycle = Lifecycle::Terminated;
        vm->image_pages.clear();

        // Initial CVM context: entry at guest page 0, clean registers.
        DomainContext init;
        init.domain = cvm_id;
        init.pc = PhysAddr{0};
        init.privilege = PrivilegeLevel::Lowest;
        init.interrupts_enabled = true;
        init.saved_routes = {};
        init.slot = layout_.context_slot(cvm_id);
        init.valid = true;
        auto st = store_context(platform, hart, init);
        if (!st.ok()) return st.error();
        contexts_[cvm_id.raw] = init;

        platform.trace().append(hart, DomainId::monitor(), "promote",
                                {{"vm", to_string(vm_id)},
                                 {"cvm", to_string(cvm_id)},
                                 {"pages", arg_dec(image.size())},
                                 {"digest", hex(digest).substr(0, 16)}},
                                "ok");
        return PromoteResult{cvm_id, digest};
    }

    Status handle_resume(Platform& platform, std::uint32_t hart, DomainId cvm_id,
                         const Gprs& hv_regs) {
        SecurityDomain* cvm = mutable_domain(cvm_id);
        if (!cvm || cvm->kind != DomainKind::Cvm) return Err::UnknownDomain;
        if (cvm->lifecycle != Lifecycle::Runnable) return Err::DomainNotRunnable;
        if (!acquire_busy(platform, hart, *cvm)) return Err::DomainBusy;

        // Inbound transform: only declared result registers of the pending
        // call reach the CVM. A plain resume passes nothing.
        RegisterWhitelist wl;
        std::vector<std::pair<std::size_t, Word>> overlay;
        if (cvm->pending) {
            wl = cvm->pending->whitelist;
            // Result values arrive in hv regs 2.. in declared order.
            Gprs staged{};
            for (std::size_t k = 0; k < wl.results.size(); ++k) {
                std::size_t pos = wl.results[k];
                if (pos < staged.size() && 2 + k < hv_regs.size()) {
                    staged[pos] = hv_regs[2 + k];
                }
            }
            Gprs view = apply_state_transformation(staged, wl, /*outbound=*/false);
            emit_view(platform, hart, "inbound", wl.results, view);
            for (std::size_t k = 0; k < wl.results.size(); ++k) {
                std::size_t pos = wl.results[k];
                if (pos < view.size()) overlay.push_back({pos, view[pos]});
            }
            cvm->pending.reset();
        } else {
            Gprs empty{};
            emit_view(platform, hart, "inbound", {}, empty);
        }
        fsm_node_step(platform, hart, FsmNode::NcTransform);

        auto tr = transition_nc_to_c(platform, hart, *cvm);
        if (!tr.ok()) {
            release_busy(platform, hart, *cvm);
            return tr;
        }
        auto ex = exit_to_domain(platform, hart, cvm_id, FsmNode::CExit, overlay);
        if (!ex.ok()) {
            release_busy(platform, hart, *cvm);
            return ex;
        }
        return ok_status();
    }

    Status handle_terminate(Platform& platform, std::uint32_t hart, DomainId cvm_id) {
        SecurityDomain* cvm = mutable_domain(cvm_id);
        if (!cvm || cvm->kind != DomainKind::Cvm) return Err::UnknownDomain;
        if (cvm->lifecycle == Lifecycle::Terminated) return ok_status();  // idempotent
        if (cvm->running_hart) return Err::DomainBusy;
        return teardown_cvm(platform, hart, *cvm);
    }

    Status teardown_cvm(Platform& platform, std::uint32_t hart, SecurityDomain& cvm) {
        auto gate = platform.atomic_cas(hart, layout_.pool_gate(), 0, 1);
        if (!gate.ok() || gate.value() != 0) return Err::DomainBusy;

        bool faulty_dup_done = false;
        if (cvm.page_table) {
            for (std::uint64_t g : cvm.page_table->guest_pages()) {
                if (mutation_flags().duplicate_token_serial && !faulty_dup_done) {
                    // Deliberate defect: the page returns to the pool while
                    // its token stays mapped, duplicating the serial.
                    const AllocatedPage& mapped = cvm.page_table->mappings().at(g);
                    pool_.raw_free().push_back(
                        TokenPool::forge_token(mapped.base(), mapped.size(), mapped.serial()));
                    faulty_dup_done = true;
                    continue;
                }
                auto tok = cvm.page_table->unmap_page(platform, hart, g);
                if (tok.ok()) {
                    auto st = pool_.deallocate(platform, hart, std::move(tok).value());
                    if (!st.ok()) {
                        (void)platform.atomic_cas(hart, layout_.pool_gate(), 1, 0);
                        return st;
                    }
                }
            }
            if (!faulty_dup_done) {
                PageTable pt = std::move(*cvm.page_table);
                cvm.page_table.reset();
                auto st = pool_.deallocate(platform, hart, std::move(pt).into_root());
                if (!st.ok()) {
                    (void)platform.atomic_cas(hart, layout_.pool_gate(), 1, 0);
                    return st;
                }
            }
        }
        (void)platform.atomic_cas(hart, layout_.pool_gate(), 1, 0);

        // Drop isolation grants and shared registrations.
        IsolationConfig cfg = platform.isolation();
        cfg.grants.erase(cvm.id.raw);
        cfg.confidential_domains.erase(cvm.id.raw);
        std::vector<SharedPageGrant> kept;
        for (const SharedPageGrant& s : cfg.shared) {
            if (s.cvm != cvm.id) kept.push_back(s);
        }
        cfg.shared = std::move(kept);
        auto iso = platform.set_isolation(hart, cfg);
        if (!iso.ok()) return iso;

        cvm.shared.clear();
        cvm.pending.reset();
        cvm.lifecycle = Lifecycle::Terminated;
        contexts_[cvm.id.raw].valid = false;
        platform.trace().append(hart, DomainId::monitor(), "terminate",
                                {{"cvm", to_string(cvm.id)}}, "ok");
        return ok_status();
    }

    Outcome<AttestationReport> handle_attest(Platform& platform, std::uint32_t hart,
                                             DomainId cvm_id, Word nonce) {
        SecurityDomain* cvm = mutable_domain(cvm_id);
        if (!cvm || cvm->kind != DomainKind::Cvm || cvm->lifecycle == Lifecycle::Terminated ||
            !cvm->measurement) {
            return Err::UnknownDomain;
        }
        std::array<std::uint8_t, 8> nonce_bytes{};
        for (int i = 0; i < 8; ++i) nonce_bytes[i] = static_cast<std::uint8_t>(nonce >> (8 * i));
        AttestationReport report = sign_report(attestation_key_, cvm->measurement->digest,
                                               nonce_bytes, boot_chain_);
        platform.trace().append(hart, DomainId::monitor(), "attest",
                                {{"cvm", to_string(cvm_id)}, {"nonce", arg_hex(nonce)}}, "ok");
        return report;
    }

    Status handle_start_hart(Platform& platform, std::uint32_t hart, std::uint32_t target) {
        if (target >= platform.hart_count()) return Err::OutOfRange;
        if (!platform.hart(target).parked) return Err::NotParked;
        platform.clear_microarch(target);
        Gprs regs{};
        auto ex = platform.hart_exit(target, DomainId::hypervisor(), PrivilegeLevel::Middle,
                                     layout_.hv_entry, regs, /*enable_interrupts=*/true,
                                     "hart_start", "");
        if (!ex.ok()) return ex;
        (void)hart;
        return ok_status();
    }

    // ---- Call handlers (C side) ----

    Outcome<CvmTrapResult> route_preemption(Platform& platform, std::uint32_t hart,
                                            SecurityDomain& cvm) {
        Gprs empty{};
        emit_view(platform, hart, "outbound", {}, empty);
        fsm_node_step(platform, hart, FsmNode::CTransform);
        auto tr = transition_c_to_nc(platform, hart, cvm);
        if (!tr.ok()) return tr.error();
        Word exit_word = pack_exit_word(CvmExitCode::Interrupted, 0);
        auto ex = exit_to_domain(platform, hart, DomainId::hypervisor(), FsmNode::NcExit,
                                 {{0, exit_word}});
        if (!ex.ok()) return ex.error();
        CvmTrapResult res;
        res.resumed_cvm = false;
        res.exit_code = CvmExitCode::Interrupted;
        return res;
    }

    Outcome<CvmTrapResult> handle_cvm_monitor_call(Platform& platform, std::uint32_t hart,
                                                   SecurityDomain& cvm, Word selector,
                                                   const Gprs& regs) {
        CvmTrapResult res;
        res.resumed_cvm = true;
        res.selector = selector;
        switch (selector) {
        case kCvmCallSharePage: {
            // Failures are delivered to the CVM as an error word; the trap
            // itself completes either way.
            auto r = handle_share_page(platform, hart, cvm, regs[1]);
            Word result = r.ok() ? r.value().value
                                 : pack_exit_word(CvmExitCode::Error,
                                                  static_cast<Word>(r.error()));
            auto ex = exit_to_domain(platform, hart, cvm.id, FsmNode::CExit, {{0, result}});
            if (!ex.ok()) return ex.error();
            res.value = result;
            return res;
        }
        case kCvmCallAttest: {
            auto r = handle_attest(platform, hart, cvm.id, regs[1]);
            Word result = r.ok() ? 0
                                 : pack_exit_word(CvmExitCode::Error,
                                                  static_cast<Word>(r.error()));
            auto ex = exit_to_domain(platform, hart, cvm.id, FsmNode::CExit, {{0, result}});
            if (!ex.ok()) return ex.error();
            if (r.ok()) res.report = std::move(r).value();
            res.value = result;
            return res;
        }
        case kCvmCallTerminateSelf: {
            // Tear down, then leave to the hypervisor: the CVM is gone.
            Gprs empty{};
            emit_view(platform, hart, "outbound", {}, empty);
            fsm_node_step(platform, hart, FsmNode::CTransform);
            auto tr = transition_c_to_nc(platform, hart, cvm);
            if (!tr.ok()) return tr.error();
            auto st = teardown_cvm(platform, hart, cvm);
            if (!st.ok()) return st.error();
            Word exit_word = pack_exit_word(CvmExitCode::Terminated, cvm.id.raw);
            auto ex = exit_to_domain(platform, hart, DomainId::hypervisor(), FsmNode::NcExit,
                                     {{0, exit_word}});
            if (!ex.ok()) return ex.error();
            res.resumed_cvm = false;
            res.exit_code = CvmExitCode::Terminated;
            return res;
        }
        default: {
            // Undeclared monitor call: error code back to the CVM, fault
            // contained.
            Word result = pack_exit_word(CvmExitCode::Error,
                                         static_cast<Word>(Err::UndeclaredCall));
            auto ex = exit_to_domain(platform, hart, cvm.id, FsmNode::CExit, {{0, result}});
            if (!ex.ok()) return ex.error();
            res.value = result;
            return res;
        }
        }
    }

    /// Routed hypercall / MMIO exposure: outbound whitelist filtering, then
    /// the C -> NC crossing and exit to the hypervisor.
    Outcome<CvmTrapResult> route_hypercall(Platform& platform, std::uint32_t hart,
                                           SecurityDomain& cvm, Word selector, CvmExitCode kind,
                                           const RegisterWhitelist* fixed_wl) {
        const RegisterWhitelist* wl = fixed_wl ? fixed_wl : whitelist_.find(selector);
        if (!wl) {
            // Undeclared hypercall id: the CVM gets an error code and keeps
            // running; nothing is exposed to the hypervisor.
            Word result =
                pack_exit_word(CvmExitCode::Error, static_cast<Word>(Err::UndeclaredCall));
            auto ex = exit_to_domain(platform, hart, cvm.id, FsmNode::CExit, {{0, result}});
            if (!ex.ok()) return ex.error();
            CvmTrapResult res;
            res.resumed_cvm = true;
            res.selector = selector;
            res.value = result;
            return res;
        }

        const Gprs& saved = contexts_[cvm.id.raw].gprs;
        Gprs view = apply_state_transformation(saved, *wl, /*outbound=*/true);
        emit_view(platform, hart, "outbound", wl->args, view);
        fsm_node_step(platform, hart, FsmNode::CTransform);

        cvm.pending = PendingCall{selector, kind, *wl};
        auto tr = transition_c_to_nc(platform, hart, cvm);
        if (!tr.ok()) return tr.error();

        std::vector<std::pair<std::size_t, Word>> overlay;
        overlay.push_back({0, pack_exit_word(kind, selector)});
        for (std::uint8_t pos : wl->args) {
            if (pos != 0 && pos < view.size()) overlay.push_back({pos, view[pos]});
        }
        auto ex = exit_to_domain(platform, hart, DomainId::hypervisor(), FsmNode::NcExit,
                                 overlay);
        if (!ex.ok()) return ex.error();

        CvmTrapResult res;
        res.resumed_cvm = false;
        res.exit_code = kind;
        res.selector = selector;
        return res;
    }

    Outcome<CvmTrapResult> route_mmio(Platform& platform, std::uint32_t hart,
                                      SecurityDomain& cvm, TrapCause cause, const Gprs& regs) {
        bool is_load = cause == TrapCause::MmioLoadFault;
        std::uint64_t guest_addr = regs[1];
        // A guest page that is actually mapped is ordinary memory: serve it
        // through the owning token, no routing.
        std::uint64_t guest_page = guest_addr / kPageSize;
        if (cvm.page_table && cvm.page_table->translate(guest_page).ok()) {
            AllocatedPage& token = cvm.page_table->raw_mappings().at(guest_page);
            std::uint64_t offset = (guest_addr % kPageSize) & ~7ull;
            Word value = 0;
            if (is_load) {
                auto r = token.read(platform, hart, offset);
                if (!r.ok()) return r.error();
                value = r.value();
            } else {
                auto st = token.write(platform, hart, offset, regs[3]);
                if (!st.ok()) return st.error();
            }
            auto ex = exit_to_domain(platform, hart, cvm.id, FsmNode::CExit, {{0, value}});
            if (!ex.ok()) return ex.error();
            CvmTrapResult res;
            res.resumed_cvm = true;
            res.value = value;
            return res;
        }
        return route_hypercall(platform, hart, cvm, regs[0],
                               is_load ? CvmExitCode::MmioLoad : CvmExitCode::MmioStore,
                               is_load ? &whitelist_.mmio_load : &whitelist_.mmio_store);
    }

    /// Shared-page creation: only the CVM itself may open this flow. A fresh
    /// non-confidential page, zero-initialized, becomes visible to both
    /// sides.
    Outcome<PhysAddr> handle_share_page(Platform& platform, std::uint32_t hart,
                                        SecurityDomain& cvm, std::uint64_t guest_page) {
        if (cvm.shared.count(guest_page) != 0 ||
            (cvm.page_table && cvm.page_table->translate(guest_page).ok())) {
            return Err::AlreadyMapped;
        }
        if (nc_heap_cursor_ >= layout_.nc_heap.page_count()) return Err::OutOfMemory;
        AddrRange page{layout_.nc_heap.base.offset(nc_heap_cursor_ * kPageSize), kPageSize};
        nc_heap_cursor_++;
        auto st = platform.fill_block(hart, page, 0);
        if (!st.ok()) return st.error();

        cvm.shared[guest_page] = page;
        IsolationConfig cfg = platform.isolation();
        cfg.shared.push_back(SharedPageGrant{page, cvm.id});
        auto& grant = cfg.grants[cvm.id.raw];
        grant.push_back(page);
        auto iso = platform.set_isolation(hart, cfg);
        if (!iso.ok()) return iso.error();

        platform.trace().append(hart, DomainId::monitor(), "share_page",
                                {{"cvm", to_string(cvm.id)},
                                 {"guest", arg_dec(guest_page)},
                                 {"base", arg_hex(page.base.value)}},
                                "ok");
        return page.base;
    }

    void emit_view(Platform& platform, std::uint32_t hart, const char* dir,
                   const std::vector<std::uint8_t>& positions, const Gprs& view) {
        std::string wl;
        for (std::uint8_t p : positions) {
            if (!wl.empty()) wl += ',';
            wl += std::to_string(p);
        }
        platform.trace().append(hart, DomainId::monitor(), "fsm_view",
                                {{"dir", dir},
                                 {"wl", wl.empty() ? "-" : wl},
                                 {"view", gprs_args(view)}},
                                "ok");
    }

    bool booted_ = false;
    MonitorLayout layout_{};
    TokenPool pool_;
    std::map<std::uint32_t, SecurityDomain> domains_;
    std::uint32_t next_domain_ = 2;
    std::map<std::uint32_t, DomainContext> contexts_;
    std::vector<HartFsm> fsm_;
    AttestationKey attestation_key_;
    VerifyKey verify_key_;
    std::vector<Measurement> boot_chain_;
    WhitelistTable whitelist_;
    std::uint64_t nc_heap_cursor_ = 0;
};

}  // namespace cvmsim
