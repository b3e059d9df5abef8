// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cvmsim/adversary.hpp"

namespace cvmsim {

/// Checker self-test fault catalog: each fault corrupts a booted world —
/// bypassing every normal interface — so that exactly one invariant breaks.
/// Used to prove the oracle has no blind spots and no cross-talk.
struct FaultSpec {
    std::string name;
    std::string target_invariant;
};

inline const std::vector<FaultSpec>& fault_catalog() {
    static const std::vector<FaultSpec> faults = {
        {"rogue_highest", "I.Init.1"},
        {"forced_grant", "I.Init.2"},
        {"region_eviction", "I.Init.3"},
        {"unpinned_irq", "I.Init.4"},
        {"seed_unlock", "I.Init.5"},
        {"irq_enabled_in_monitor", "I.FSM.1"},
        {"skipped_transition_action", "I.FSM.2"},
        {"skipped_restore_action", "I.FSM.3"},
        {"stray_context_save", "I.FSM.4"},
        {"dirty_exit", "I.FSM.5"},
        {"leaky_view", "I.FSM.6"},
        {"late_mint", "I.MT.1"},
        {"overlapping_token", "I.MT.2"},
        {"tokenless_access", "I.MT.3"},
        {"aliased_page_table", "S.MT.1"},
        {"conf_read_leak", "P.1"},
        {"register_leak", "P.2"},
        {"dirty_free_page", "P.3"},
        {"ghost_lifecycle", "P.4"},
        {"rogue_reconfig", "S.Init.1"},
        {"seed_exfiltration", "S.Init.2"},
    };
    return faults;
}

namespace detail {

inline TraceEvent forged(std::uint32_t hart, DomainId domain, std::string op, TraceArgs args,
                         std::string outcome = "ok") {
    TraceEvent ev;
    ev.hart = hart;
    ev.domain = domain;
    ev.op = std::move(op);
    ev.args = std::move(args);
    ev.outcome = std::move(outcome);
    return ev;
}

/// First CVM (by id) that still has a page table.
inline SecurityDomain* first_cvm_with_pt(World& world) {
    for (auto& [raw, dom] : world.sys().monitor.raw_domains()) {
        if (dom.kind == DomainKind::Cvm && dom.page_table) return &dom;
    }
    return nullptr;
}

inline Gprs hv_saved_gprs(const World& world) {
    const DomainContext* ctx = world.sys().monitor.find_context(DomainId::hypervisor());
    return ctx ? ctx->gprs : Gprs{};
}

}  // namespace detail

/// Applies the named fault to the world. Requires a booted world; faults
/// that alias page tables need two promoted CVMs.
inline Status seeded_violation(World& world, const std::string& fault) {
    System& sys = world.sys();
    Platform& platform = sys.platform;
    SecurityMonitor& monitor = sys.monitor;
    Trace& trace = world.trace();
    const MonitorLayout& layout = monitor.layout();

    if (fault == "rogue_highest") {
        // A hypervisor context left at the highest privilege.
        platform.hart(0).privilege = PrivilegeLevel::Highest;
        return ok_status();
    }
    if (fault == "forced_grant") {
        // Untrusted grant punched into confidential memory.
        platform.raw_isolation().grants[DomainId::kHypervisor] = {
            AddrRange{layout.monitor_region.base, kPageSize}};
        return ok_status();
    }
    if (fault == "region_eviction") {
        // Control data region silently dropped from the confidential set.
        platform.raw_isolation().confidential = {
            layout.monitor_region,
            layout.tracker_range,
        };
        return ok_status();
    }
    if (fault == "unpinned_irq") {
        platform.raw_irqc().routes[kMonitorIrq] =
            IrqRoute{PrivilegeLevel::Middle, layout.hv_entry};
        return ok_status();
    }
    if (fault == "seed_unlock") {
        platform.raw_endorsement().locked = false;
        return ok_status();
    }
    if (fault == "irq_enabled_in_monitor") {
        // A monitor window whose body ran with interrupts on.
        Gprs hv = detail::hv_saved_gprs(world);
        trace.inject(detail::forged(0, DomainId::monitor(), "fsm_node", {{"node", "nc_enter"}}));
        trace.inject(detail::forged(0, DomainId::monitor(), "ctx_save",
                                    {{"domain", "hv"},
                                     {"slot", arg_hex(layout.context_slot(DomainId::hypervisor())
                                                          .base.value)},
                                     {"len", arg_dec(216)},
                                     {"gprs", gprs_args(hv)}}));
        trace.inject(detail::forged(0, DomainId::monitor(), "fsm_node", {{"node", "nc_route"}}));
        trace.inject(detail::forged(0, DomainId::monitor(), "read_block",
                                    {{"addr", arg_hex(layout.monitor_region.base.value)},
                                     {"len", "8"},
                                     {"ie", "1"}}));
        trace.inject(detail::forged(0, DomainId::monitor(), "fsm_node", {{"node", "nc_exit"}}));
        trace.inject(detail::forged(0, DomainId::hypervisor(), "hart_exit",
                                    {{"node", "nc_exit"},
                                     {"to", "hv"},
                                     {"priv", "middle"},
                                     {"pc", arg_hex(layout.hv_entry.value)},
                                     {"gprs", gprs_args(hv)},
                                     {"declared", "-"},
                                     {"microarch_clean", "1"},
                                     {"ie", "1"}}));
        return ok_status();
    }
    if (fault == "skipped_transition_action") {
        trace.inject(detail::forged(0, DomainId::monitor(), "fsm_transition",
                                    {{"dir", "nc_to_c"},
                                     {"cvm", "d2"},
                                     {"actions", "grant+save"}}));
        return ok_status();
    }
    if (fault == "skipped_restore_action") {
        trace.inject(detail::forged(0, DomainId::monitor(), "fsm_transition",
                                    {{"dir", "c_to_nc"},
                                     {"cvm", "d2"},
                                     {"actions", "deny"}}));
        return ok_status();
    }
    if (fault == "stray_context_save") {
        // Processor state saved outside the control data region.
        Gprs hv = detail::hv_saved_gprs(world);
        trace.inject(detail::forged(0, DomainId::monitor(), "ctx_save",
                                    {{"domain", "hv"},
                                     {"slot", arg_hex(layout.monitor_region.base.value)},
                                     {"len", arg_dec(216)},
                                     {"gprs", gprs_args(hv)}}));
        return ok_status();
    }
    if (fault == "dirty_exit") {
        // Residue of one domain visible while another runs.
        platform.hart(0).microarch.taint(DomainId{5}, 0x1234);
        return ok_status();
    }
    if (fault == "leaky_view") {
        Gprs view{};
        view[3] = 0x5EC;
        trace.inject(detail::forged(0, DomainId::monitor(), "fsm_view",
                                    {{"dir", "outbound"}, {"wl", "1"}, {"view",
                                                                        gprs_args(view)}}));
        return ok_status();
    }
    if (fault == "late_mint") {
        trace.inject(detail::forged(0, DomainId::monitor(), "token_mint",
                                    {{"serial", "9999"},
                                     {"base", arg_hex(layout.nc_heap.base.value)}}));
        return ok_status();
    }
    if (fault == "overlapping_token") {
        // Two free tokens claiming the same page.
        auto& free = monitor.raw_pool().raw_free();
        if (free.size() < 2) return Err::UnknownFault;
        std::uint64_t serial = free.front().serial();
        PhysAddr base2 = free[1].base();
        free.pop_front();
        free.push_front(TokenPool::forge_token(base2, kPageSize, serial));
        return ok_status();
    }
    if (fault == "tokenless_access") {
        // The monitor writing tracker memory without any token.
        auto& free = monitor.raw_pool().raw_free();
        if (free.empty()) return Err::UnknownFault;
        trace.inject(detail::forged(0, DomainId::monitor(), "write_phys",
                                    {{"addr", arg_hex(free.front().base().value)},
                                     {"width", "8"},
                                     {"val", "0x1"},
                                     {"conf", "1"},
                                     {"priv", "highest"},
                                     {"ie", "0"}}));
        return ok_status();
    }
    if (fault == "aliased_page_table") {
        // Hardware-level aliasing: one domain's table entry pointed at
        // another domain's page. Needs two CVMs with page tables.
        SecurityDomain* a = nullptr;
        SecurityDomain* b = nullptr;
        for (auto& [raw, dom] : monitor.raw_domains()) {
            if (dom.kind != DomainKind::Cvm || !dom.page_table) continue;
            if (!a) {
                a = &dom;
            } else if (!b) {
                b = &dom;
            }
        }
        if (!a || !b || a->page_table->mappings().empty()) return Err::UnknownFault;
        std::uint64_t victim_page = a->page_table->mappings().begin()->second.page_number();
        Word entry = (victim_page << 1) | 1;
        std::uint64_t slot = b->page_table->root().base().value + 100 * 8;
        auto& mem = platform.raw_memory();
        for (int i = 0; i < 8; ++i) mem[slot + i] = static_cast<std::uint8_t>(entry >> (8 * i));
        return ok_status();
    }
    if (fault == "conf_read_leak") {
        SecurityDomain* cvm = detail::first_cvm_with_pt(world);
        if (!cvm || cvm->page_table->mappings().empty()) return Err::UnknownFault;
        PhysAddr addr = cvm->page_table->mappings().begin()->second.base();
        trace.inject(detail::forged(0, DomainId::hypervisor(), "read_phys",
                                    {{"addr", arg_hex(addr.value)},
                                     {"width", "8"},
                                     {"conf", "1"},
                                     {"priv", "middle"},
                                     {"ie", "1"},
                                     {"val", "0x5ec0"}}));
        return ok_status();
    }
    if (fault == "register_leak") {
        Gprs leaked = detail::hv_saved_gprs(world);
        leaked[4] = 0x5EC4;  // undeclared position suddenly carries data
        trace.inject(detail::forged(0, DomainId::hypervisor(), "hart_exit",
                                    {{"node", "nc_exit"},
                                     {"to", "hv"},
                                     {"priv", "middle"},
                                     {"pc", arg_hex(layout.hv_entry.value)},
                                     {"gprs", gprs_args(leaked)},
                                     {"declared", "-"},
                                     {"microarch_clean", "1"},
                                     {"ie", "1"}}));
        return ok_status();
    }
    if (fault == "dirty_free_page") {
        auto& free = monitor.raw_pool().raw_free();
        if (free.empty()) return Err::UnknownFault;
        platform.raw_memory()[free.front().base().value + 7] = 0xEE;
        return ok_status();
    }
    if (fault == "ghost_lifecycle") {
        SecurityDomain* cvm = detail::first_cvm_with_pt(world);
        if (!cvm) return Err::UnknownFault;
        cvm->lifecycle = cvm->lifecycle == Lifecycle::Terminated ? Lifecycle::Runnable
                                                                 : Lifecycle::Terminated;
        return ok_status();
    }
    if (fault == "rogue_reconfig") {
        trace.inject(detail::forged(0, DomainId::hypervisor(), "set_isolation",
                                    {{"conf_ranges", "0"},
                                     {"grants", "0"},
                                     {"shared", "0"},
                                     {"priv", "middle"}}));
        return ok_status();
    }
    if (fault == "seed_exfiltration") {
        trace.inject(detail::forged(0, DomainId::hypervisor(), "read_seed",
                                    {{"priv", "middle"}}));
        return ok_status();
    }
    return Err::UnknownFault;
}

}  // namespace cvmsim
