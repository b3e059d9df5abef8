// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cvmsim/boot.hpp"
#include "cvmsim/fsm.hpp"
#include "cvmsim/system.hpp"
#include "cvmsim/trace.hpp"

namespace cvmsim {

struct Verdict {
    std::string invariant;
    bool holds = true;
    std::optional<std::string> counterexample;
};

/// The full catalog of checkable guarantees, in canonical report order.
/// Meanings are documented in docs/formats.md.
inline const std::vector<std::string>& invariant_catalog() {
    static const std::vector<std::string> ids = {
        "I.Init.1", "I.Init.2", "I.Init.3", "I.Init.4", "I.Init.5",
        "I.FSM.1",  "I.FSM.2",  "I.FSM.3",  "I.FSM.4",  "I.FSM.5",  "I.FSM.6",
        "I.MT.1",   "I.MT.2",   "I.MT.3",   "S.MT.1",
        "P.1",      "P.2",      "P.3",      "P.4",
        "S.Init.1", "S.Init.2",
    };
    return ids;
}

inline const char* invariant_summary(const std::string& id) {
    if (id == "I.Init.1") return "highest privilege belongs to the monitor alone";
    if (id == "I.Init.2") return "isolation denies untrusted access to confidential memory";
    if (id == "I.Init.3") return "monitor image and control data reside in confidential memory";
    if (id == "I.Init.4") return "pinned interrupts route to monitor handlers";
    if (id == "I.Init.5") return "endorsement seed locked; key confined to control region";
    if (id == "I.FSM.1") return "interrupts stay disabled while the monitor runs";
    if (id == "I.FSM.2") return "guest entry grants pages, saves state, retargets interrupts";
    if (id == "I.FSM.3") return "guest exit revokes access and restores saved state";
    if (id == "I.FSM.4") return "enter nodes save state into the control data region";
    if (id == "I.FSM.5") return "exit nodes clear microarchitectural residue";
    if (id == "I.FSM.6") return "register views cross domains only at whitelisted positions";
    if (id == "I.MT.1") return "page token set is fixed at initialization";
    if (id == "I.MT.2") return "live page tokens are pairwise disjoint";
    if (id == "I.MT.3") return "confidential accesses go through an owning token";
    if (id == "S.MT.1") return "no physical page is owned by two security domains";
    if (id == "P.1") return "data isolation between security domains";
    if (id == "P.2") return "information flows only through declared interfaces";
    if (id == "P.3") return "resources are zeroed before changing owners";
    if (id == "P.4") return "faults do not cascade across domains";
    if (id == "S.Init.1") return "only the monitor modifies monitor memory or critical config";
    if (id == "S.Init.2") return "only the monitor reaches the seed and attestation key";
    return "";
}

/// Streaming trace checker plus end-state checker. Feed every event in
/// order, then call `evaluate` with the current system state; or use the
/// one-shot `invariant_oracle` helper below.
///
/// Violations latch: once an invariant is seen broken, its verdict stays
/// broken and keeps the first counterexample.
class InvariantOracle {
public:
    InvariantOracle() {
        for (const std::string& id : invariant_catalog()) {
            verdicts_[id] = Verdict{id, true, std::nullopt};
        }
    }

    /// Installs the memory map so trace-side region checks work from the
    /// first event. Safe to call once the system is booted.
    void prime(const System& sys) {
        if (!sys.monitor.booted()) return;
        const MonitorLayout& layout = sys.monitor.layout();
        monitor_region_ = layout.monitor_region;
        control_region_ = layout.control_region;
        tracker_range_ = layout.tracker_range;
        confidential_ = layout.confidential;
        key_slot_ = layout.key_slot();
    }

    /// Attaches to an already-running system whose boot trace this oracle
    /// never saw: the boot-time facts are taken from the state instead.
    void attach_running(const System& sys) {
        prime(sys);
        if (!sys.monitor.booted()) return;
        boot_complete_seen_ = true;
        if (sys.platform.endorsement().locked && !seed_lock_seq_) seed_lock_seq_ = 0;
        for (const auto& [raw, ctx] : sys.monitor.raw_contexts_view()) {
            if (ctx.valid) saved_gprs_[raw] = ctx.gprs;
        }
        // Token placement from the live ledger.
        for (const UnallocatedPage& t : sys.monitor.pool().free_tokens()) {
            serial_page_[t.serial()] = t.page_number();
            page_owner_[t.page_number()] = DomainId::monitor();
        }
        for (const auto& [raw, dom] : sys.monitor.domains()) {
            if (!dom.page_table) continue;
            serial_page_[dom.page_table->root().serial()] =
                dom.page_table->root().page_number();
            page_owner_[dom.page_table->root().page_number()] = DomainId::monitor();
            for (const auto& [g, t] : dom.page_table->mappings()) {
                serial_page_[t.serial()] = t.page_number();
                page_owner_[t.page_number()] = dom.id;
            }
            lifecycle_from_trace_[raw] = to_string(dom.lifecycle);
        }
        for (const auto& [raw, dom] : sys.monitor.domains()) {
            if (dom.kind != DomainKind::Hypervisor &&
                !lifecycle_from_trace_.count(raw)) {
                lifecycle_from_trace_[raw] = to_string(dom.lifecycle);
            }
        }
    }

    void feed(const TraceEvent& ev) {
        scan_boot_order(ev);
        scan_window(ev);
        scan_transition(ev);
        scan_ctx_save(ev);
        scan_exit(ev);
        scan_view(ev);
        scan_tokens(ev);
        scan_accesses(ev);
        scan_config(ev);
        scan_node_path(ev);
        scan_lifecycle(ev);
    }

    void feed_all(const Trace& trace) {
        for (const TraceEvent& ev : trace.events()) feed(ev);
    }

    /// Combines the latched trace findings with checks against the current
    /// state and returns the full verdict list in catalog order.
    std::vector<Verdict> evaluate(const System& sys) {
        check_state(sys);
        std::vector<Verdict> out;
        out.reserve(verdicts_.size());
        for (const std::string& id : invariant_catalog()) out.push_back(verdicts_[id]);
        return out;
    }

    bool all_hold() const {
        for (const auto& [id, v] : verdicts_) {
            if (!v.holds) return false;
        }
        return true;
    }

    std::vector<std::string> failing() const {
        std::vector<std::string> out;
        for (const std::string& id : invariant_catalog()) {
            auto it = verdicts_.find(id);
            if (it != verdicts_.end() && !it->second.holds) out.push_back(id);
        }
        return out;
    }

private:
    void flag(const std::string& id, const std::string& why) {
        Verdict& v = verdicts_[id];
        if (v.holds) {
            v.holds = false;
            v.counterexample = why;
        }
    }

    static bool is_nonconfidential_domain(DomainId d) {
        return d == DomainId::hypervisor() || d == DomainId::dma();
    }

    static std::string at(const TraceEvent& ev) {
        return "seq=" + std::to_string(ev.seq) + " op=" + ev.op;
    }

    // ---- Boot ordering (feeds S.Init.2) ----

    void scan_boot_order(const TraceEvent& ev) {
        if (ev.op == "lock_seed" && ev.succeeded() && !seed_lock_seq_) seed_lock_seq_ = ev.seq;
        if (ev.op == "boot_complete") boot_complete_seen_ = true;
        if (ev.domain != DomainId::monitor() && ev.domain != DomainId::none() &&
            !first_untrusted_seq_) {
            first_untrusted_seq_ = ev.seq;
            if (!seed_lock_seq_) {
                flag("S.Init.2", "untrusted execution before seed lock: " + at(ev));
            }
        }
        if (ev.op == "read_seed" && ev.succeeded() && ev.domain != DomainId::monitor()) {
            flag("S.Init.2", "seed readable outside the monitor: " + at(ev));
        }
    }

    // ---- Monitor execution windows (I.FSM.1, I.FSM.4) ----

    void scan_window(const TraceEvent& ev) {
        auto& win = windows_[ev.hart];
        if (ev.op == "fsm_node" && ev.succeeded()) {
            auto node = ev.arg("node");
            if (node == "nc_enter" || node == "c_enter") {
                win.open = true;
                win.saved_since_enter = false;
                win.enter_seq = ev.seq;
            }
            return;
        }
        if (ev.op == "ctx_save" && win.open) win.saved_since_enter = true;
        if (ev.op == "hart_exit" && ev.succeeded()) {
            if (win.open && !win.saved_since_enter) {
                flag("I.FSM.4", "enter without control-region save: " + at(ev));
            }
            win.open = false;
            return;
        }
        if (win.open) {
            auto ie = ev.arg("ie");
            if (ie && *ie == "1") {
                flag("I.FSM.1", "interrupts enabled inside the monitor: " + at(ev));
            }
        }
    }

    // ---- Cross-domain transitions (I.FSM.2, I.FSM.3) ----

    void scan_transition(const TraceEvent& ev) {
        if (ev.op != "fsm_transition" || !ev.succeeded()) return;
        auto dir = ev.arg("dir");
        std::uint32_t actions = transition_actions_from_string(ev.arg("actions").value_or(""));
        auto& win = windows_[ev.hart];
        if (dir == "nc_to_c") {
            win.saw_nc_to_c = true;
            constexpr std::uint32_t need = kActIsolationGrant | kActStateSave | kActIrqRetarget;
            if ((actions & need) != need) {
                flag("I.FSM.2", "entry transition missing actions: " + at(ev));
            }
        } else if (dir == "c_to_nc") {
            win.saw_c_to_nc = true;
            constexpr std::uint32_t need =
                kActIsolationDeny | kActStateRestore | kActIrqRestore;
            if ((actions & need) != need) {
                flag("I.FSM.3", "exit transition missing actions: " + at(ev));
            }
        }
    }

    // ---- Context saves (I.FSM.4) ----

    void scan_ctx_save(const TraceEvent& ev) {
        if (ev.op == "ctx_save" && ev.succeeded()) {
            if (auto gprs = ev.arg("gprs")) {
                if (auto parsed = gprs_from_args(*gprs)) {
                    if (auto dom = ev.arg("domain")) {
                        if (auto id = domain_from_string(*dom)) saved_gprs_[id->raw] = *parsed;
                    }
                }
            }
            if (control_region_.size != 0) {
                auto slot = ev.arg_u64("slot");
                auto len = ev.arg_u64("len").value_or(MonitorLayout::kSlotSize);
                if (!slot ||
                    !control_region_.contains_range(AddrRange{PhysAddr{*slot}, len})) {
                    flag("I.FSM.4", "state saved outside the control region: " + at(ev));
                }
            }
        }
    }

    // ---- Exits (I.FSM.5 trace side, P.2) ----

    void scan_exit(const TraceEvent& ev) {
        if (ev.op != "hart_exit" || !ev.succeeded()) return;
        auto node = ev.arg("node").value_or("");
        if ((node == "nc_exit" || node == "c_exit") &&
            ev.arg("microarch_clean").value_or("1") != "1") {
            flag("I.FSM.5", "exit with microarchitectural residue: " + at(ev));
        }
        if (node != "nc_exit" && node != "c_exit") return;

        // P.2: registers observed by the entered domain equal its saved
        // state except at the declared positions.
        auto target = domain_from_string(ev.arg("to").value_or(""));
        auto gprs_str = ev.arg("gprs");
        if (!target || !gprs_str) return;
        auto gprs = gprs_from_args(*gprs_str);
        if (!gprs) return;
        auto it = saved_gprs_.find(target->raw);
        if (it == saved_gprs_.end()) return;
        std::set<std::size_t> declared;
        auto decl = ev.arg("declared").value_or("-");
        if (decl != "-") {
            std::size_t pos = 0;
            while (pos < decl.size()) {
                std::size_t next = decl.find(',', pos);
                declared.insert(std::strtoull(
                    decl.substr(pos, next == std::string::npos ? decl.size() - pos : next - pos)
                        .c_str(),
                    nullptr, 10));
                if (next == std::string::npos) break;
                pos = next + 1;
            }
        }
        for (std::size_t i = 0; i < gprs->size(); ++i) {
            if (declared.count(i)) continue;
            if ((*gprs)[i] != it->second[i]) {
                flag("P.2", "exit register " + std::to_string(i) +
                                " deviates from saved state: " + at(ev));
                break;
            }
        }
    }

    // ---- Views (I.FSM.6) ----

    void scan_view(const TraceEvent& ev) {
        if (ev.op != "fsm_view" || !ev.succeeded()) return;
        auto view_str = ev.arg("view");
        if (!view_str) return;
        auto view = gprs_from_args(*view_str);
        if (!view) return;
        std::set<std::size_t> listed;
        auto wl = ev.arg("wl").value_or("-");
        if (wl != "-") {
            std::size_t pos = 0;
            while (pos < wl.size()) {
                std::size_t next = wl.find(',', pos);
                listed.insert(std::strtoull(
                    wl.substr(pos, next == std::string::npos ? wl.size() - pos : next - pos)
                        .c_str(),
                    nullptr, 10));
                if (next == std::string::npos) break;
                pos = next + 1;
            }
        }
        for (std::size_t i = 0; i < view->size(); ++i) {
            if ((*view)[i] != kSanitizedRegister && !listed.count(i)) {
                flag("I.FSM.6", "view leaks register " + std::to_string(i) + ": " + at(ev));
            }
        }
    }

    // ---- Token ledger (I.MT.1, P.3 trace side; ownership for I.MT.3) ----

    void scan_tokens(const TraceEvent& ev) {
        if (ev.op == "token_mint" && ev.succeeded()) {
            mint_count_++;
            if (boot_complete_seen_) {
                flag("I.MT.1", "token minted after boot: " + at(ev));
            }
            auto serial = ev.arg_u64("serial");
            auto base = ev.arg_u64("base");
            if (serial && base) {
                if (serial_page_.count(*serial)) {
                    flag("I.MT.1", "serial minted twice: " + at(ev));
                }
                serial_page_[*serial] = *base / kPageSize;
                page_owner_[*base / kPageSize] = DomainId::monitor();
            }
            return;
        }
        if (ev.op == "token_map" && ev.succeeded()) {
            auto serial = ev.arg_u64("serial");
            auto owner = domain_from_string(ev.arg("owner").value_or(""));
            if (serial && owner && serial_page_.count(*serial)) {
                page_owner_[serial_page_[*serial]] = *owner;
            }
            return;
        }
        if (ev.op == "token_unmap" && ev.succeeded()) {
            auto serial = ev.arg_u64("serial");
            if (serial && serial_page_.count(*serial)) {
                page_owner_[serial_page_[*serial]] = DomainId::monitor();
            }
            return;
        }
        if (ev.op == "token_state" && ev.succeeded()) {
            if (ev.arg("zeroed").value_or("1") != "1") {
                flag("P.3", "token changed state over a dirty page: " + at(ev));
            }
        }
    }

    // ---- Memory accesses (I.MT.3, P.1, S.Init.1, S.Init.2) ----

    void scan_accesses(const TraceEvent& ev) {
        if (!ev.succeeded()) return;
        bool plain_read = ev.op == "read_phys" || ev.op == "read_block";
        bool plain_write = ev.op == "write_phys" || ev.op == "write_block" ||
                           ev.op == "fill_block" || ev.op == "atomic_cas";
        bool token_read = ev.op == "token_read";
        bool token_write = ev.op == "token_write" || ev.op == "token_fill";
        bool copy = ev.op == "copy_block";
        if (!plain_read && !plain_write && !token_read && !token_write && !copy) return;

        std::uint64_t addr = ev.arg_u64(copy ? "dst" : "addr").value_or(0);
        std::uint64_t len = ev.arg_u64("len").value_or(ev.arg_u64("width").value_or(8));
        AddrRange range{PhysAddr{addr}, len};
        std::uint64_t serial = ev.arg_u64("serial").value_or(0);

        // Accesses into tracker-managed memory must carry an owning token.
        if (tracker_range_.size != 0 && tracker_range_.intersects(range)) {
            if (ev.domain == DomainId::monitor()) {
                if (!token_read && !token_write && !(copy && serial != 0)) {
                    flag("I.MT.3", "monitor touched tracker memory without a token: " + at(ev));
                } else if (serial != 0) {
                    auto it = serial_page_.find(serial);
                    if (it == serial_page_.end()) {
                        flag("I.MT.3", "access through unknown token serial: " + at(ev));
                    }
                }
            } else if (!is_nonconfidential_domain(ev.domain)) {
                // A CVM reaches only pages its table owns.
                std::uint64_t first = addr / kPageSize;
                std::uint64_t last = (addr + len - 1) / kPageSize;
                for (std::uint64_t pg = first; pg <= last; ++pg) {
                    auto it = page_owner_.find(pg);
                    if (!tracker_range_.contains(PhysAddr::page(pg))) continue;
                    if (it == page_owner_.end() || it->second != ev.domain) {
                        flag("I.MT.3",
                             "domain touched a page it does not own: " + at(ev));
                        break;
                    }
                }
            }
        }

        // Non-confidential domains never reach confidential memory.
        if (is_nonconfidential_domain(ev.domain) && confidential_.size != 0 &&
            confidential_.intersects(range)) {
            flag("P.1", "non-confidential domain reached confidential memory: " + at(ev));
        }

        // Writes into the monitor's own memory by anyone else.
        if ((plain_write || token_write || copy) && ev.domain != DomainId::monitor()) {
            if ((monitor_region_.size != 0 && monitor_region_.intersects(range)) ||
                (control_region_.size != 0 && control_region_.intersects(range))) {
                flag("S.Init.1", "untrusted write into monitor memory: " + at(ev));
            }
        }
        // Reads of the attestation key slot by anyone else.
        if ((plain_read || token_read) && ev.domain != DomainId::monitor() &&
            key_slot_.size != 0 && key_slot_.intersects(range)) {
            flag("S.Init.2", "attestation key read outside the monitor: " + at(ev));
        }
    }

    // ---- Security-critical configuration (S.Init.1) ----

    void scan_config(const TraceEvent& ev) {
        if (!ev.succeeded() || ev.domain == DomainId::monitor()) return;
        if (ev.op == "set_isolation") {
            flag("S.Init.1", "isolation reconfigured outside the monitor: " + at(ev));
        }
        if (ev.op == "configure_interrupt") {
            auto target = ev.arg("target").value_or("");
            if (target == "highest") {
                flag("S.Init.1",
                     "highest-privilege interrupt route set by untrusted code: " + at(ev));
            }
        }
    }

    // ---- Node-path legality folded into I.FSM.2/I.FSM.3 ----

    void scan_node_path(const TraceEvent& ev) {
        auto& win = windows_[ev.hart];
        std::optional<FsmNode> node;
        if (ev.op == "fsm_node" && ev.succeeded()) {
            node = fsm_node_from_string(ev.arg("node").value_or(""));
        }
        if (!node) {
            if (ev.op == "hart_exit" && ev.succeeded()) win.last_node.reset();
            return;
        }
        if (win.last_node) {
            FsmNode from = *win.last_node;
            FsmNode to = *node;
            bool fresh_window = (to == FsmNode::NcEnter || to == FsmNode::CEnter);
            if (!fresh_window) {
                if (!fsm_edge_legal(from, to)) {
                    flag(is_confidential_node(to) ? "I.FSM.2" : "I.FSM.3",
                         std::string("illegal node edge ") + to_string(from) + "->" +
                             to_string(to) + ": " + at(ev));
                }
                bool crossing_to_c = !is_confidential_node(from) && is_confidential_node(to);
                bool crossing_to_nc = is_confidential_node(from) && !is_confidential_node(to);
                if (crossing_to_c && !win.saw_nc_to_c) {
                    flag("I.FSM.2", "entered confidential side without transition: " + at(ev));
                }
                if (crossing_to_nc && !win.saw_c_to_nc) {
                    flag("I.FSM.3", "left confidential side without transition: " + at(ev));
                }
            } else {
                win.saw_nc_to_c = false;
                win.saw_c_to_nc = false;
            }
        } else {
            win.saw_nc_to_c = false;
            win.saw_c_to_nc = false;
        }
        win.last_node = node;
    }

    // ---- Lifecycle attribution (P.4) ----

    void scan_lifecycle(const TraceEvent& ev) {
        if (!ev.succeeded()) return;
        if (ev.op == "vm_create") {
            if (auto id = domain_from_string(ev.arg("id").value_or(""))) {
                lifecycle_from_trace_[id->raw] = "created";
            }
        } else if (ev.op == "promote") {
            if (auto vm = domain_from_string(ev.arg("vm").value_or(""))) {
                lifecycle_from_trace_[vm->raw] = "terminated";
            }
            if (auto cvm = domain_from_string(ev.arg("cvm").value_or(""))) {
                lifecycle_from_trace_[cvm->raw] = "runnable";
            }
        } else if (ev.op == "terminate") {
            if (auto cvm = domain_from_string(ev.arg("cvm").value_or(""))) {
                lifecycle_from_trace_[cvm->raw] = "terminated";
            }
        }
    }

    // ---- State checks ----

    void check_state(const System& sys) {
        const Platform& platform = sys.platform;
        const SecurityMonitor& monitor = sys.monitor;
        if (!monitor.booted()) return;
        prime(sys);

        // Boot-established invariants, re-verified against live state.
        for (const std::string& id : verify_init_invariants(sys)) {
            flag(id, "state check failed");
        }

        // Collect live tokens: the pool plus every page table.
        struct LiveToken {
            std::uint64_t serial;
            AddrRange range;
            DomainId owner;
        };
        std::vector<LiveToken> live;
        for (const UnallocatedPage& t : monitor.pool().free_tokens()) {
            live.push_back({t.serial(), t.range(), DomainId::monitor()});
        }
        for (const auto& [raw, dom] : monitor.domains()) {
            if (!dom.page_table) continue;
            live.push_back({dom.page_table->root().serial(), dom.page_table->root().range(),
                            dom.id});
            for (const auto& [g, t] : dom.page_table->mappings()) {
                live.push_back({t.serial(), t.range(), dom.id});
            }
        }

        // I.MT.1 — fixed token population.
        if (live.size() != monitor.pool().total_created()) {
            flag("I.MT.1", "live token count " + std::to_string(live.size()) +
                               " != created " +
                               std::to_string(monitor.pool().total_created()));
        }
        if (mint_count_ != 0 && mint_count_ != monitor.pool().total_created()) {
            flag("I.MT.1", "mint events " + std::to_string(mint_count_) + " != created " +
                               std::to_string(monitor.pool().total_created()));
        }

        // I.MT.2 — brute-force pairwise disjointness.
        for (std::size_t i = 0; i < live.size(); ++i) {
            for (std::size_t j = i + 1; j < live.size(); ++j) {
                if (live[i].range.intersects(live[j].range)) {
                    flag("I.MT.2", "tokens " + std::to_string(live[i].serial) + " and " +
                                       std::to_string(live[j].serial) + " overlap");
                }
            }
        }

        // S.MT.1 — no page in two domains. Three routes: token serials,
        // token ranges, and the MMU-visible page-table words in memory.
        std::map<std::uint64_t, DomainId> serial_owner;
        std::map<std::uint64_t, DomainId> page_owned_by_domain;
        for (const LiveToken& t : live) {
            auto [it, inserted] = serial_owner.emplace(t.serial, t.owner);
            if (!inserted && it->second != t.owner) {
                flag("S.MT.1", "serial " + std::to_string(t.serial) + " live in " +
                                   to_string(it->second) + " and " + to_string(t.owner));
            }
            if (t.owner != DomainId::monitor()) {
                std::uint64_t page = t.range.base.page_number();
                auto [pit, pinserted] = page_owned_by_domain.emplace(page, t.owner);
                if (!pinserted && pit->second != t.owner) {
                    flag("S.MT.1", "page " + std::to_string(page) + " owned by " +
                                       to_string(pit->second) + " and " + to_string(t.owner));
                }
            }
        }
        check_mmu_aliasing(sys, page_owned_by_domain);

        // P.3 — pool pages must be zero before they can move to a new owner.
        for (const UnallocatedPage& t : monitor.pool().free_tokens()) {
            if (!platform.range_is_zero(t.range())) {
                flag("P.3", "free page " + std::to_string(t.page_number()) + " is not zero");
            }
        }

        // I.FSM.5 — microarchitectural residue never outlives its domain.
        for (std::uint32_t h = 0; h < platform.hart_count(); ++h) {
            const HartContext& ctx = platform.hart(h);
            if (ctx.microarch.taint_owner && *ctx.microarch.taint_owner != ctx.active_domain) {
                flag("I.FSM.5", "hart " + std::to_string(h) + " carries residue of " +
                                    to_string(*ctx.microarch.taint_owner) + " into " +
                                    to_string(ctx.active_domain));
            }
        }

        // P.1 — no probe from the non-confidential side may reach a live
        // CVM's non-shared pages.
        for (const auto& [raw, dom] : monitor.domains()) {
            if (dom.kind != DomainKind::Cvm || dom.lifecycle == Lifecycle::Terminated ||
                !dom.page_table) {
                continue;
            }
            for (const auto& [g, t] : dom.page_table->mappings()) {
                if (platform.probe_allowed(DomainId::hypervisor(), PrivilegeLevel::Middle,
                                           t.range(), false) ||
                    platform.probe_allowed(DomainId::dma(), PrivilegeLevel::Lowest, t.range(),
                                           false)) {
                    flag("P.1", "cvm page " + std::to_string(t.page_number()) +
                                    " reachable from the non-confidential side");
                }
            }
        }

        // P.4 — every lifecycle state must be explained by the trace.
        for (const auto& [raw, dom] : monitor.domains()) {
            if (dom.kind == DomainKind::Hypervisor) continue;
            auto it = lifecycle_from_trace_.find(raw);
            std::string expected = it == lifecycle_from_trace_.end() ? "created" : it->second;
            std::string actual = to_string(dom.lifecycle);
            if (actual != expected) {
                flag("P.4", "domain " + to_string(dom.id) + " lifecycle '" + actual +
                                "' has no matching event (expected '" + expected + "')");
            }
        }
    }

    /// Decode page-table entry words straight from memory: a page number
    /// valid in two different domains' tables is an aliasing violation even
    /// if the token bookkeeping looks healthy.
    void check_mmu_aliasing(const System& sys,
                            const std::map<std::uint64_t, DomainId>& token_view) {
        (void)token_view;
        std::map<std::uint64_t, DomainId> seen;
        for (const auto& [raw, dom] : sys.monitor.domains()) {
            if (!dom.page_table) continue;
            PhysAddr root = dom.page_table->root().base();
            const auto& mem = sys.platform.memory_bytes();
            for (std::uint64_t i = 0; i < PageTable::kMaxGuestPages; ++i) {
                std::uint64_t off = root.value + i * 8;
                Word entry = 0;
                for (int b = 0; b < 8; ++b) {
                    entry |= static_cast<Word>(mem[off + b]) << (8 * b);
                }
                if ((entry & 1) == 0) continue;
                std::uint64_t page = entry >> 1;
                auto [it, inserted] = seen.emplace(page, dom.id);
                if (!inserted && it->second != dom.id) {
                    flag("S.MT.1", "mapped page " + std::to_string(page) + " aliased by " +
                                       to_string(it->second) + " and " + to_string(dom.id));
                }
            }
        }
    }

    struct Window {
        bool open = false;
        bool saved_since_enter = false;
        bool saw_nc_to_c = false;
        bool saw_c_to_nc = false;
        std::optional<FsmNode> last_node;
        std::uint64_t enter_seq = 0;
    };

    std::map<std::string, Verdict> verdicts_;
    std::map<std::uint32_t, Window> windows_;
    std::map<std::uint32_t, Gprs> saved_gprs_;
    std::map<std::uint64_t, std::uint64_t> serial_page_;
    std::map<std::uint64_t, DomainId> page_owner_;
    std::map<std::uint32_t, std::string> lifecycle_from_trace_;
    std::optional<std::uint64_t> seed_lock_seq_;
    std::optional<std::uint64_t> first_untrusted_seq_;
    bool boot_complete_seen_ = false;
    std::uint64_t mint_count_ = 0;

    AddrRange monitor_region_{};
    AddrRange control_region_{};
    AddrRange tracker_range_{};
    AddrRange confidential_{};
    AddrRange key_slot_{};
};

/// One-shot oracle: replays the whole trace and checks the current state,
/// returning one verdict per catalog entry.
inline std::vector<Verdict> invariant_oracle(const System& sys, const Trace& trace) {
    InvariantOracle oracle;
    oracle.prime(sys);
    oracle.feed_all(trace);
    return oracle.evaluate(sys);
}

}  // namespace cvmsim
