// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "cvmsim/attest.hpp"
#include "cvmsim/system.hpp"

namespace cvmsim {

/// Names of the invariants the initialization sequence establishes. The
/// catalog (with meanings) is documented in docs/formats.md.
inline const std::vector<std::string>& init_invariant_ids() {
    static const std::vector<std::string> ids = {"I.Init.1", "I.Init.2", "I.Init.3", "I.Init.4",
                                                 "I.Init.5"};
    return ids;
}

struct BootReport {
    std::vector<Measurement> measurements;
    AddrRange monitor_region{};
    AddrRange control_region{};
    AddrRange tracker_range{};
    Digest attestation_key_id{};
    std::set<std::string> invariants_established;
    std::string failed_step;  // empty on success

    bool complete() const {
        return failed_step.empty() &&
               invariants_established.size() == init_invariant_ids().size();
    }

    std::string serialize() const {
        std::string out = "boot-report-v1\n";
        for (const Measurement& m : measurements) {
            out += "measurement=" + m.subject + ":" + hex(m.digest) + "\n";
        }
        out += "monitor_region=" + arg_hex(monitor_region.base.value) + "+" +
               arg_dec(monitor_region.size) + "\n";
        out += "control_region=" + arg_hex(control_region.base.value) + "+" +
               arg_dec(control_region.size) + "\n";
        out += "tracker_range=" + arg_hex(tracker_range.base.value) + "+" +
               arg_dec(tracker_range.size) + "\n";
        out += "attestation_key_id=" + hex(attestation_key_id) + "\n";
        out += "invariants=";
        bool first = true;
        for (const std::string& id : invariants_established) {
            if (!first) out += ',';
            first = false;
            out += id;
        }
        out += "\n";
        if (!failed_step.empty()) out += "failed_step=" + failed_step + "\n";
        return out;
    }
};

struct BootOptions {
    /// Pages handed to the memory tracker. 0 = everything left in the
    /// confidential region after the monitor and control carve-outs, sized
    /// to half of physical memory.
    std::uint64_t tracker_pages = 0;
};

/// Checks that the boot-established invariants hold in the current state.
/// Returns the identifiers of violated invariants; empty means healthy.
inline std::set<std::string> verify_init_invariants(const System& sys) {
    std::set<std::string> violations;
    const Platform& platform = sys.platform;
    const SecurityMonitor& monitor = sys.monitor;
    if (!monitor.booted()) {
        violations.insert(init_invariant_ids().begin(), init_invariant_ids().end());
        return violations;
    }
    const MonitorLayout& layout = monitor.layout();

    // I.Init.1 — the highest privilege belongs to the monitor alone.
    for (std::uint32_t h = 0; h < platform.hart_count(); ++h) {
        const HartContext& ctx = platform.hart(h);
        if (ctx.privilege == PrivilegeLevel::Highest &&
            ctx.active_domain != DomainId::monitor()) {
            violations.insert("I.Init.1");
        }
    }

    // I.Init.2 — the isolation component actually denies untrusted access
    // to every page of every listed confidential range.
    for (const AddrRange& r : platform.isolation().confidential) {
        for (std::uint64_t p = r.base.page_number(); p * kPageSize < r.end(); ++p) {
            AddrRange page{PhysAddr::page(p), kPageSize};
            if (platform.probe_allowed(DomainId::hypervisor(), PrivilegeLevel::Middle, page,
                                       false) ||
                platform.probe_allowed(DomainId::hypervisor(), PrivilegeLevel::Middle, page,
                                       true) ||
                platform.probe_allowed(DomainId::dma(), PrivilegeLevel::Lowest, page, false) ||
                platform.probe_allowed(DomainId::dma(), PrivilegeLevel::Lowest, page, true)) {
                violations.insert("I.Init.2");
                break;
            }
        }
    }

    // I.Init.3 — monitor image and control data live inside confidential
    // memory.
    auto inside_confidential = [&](const AddrRange& r) {
        for (const AddrRange& c : platform.isolation().confidential) {
            if (c.contains_range(r)) return true;
        }
        return false;
    };
    if (!inside_confidential(layout.monitor_region) ||
        !inside_confidential(layout.control_region)) {
        violations.insert("I.Init.3");
    }

    // I.Init.4 — every pinned interrupt routes to a monitor handler at the
    // highest privilege.
    for (std::uint32_t irq : platform.irqc().pinned) {
        auto it = platform.irqc().routes.find(irq);
        if (it == platform.irqc().routes.end() ||
            it->second.target != PrivilegeLevel::Highest ||
            !layout.monitor_region.contains(it->second.handler)) {
            violations.insert("I.Init.4");
        }
    }

    // I.Init.5 — the endorsement seed is locked and the derived key sits in
    // the control data region.
    if (!platform.endorsement().locked) violations.insert("I.Init.5");
    AddrRange key_slot = layout.key_slot();
    if (!layout.control_region.contains_range(key_slot) || platform.range_is_zero(key_slot)) {
        violations.insert("I.Init.5");
    }

    return violations;
}

/// The measured-boot and monitor initialization sequence. Runs on hart 0
/// with interrupts disabled, straight out of reset:
///   1. measure the monitor and hypervisor images,
///   2. partition memory and install the isolation configuration,
///   3. hand the remaining confidential pages to the memory tracker,
///   4. point the pinned interrupt at the monitor's trap handler,
///   5. derive the attestation key, store it in the control region, lock
///      the seed,
///   6. clear microarchitectural state everywhere,
///   7. drop hart 0 to the hypervisor with interrupts enabled.
inline Outcome<BootReport> secure_boot(System& sys, std::span<const std::uint8_t> monitor_image,
                                       std::span<const std::uint8_t> hypervisor_image,
                                       BootOptions opts = {}) {
    Platform& platform = sys.platform;
    Trace& trace = platform.trace();
    constexpr std::uint32_t kBootHart = 0;

    auto fail = [&](const char* step) -> Outcome<BootReport> {
        trace.append(kBootHart, DomainId::monitor(), "boot", {{"step", step}},
                     "BootSequenceError");
        return Err::BootSequenceError;
    };
    auto step_ok = [&](const char* step) {
        trace.append(kBootHart, DomainId::monitor(), "boot", {{"step", step}}, "ok");
    };

    if (!platform.latch_once("secure_boot")) return fail("already_booted");
    if (platform.hart(kBootHart).privilege != PrivilegeLevel::Highest) return fail("privilege");

    // Step 1: measurements.
    BootReport report;
    report.measurements.push_back(measure(monitor_image, "monitor"));
    report.measurements.push_back(measure(hypervisor_image, "hypervisor"));
    step_ok("measure");

    // Step 2: memory partition.
    std::uint64_t total_pages = platform.page_count();
    std::uint64_t monitor_image_pages = (monitor_image.size() + kPageSize - 1) / kPageSize;
    if (monitor_image_pages == 0) monitor_image_pages = 1;
    std::uint64_t hv_pages = (hypervisor_image.size() + kPageSize - 1) / kPageSize;
    if (hv_pages == 0) hv_pages = 1;
    std::uint64_t monitor_pages = monitor_image_pages + 1;  // + data page for gates

    std::uint64_t tracker_pages = opts.tracker_pages;
    if (tracker_pages == 0) {
        std::uint64_t conf_budget = total_pages / 2;
        if (conf_budget < monitor_pages + MonitorLayout::kControlPages + 1) {
            return fail("partition");
        }
        tracker_pages = conf_budget - monitor_pages - MonitorLayout::kControlPages;
    }
    std::uint64_t conf_pages = monitor_pages + MonitorLayout::kControlPages + tracker_pages;
    // Non-confidential side needs the boot page, the hypervisor image and at
    // least one heap page.
    if (conf_pages + 1 + hv_pages + 1 > total_pages) return fail("partition");

    std::uint64_t conf_base = total_pages - conf_pages;
    MonitorLayout layout;
    layout.crtm = AddrRange::pages(0, 1);
    layout.monitor_region = AddrRange::pages(conf_base, monitor_pages);
    layout.control_region =
        AddrRange::pages(conf_base + monitor_pages, MonitorLayout::kControlPages);
    layout.tracker_range = AddrRange::pages(
        conf_base + monitor_pages + MonitorLayout::kControlPages, tracker_pages);
    layout.confidential = AddrRange::pages(conf_base, conf_pages);
    layout.nc_heap = AddrRange::pages(1 + hv_pages, conf_base - 1 - hv_pages);
    layout.trap_handler = layout.monitor_region.base;
    layout.hv_entry = PhysAddr::page(1);

    // Load both images before access control tightens.
    if (!hypervisor_image.empty()) {
        auto st = platform.write_block(kBootHart, layout.hv_entry, hypervisor_image);
        if (!st.ok()) return fail("load_hypervisor");
    }
    if (!monitor_image.empty()) {
        auto st = platform.write_block(kBootHart, layout.monitor_region.base, monitor_image);
        if (!st.ok()) return fail("load_monitor");
    }

    IsolationConfig cfg;
    cfg.confidential = {layout.confidential};
    auto iso = platform.set_isolation(kBootHart, cfg);
    if (!iso.ok()) return fail("isolation");
    step_ok("partition");

    // Step 3: memory tracker over the remaining confidential pages.
    auto pool = TokenPool::initialize(platform, kBootHart, layout.tracker_range);
    if (!pool.ok()) return fail("tracker");
    step_ok("tracker");

    // Step 4: pinned interrupt lines point into the monitor; the rest are
    // delegated to the hypervisor.
    for (std::uint32_t irq : platform.irqc().pinned) {
        auto st = platform.configure_interrupt(kBootHart, irq, PrivilegeLevel::Highest,
                                               layout.trap_handler);
        if (!st.ok()) return fail("irq_pin");
    }
    for (std::uint32_t irq = 0; irq < kIrqCount; ++irq) {
        if (platform.irqc().pinned.count(irq)) continue;
        auto st = platform.configure_interrupt(kBootHart, irq, PrivilegeLevel::Middle,
                                               layout.hv_entry.offset(0x100));
        if (!st.ok()) return fail("irq_delegate");
    }
    step_ok("interrupts");

    // Step 5: attestation key from the endorsement seed, then lock it away.
    auto seed = platform.read_seed(kBootHart);
    if (!seed.ok()) return fail("seed_read");
    AttestationKey key = derive_attestation_key(seed.value(), report.measurements);
    auto kw = platform.write_block(kBootHart, layout.key_slot().base,
                                   std::span<const std::uint8_t>(key.secret));
    if (!kw.ok()) return fail("key_store");
    auto lock = platform.lock_seed(kBootHart);
    if (!lock.ok()) return fail("seed_lock");
    report.attestation_key_id = key.key_id;
    step_ok("attestation_key");

    // Monitor bookkeeping becomes live before the privilege drop.
    auto install = sys.monitor.install_boot_state(platform, layout, std::move(pool).value(),
                                                  std::move(key), report.measurements,
                                                  WhitelistTable::defaults());
    if (!install.ok()) return fail("monitor_state");

    report.monitor_region = layout.monitor_region;
    report.control_region = layout.control_region;
    report.tracker_range = layout.tracker_range;

    auto violations = verify_init_invariants(sys);
    for (const std::string& id : init_invariant_ids()) {
        if (!violations.count(id)) report.invariants_established.insert(id);
    }
    if (!violations.empty()) return fail("invariants");

    // Step 6: no traces of boot-time execution survive into untrusted code.
    for (std::uint32_t h = 0; h < platform.hart_count(); ++h) platform.clear_microarch(h);
    step_ok("microarch");

    // Step 7: enable interrupts and drop hart 0 to the hypervisor.
    Gprs regs{};
    auto ex = platform.hart_exit(kBootHart, DomainId::hypervisor(), PrivilegeLevel::Middle,
                                 layout.hv_entry, regs, /*enable_interrupts=*/true, "boot_exit",
                                 "");
    if (!ex.ok()) return fail("exit");

    trace.append(kBootHart, DomainId::monitor(), "boot_complete",
                 {{"key_id", hex(report.attestation_key_id).substr(0, 16)}}, "ok");
    return report;
}

}  // namespace cvmsim
