// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cvmsim/boot.hpp"
#include "cvmsim/oracle.hpp"
#include "cvmsim/system.hpp"

namespace cvmsim {

/// Adversary and driver actions. The attacker is software-level: every
/// action decomposes into legal platform or monitor calls; denied outcomes
/// are recorded, never faked.
enum class ActionKind : std::uint8_t {
    Promote,       // vm=<id>          hypervisor promotes a VM to a CVM
    Resume,        // hart=H cvm=<id>  enter the CVM (answers pending calls)
    VictimStep,    // hart=H           entered CVM executes its next step
    Interrupt,     // hart=H irq=N     inject an asynchronous interrupt
    Terminate,     // cvm=<id>
    ReadProbe,     // page=P           hypervisor read of a physical page
    WriteProbe,    // page=P
    DmaProbe,      // page=P write=B   peripheral DMA access
    SharedInput,   // cvm=<id> val=V   garbage into the CVM's shared page
    ArbHypercall,  // sel=S            undeclared monitor call from the hv
    Impersonate,   // seed/key theft attempt + forged attestation
    StartHart,     // hart=H           release a parked hart to the hv
    ProbeSweep,    //                  probe every confidential page
};

struct Action {
    ActionKind kind = ActionKind::ReadProbe;
    std::uint64_t a = 0;
    std::uint64_t b = 0;

    bool operator==(const Action&) const = default;
};

inline const char* to_string(ActionKind k) {
    switch (k) {
    case ActionKind::Promote: return "promote";
    case ActionKind::Resume: return "resume";
    case ActionKind::VictimStep: return "victim_step";
    case ActionKind::Interrupt: return "interrupt";
    case ActionKind::Terminate: return "terminate";
    case ActionKind::ReadProbe: return "read_probe";
    case ActionKind::WriteProbe: return "write_probe";
    case ActionKind::DmaProbe: return "dma_probe";
    case ActionKind::SharedInput: return "shared_input";
    case ActionKind::ArbHypercall: return "arb_hypercall";
    case ActionKind::Impersonate: return "impersonate";
    case ActionKind::StartHart: return "start_hart";
    case ActionKind::ProbeSweep: return "probe_sweep";
    }
    return "?";
}

struct WorldConfig {
    std::uint64_t mem_pages = 64;
    std::uint32_t harts = 1;
    std::uint64_t rng_seed = 7;
    std::uint64_t tracker_pages = 8;
    std::uint32_t vms = 1;
    std::uint64_t vm_pages = 2;
    std::uint8_t image_fill = 0x5A;
    /// Raw image bytes for the measured components; defaults are synthetic
    /// patterns. The CLI fills these from files.
    std::vector<std::uint8_t> monitor_image = std::vector<std::uint8_t>(256, 0xA5);
    std::vector<std::uint8_t> hv_image = std::vector<std::uint8_t>(512, 0xC3);
};

struct ActionResult {
    bool applied = false;     // action had its intended effect
    std::string note;         // outcome summary (error names, denials)
};

/// A bootable universe plus the untrusted world driving it: staged VMs, a
/// deterministic in-guest victim program, and the adversary action set.
/// Owns its trace; clones rebind to fresh traces so exploration workers
/// never share state.
class World {
public:
    static Outcome<std::unique_ptr<World>> create(const WorldConfig& config) {
        auto w = std::make_unique<World>();
        w->config_ = config;
        auto platform = Platform::create(config.mem_pages * kPageSize, config.harts,
                                         config.rng_seed, w->trace_);
        if (!platform.ok()) return platform.error();
        w->sys_ = std::make_unique<System>(std::move(platform).value(), SecurityMonitor{});

        BootOptions opts;
        opts.tracker_pages = config.tracker_pages;
        auto report = secure_boot(*w->sys_, config.monitor_image, config.hv_image, opts);
        if (!report.ok()) return report.error();
        w->boot_report_ = std::move(report).value();

        // Hypervisor stages the VM images in its heap.
        for (std::uint32_t v = 0; v < config.vms; ++v) {
            std::vector<PhysAddr> pages;
            for (std::uint64_t i = 0; i < config.vm_pages; ++i) {
                auto page = w->sys_->monitor.alloc_nc_page();
                if (!page.ok()) return page.error();
                std::vector<std::uint8_t> content(kPageSize,
                                                  static_cast<std::uint8_t>(
                                                      config.image_fill + v * 16 + i));
                auto st = w->sys_->platform.write_block(0, page.value().base, content);
                if (!st.ok()) return st.error();
                pages.push_back(page.value().base);
            }
            auto vm = w->sys_->monitor.create_vm(w->sys_->platform, pages);
            if (!vm.ok()) return vm.error();
            w->vms_.push_back(vm.value());
        }
        return w;
    }

    World() = default;
    World(const World&) = delete;
    World& operator=(const World&) = delete;

    std::unique_ptr<World> clone() const {
        auto w = std::make_unique<World>();
        w->config_ = config_;
        w->boot_report_ = boot_report_;
        w->vms_ = vms_;
        w->victims_ = victims_;
        w->sys_ = std::make_unique<System>(sys_->clone(w->trace_));
        return w;
    }

    System& sys() { return *sys_; }
    const System& sys() const { return *sys_; }
    Trace& trace() { return trace_; }
    const Trace& trace() const { return trace_; }
    const WorldConfig& config() const { return config_; }
    const BootReport& boot_report() const { return boot_report_; }
    const std::vector<DomainId>& vms() const { return vms_; }

    std::uint64_t victim_counter(DomainId cvm) const {
        auto it = victims_.find(cvm.raw);
        return it == victims_.end() ? 0 : it->second;
    }

    /// Registered CVM ids in creation order.
    std::vector<DomainId> cvms() const {
        std::vector<DomainId> out;
        for (const auto& [raw, d] : sys_->monitor.domains()) {
            if (d.kind == DomainKind::Cvm) out.push_back(d.id);
        }
        return out;
    }

    std::optional<std::uint32_t> hv_hart() const {
        for (std::uint32_t h = 0; h < sys_->platform.hart_count(); ++h) {
            const HartContext& ctx = sys_->platform.hart(h);
            if (!ctx.parked && ctx.active_domain == DomainId::hypervisor() &&
                ctx.privilege == PrivilegeLevel::Middle) {
                return h;
            }
        }
        return std::nullopt;
    }

    std::optional<DomainId> cvm_on_hart(std::uint32_t h) const {
        if (h >= sys_->platform.hart_count()) return std::nullopt;
        const HartContext& ctx = sys_->platform.hart(h);
        const SecurityDomain* d = sys_->monitor.find_domain(ctx.active_domain);
        if (d && d->kind == DomainKind::Cvm) return ctx.active_domain;
        return std::nullopt;
    }

    /// State hash covering the system plus harness-level victim state.
    std::uint64_t state_hash() const {
        std::string buf;
        buf.reserve(sys_->platform.memory_size() + 4096);
        sys_->serialize_state(buf);
        for (const auto& [raw, counter] : victims_) {
            buf.push_back(static_cast<char>(raw));
            buf.push_back(static_cast<char>(counter));
        }
        std::uint64_t h = 0xcbf29ce484222325ull;
        std::size_t i = 0;
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

    // ---- Action application ----

    ActionResult apply(const Action& action) {
        switch (action.kind) {
        case ActionKind::Promote: return do_promote(DomainId{std::uint32_t(action.a)});
        case ActionKind::Resume:
            return do_resume(std::uint32_t(action.a), DomainId{std::uint32_t(action.b)});
        case ActionKind::VictimStep: return do_victim_step(std::uint32_t(action.a));
        case ActionKind::Interrupt:
            return do_interrupt(std::uint32_t(action.a), std::uint32_t(action.b));
        case ActionKind::Terminate: return do_terminate(DomainId{std::uint32_t(action.a)});
        case ActionKind::ReadProbe: return do_probe(action.a, false, false);
        case ActionKind::WriteProbe: return do_probe(action.a, true, false);
        case ActionKind::DmaProbe: return do_probe(action.a, action.b != 0, true);
        case ActionKind::SharedInput:
            return do_shared_input(DomainId{std::uint32_t(action.a)}, action.b);
        case ActionKind::ArbHypercall: return do_arb_hypercall(action.a);
        case ActionKind::Impersonate: return do_impersonate();
        case ActionKind::StartHart: return do_start_hart(std::uint32_t(action.a));
        case ActionKind::ProbeSweep: return do_probe_sweep();
        }
        return {false, "unknown action"};
    }

private:
    ActionResult do_promote(DomainId vm) {
        auto h = hv_hart();
        if (!h) return {false, "no hypervisor hart"};
        auto r = sys_->monitor.promote_to_cvm(sys_->platform, *h, vm);
        if (!r.ok()) return {false, to_string(r.error())};
        victims_[r.value().cvm_id.raw] = 0;
        return {true, "cvm=" + to_string(r.value().cvm_id)};
    }

    ActionResult do_resume(std::uint32_t hart, DomainId cvm) {
        if (hart >= sys_->platform.hart_count()) return {false, "no such hart"};
        const HartContext& ctx = sys_->platform.hart(hart);
        if (ctx.parked || ctx.active_domain != DomainId::hypervisor()) {
            return {false, "hart not in hypervisor"};
        }
        // Pending-call answers are canned and deterministic.
        Gprs results{};
        results[2] = 0xCA11;
        results[3] = 0xCA12;
        auto r = sys_->monitor.resume_cvm(sys_->platform, hart, cvm, results);
        if (!r.ok()) return {false, to_string(r.error())};
        return {true, "entered"};
    }

    /// The victim program: a fixed cyclic sequence of in-guest steps that
    /// exercises secrets, sharing, and both routed call shapes.
    ActionResult do_victim_step(std::uint32_t hart) {
        auto cvm = cvm_on_hart(hart);
        if (!cvm) return {false, "hart not in a cvm"};
        const SecurityDomain* dom = sys_->monitor.find_domain(*cvm);
        std::uint64_t step = victims_[cvm->raw] % 6;
        victims_[cvm->raw] = (victims_[cvm->raw] + 1) % 6;

        switch (step) {
        case 0:
        case 5: {
            // Write a secret into guest page 0.
            auto phys = dom->page_table->translate(0);
            if (!phys.ok()) return {false, "no guest page 0"};
            auto st = sys_->platform.write_phys(hart, phys.value().offset(0x40), 8,
                                                0x5EC0 + step);
            return {st.ok(), st.ok() ? "secret written" : to_string(st.error())};
        }
        case 1: {
            // Declare a shared page at guest slot 8 (idempotent per CVM).
            if (!dom->shared.empty()) {
                // Already shared: write to it instead.
                auto it = dom->shared.begin();
                auto st = sys_->platform.write_phys(hart, it->second.base.offset(0x10), 8,
                                                    0xB000);
                return {st.ok(), "shared write"};
            }
            Gprs regs{};
            regs[0] = kCvmCallSharePage;
            regs[1] = 8;
            sys_->platform.set_hart_gprs(hart, regs);
            auto r = sys_->monitor.cvm_trap(sys_->platform, hart, TrapCause::EcallFromCvm);
            if (!r.ok()) return {false, to_string(r.error())};
            return {true, "shared page"};
        }
        case 2: {
            // Write into the shared buffer.
            if (dom->shared.empty()) return {true, "nothing shared"};
            auto it = dom->shared.begin();
            auto st = sys_->platform.write_phys(hart, it->second.base.offset(0x18), 8, 0xB111);
            return {st.ok(), "shared write"};
        }
        case 3: {
            // Routed hypercall (console putchar, args {1}).
            Gprs regs{};
            regs[0] = 1;
            regs[1] = 0x41;
            regs[2] = 0x5EC3;  // private value, must never reach the hv
            sys_->platform.set_hart_gprs(hart, regs);
            auto r = sys_->monitor.cvm_trap(sys_->platform, hart, TrapCause::EcallFromCvm);
            if (!r.ok()) return {false, to_string(r.error())};
            return {true, "hypercall routed"};
        }
        case 4: {
            // MMIO load from an unmapped guest address, routed to the hv.
            Gprs regs{};
            regs[0] = 0x20;  // device id, exposed via the mmio whitelist
            regs[1] = 0x100000 + 0x8;
            regs[2] = 8;
            regs[3] = 0x5EC4;  // private value
            sys_->platform.set_hart_gprs(hart, regs);
            auto r = sys_->monitor.cvm_trap(sys_->platform, hart, TrapCause::MmioLoadFault);
            if (!r.ok()) return {false, to_string(r.error())};
            return {true, "mmio routed"};
        }
        default: return {false, "unreachable"};
        }
    }

    ActionResult do_interrupt(std::uint32_t hart, std::uint32_t irq) {
        if (hart >= sys_->platform.hart_count()) return {false, "no such hart"};
        auto rec = sys_->platform.deliver_interrupt(irq, hart);
        if (!rec.ok()) return {false, to_string(rec.error())};
        if (!rec.value().delivered) return {true, "masked"};
        if (rec.value().new_privilege == PrivilegeLevel::Highest) {
            auto r = sys_->monitor.handle_interrupt(sys_->platform, hart);
            if (!r.ok()) return {false, to_string(r.error())};
            return {true, "preempted"};
        }
        return {true, "delivered"};
    }

    ActionResult do_terminate(DomainId cvm) {
        auto h = hv_hart();
        if (!h) return {false, "no hypervisor hart"};
        auto st = sys_->monitor.terminate_cvm(sys_->platform, *h, cvm);
        if (!st.ok()) return {false, to_string(st.error())};
        return {true, "terminated"};
    }

    ActionResult do_probe(std::uint64_t page, bool write, bool dma) {
        PhysAddr addr = PhysAddr::page(page);
        if (dma) {
            if (write) {
                auto st = sys_->platform.dma_write(addr, 8, 0xD11A);
                return {true, st.ok() ? "allowed" : to_string(st.error())};
            }
            auto r = sys_->platform.dma_read(addr, 8);
            return {true, r.ok() ? "allowed" : to_string(r.error())};
        }
        auto h = hv_hart();
        if (!h) return {false, "no hypervisor hart"};
        if (write) {
            auto st = sys_->platform.write_phys(*h, addr, 8, 0xE011);
            return {true, st.ok() ? "allowed" : to_string(st.error())};
        }
        auto r = sys_->platform.read_phys(*h, addr, 8);
        return {true, r.ok() ? "allowed" : to_string(r.error())};
    }

    ActionResult do_shared_input(DomainId cvm, std::uint64_t value) {
        auto h = hv_hart();
        if (!h) return {false, "no hypervisor hart"};
        auto shared = sys_->monitor.shared_pages(cvm);
        if (shared.empty()) return {false, "no shared page"};
        auto st = sys_->platform.write_phys(*h, shared.front().base.offset(0x20), 8, value);
        return {st.ok(), st.ok() ? "injected" : to_string(st.error())};
    }

    ActionResult do_arb_hypercall(std::uint64_t selector) {
        auto h = hv_hart();
        if (!h) return {false, "no hypervisor hart"};
        Gprs regs{};
        regs[0] = selector;
        regs[1] = 0xFEED;
        auto r = sys_->monitor.sm_call_from_hv(sys_->platform, *h, regs);
        return {true, r.ok() ? "accepted" : to_string(r.error())};
    }

    ActionResult do_impersonate() {
        auto h = hv_hart();
        if (!h) return {false, "no hypervisor hart"};
        // Try the seed, then the key slot; both must be refused.
        auto seed = sys_->platform.read_seed(*h);
        auto key = sys_->platform.read_phys(*h, sys_->monitor.layout().key_slot().base, 8);
        bool denied = !seed.ok() && !key.ok();
        return {true, denied ? "denied" : "breached"};
    }

    ActionResult do_start_hart(std::uint32_t target) {
        auto h = hv_hart();
        if (!h) return {false, "no hypervisor hart"};
        auto st = sys_->monitor.start_hart(sys_->platform, *h, target);
        if (!st.ok()) return {false, to_string(st.error())};
        return {true, "started"};
    }

    ActionResult do_probe_sweep() {
        const AddrRange conf = sys_->monitor.layout().confidential;
        std::uint64_t allowed = 0;
        for (std::uint64_t p = conf.base.page_number(); p < conf.end() / kPageSize; ++p) {
            for (int mode = 0; mode < 4; ++mode) {
                ActionResult r = do_probe(p, mode & 1, mode & 2);
                if (r.note == "allowed") allowed++;
            }
        }
        return {true, allowed == 0 ? "all denied" : std::to_string(allowed) + " allowed"};
    }

    WorldConfig config_;
    Trace trace_;
    std::unique_ptr<System> sys_;
    BootReport boot_report_;
    std::vector<DomainId> vms_;
    std::map<std::uint32_t, std::uint64_t> victims_;
};

struct RunResult {
    std::vector<Verdict> verdicts;
    bool all_hold = true;
    std::optional<std::size_t> failing_action;
    std::vector<std::string> notes;
};

/// Executes a scripted scenario, interleaving victim steps chosen by the
/// scheduler seed, and evaluates the full oracle after every action (the
/// trace side of the oracle sees every event).
inline RunResult run_scenario(World& world, const std::vector<Action>& script,
                              std::uint64_t seed) {
    RunResult result;
    InvariantOracle oracle;
    oracle.prime(world.sys());
    std::size_t fed = 0;
    auto feed_new = [&]() {
        const auto& events = world.trace().events();
        for (; fed < events.size(); ++fed) oracle.feed(events[fed]);
    };
    feed_new();

    std::uint64_t rng = seed;
    auto next_rng = [&]() {
        rng += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = rng;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    };

    for (std::size_t i = 0; i < script.size(); ++i) {
        ActionResult r = world.apply(script[i]);
        result.notes.push_back(std::string(to_string(script[i].kind)) + ": " + r.note);
        feed_new();

        // Scheduler: optionally advance entered victims between actions.
        if (seed != 0) {
            for (std::uint32_t h = 0; h < world.sys().platform.hart_count(); ++h) {
                if (world.cvm_on_hart(h) && (next_rng() & 1)) {
                    world.apply(Action{ActionKind::VictimStep, h, 0});
                    feed_new();
                }
            }
        }

        auto verdicts = oracle.evaluate(world.sys());
        bool bad = false;
        for (const Verdict& v : verdicts) {
            if (!v.holds) bad = true;
        }
        if (bad && !result.failing_action) result.failing_action = i;
    }
    result.verdicts = oracle.evaluate(world.sys());
    for (const Verdict& v : result.verdicts) {
        if (!v.holds) result.all_hold = false;
    }
    return result;
}

}  // namespace cvmsim
