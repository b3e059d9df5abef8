// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: the eight end-to-end guarantees this model must
// deliver, each checked at full scale and printed as one PASS/FAIL line.
// Exits non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "cvmsim/explorer.hpp"
#include "cvmsim/faults.hpp"
#include "cvmsim/scenario.hpp"

using namespace cvmsim;

namespace {

int g_failures = 0;

void report(int index, const char* name, bool pass, const std::string& detail = "") {
    std::printf("[%s] criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL", index, name,
                detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
    if (!pass) g_failures++;
}

std::uint64_t splitmix(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// 1. Token uniqueness: exhaustive exploration at (2 harts, 2 CVMs, 8 pages,
//    depth 14) holds the page-ownership guarantee; a build that duplicates a
//    token serial fails it with a counterexample within the depth bound.
void criterion_token_uniqueness() {
    ExploreConfig cfg;
    cfg.harts = 2;
    cfg.cvms = 2;
    cfg.pages = 8;
    cfg.depth = 14;
    cfg.invariants = {"S.MT.1"};
    cfg.workers = 1;

    auto healthy = bounded_explore(cfg);
    bool pass = healthy.ok() && healthy.value().pass && !healthy.value().budget_exceeded;
    std::string detail;
    if (healthy.ok()) {
        detail = std::to_string(healthy.value().states_visited) + " states, " +
                 std::to_string(healthy.value().edges_explored) + " edges";
    }

    set_mutation("duplicate_token_serial");
    auto mutated = bounded_explore(cfg);
    clear_mutations();
    bool mutation_caught = mutated.ok() && !mutated.value().pass &&
                           mutated.value().failed_invariant == "S.MT.1" &&
                           !mutated.value().counterexample.empty() &&
                           mutated.value().counterexample.size() <= cfg.depth;
    if (mutation_caught) {
        detail += "; mutation counterexample depth " +
                  std::to_string(mutated.value().counterexample.size());
    }
    report(1, "token uniqueness under exhaustive exploration", pass && mutation_caught, detail);
}

// ---------------------------------------------------------------------------
// 2. Memory-tracker invariants over 1e5 randomized allocate/deallocate/
//    map/unmap steps: fixed token population, pairwise disjointness
//    (O(n^2) sweep every 1e3 steps), and token-mediated access — exact.
void criterion_tracker_invariants() {
    Trace trace;
    auto platform_result = Platform::create(96 * kPageSize, 1, 7, trace);
    if (!platform_result.ok()) {
        report(2, "memory tracker invariants", false, "platform setup failed");
        return;
    }
    Platform platform = std::move(platform_result).value();
    AddrRange tracker = AddrRange::pages(32, 32);
    auto pool_result = TokenPool::initialize(platform, 0, tracker);
    if (!pool_result.ok()) {
        report(2, "memory tracker invariants", false, "pool setup failed");
        return;
    }
    TokenPool pool = std::move(pool_result).value();
    auto pt_result = PageTable::create(pool, platform, 0, DomainId{3});
    if (!pt_result.ok()) {
        report(2, "memory tracker invariants", false, "page table setup failed");
        return;
    }
    PageTable pt = std::move(pt_result).value();

    std::vector<AllocatedPage> stash;
    std::uint64_t total = pool.total_created();
    std::uint64_t rng = 1337;
    std::uint64_t violations = 0;
    std::uint64_t disjoint_sweeps = 0;

    auto live_ranges = [&]() {
        std::vector<AddrRange> out;
        for (const UnallocatedPage& t : pool.free_tokens()) out.push_back(t.range());
        for (const AllocatedPage& t : stash) out.push_back(t.range());
        out.push_back(pt.root().range());
        for (const auto& [g, t] : pt.mappings()) out.push_back(t.range());
        return out;
    };

    const int kSteps = 100000;
    for (int step = 0; step < kSteps; ++step) {
        switch (splitmix(rng) % 4) {
        case 0: {  // allocate
            auto t = pool.allocate(platform, 0);
            if (t.ok()) {
                auto page = std::move(t).value().into_allocated(platform, 0);
                if (page.ok()) {
                    (void)page.value().write(platform, 0, 8 * (splitmix(rng) % 512),
                                             splitmix(rng));
                    stash.push_back(std::move(page).value());
                }
            }
            break;
        }
        case 1: {  // deallocate
            if (!stash.empty()) {
                std::size_t idx = splitmix(rng) % stash.size();
                AllocatedPage page = std::move(stash[idx]);
                stash.erase(stash.begin() + static_cast<std::ptrdiff_t>(idx));
                (void)pool.deallocate(platform, 0, std::move(page));
            }
            break;
        }
        case 2: {  // map
            if (!stash.empty()) {
                std::size_t idx = splitmix(rng) % stash.size();
                std::uint64_t guest = splitmix(rng) % 64;
                if (!pt.translate(guest).ok()) {
                    AllocatedPage page = std::move(stash[idx]);
                    stash.erase(stash.begin() + static_cast<std::ptrdiff_t>(idx));
                    if (!pt.map_page(platform, 0, guest, std::move(page)).ok()) violations++;
                }
            }
            break;
        }
        case 3: {  // unmap
            auto pages = pt.guest_pages();
            if (!pages.empty()) {
                std::uint64_t guest = pages[splitmix(rng) % pages.size()];
                auto token = pt.unmap_page(platform, 0, guest);
                if (token.ok()) {
                    stash.push_back(std::move(token).value());
                } else {
                    violations++;
                }
            }
            break;
        }
        }

        // Fixed population at every step.
        std::uint64_t live =
            pool.free_count() + stash.size() + 1 /*root*/ + pt.mapped_count();
        if (live != total) {
            violations++;
            break;
        }

        if (step % 1000 == 999) {
            disjoint_sweeps++;
            auto ranges = live_ranges();
            for (std::size_t i = 0; i < ranges.size() && violations == 0; ++i) {
                for (std::size_t j = i + 1; j < ranges.size(); ++j) {
                    if (ranges[i].intersects(ranges[j])) {
                        violations++;
                        break;
                    }
                }
            }
        }
    }

    // Token-mediated access: every successful access event landing in the
    // tracker range must carry a minted serial whose page covers it.
    std::map<std::uint64_t, std::uint64_t> serial_page;
    for (const TraceEvent& ev : trace.events()) {
        if (ev.op == "token_mint" && ev.succeeded()) {
            serial_page[*ev.arg_u64("serial")] = *ev.arg_u64("base") / kPageSize;
        }
    }
    for (const TraceEvent& ev : trace.events()) {
        if (!ev.succeeded()) continue;
        bool token_op = ev.op == "token_read" || ev.op == "token_write" ||
                        ev.op == "token_fill";
        bool plain_op = ev.op == "read_phys" || ev.op == "write_phys" ||
                        ev.op == "write_block" || ev.op == "read_block" ||
                        ev.op == "fill_block";
        if (!token_op && !plain_op) continue;
        std::uint64_t addr = ev.arg_u64("addr").value_or(0);
        std::uint64_t len = ev.arg_u64("len").value_or(ev.arg_u64("width").value_or(8));
        if (!tracker.intersects(AddrRange{PhysAddr{addr}, len})) continue;
        if (!token_op) {
            violations++;  // raw access into tracker memory
            continue;
        }
        auto it = serial_page.find(ev.arg_u64("serial").value_or(0));
        if (it == serial_page.end() || it->second != addr / kPageSize) violations++;
    }

    report(2, "memory tracker invariants over 1e5 randomized steps", violations == 0,
           std::to_string(kSteps) + " steps, " + std::to_string(disjoint_sweeps) +
               " disjointness sweeps, " + std::to_string(trace.size()) + " events");
}

// ---------------------------------------------------------------------------
// 3. Initialization: 100 randomized boot configurations all establish the
//    boot invariants, and the seed is locked before any untrusted event.
void criterion_initialization() {
    std::uint64_t rng = 555;
    int bad = 0;
    for (int i = 0; i < 100; ++i) {
        std::uint64_t pages = 24 + splitmix(rng) % 96;
        std::uint32_t harts = 1 + static_cast<std::uint32_t>(splitmix(rng) % 2);
        std::uint64_t seed = splitmix(rng);
        std::vector<std::uint8_t> monitor_image(1 + splitmix(rng) % 5000);
        std::vector<std::uint8_t> hv_image(1 + splitmix(rng) % 5000);
        for (auto& b : monitor_image) b = static_cast<std::uint8_t>(splitmix(rng));
        for (auto& b : hv_image) b = static_cast<std::uint8_t>(splitmix(rng));

        Trace trace;
        auto p = Platform::create(pages * kPageSize, harts, seed, trace);
        if (!p.ok()) {
            bad++;
            continue;
        }
        System sys(std::move(p).value(), SecurityMonitor{});
        auto report_result = secure_boot(sys, monitor_image, hv_image);
        if (!report_result.ok() || !report_result.value().complete()) {
            bad++;
            continue;
        }
        if (!verify_init_invariants(sys).empty()) {
            bad++;
            continue;
        }
        std::optional<std::uint64_t> lock_seq, untrusted_seq;
        for (const TraceEvent& ev : trace.events()) {
            if (ev.op == "lock_seed" && ev.succeeded() && !lock_seq) lock_seq = ev.seq;
            if (ev.domain != DomainId::monitor() && !untrusted_seq) untrusted_seq = ev.seq;
        }
        if (!lock_seq || !untrusted_seq || *lock_seq >= *untrusted_seq) bad++;
    }
    report(3, "100 randomized boots establish all init invariants", bad == 0,
           bad == 0 ? "lock always precedes untrusted execution"
                    : std::to_string(bad) + " bad boots");
}

// ---------------------------------------------------------------------------
// 4. FSM sanitization: 1e4 random routed calls; the hypervisor-visible
//    registers equal its own saved state outside declared positions, and
//    outbound views are zero outside the whitelist — exact equality.
void criterion_fsm_sanitization() {
    WorldConfig wc;
    wc.mem_pages = 48;
    wc.harts = 1;
    wc.tracker_pages = 8;
    wc.vms = 1;
    wc.vm_pages = 1;
    auto world_result = World::create(wc);
    if (!world_result.ok()) {
        report(4, "fsm sanitization", false, "world setup failed");
        return;
    }
    World& world = *world_result.value();
    world.apply({ActionKind::Promote, world.vms()[0].raw, 0});
    DomainId cvm = world.cvms().at(0);
    System& sys = world.sys();
    if (!sys.monitor.resume_cvm(sys.platform, 0, cvm).ok()) {
        report(4, "fsm sanitization", false, "resume failed");
        return;
    }

    std::uint64_t rng = 777;
    std::uint64_t checked = 0;
    std::uint64_t violations = 0;
    const RegisterWhitelist& wl3 = *sys.monitor.whitelist().find(3);

    for (int i = 0; i < 10000; ++i) {
        bool mmio = (splitmix(rng) & 1) != 0;
        Gprs regs{};
        for (Word& w : regs) w = splitmix(rng) | 1;  // nonzero private values
        const std::vector<std::uint8_t>* args;
        if (mmio) {
            regs[0] = 0x20;
            regs[1] = 0x300000 + 8 * (splitmix(rng) % 64);
            regs[2] = 8;
            args = &sys.monitor.whitelist().mmio_store.args;
        } else {
            regs[0] = 3;  // two-arg declared hypercall
            args = &wl3.args;
        }
        sys.platform.set_hart_gprs(0, regs);
        const Gprs hv_saved = sys.monitor.find_context(DomainId::hypervisor())->gprs;
        auto r = sys.monitor.cvm_trap(sys.platform, 0,
                                      mmio ? TrapCause::MmioStoreFault
                                           : TrapCause::EcallFromCvm);
        if (!r.ok() || r.value().resumed_cvm) {
            violations++;
            break;
        }
        const Gprs& hv_now = sys.platform.hart(0).gprs;
        for (std::size_t pos = 1; pos < hv_now.size(); ++pos) {
            bool declared = false;
            for (std::uint8_t a : *args) declared |= a == pos;
            if (declared) {
                if (hv_now[pos] != regs[pos]) violations++;
            } else if (hv_now[pos] != hv_saved[pos]) {
                violations++;
            }
        }
        checked++;
        // Return into the CVM with a random answer and keep going.
        Gprs results{};
        results[2] = splitmix(rng);
        if (!sys.monitor.resume_cvm(sys.platform, 0, cvm, results).ok()) {
            violations++;
            break;
        }
    }

    // Every outbound view in the trace is zero outside its whitelist.
    for (const TraceEvent& ev : world.trace().events()) {
        if (ev.op != "fsm_view" || !ev.succeeded()) continue;
        auto view = gprs_from_args(ev.arg("view").value_or(""));
        if (!view) continue;
        std::set<std::size_t> listed;
        std::string wl = ev.arg("wl").value_or("-");
        if (wl != "-") {
            std::stringstream ss(wl);
            std::string part;
            while (std::getline(ss, part, ',')) listed.insert(std::stoul(part));
        }
        for (std::size_t pos = 0; pos < view->size(); ++pos) {
            if ((*view)[pos] != 0 && !listed.count(pos)) violations++;
        }
    }

    report(4, "1e4 routed calls sanitize every undeclared register", violations == 0,
           std::to_string(checked) + " routed round trips checked");
}

// ---------------------------------------------------------------------------
// 5. Confidentiality policy: exhaustive probes over all confidential pages
//    from every non-confidential context are denied; terminated CVM pages
//    read zero before any re-grant.
void criterion_confidentiality() {
    WorldConfig wc;
    wc.mem_pages = 48;
    wc.harts = 2;
    wc.tracker_pages = 8;
    wc.vms = 2;
    wc.vm_pages = 2;
    auto world_result = World::create(wc);
    if (!world_result.ok()) {
        report(5, "confidentiality policy", false, "world setup failed");
        return;
    }
    World& world = *world_result.value();
    world.apply({ActionKind::Promote, world.vms()[0].raw, 0});
    DomainId cvm = world.cvms().at(0);
    world.apply({ActionKind::Resume, 0, cvm.raw});
    world.apply({ActionKind::VictimStep, 0, 0});  // plant a secret
    world.apply({ActionKind::Interrupt, 0, 1});

    System& sys = world.sys();
    const AddrRange conf = sys.monitor.layout().confidential;
    std::uint64_t allowed = 0;
    std::uint64_t probes = 0;
    auto sweep = [&]() {
        for (std::uint64_t page = conf.base.page_number(); page * kPageSize < conf.end();
             ++page) {
            PhysAddr addr = PhysAddr::page(page);
            probes += 4;
            if (sys.platform.read_phys(0, addr, 8).ok()) allowed++;
            if (sys.platform.write_phys(0, addr, 8, 0xBAD).ok()) allowed++;
            if (sys.platform.dma_read(addr, 8).ok()) allowed++;
            if (sys.platform.dma_write(addr, 8, 0xBAD).ok()) allowed++;
        }
    };
    sweep();

    // Terminate, then confirm sanitization before any re-grant.
    std::vector<AddrRange> former;
    {
        const SecurityDomain* d = sys.monitor.find_domain(cvm);
        former.push_back(d->page_table->root().range());
        for (const auto& [g, t] : d->page_table->mappings()) former.push_back(t.range());
    }
    world.apply({ActionKind::Terminate, cvm.raw, 0});
    std::uint64_t dirty = 0;
    for (const AddrRange& r : former) {
        if (!sys.platform.range_is_zero(r)) dirty++;
    }
    sweep();

    // Re-grant to a second CVM and re-check the zero state held up to the
    // new owner's first write.
    world.apply({ActionKind::Promote, world.vms()[1].raw, 0});
    sweep();

    report(5, "exhaustive probes denied; terminated pages zero before re-grant",
           allowed == 0 && dirty == 0,
           std::to_string(probes) + " probes, " + std::to_string(former.size()) +
               " sanitized pages");
}

// ---------------------------------------------------------------------------
// 6. Attestation: honest reports verify; 1e3 single-field fuzz mutations
//    yield zero false accepts; keys from different seeds never cross-verify.
void criterion_attestation() {
    WorldConfig wc;
    wc.rng_seed = 7;
    auto w1 = World::create(wc);
    wc.rng_seed = 999;
    auto w2 = World::create(wc);
    if (!w1.ok() || !w2.ok()) {
        report(6, "attestation", false, "world setup failed");
        return;
    }
    World& a = *w1.value();
    World& b = *w2.value();
    a.apply({ActionKind::Promote, a.vms()[0].raw, 0});
    b.apply({ActionKind::Promote, b.vms()[0].raw, 0});

    auto ra = a.sys().monitor.attest(a.sys().platform, 0, a.cvms().at(0), 0x1234);
    auto rb = b.sys().monitor.attest(b.sys().platform, 0, b.cvms().at(0), 0x1234);
    if (!ra.ok() || !rb.ok()) {
        report(6, "attestation", false, "attest call failed");
        return;
    }
    const VerifyKey& ka = a.sys().monitor.verify_key();
    const VerifyKey& kb = b.sys().monitor.verify_key();

    bool honest = verify_report(ka, ra.value()) && verify_report(kb, rb.value());
    bool cross = verify_report(ka, rb.value()) || verify_report(kb, ra.value());

    std::uint64_t rng = 888;
    std::uint64_t false_accepts = 0;
    for (int i = 0; i < 1000; ++i) {
        AttestationReport r = ra.value();
        switch (splitmix(rng) % 5) {
        case 0: r.measurement[splitmix(rng) % 32] ^= std::uint8_t(1 << (splitmix(rng) % 8)); break;
        case 1:
            if (r.nonce.empty()) {
                r.nonce.push_back(1);
            } else {
                r.nonce[splitmix(rng) % r.nonce.size()] ^= std::uint8_t(1 << (splitmix(rng) % 8));
            }
            break;
        case 2:
            r.boot_chain[splitmix(rng) % r.boot_chain.size()]
                .digest[splitmix(rng) % 32] ^= std::uint8_t(1 << (splitmix(rng) % 8));
            break;
        case 3: r.key_id[splitmix(rng) % 32] ^= std::uint8_t(1 << (splitmix(rng) % 8)); break;
        case 4:
            r.signature[splitmix(rng) % r.signature.size()][splitmix(rng) % 32] ^=
                std::uint8_t(1 << (splitmix(rng) % 8));
            break;
        }
        if (verify_report(ka, r)) false_accepts++;
    }

    report(6, "attestation verifies honestly, rejects 1e3 fuzzed mutations",
           honest && !cross && false_accepts == 0,
           "false accepts: " + std::to_string(false_accepts));
}

// ---------------------------------------------------------------------------
// 7. Oracle self-test: every fault in the catalog trips exactly its
//    targeted invariant.
void criterion_oracle_selftest() {
    std::string detail;
    int bad = 0;
    for (const FaultSpec& fault : fault_catalog()) {
        WorldConfig wc;
        wc.mem_pages = 32;
        wc.harts = 2;
        wc.tracker_pages = 8;
        wc.vms = 2;
        wc.vm_pages = 1;
        auto world_result = World::create(wc);
        if (!world_result.ok()) {
            bad++;
            continue;
        }
        World& world = *world_result.value();
        world.apply({ActionKind::Promote, world.vms()[0].raw, 0});
        world.apply({ActionKind::Promote, world.vms()[1].raw, 0});
        world.apply({ActionKind::Resume, 0, world.cvms().at(0).raw});
        world.apply({ActionKind::VictimStep, 0, 0});
        world.apply({ActionKind::Interrupt, 0, 1});

        if (!seeded_violation(world, fault.name).ok()) {
            bad++;
            detail += fault.name + ":inject ";
            continue;
        }
        auto verdicts = invariant_oracle(world.sys(), world.trace());
        for (const Verdict& v : verdicts) {
            bool should_fail = v.invariant == fault.target_invariant;
            if (v.holds == should_fail) {
                bad++;
                detail += fault.name + "->" + v.invariant + " ";
            }
        }
    }
    report(7, "fault catalog trips exactly the targeted invariants", bad == 0,
           std::to_string(fault_catalog().size()) + " faults" +
               (detail.empty() ? "" : ": " + detail));
}

// ---------------------------------------------------------------------------
// 8. Determinism: identical inputs give byte-identical traces and boot
//    reports across independent runs.
void criterion_determinism() {
    auto run_once = []() {
        auto parsed = parse_scenario(
            "config mem_pages=48 harts=2 tracker_pages=8 vms=1 vm_pages=2 rng_seed=7 seed=5\n"
            "start_hart hart=1\npromote vm=2\nresume hart=0 cvm=3\nvictim_step hart=0\n"
            "victim_step hart=0\nread_probe page=40\ninterrupt hart=0 irq=1\n"
            "terminate cvm=3\nprobe_sweep\n");
        auto world = World::create(parsed.value().config);
        RunResult result = run_scenario(*world.value(), parsed.value().actions,
                                        parsed.value().seed);
        return std::tuple{world.value()->boot_report().serialize(),
                          world.value()->trace().to_text(), result.all_hold};
    };
    auto [report1, trace1, hold1] = run_once();
    auto [report2, trace2, hold2] = run_once();

    ExploreConfig cfg;
    cfg.harts = 1;
    cfg.cvms = 1;
    cfg.pages = 4;
    cfg.depth = 10;
    auto e1 = bounded_explore(cfg);
    auto e2 = bounded_explore(cfg);
    bool explore_same = e1.ok() && e2.ok() &&
                        e1.value().states_visited == e2.value().states_visited &&
                        e1.value().edges_explored == e2.value().edges_explored;

    report(8, "byte-identical traces, reports and exploration across runs",
           hold1 && hold2 && report1 == report2 && trace1 == trace2 && explore_same,
           std::to_string(trace1.size()) + " trace bytes compared");
}

}  // namespace

int main() {
    auto t0 = std::chrono::steady_clock::now();
    criterion_token_uniqueness();
    criterion_tracker_invariants();
    criterion_initialization();
    criterion_fsm_sanitization();
    criterion_confidentiality();
    criterion_attestation();
    criterion_oracle_selftest();
    criterion_determinism();
    auto seconds = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
    std::printf("%s — 8 criteria, %d failing, %llds\n", g_failures == 0 ? "ACCEPTED" : "REJECTED",
                g_failures, static_cast<long long>(seconds));
    return g_failures == 0 ? 0 : 1;
}
