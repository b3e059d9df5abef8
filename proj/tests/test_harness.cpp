// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch.hpp>

#include "cvmsim/faults.hpp"
#include "cvmsim/scenario.hpp"

using namespace cvmsim;

namespace {

std::unique_ptr<World> small_world(std::uint32_t harts = 1, std::uint32_t vms = 1) {
    WorldConfig cfg;
    cfg.mem_pages = 32;
    cfg.harts = harts;
    cfg.tracker_pages = 8;
    cfg.vms = vms;
    cfg.vm_pages = 1;
    auto w = World::create(cfg);
    REQUIRE(w.ok());
    return std::move(w).value();
}

}  // namespace

TEST_CASE("probe sweeps are fully denied and leave every invariant intact") {
    auto world = small_world();
    world->apply({ActionKind::Promote, world->vms()[0].raw, 0});
    DomainId cvm = world->cvms().at(0);
    world->apply({ActionKind::Resume, 0, cvm.raw});
    world->apply({ActionKind::VictimStep, 0, 0});  // write a secret

    std::vector<Action> script = {{ActionKind::ProbeSweep, 0, 0}};
    RunResult result = run_scenario(*world, script, 0);
    CHECK(result.all_hold);
    REQUIRE_FALSE(result.notes.empty());
    CHECK(result.notes.back() == "probe_sweep: all denied");

    // Isolation soundness at the event level: no successful access into
    // confidential memory was ever attributed to a non-confidential domain.
    for (const TraceEvent& ev : world->trace().events()) {
        if (!ev.succeeded() || ev.arg("conf") != std::optional<std::string>("1")) continue;
        INFO("seq " << ev.seq << " " << ev.op);
        CHECK(ev.domain != DomainId::hypervisor());
        CHECK(ev.domain != DomainId::dma());
    }
}

TEST_CASE("terminate-then-probe: pages are zero or unreachable") {
    auto world = small_world();
    std::vector<Action> script = {
        {ActionKind::Promote, world->vms()[0].raw, 0},
    };
    RunResult r1 = run_scenario(*world, script, 0);
    REQUIRE(r1.all_hold);
    DomainId cvm = world->cvms().at(0);
    std::vector<AddrRange> pages;
    {
        const SecurityDomain* d = world->sys().monitor.find_domain(cvm);
        pages.push_back(d->page_table->root().range());
        for (const auto& [g, t] : d->page_table->mappings()) pages.push_back(t.range());
    }
    std::vector<Action> script2 = {
        {ActionKind::Resume, 0, cvm.raw},
        {ActionKind::VictimStep, 0, 0},
        {ActionKind::Interrupt, 0, 1},
        {ActionKind::Terminate, cvm.raw, 0},
        {ActionKind::ProbeSweep, 0, 0},
    };
    RunResult r2 = run_scenario(*world, script2, 0);
    CHECK(r2.all_hold);
    for (const AddrRange& p : pages) {
        CHECK(world->sys().platform.range_is_zero(p));
        CHECK_FALSE(world->sys().platform.dma_read(p.base, 8).ok());
    }
}

TEST_CASE("an empty script holds trivially") {
    auto world = small_world();
    RunResult result = run_scenario(*world, {}, 0);
    CHECK(result.all_hold);
    CHECK(result.verdicts.size() == invariant_catalog().size());
}

TEST_CASE("impersonation attempts bounce off") {
    auto world = small_world();
    std::vector<Action> script = {{ActionKind::Impersonate, 0, 0}};
    RunResult result = run_scenario(*world, script, 0);
    CHECK(result.all_hold);
    CHECK(result.notes.back() == "impersonate: denied");
}

TEST_CASE("malicious shared input flows only through the shared page") {
    auto world = small_world();
    world->apply({ActionKind::Promote, world->vms()[0].raw, 0});
    DomainId cvm = world->cvms().at(0);
    std::vector<Action> script = {
        {ActionKind::Resume, 0, cvm.raw},
        {ActionKind::VictimStep, 0, 0},  // secret
        {ActionKind::VictimStep, 0, 0},  // share
        {ActionKind::Interrupt, 0, 1},
        {ActionKind::SharedInput, cvm.raw, 0xBAD},
        {ActionKind::Resume, 0, cvm.raw},
        {ActionKind::VictimStep, 0, 0},  // read/extend shared buffer
    };
    RunResult result = run_scenario(*world, script, 0);
    CHECK(result.all_hold);
    // The injected word is visible in the shared page...
    auto shared = world->sys().monitor.shared_pages(cvm);
    REQUIRE_FALSE(shared.empty());
    // ...but the secret page still reads zero from the outside.
    const SecurityDomain* d = world->sys().monitor.find_domain(cvm);
    CHECK_FALSE(world->sys().platform.dma_read(d->page_table->translate(0).value(), 8).ok());
}

TEST_CASE("scheduler seed interleaves victim steps deterministically") {
    auto run_with_seed = [](std::uint64_t seed) {
        auto world = small_world();
        world->apply({ActionKind::Promote, world->vms()[0].raw, 0});
        DomainId cvm = world->cvms().at(0);
        std::vector<Action> script = {
            {ActionKind::Resume, 0, cvm.raw},   {ActionKind::ReadProbe, 1, 0},
            {ActionKind::ArbHypercall, 0x77, 0}, {ActionKind::ReadProbe, 2, 0},
            {ActionKind::Interrupt, 0, 1},
        };
        RunResult result = run_scenario(*world, script, seed);
        REQUIRE(result.all_hold);
        return world->trace().to_text();
    };
    CHECK(run_with_seed(5) == run_with_seed(5));
    CHECK(run_with_seed(5) != run_with_seed(6));  // different interleaving
}

TEST_CASE("scenario runner pinpoints the first violating action") {
    auto world = small_world();
    world->apply({ActionKind::Promote, world->vms()[0].raw, 0});
    REQUIRE(seeded_violation(*world, "dirty_free_page").ok());
    std::vector<Action> script = {{ActionKind::ReadProbe, 1, 0}};
    RunResult result = run_scenario(*world, script, 0);
    CHECK_FALSE(result.all_hold);
    REQUIRE(result.failing_action.has_value());
    CHECK(*result.failing_action == 0);
}

TEST_CASE("start/stop/interrupt harassment keeps the guarantees") {
    auto world = small_world(2, 2);
    world->apply({ActionKind::StartHart, 1, 0});
    world->apply({ActionKind::Promote, world->vms()[0].raw, 0});
    world->apply({ActionKind::Promote, world->vms()[1].raw, 0});
    auto cvms = world->cvms();
    std::vector<Action> script = {
        {ActionKind::Resume, 0, cvms[0].raw},
        {ActionKind::Resume, 1, cvms[1].raw},
        {ActionKind::VictimStep, 0, 0},
        {ActionKind::VictimStep, 1, 0},
        {ActionKind::Interrupt, 0, 1},
        {ActionKind::Resume, 0, cvms[0].raw},
        {ActionKind::VictimStep, 0, 0},
        {ActionKind::Interrupt, 1, 1},
        {ActionKind::Terminate, cvms[1].raw, 0},
        {ActionKind::Interrupt, 0, 1},
        {ActionKind::Terminate, cvms[0].raw, 0},
        {ActionKind::ProbeSweep, 0, 0},
    };
    RunResult result = run_scenario(*world, script, 3);
    for (const Verdict& v : result.verdicts) {
        INFO(v.invariant << ": " << v.counterexample.value_or(""));
        CHECK(v.holds);
    }
}
