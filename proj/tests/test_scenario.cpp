// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch.hpp>

#include "cvmsim/scenario.hpp"
#include "cvmsim/whitelist_io.hpp"

using namespace cvmsim;

TEST_CASE("scenario text round-trips") {
    Scenario sc;
    sc.config.mem_pages = 48;
    sc.config.harts = 2;
    sc.config.tracker_pages = 6;
    sc.config.vms = 2;
    sc.config.vm_pages = 1;
    sc.config.rng_seed = 11;
    sc.seed = 3;
    sc.mutation = "skip_deallocate_zero";
    sc.actions = {
        {ActionKind::Promote, 2, 0},       {ActionKind::Resume, 0, 4},
        {ActionKind::VictimStep, 0, 0},    {ActionKind::Interrupt, 0, 1},
        {ActionKind::Terminate, 4, 0},     {ActionKind::ReadProbe, 40, 0},
        {ActionKind::WriteProbe, 41, 0},   {ActionKind::DmaProbe, 42, 1},
        {ActionKind::SharedInput, 4, 255}, {ActionKind::ArbHypercall, 153, 0},
        {ActionKind::Impersonate, 0, 0},   {ActionKind::StartHart, 1, 0},
        {ActionKind::ProbeSweep, 0, 0},
    };
    std::string text = scenario_to_text(sc, "round trip");
    auto parsed = parse_scenario(text);
    REQUIRE(parsed.ok());
    const Scenario& back = parsed.value();
    CHECK(back.config.mem_pages == sc.config.mem_pages);
    CHECK(back.config.harts == sc.config.harts);
    CHECK(back.config.tracker_pages == sc.config.tracker_pages);
    CHECK(back.config.vms == sc.config.vms);
    CHECK(back.config.vm_pages == sc.config.vm_pages);
    CHECK(back.config.rng_seed == sc.config.rng_seed);
    CHECK(back.seed == sc.seed);
    CHECK(back.mutation == sc.mutation);
    REQUIRE(back.actions.size() == sc.actions.size());
    for (std::size_t i = 0; i < sc.actions.size(); ++i) {
        CHECK(back.actions[i] == sc.actions[i]);
    }
}

TEST_CASE("comments and blank lines are ignored") {
    auto parsed = parse_scenario("# a comment\n\n  \npromote vm=2 # trailing\n");
    REQUIRE(parsed.ok());
    REQUIRE(parsed.value().actions.size() == 1);
    CHECK(parsed.value().actions[0].kind == ActionKind::Promote);
    CHECK(parsed.value().actions[0].a == 2);
}

TEST_CASE("malformed scenarios are rejected") {
    CHECK_FALSE(parse_scenario("fly_to_moon now=1\n").ok());
    CHECK_FALSE(parse_scenario("promote\n").ok());               // missing key
    CHECK_FALSE(parse_scenario("promote vm\n").ok());            // no value
    CHECK_FALSE(parse_scenario("resume hart=0\n").ok());         // missing second key
    CHECK_FALSE(parse_scenario("promote vm=banana\n").ok());     // not a number
    CHECK_FALSE(parse_scenario("mutation\n").ok());              // empty mutation
    CHECK(parse_scenario("").ok());                              // empty script is fine
}

TEST_CASE("whitelist config round-trips through json") {
    WhitelistTable table = WhitelistTable::defaults();
    table.hypercalls[9] = RegisterWhitelist{{1, 3}, {0, 2}};
    std::string text = whitelist_to_json(table);
    auto parsed = whitelist_from_json(text);
    REQUIRE(parsed.ok());
    const WhitelistTable& back = parsed.value();
    REQUIRE(back.hypercalls.count(9) == 1);
    CHECK(back.hypercalls.at(9).args == std::vector<std::uint8_t>{1, 3});
    CHECK(back.hypercalls.at(9).results == std::vector<std::uint8_t>{0, 2});
    CHECK(back.mmio_load.args == table.mmio_load.args);
    CHECK(back.mmio_store.args == table.mmio_store.args);
    CHECK(back.hypercalls.size() == table.hypercalls.size());
}

TEST_CASE("malformed whitelist json is rejected") {
    CHECK_FALSE(whitelist_from_json("not json").ok());
    CHECK_FALSE(whitelist_from_json("[1,2,3]").ok());
    CHECK_FALSE(whitelist_from_json("{\"hypercalls\": [{\"args\": []}]}").ok());  // no id
}

TEST_CASE("trace lines use the stable field order") {
    Trace trace;
    trace.append(1, DomainId::hypervisor(), "read_phys",
                 {{"addr", "0x1000"}, {"width", "8"}}, "AccessDenied");
    CHECK(trace.to_text() == "0|1|hv|read_phys|addr=0x1000 width=8|AccessDenied\n");
    trace.append(0, DomainId::monitor(), "boot", {}, "ok");
    CHECK(trace.events().back().line() == "1|0|sm|boot||ok");
}
