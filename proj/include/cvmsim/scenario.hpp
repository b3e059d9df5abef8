// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cvmsim/adversary.hpp"

namespace cvmsim {

/// A parsed scenario: world configuration plus the ordered action list.
/// Text format (one record per line, `#` comments):
///
///   config mem_pages=64 harts=2 tracker_pages=8 vms=1 vm_pages=2 seed=7
///   promote vm=2
///   resume hart=0 cvm=3
///   victim_step hart=0
///   ...
struct Scenario {
    WorldConfig config;
    std::uint64_t seed = 0;
    /// True when the file pinned a scheduler seed; unseeded scenarios get
    /// one derived from entropy (and printed) by the CLI.
    bool seed_set = false;
    /// Deliberate defect the scenario was recorded under (counterexamples
    /// carry it so replays reproduce the same verdict).
    std::string mutation;
    std::vector<Action> actions;
};

namespace detail {

struct ActionShape {
    ActionKind kind;
    const char* key_a;  // nullptr = unused
    const char* key_b;
};

inline const std::map<std::string, ActionShape>& action_shapes() {
    static const std::map<std::string, ActionShape> shapes = {
        {"promote", {ActionKind::Promote, "vm", nullptr}},
        {"resume", {ActionKind::Resume, "hart", "cvm"}},
        {"victim_step", {ActionKind::VictimStep, "hart", nullptr}},
        {"interrupt", {ActionKind::Interrupt, "hart", "irq"}},
        {"terminate", {ActionKind::Terminate, "cvm", nullptr}},
        {"read_probe", {ActionKind::ReadProbe, "page", nullptr}},
        {"write_probe", {ActionKind::WriteProbe, "page", nullptr}},
        {"dma_probe", {ActionKind::DmaProbe, "page", "write"}},
        {"shared_input", {ActionKind::SharedInput, "cvm", "val"}},
        {"arb_hypercall", {ActionKind::ArbHypercall, "sel", nullptr}},
        {"impersonate", {ActionKind::Impersonate, nullptr, nullptr}},
        {"start_hart", {ActionKind::StartHart, "hart", nullptr}},
        {"probe_sweep", {ActionKind::ProbeSweep, nullptr, nullptr}},
    };
    return shapes;
}

inline bool parse_kv(const std::string& token, std::string& key, std::uint64_t& value) {
    std::size_t eq = token.find('=');
    if (eq == std::string::npos) return false;
    key = token.substr(0, eq);
    const std::string val = token.substr(eq + 1);
    if (val.empty()) return false;
    char* end = nullptr;
    value = std::strtoull(val.c_str(), &end, 0);
    return end != val.c_str() && *end == '\0';
}

}  // namespace detail

inline std::string action_to_line(const Action& action) {
    for (const auto& [name, shape] : detail::action_shapes()) {
        if (shape.kind != action.kind) continue;
        std::string out = name;
        if (shape.key_a) out += " " + std::string(shape.key_a) + "=" + std::to_string(action.a);
        if (shape.key_b) out += " " + std::string(shape.key_b) + "=" + std::to_string(action.b);
        return out;
    }
    return "?";
}

inline Outcome<Scenario> parse_scenario(const std::string& text) {
    Scenario sc;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        // Strip comments and whitespace.
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word)) continue;

        if (word == "mutation") {
            if (!(ls >> sc.mutation) || sc.mutation.empty()) return Err::ScriptError;
            continue;
        }

        std::map<std::string, std::uint64_t> kv;
        std::string token;
        while (ls >> token) {
            std::string key;
            std::uint64_t value = 0;
            if (!detail::parse_kv(token, key, value)) return Err::ScriptError;
            kv[key] = value;
        }

        if (word == "config") {
            if (kv.count("mem_pages")) sc.config.mem_pages = kv["mem_pages"];
            if (kv.count("harts")) sc.config.harts = static_cast<std::uint32_t>(kv["harts"]);
            if (kv.count("tracker_pages")) sc.config.tracker_pages = kv["tracker_pages"];
            if (kv.count("vms")) sc.config.vms = static_cast<std::uint32_t>(kv["vms"]);
            if (kv.count("vm_pages")) sc.config.vm_pages = kv["vm_pages"];
            if (kv.count("rng_seed")) sc.config.rng_seed = kv["rng_seed"];
            if (kv.count("seed")) {
                sc.seed = kv["seed"];
                sc.seed_set = true;
            }
            continue;
        }

        auto it = detail::action_shapes().find(word);
        if (it == detail::action_shapes().end()) return Err::ScriptError;
        const detail::ActionShape& shape = it->second;
        Action action;
        action.kind = shape.kind;
        if (shape.key_a) {
            if (!kv.count(shape.key_a)) return Err::ScriptError;
            action.a = kv[shape.key_a];
        }
        if (shape.key_b) {
            if (!kv.count(shape.key_b)) return Err::ScriptError;
            action.b = kv[shape.key_b];
        }
        sc.actions.push_back(action);
    }
    return sc;
}

inline std::string scenario_to_text(const Scenario& sc, const std::string& header = "") {
    std::string out;
    if (!header.empty()) out += "# " + header + "\n";
    out += "config mem_pages=" + std::to_string(sc.config.mem_pages) +
           " harts=" + std::to_string(sc.config.harts) +
           " tracker_pages=" + std::to_string(sc.config.tracker_pages) +
           " vms=" + std::to_string(sc.config.vms) +
           " vm_pages=" + std::to_string(sc.config.vm_pages) +
           " rng_seed=" + std::to_string(sc.config.rng_seed) +
           " seed=" + std::to_string(sc.seed) + "\n";
    if (!sc.mutation.empty()) out += "mutation " + sc.mutation + "\n";
    for (const Action& a : sc.actions) out += action_to_line(a) + "\n";
    return out;
}

}  // namespace cvmsim
