// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <json.hpp>

#include "cvmsim/monitor.hpp"

namespace cvmsim {

/// Whitelist table config format (JSON):
/// {
///   "hypercalls": [ {"id": 1, "args": [1], "results": [0]}, ... ],
///   "mmio_load":  {"args": [1,2], "results": [0]},
///   "mmio_store": {"args": [1,2,3], "results": []}
/// }
inline Outcome<WhitelistTable> whitelist_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) return Err::ScriptError;

    auto read_list = [](const nlohmann::json& node) {
        std::vector<std::uint8_t> out;
        for (const auto& v : node) {
            if (v.is_number_unsigned()) out.push_back(v.get<std::uint8_t>());
        }
        return out;
    };
    auto read_whitelist = [&](const nlohmann::json& node, RegisterWhitelist& wl) -> bool {
        if (!node.is_object()) return false;
        if (node.contains("args") && node["args"].is_array()) wl.args = read_list(node["args"]);
        if (node.contains("results") && node["results"].is_array()) {
            wl.results = read_list(node["results"]);
        }
        return true;
    };

    WhitelistTable table;
    if (j.contains("hypercalls")) {
        if (!j["hypercalls"].is_array()) return Err::ScriptError;
        for (const auto& entry : j["hypercalls"]) {
            if (!entry.is_object() || !entry.contains("id")) return Err::ScriptError;
            RegisterWhitelist wl;
            if (!read_whitelist(entry, wl)) return Err::ScriptError;
            table.hypercalls[entry["id"].get<Word>()] = wl;
        }
    }
    if (j.contains("mmio_load") && !read_whitelist(j["mmio_load"], table.mmio_load)) {
        return Err::ScriptError;
    }
    if (j.contains("mmio_store") && !read_whitelist(j["mmio_store"], table.mmio_store)) {
        return Err::ScriptError;
    }
    return table;
}

inline std::string whitelist_to_json(const WhitelistTable& table) {
    nlohmann::json j;
    j["hypercalls"] = nlohmann::json::array();
    for (const auto& [id, wl] : table.hypercalls) {
        nlohmann::json entry;
        entry["id"] = id;
        entry["args"] = wl.args;
        entry["results"] = wl.results;
        j["hypercalls"].push_back(entry);
    }
    j["mmio_load"] = {{"args", table.mmio_load.args}, {"results", table.mmio_load.results}};
    j["mmio_store"] = {{"args", table.mmio_store.args}, {"results", table.mmio_store.results}};
    return j.dump(2);
}

}  // namespace cvmsim
