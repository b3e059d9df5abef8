// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cvmsim/core.hpp"
#include "cvmsim/mutation.hpp"
#include "cvmsim/platform.hpp"

namespace cvmsim {

/// Nodes of the monitor's runtime control-flow machine. The machine has a
/// non-confidential half (requests from the hypervisor/VM side) and a
/// confidential half (requests from a CVM); control leaves to the hypervisor
/// only through NcExit and to a CVM only through CExit.
enum class FsmNode : std::uint8_t {
    NcEnter,
    NcRoute,
    NcTransform,
    NcExit,
    CEnter,
    CRoute,
    CTransform,
    CExit,
};

inline const char* to_string(FsmNode n) {
    switch (n) {
    case FsmNode::NcEnter: return "nc_enter";
    case FsmNode::NcRoute: return "nc_route";
    case FsmNode::NcTransform: return "nc_transform";
    case FsmNode::NcExit: return "nc_exit";
    case FsmNode::CEnter: return "c_enter";
    case FsmNode::CRoute: return "c_route";
    case FsmNode::CTransform: return "c_transform";
    case FsmNode::CExit: return "c_exit";
    }
    return "?";
}

inline std::optional<FsmNode> fsm_node_from_string(std::string_view s) {
    for (FsmNode n : {FsmNode::NcEnter, FsmNode::NcRoute, FsmNode::NcTransform, FsmNode::NcExit,
                      FsmNode::CEnter, FsmNode::CRoute, FsmNode::CTransform, FsmNode::CExit}) {
        if (s == to_string(n)) return n;
    }
    return std::nullopt;
}

inline bool is_confidential_node(FsmNode n) {
    return n == FsmNode::CEnter || n == FsmNode::CRoute || n == FsmNode::CTransform ||
           n == FsmNode::CExit;
}

/// Legal node successions, including the two cross-domain edges
/// (NcTransform -> CExit is the NC->C crossing, CTransform -> NcExit the
/// C->NC crossing). Used by the trace checker to reject any path the machine
/// does not admit.
inline bool fsm_edge_legal(FsmNode from, FsmNode to) {
    switch (from) {
    case FsmNode::NcEnter: return to == FsmNode::NcRoute;
    case FsmNode::NcRoute:
        return to == FsmNode::NcTransform || to == FsmNode::NcExit;
    case FsmNode::NcTransform: return to == FsmNode::NcExit || to == FsmNode::CExit;
    case FsmNode::NcExit: return false;  // terminal until next trap
    case FsmNode::CEnter: return to == FsmNode::CRoute;
    case FsmNode::CRoute: return to == FsmNode::CTransform || to == FsmNode::CExit;
    case FsmNode::CTransform: return to == FsmNode::NcExit || to == FsmNode::CExit;
    case FsmNode::CExit: return false;  // terminal until next trap
    }
    return false;
}

enum class TransitionDirection : std::uint8_t { None, NcToC, CToNc };

inline const char* to_string(TransitionDirection d) {
    switch (d) {
    case TransitionDirection::None: return "none";
    case TransitionDirection::NcToC: return "nc_to_c";
    case TransitionDirection::CToNc: return "c_to_nc";
    }
    return "?";
}

/// Protection steps a cross-domain transition applied. A NC->C crossing must
/// include {IsolationGrant, StateSave, IrqRetarget}; a C->NC crossing must
/// include {IsolationDeny, StateRestore, IrqRestore}.
enum TransitionAction : std::uint32_t {
    kActIsolationGrant = 1u << 0,
    kActIsolationDeny = 1u << 1,
    kActStateSave = 1u << 2,
    kActStateRestore = 1u << 3,
    kActIrqRetarget = 1u << 4,
    kActIrqRestore = 1u << 5,
};

inline std::string transition_actions_string(std::uint32_t mask) {
    std::string out;
    auto add = [&](std::uint32_t bit, const char* name) {
        if (mask & bit) {
            if (!out.empty()) out += '+';
            out += name;
        }
    };
    add(kActIsolationGrant, "grant");
    add(kActIsolationDeny, "deny");
    add(kActStateSave, "save");
    add(kActStateRestore, "restore");
    add(kActIrqRetarget, "irq_retarget");
    add(kActIrqRestore, "irq_restore");
    return out.empty() ? "none" : out;
}

inline std::uint32_t transition_actions_from_string(std::string_view s) {
    std::uint32_t mask = 0;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t next = s.find('+', pos);
        std::string_view part = s.substr(pos, next == std::string_view::npos ? s.size() - pos
                                                                             : next - pos);
        if (part == "grant") mask |= kActIsolationGrant;
        else if (part == "deny") mask |= kActIsolationDeny;
        else if (part == "save") mask |= kActStateSave;
        else if (part == "restore") mask |= kActStateRestore;
        else if (part == "irq_retarget") mask |= kActIrqRetarget;
        else if (part == "irq_restore") mask |= kActIrqRestore;
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return mask;
}

struct TransitionEvent {
    FsmNode from{};
    FsmNode to{};
    TransitionDirection direction = TransitionDirection::None;
    std::uint32_t actions = 0;
};

/// Saved processor state of a suspended security domain, together with the
/// interrupt-delivery configuration captured on the way in. The register
/// snapshot is additionally serialized into the domain's slot of the control
/// data region, so the confidential-memory residence of saved state is a
/// property of the memory image, not just of this struct.
struct DomainContext {
    DomainId domain{};
    Gprs gprs{};
    PhysAddr pc{};
    PrivilegeLevel privilege = PrivilegeLevel::Lowest;
    bool interrupts_enabled = false;
    std::map<std::uint32_t, IrqRoute> saved_routes;
    /// Slot inside the control data region holding the serialized snapshot.
    AddrRange slot{};
    bool valid = false;
};

/// Register positions a call exposes across the domain boundary.
struct RegisterWhitelist {
    std::vector<std::uint8_t> args;
    std::vector<std::uint8_t> results;

    bool arg_listed(std::size_t i) const {
        for (std::uint8_t a : args) {
            if (a == i) return true;
        }
        return false;
    }
    bool result_listed(std::size_t i) const {
        for (std::uint8_t r : results) {
            if (r == i) return true;
        }
        return false;
    }
};

inline constexpr Word kSanitizedRegister = 0;

/// Builds the register view that crosses a domain boundary: exactly the
/// whitelisted positions survive, everything else reads as the sanitization
/// baseline. `outbound` filters caller arguments, inbound filters responder
/// results.
inline Gprs apply_state_transformation(const Gprs& regs, const RegisterWhitelist& whitelist,
                                       bool outbound) {
    if (mutation_flags().skip_register_sanitize) return regs;
    Gprs view{};
    view.fill(kSanitizedRegister);
    if (outbound) {
        for (std::uint8_t i : whitelist.args) {
            if (i < view.size()) view[i] = regs[i];
        }
    } else {
        for (std::uint8_t i : whitelist.results) {
            if (i < view.size()) view[i] = regs[i];
        }
    }
    return view;
}

}  // namespace cvmsim
