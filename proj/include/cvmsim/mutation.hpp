// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cvmsim {

/// Deliberate defects that can be switched on to prove the checkers can see
/// them. Each flag removes exactly one protection step; the explorer and the
/// oracle are expected to find a counterexample when one is active.
///
/// All flags default to off. They are process-global and must only be
/// changed while no platform is being stepped.
struct MutationFlags {
    /// Termination returns one page token to the pool without unmapping it
    /// from the dying page table, leaving a second live token with the same
    /// serial behind.
    bool duplicate_token_serial = false;

    /// Deallocation skips the zero-fill of the page.
    bool skip_deallocate_zero = false;

    /// Domain exits skip the microarchitectural state clear.
    bool skip_microarch_clear = false;

    /// Outbound state transformation passes all registers instead of the
    /// declared whitelist.
    bool skip_register_sanitize = false;
};

inline MutationFlags& mutation_flags() {
    static MutationFlags flags;
    return flags;
}

inline std::vector<std::string> mutation_names() {
    return {"duplicate_token_serial", "skip_deallocate_zero", "skip_microarch_clear",
            "skip_register_sanitize"};
}

/// Enables one mutation by name. Returns false for unknown names.
inline bool set_mutation(std::string_view name) {
    MutationFlags& f = mutation_flags();
    if (name == "duplicate_token_serial") {
        f.duplicate_token_serial = true;
    } else if (name == "skip_deallocate_zero") {
        f.skip_deallocate_zero = true;
    } else if (name == "skip_microarch_clear") {
        f.skip_microarch_clear = true;
    } else if (name == "skip_register_sanitize") {
        f.skip_register_sanitize = true;
    } else {
        return false;
    }
    return true;
}

inline void clear_mutations() { mutation_flags() = MutationFlags{}; }

}  // namespace cvmsim
