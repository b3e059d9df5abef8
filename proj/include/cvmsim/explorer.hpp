// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "cvmsim/adversary.hpp"
#include "cvmsim/faults.hpp"

namespace cvmsim {

/// Bounds for exhaustive interleaving exploration. Kept desk-scale on
/// purpose: up to 2 harts, 2 CVMs, 8 tracker pages.
struct ExploreConfig {
    std::uint32_t harts = 1;
    std::uint32_t cvms = 1;
    std::uint64_t pages = 4;
    std::uint32_t depth = 12;
    std::uint64_t state_budget = 2'000'000;
    std::uint32_t workers = 1;
    std::uint64_t rng_seed = 7;
    /// Invariants to check; empty means the whole catalog.
    std::vector<std::string> invariants;
};

struct ExploreResult {
    bool pass = false;
    bool budget_exceeded = false;
    std::uint64_t states_visited = 0;
    std::uint64_t edges_explored = 0;
    std::uint32_t depth_reached = 0;
    std::string failed_invariant;
    std::string counterexample_detail;
    std::vector<Action> counterexample;
};

namespace detail {

inline WorldConfig world_config_for(const ExploreConfig& cfg) {
    WorldConfig wc;
    wc.harts = cfg.harts;
    wc.vms = cfg.cvms;
    wc.vm_pages = 1;
    wc.tracker_pages = cfg.pages;
    wc.rng_seed = cfg.rng_seed;
    // crtm + hv image + heap (images, shared pages, slack) + monitor(2) +
    // control(2) + tracker.
    wc.mem_pages = 1 + 1 + (cfg.cvms * 2 + 2) + 2 + 2 + cfg.pages;
    return wc;
}

/// Deterministic enumeration of every action enabled in this state.
inline std::vector<Action> enabled_actions(const World& world) {
    std::vector<Action> out;
    const SecurityMonitor& monitor = world.sys().monitor;
    auto hv = world.hv_hart();

    if (hv) {
        for (DomainId vm : world.vms()) {
            const SecurityDomain* d = monitor.find_domain(vm);
            if (d && d->kind == DomainKind::Vm && d->lifecycle == Lifecycle::Created) {
                out.push_back({ActionKind::Promote, vm.raw, 0});
            }
        }
    }

    std::vector<DomainId> cvms = world.cvms();
    for (std::uint32_t h = 0; h < world.sys().platform.hart_count(); ++h) {
        const HartContext& ctx = world.sys().platform.hart(h);
        bool hart_in_hv = !ctx.parked && ctx.active_domain == DomainId::hypervisor() &&
                          ctx.privilege == PrivilegeLevel::Middle;
        if (hart_in_hv) {
            for (DomainId cvm : cvms) {
                const SecurityDomain* d = monitor.find_domain(cvm);
                if (d && d->lifecycle == Lifecycle::Runnable && !d->running_hart) {
                    out.push_back({ActionKind::Resume, h, cvm.raw});
                }
            }
        }
        if (world.cvm_on_hart(h)) {
            out.push_back({ActionKind::VictimStep, h, 0});
            out.push_back({ActionKind::Interrupt, h, 1});
        }
    }

    if (hv) {
        for (DomainId cvm : cvms) {
            const SecurityDomain* d = monitor.find_domain(cvm);
            if (!d) continue;
            if (d->lifecycle != Lifecycle::Terminated && !d->running_hart) {
                out.push_back({ActionKind::Terminate, cvm.raw, 0});
            }
            if (!d->shared.empty()) {
                out.push_back({ActionKind::SharedInput, cvm.raw, 0xFF});
            }
        }
        for (std::uint32_t h = 0; h < world.sys().platform.hart_count(); ++h) {
            if (world.sys().platform.hart(h).parked) {
                out.push_back({ActionKind::StartHart, h, 0});
            }
        }
        // Probes and malformed calls: stateless attacks, checked then pruned
        // as self-loops.
        for (DomainId cvm : cvms) {
            const SecurityDomain* d = monitor.find_domain(cvm);
            if (d && d->page_table && !d->page_table->mappings().empty()) {
                std::uint64_t page =
                    d->page_table->mappings().begin()->second.page_number();
                out.push_back({ActionKind::ReadProbe, page, 0});
                out.push_back({ActionKind::DmaProbe, page, 1});
                break;
            }
        }
        out.push_back({ActionKind::ArbHypercall, 0x99, 0});
        out.push_back({ActionKind::Impersonate, 0, 0});
    }
    return out;
}

struct EdgeOutcome {
    std::size_t node_index = 0;
    std::size_t action_index = 0;
    Action action{};
    std::uint64_t hash = 0;
    bool self_loop = false;
    bool violated = false;
    std::string failed_invariant;
    std::string detail;
};

}  // namespace detail

/// Exhaustive bounded exploration: breadth-first enumeration of every
/// enabled-action interleaving up to the depth bound, with state hashing
/// for deduplication. Each edge replays its path from the initial snapshot
/// (states are cheap to reconstruct, so the frontier stores paths, not
/// snapshots). The first violating edge in layer order yields a minimal
/// counterexample script.
inline Outcome<ExploreResult> bounded_explore(const ExploreConfig& cfg) {
    if (cfg.harts == 0 || cfg.harts > 2 || cfg.cvms == 0 || cfg.cvms > 2 || cfg.pages > 8) {
        return Err::ConfigError;
    }
    std::vector<std::string> targets =
        cfg.invariants.empty() ? invariant_catalog() : cfg.invariants;
    auto is_target = [&](const std::string& id) {
        return std::find(targets.begin(), targets.end(), id) != targets.end();
    };

    auto root_result = World::create(detail::world_config_for(cfg));
    if (!root_result.ok()) return root_result.error();
    std::unique_ptr<World> root = std::move(root_result).value();

    ExploreResult result;

    // Check the initial state itself.
    {
        InvariantOracle oracle;
        oracle.attach_running(root->sys());
        for (const Verdict& v : oracle.evaluate(root->sys())) {
            if (!v.holds && is_target(v.invariant)) {
                result.pass = false;
                result.states_visited = 1;
                result.failed_invariant = v.invariant;
                result.counterexample_detail = v.counterexample.value_or("");
                return result;
            }
        }
    }

    struct PathNode {
        std::vector<Action> path;
        std::uint64_t hash = 0;
    };

    std::unordered_set<std::uint64_t> visited;
    std::uint64_t root_hash = root->state_hash();
    visited.insert(root_hash);
    result.states_visited = 1;

    std::vector<PathNode> frontier{PathNode{{}, root_hash}};

    // Expands one node: replays its path on a fresh clone, then tries every
    // enabled action.
    auto expand_node = [&](const PathNode& node, std::size_t node_index,
                           std::vector<detail::EdgeOutcome>& out) {
        std::unique_ptr<World> base = root->clone();
        InvariantOracle oracle;
        oracle.attach_running(base->sys());
        for (const Action& a : node.path) {
            base->apply(a);
        }
        for (const TraceEvent& ev : base->trace().events()) oracle.feed(ev);

        std::vector<Action> actions = detail::enabled_actions(*base);
        for (std::size_t ai = 0; ai < actions.size(); ++ai) {
            std::unique_ptr<World> next = base->clone();
            InvariantOracle o2 = oracle;
            next->apply(actions[ai]);
            for (const TraceEvent& ev : next->trace().events()) o2.feed(ev);

            detail::EdgeOutcome edge;
            edge.node_index = node_index;
            edge.action_index = ai;
            edge.action = actions[ai];
            for (const Verdict& v : o2.evaluate(next->sys())) {
                if (!v.holds && is_target(v.invariant)) {
                    edge.violated = true;
                    edge.failed_invariant = v.invariant;
                    edge.detail = v.counterexample.value_or("");
                    break;
                }
            }
            if (!edge.violated) {
                edge.hash = next->state_hash();
                edge.self_loop = edge.hash == node.hash;
            }
            out.push_back(std::move(edge));
        }
    };

    for (std::uint32_t depth = 1; depth <= cfg.depth && !frontier.empty(); ++depth) {
        result.depth_reached = depth;
        std::vector<detail::EdgeOutcome> edges;

        if (cfg.workers <= 1 || frontier.size() < 2) {
            for (std::size_t i = 0; i < frontier.size(); ++i) {
                expand_node(frontier[i], i, edges);
            }
        } else {
            std::uint32_t n = std::min<std::uint32_t>(
                cfg.workers, static_cast<std::uint32_t>(frontier.size()));
            std::vector<std::vector<detail::EdgeOutcome>> partial(n);
            std::vector<std::thread> threads;
            threads.reserve(n);
            for (std::uint32_t w = 0; w < n; ++w) {
                threads.emplace_back([&, w]() {
                    for (std::size_t i = w; i < frontier.size(); i += n) {
                        expand_node(frontier[i], i, partial[w]);
                    }
                });
            }
            for (std::thread& t : threads) t.join();
            for (auto& p : partial) {
                edges.insert(edges.end(), std::make_move_iterator(p.begin()),
                             std::make_move_iterator(p.end()));
            }
            std::sort(edges.begin(), edges.end(),
                      [](const detail::EdgeOutcome& a, const detail::EdgeOutcome& b) {
                          return a.node_index != b.node_index ? a.node_index < b.node_index
                                                              : a.action_index < b.action_index;
                      });
        }

        std::vector<PathNode> next_frontier;
        for (detail::EdgeOutcome& edge : edges) {
            result.edges_explored++;
            if (edge.violated) {
                result.pass = false;
                result.counterexample = frontier[edge.node_index].path;
                result.counterexample.push_back(edge.action);
                result.failed_invariant = edge.failed_invariant;
                result.counterexample_detail = edge.detail;
                return result;
            }
            if (edge.self_loop || visited.count(edge.hash)) continue;
            visited.insert(edge.hash);
            result.states_visited++;
            if (result.states_visited > cfg.state_budget) {
                result.budget_exceeded = true;
                return result;
            }
            PathNode node;
            node.path = frontier[edge.node_index].path;
            node.path.push_back(edge.action);
            node.hash = edge.hash;
            next_frontier.push_back(std::move(node));
        }
        frontier = std::move(next_frontier);
    }

    result.pass = true;
    return result;
}

}  // namespace cvmsim
