// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0
//
// cvmsim — drive the confidential-computing platform model from the shell:
// run adversarial scenarios, explore interleavings exhaustively, replay
// counterexamples, and print the demo lifecycle.
//
// Exit codes: 0 all checks hold, 1 invariant violation, 2 input/parse
// error, 3 state-space budget exceeded.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cvmsim/explorer.hpp"
#include "cvmsim/scenario.hpp"
#include "cvmsim/whitelist_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolation = 1;
constexpr int kExitParse = 2;
constexpr int kExitBudget = 3;

std::string default_trace_path(const std::string& name) {
    const char* dir = std::getenv("CVMSIM_TRACE_DIR");
    if (!dir || !*dir) return "";
    return std::string(dir) + "/" + name;
}

bool write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) return false;
    out << content;
    return out.good();
}

std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void print_verdicts(const std::vector<cvmsim::Verdict>& verdicts, bool verbose) {
    for (const cvmsim::Verdict& v : verdicts) {
        if (v.holds && !verbose) continue;
        std::printf("%-10s %s %s\n", v.invariant.c_str(), v.holds ? "hold" : "VIOLATED",
                    v.holds ? "" : v.counterexample.value_or("").c_str());
    }
}

struct RunOptions {
    std::uint64_t seed_flag = 0;
    bool seed_set = false;
    bool allow_entropy = true;  // replay pins everything to the file
    std::string trace_out;
    std::string whitelist_path;
    std::string monitor_image_path;
    std::string hv_image_path;
    bool dump_ledger = false;
    bool verbose = false;
};

bool load_image(const std::string& path, std::vector<std::uint8_t>& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return true;
}

int run_scenario_file(const std::string& path, const RunOptions& opts) {
    auto text = read_file(path);
    if (!text) {
        std::fprintf(stderr, "cannot read scenario: %s\n", path.c_str());
        return kExitParse;
    }
    auto parsed = cvmsim::parse_scenario(*text);
    if (!parsed.ok()) {
        std::fprintf(stderr, "malformed scenario: %s\n", path.c_str());
        return kExitParse;
    }
    cvmsim::Scenario sc = std::move(parsed).value();

    // Seed priority: explicit flag, then the scenario file; otherwise one
    // is drawn from entropy and printed so the run stays reproducible.
    std::uint64_t seed = sc.seed;
    if (opts.seed_set) {
        seed = opts.seed_flag;
    } else if (!sc.seed_set && opts.allow_entropy) {
        seed = std::random_device{}();
        std::printf("seed: %llu (derived from entropy; pass --seed %llu to reproduce)\n",
                    static_cast<unsigned long long>(seed),
                    static_cast<unsigned long long>(seed));
    }

    cvmsim::clear_mutations();
    if (!sc.mutation.empty() && !cvmsim::set_mutation(sc.mutation)) {
        std::fprintf(stderr, "unknown mutation in scenario: %s\n", sc.mutation.c_str());
        return kExitParse;
    }

    if (!opts.monitor_image_path.empty() &&
        !load_image(opts.monitor_image_path, sc.config.monitor_image)) {
        std::fprintf(stderr, "cannot read monitor image: %s\n",
                     opts.monitor_image_path.c_str());
        return kExitParse;
    }
    if (!opts.hv_image_path.empty() && !load_image(opts.hv_image_path, sc.config.hv_image)) {
        std::fprintf(stderr, "cannot read hypervisor image: %s\n", opts.hv_image_path.c_str());
        return kExitParse;
    }

    auto world_result = cvmsim::World::create(sc.config);
    if (!world_result.ok()) {
        std::fprintf(stderr, "world setup failed: %s\n", to_string(world_result.error()));
        return kExitParse;
    }
    auto world = std::move(world_result).value();

    if (!opts.whitelist_path.empty()) {
        auto wl_text = read_file(opts.whitelist_path);
        if (!wl_text) {
            std::fprintf(stderr, "cannot read whitelist: %s\n", opts.whitelist_path.c_str());
            return kExitParse;
        }
        auto table = cvmsim::whitelist_from_json(*wl_text);
        if (!table.ok()) {
            std::fprintf(stderr, "malformed whitelist: %s\n", opts.whitelist_path.c_str());
            return kExitParse;
        }
        world->sys().monitor.set_whitelist(std::move(table).value());
    }

    std::printf("scenario: %s (%zu actions, seed %llu)\n", path.c_str(), sc.actions.size(),
                static_cast<unsigned long long>(seed));
    cvmsim::RunResult result = cvmsim::run_scenario(*world, sc.actions, seed);
    if (opts.verbose) {
        for (const std::string& note : result.notes) std::printf("  %s\n", note.c_str());
    }
    print_verdicts(result.verdicts, opts.verbose);

    if (opts.dump_ledger) {
        world->sys().monitor.dump_token_ledger(world->sys().platform);
    }
    std::string trace_path =
        opts.trace_out.empty() ? default_trace_path("run.trace") : opts.trace_out;
    if (!trace_path.empty()) {
        if (!write_file(trace_path, world->trace().to_text())) {
            std::fprintf(stderr, "cannot write trace: %s\n", trace_path.c_str());
        } else {
            std::printf("trace: %s (%zu events)\n", trace_path.c_str(), world->trace().size());
        }
    }

    if (!result.all_hold) {
        if (result.failing_action) {
            std::printf("first violation after action %zu: %s\n", *result.failing_action,
                        cvmsim::action_to_line(sc.actions[*result.failing_action]).c_str());
        }
        std::printf("verdict: VIOLATED\n");
        return kExitViolation;
    }
    std::printf("verdict: all %zu invariants hold\n", result.verdicts.size());
    return kExitOk;
}

int explore_command(cvmsim::ExploreConfig cfg, const std::string& mutate,
                    const std::string& ce_out) {
    if (!mutate.empty() && !cvmsim::set_mutation(mutate)) {
        std::fprintf(stderr, "unknown mutation: %s\n", mutate.c_str());
        return kExitParse;
    }
    auto result = cvmsim::bounded_explore(cfg);
    if (!result.ok()) {
        std::fprintf(stderr, "explore failed: %s\n", to_string(result.error()));
        return kExitParse;
    }
    const cvmsim::ExploreResult& res = result.value();
    std::printf("explored: %llu states, %llu edges, depth %u\n",
                static_cast<unsigned long long>(res.states_visited),
                static_cast<unsigned long long>(res.edges_explored), res.depth_reached);
    if (res.budget_exceeded) {
        std::printf("verdict: BUDGET EXCEEDED (%llu states)\n",
                    static_cast<unsigned long long>(res.states_visited));
        return kExitBudget;
    }
    if (res.pass) {
        if (cfg.invariants.empty()) {
            std::printf("verdict: PASS (full catalog)\n");
        } else {
            std::printf("verdict: PASS (%zu selected invariants)\n", cfg.invariants.size());
        }
        return kExitOk;
    }
    std::printf("verdict: FAIL %s (%s)\n", res.failed_invariant.c_str(),
                res.counterexample_detail.c_str());
    std::printf("counterexample (%zu actions):\n", res.counterexample.size());
    for (const cvmsim::Action& a : res.counterexample) {
        std::printf("  %s\n", cvmsim::action_to_line(a).c_str());
    }
    std::string path = ce_out.empty() ? default_trace_path("counterexample.scn") : ce_out;
    if (!path.empty()) {
        cvmsim::Scenario sc;
        sc.config = cvmsim::detail::world_config_for(cfg);
        sc.seed = 0;
        sc.mutation = mutate;
        sc.actions = res.counterexample;
        if (write_file(path, cvmsim::scenario_to_text(
                                 sc, "counterexample: " + res.failed_invariant))) {
            std::printf("counterexample written: %s\n", path.c_str());
        }
    }
    return kExitViolation;
}

int demo_command(const std::string& trace_out) {
    cvmsim::Scenario sc;
    sc.config.mem_pages = 64;
    sc.config.harts = 2;
    sc.config.tracker_pages = 12;
    sc.config.vms = 1;
    sc.config.vm_pages = 2;
    sc.seed = 0;
    auto world_result = cvmsim::World::create(sc.config);
    if (!world_result.ok()) return kExitParse;
    auto world = std::move(world_result).value();

    std::printf("booted: monitor at 0x%llx, %llu tracker pages, key id %s...\n",
                static_cast<unsigned long long>(
                    world->sys().monitor.layout().monitor_region.base.value),
                static_cast<unsigned long long>(
                    world->sys().monitor.pool().total_created()),
                cvmsim::hex(world->boot_report().attestation_key_id).substr(0, 16).c_str());

    std::vector<cvmsim::Action> script = {
        {cvmsim::ActionKind::Promote, world->vms()[0].raw, 0},
        {cvmsim::ActionKind::StartHart, 1, 0},
        {cvmsim::ActionKind::Resume, 0, 3},
        {cvmsim::ActionKind::VictimStep, 0, 0},
        {cvmsim::ActionKind::VictimStep, 0, 0},
        {cvmsim::ActionKind::VictimStep, 0, 0},
        {cvmsim::ActionKind::ReadProbe, 0, 0},
        {cvmsim::ActionKind::Interrupt, 0, 1},
        {cvmsim::ActionKind::ProbeSweep, 0, 0},
        {cvmsim::ActionKind::Terminate, 3, 0},
        {cvmsim::ActionKind::Impersonate, 0, 0},
    };
    // Promote first, then aim resume/terminate/probe at the actual CVM.
    cvmsim::RunResult result;
    {
        world->apply(script[0]);
        auto cvms = world->cvms();
        if (!cvms.empty()) {
            const cvmsim::SecurityDomain* d = world->sys().monitor.find_domain(cvms[0]);
            for (auto& a : script) {
                if (a.kind == cvmsim::ActionKind::Resume) a.b = cvms[0].raw;
                if (a.kind == cvmsim::ActionKind::Terminate) a.a = cvms[0].raw;
                if (a.kind == cvmsim::ActionKind::ReadProbe && d && d->page_table &&
                    !d->page_table->mappings().empty()) {
                    a.a = d->page_table->mappings().begin()->second.page_number();
                }
            }
        }
        std::vector<cvmsim::Action> rest(script.begin() + 1, script.end());
        result = cvmsim::run_scenario(*world, rest, 0);
    }
    for (const std::string& note : result.notes) std::printf("  %s\n", note.c_str());
    print_verdicts(result.verdicts, true);

    std::string trace_path = trace_out.empty() ? default_trace_path("demo.trace") : trace_out;
    if (!trace_path.empty() && write_file(trace_path, world->trace().to_text())) {
        std::printf("trace: %s\n", trace_path.c_str());
    }
    std::printf("verdict: %s\n", result.all_hold ? "all invariants hold" : "VIOLATED");
    return result.all_hold ? kExitOk : kExitViolation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cvmsim — executable model of a VM-based confidential computing monitor"};
    app.require_subcommand(1);

    // run
    std::string run_path;
    RunOptions ropts;
    CLI::App* run = app.add_subcommand("run", "execute a scenario script and check invariants");
    run->add_option("scenario", run_path, "scenario file")->required();
    CLI::Option* seed_opt =
        run->add_option("--seed", ropts.seed_flag, "scheduler seed (0 = scripted only)");
    run->add_option("--trace", ropts.trace_out, "write the event trace to this file");
    run->add_option("--whitelist", ropts.whitelist_path, "hypercall whitelist config (json)");
    run->add_option("--monitor-image", ropts.monitor_image_path,
                    "raw monitor image file to boot with");
    run->add_option("--hv-image", ropts.hv_image_path,
                    "raw hypervisor image file to boot with");
    run->add_flag("--ledger", ropts.dump_ledger,
                  "append a token ledger dump to the trace");
    run->add_flag("--verbose", ropts.verbose, "print per-action notes and all verdicts");

    // explore
    cvmsim::ExploreConfig ecfg;
    std::string explore_mutate, explore_ce, explore_invariants;
    CLI::App* explore =
        app.add_subcommand("explore", "exhaustively enumerate interleavings up to a depth");
    explore->add_option("--harts", ecfg.harts, "harts (<=2)")->capture_default_str();
    explore->add_option("--cvms", ecfg.cvms, "cvms (<=2)")->capture_default_str();
    explore->add_option("--pages", ecfg.pages, "tracker pages (<=8)")->capture_default_str();
    explore->add_option("--depth", ecfg.depth, "action depth bound")->capture_default_str();
    explore->add_option("--budget", ecfg.state_budget, "state budget")->capture_default_str();
    explore->add_option("--workers", ecfg.workers, "worker threads")->capture_default_str();
    explore->add_option("--mutate", explore_mutate,
                        "enable a deliberate defect (see --list-mutations)");
    explore->add_option("--invariant", explore_invariants,
                        "comma-separated invariant ids to check (default: all)");
    explore->add_option("--ce-out", explore_ce, "write a counterexample scenario here");

    // replay
    std::string replay_path;
    CLI::App* replay = app.add_subcommand("replay", "re-execute a counterexample scenario");
    replay->add_option("file", replay_path, "counterexample/scenario file")->required();

    // demo
    std::string demo_trace;
    CLI::App* demo = app.add_subcommand("demo", "boot, run a CVM lifecycle, print verdicts");
    demo->add_option("--trace", demo_trace, "write the event trace to this file");

    // list-mutations / list-invariants
    CLI::App* lm = app.add_subcommand("list-mutations", "print available deliberate defects");
    CLI::App* li = app.add_subcommand("list-invariants", "print the invariant catalog");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        ropts.seed_set = seed_opt->count() > 0;
        return run_scenario_file(run_path, ropts);
    }
    if (explore->parsed()) {
        if (!explore_invariants.empty()) {
            std::stringstream ss(explore_invariants);
            std::string id;
            while (std::getline(ss, id, ',')) {
                if (!id.empty()) ecfg.invariants.push_back(id);
            }
        }
        return explore_command(ecfg, explore_mutate, explore_ce);
    }
    if (replay->parsed()) {
        // Same engine as run; everything (config, seed, mutation) comes
        // from the recorded file.
        RunOptions replay_opts;
        replay_opts.allow_entropy = false;
        return run_scenario_file(replay_path, replay_opts);
    }
    if (demo->parsed()) return demo_command(demo_trace);
    if (lm->parsed()) {
        for (const std::string& name : cvmsim::mutation_names()) std::printf("%s\n", name.c_str());
        return kExitOk;
    }
    if (li->parsed()) {
        for (const std::string& id : cvmsim::invariant_catalog()) {
            std::printf("%-10s %s\n", id.c_str(), cvmsim::invariant_summary(id));
        }
        return kExitOk;
    }
    return kExitParse;
}
