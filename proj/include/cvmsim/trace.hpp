// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cvmsim/core.hpp"

namespace cvmsim {

/// One `key=value` argument of a trace event. Values are pre-rendered
/// strings; numeric helpers below keep the rendering canonical so that
/// identical runs produce byte-identical traces.
using TraceArgs = std::vector<std::pair<std::string, std::string>>;

inline std::string arg_hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string arg_dec(std::uint64_t v) { return std::to_string(v); }

inline std::string gprs_args(const Gprs& g) {
    std::string out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i) out += ',';
        out += arg_hex(g[i]);
    }
    return out;
}

inline std::optional<Gprs> gprs_from_args(std::string_view s) {
    Gprs out{};
    std::size_t pos = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::size_t next = s.find(',', pos);
        std::string part(s.substr(pos, next == std::string_view::npos ? s.size() - pos
                                                                      : next - pos));
        char* end = nullptr;
        out[i] = std::strtoull(part.c_str(), &end, 0);
        if (end == part.c_str()) return std::nullopt;
        if (next == std::string_view::npos) {
            if (i + 1 != out.size()) return std::nullopt;
            break;
        }
        pos = next + 1;
    }
    return out;
}

/// Append-only record of one platform or monitor action.
///
/// Serialized line format (stable field order, documented in docs/formats.md):
///   seq|hart|domain|op|k=v k=v ...|outcome
struct TraceEvent {
    std::uint64_t seq = 0;
    std::uint32_t hart = 0;
    DomainId domain = DomainId::none();
    std::string op;
    TraceArgs args;
    std::string outcome;

    std::optional<std::string> arg(std::string_view key) const {
        for (const auto& [k, v] : args) {
            if (k == key) return v;
        }
        return std::nullopt;
    }

    std::optional<std::uint64_t> arg_u64(std::string_view key) const {
        auto v = arg(key);
        if (!v) return std::nullopt;
        const char* s = v->c_str();
        char* end = nullptr;
        unsigned long long parsed = std::strtoull(s, &end, 0);
        if (end == s) return std::nullopt;
        return static_cast<std::uint64_t>(parsed);
    }

    bool succeeded() const { return outcome == "ok"; }

    std::string line() const {
        std::string out;
        out.reserve(64 + args.size() * 16);
        out += std::to_string(seq);
        out += '|';
        out += std::to_string(hart);
        out += '|';
        out += to_string(domain);
        out += '|';
        out += op;
        out += '|';
        bool first = true;
        for (const auto& [k, v] : args) {
            if (!first) out += ' ';
            first = false;
            out += k;
            out += '=';
            out += v;
        }
        out += '|';
        out += outcome;
        return out;
    }
};

/// Monotone event log. Owned by the execution context (test, scenario run,
/// explorer worker), never by the platform itself, so snapshots of a
/// platform can be rebound to fresh sinks.
class Trace {
public:
    std::uint64_t append(std::uint32_t hart, DomainId domain, std::string op, TraceArgs args,
                         std::string outcome) {
        TraceEvent ev;
        ev.seq = next_seq_++;
        ev.hart = hart;
        ev.domain = domain;
        ev.op = std::move(op);
        ev.args = std::move(args);
        ev.outcome = std::move(outcome);
        events_.push_back(std::move(ev));
        return events_.back().seq;
    }

    const std::vector<TraceEvent>& events() const { return events_; }
    std::size_t size() const { return events_.size(); }
    bool empty() const { return events_.empty(); }
    const TraceEvent& back() const { return events_.back(); }

    void clear() {
        events_.clear();
        next_seq_ = 0;
    }

    std::string to_text() const {
        std::string out;
        for (const TraceEvent& ev : events_) {
            out += ev.line();
            out += '\n';
        }
        return out;
    }

    /// Test hook: appends a fully formed event, used by the fault injector
    /// to forge records the real platform would never emit.
    void inject(TraceEvent ev) {
        ev.seq = next_seq_++;
        events_.push_back(std::move(ev));
    }

private:
    std::vector<TraceEvent> events_;
    std::uint64_t next_seq_ = 0;
};

}  // namespace cvmsim
