// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace cvmsim {

using Word = std::uint64_t;

/// Fixed page size of the simulated platform.
inline constexpr std::uint64_t kPageSize = 4096;

/// General-purpose registers per hart.
inline constexpr std::size_t kGprCount = 8;

/// Interrupt lines understood by the interrupt controller.
inline constexpr unsigned kIrqCount = 8;

/// Interrupt 0 is the trap line into the security monitor; it is pinned to
/// the highest privilege from platform creation onward.
inline constexpr unsigned kMonitorIrq = 0;

/// Upper bound on simultaneously registered security domains (limited by
/// the size of the control data region's context slot table).
inline constexpr unsigned kMaxDomains = 8;

using Gprs = std::array<Word, kGprCount>;

/// The three execution privileges of the platform. Ordered; Highest is the
/// monitor's privilege and is unique to it after boot.
enum class PrivilegeLevel : std::uint8_t {
    Lowest = 0,
    Middle = 1,
    Highest = 2,
};

inline const char* to_string(PrivilegeLevel p) {
    switch (p) {
    case PrivilegeLevel::Lowest: return "lowest";
    case PrivilegeLevel::Middle: return "middle";
    case PrivilegeLevel::Highest: return "highest";
    }
    return "?";
}

/// Identity of a security domain. 0 and 1 are reserved for the monitor and
/// the hypervisor (the hypervisor and all legacy VMs form the single
/// non-confidential domain from the isolation component's point of view,
/// but VMs get their own ids for lifecycle bookkeeping). Peripheral DMA is
/// modeled as a distinguished non-confidential pseudo-domain.
struct DomainId {
    std::uint32_t raw = kNone;

    static constexpr std::uint32_t kMonitor = 0;
    static constexpr std::uint32_t kHypervisor = 1;
    static constexpr std::uint32_t kDma = 0xFE;
    static constexpr std::uint32_t kNone = 0xFF;

    constexpr DomainId() = default;
    constexpr explicit DomainId(std::uint32_t id) : raw(id) {}

    static constexpr DomainId monitor() { return DomainId{kMonitor}; }
    static constexpr DomainId hypervisor() { return DomainId{kHypervisor}; }
    static constexpr DomainId dma() { return DomainId{kDma}; }
    static constexpr DomainId none() { return DomainId{kNone}; }

    constexpr bool operator==(const DomainId&) const = default;
    constexpr auto operator<=>(const DomainId&) const = default;
};

inline std::string to_string(DomainId d) {
    switch (d.raw) {
    case DomainId::kMonitor: return "sm";
    case DomainId::kHypervisor: return "hv";
    case DomainId::kDma: return "dma";
    case DomainId::kNone: return "-";
    default: return "d" + std::to_string(d.raw);
    }
}

inline std::optional<DomainId> domain_from_string(std::string_view s) {
    if (s == "sm") return DomainId::monitor();
    if (s == "hv") return DomainId::hypervisor();
    if (s == "dma") return DomainId::dma();
    if (s == "-") return DomainId::none();
    if (s.size() >= 2 && s[0] == 'd') {
        std::uint32_t v = 0;
        for (char c : s.substr(1)) {
            if (c < '0' || c > '9') return std::nullopt;
            v = v * 10 + static_cast<std::uint32_t>(c - '0');
        }
        return DomainId{v};
    }
    return std::nullopt;
}

/// Byte-granular physical address.
struct PhysAddr {
    std::uint64_t value = 0;

    constexpr PhysAddr() = default;
    constexpr explicit PhysAddr(std::uint64_t v) : value(v) {}

    constexpr std::uint64_t page_number() const { return value / kPageSize; }
    constexpr bool page_aligned() const { return value % kPageSize == 0; }
    constexpr PhysAddr offset(std::uint64_t bytes) const { return PhysAddr{value + bytes}; }

    static constexpr PhysAddr page(std::uint64_t n) { return PhysAddr{n * kPageSize}; }

    constexpr bool operator==(const PhysAddr&) const = default;
    constexpr auto operator<=>(const PhysAddr&) const = default;
};

/// Half-open range [base, base+size) of physical memory.
struct AddrRange {
    PhysAddr base{};
    std::uint64_t size = 0;

    constexpr AddrRange() = default;
    constexpr AddrRange(PhysAddr b, std::uint64_t s) : base(b), size(s) {}

    static constexpr AddrRange pages(std::uint64_t first_page, std::uint64_t count) {
        return AddrRange{PhysAddr::page(first_page), count * kPageSize};
    }

    constexpr std::uint64_t end() const { return base.value + size; }
    constexpr bool empty() const { return size == 0; }
    constexpr std::uint64_t page_count() const { return size / kPageSize; }
    constexpr bool page_aligned() const { return base.page_aligned() && size % kPageSize == 0; }

    constexpr bool contains(PhysAddr a) const {
        return a.value >= base.value && a.value < end();
    }
    constexpr bool contains(PhysAddr a, std::uint64_t bytes) const {
        return a.value >= base.value && a.value + bytes <= end() && a.value + bytes >= a.value;
    }
    constexpr bool contains_range(const AddrRange& r) const {
        return r.empty() || (r.base.value >= base.value && r.end() <= end());
    }
    constexpr bool intersects(const AddrRange& r) const {
        return !empty() && !r.empty() && base.value < r.end() && r.base.value < end();
    }

    constexpr bool operator==(const AddrRange&) const = default;
};

/// Error vocabulary shared by every component of the model.
enum class Err : std::uint8_t {
    ConfigError,
    OutOfRange,
    AccessDenied,
    Misaligned,
    PrivilegeViolation,
    PinnedInterrupt,
    UnroutedInterrupt,
    InterruptsMasked,
    SeedLocked,
    AlreadyInitialized,
    OutOfMemory,
    OutOfBounds,
    ConsumedToken,
    AlreadyMapped,
    NotMapped,
    UnknownDomain,
    DomainNotRunnable,
    DomainBusy,
    DomainLimit,
    UnknownCause,
    NoSavedState,
    WrongExitNode,
    UndeclaredCall,
    NotFromCvm,
    NotParked,
    BootSequenceError,
    ScriptError,
    UnknownFault,
    StateSpaceBudgetExceeded,
};

inline const char* to_string(Err e) {
    switch (e) {
    case Err::ConfigError: return "ConfigError";
    case Err::OutOfRange: return "OutOfRange";
    case Err::AccessDenied: return "AccessDenied";
    case Err::Misaligned: return "Misaligned";
    case Err::PrivilegeViolation: return "PrivilegeViolation";
    case Err::PinnedInterrupt: return "PinnedInterrupt";
    case Err::UnroutedInterrupt: return "UnroutedInterrupt";
    case Err::InterruptsMasked: return "InterruptsMasked";
    case Err::SeedLocked: return "SeedLocked";
    case Err::AlreadyInitialized: return "AlreadyInitialized";
    case Err::OutOfMemory: return "OutOfMemory";
    case Err::OutOfBounds: return "OutOfBounds";
    case Err::ConsumedToken: return "ConsumedToken";
    case Err::AlreadyMapped: return "AlreadyMapped";
    case Err::NotMapped: return "NotMapped";
    case Err::UnknownDomain: return "UnknownDomain";
    case Err::DomainNotRunnable: return "DomainNotRunnable";
    case Err::DomainBusy: return "DomainBusy";
    case Err::DomainLimit: return "DomainLimit";
    case Err::UnknownCause: return "UnknownCause";
    case Err::NoSavedState: return "NoSavedState";
    case Err::WrongExitNode: return "WrongExitNode";
    case Err::UndeclaredCall: return "UndeclaredCall";
    case Err::NotFromCvm: return "NotFromCvm";
    case Err::NotParked: return "NotParked";
    case Err::BootSequenceError: return "BootSequenceError";
    case Err::ScriptError: return "ScriptError";
    case Err::UnknownFault: return "UnknownFault";
    case Err::StateSpaceBudgetExceeded: return "StateSpaceBudgetExceeded";
    }
    return "?";
}

/// Minimal expected-style result type. `Outcome<T>` is either a value or an
/// `Err`; `Status` is the value-free variant.
template <typename T>
class [[nodiscard]] Outcome {
public:
    Outcome(T value) : repr_(std::move(value)) {}
    Outcome(Err e) : repr_(e) {}

    bool ok() const { return std::holds_alternative<T>(repr_); }
    explicit operator bool() const { return ok(); }

    T& value() & { return std::get<T>(repr_); }
    const T& value() const& { return std::get<T>(repr_); }
    T&& value() && { return std::get<T>(std::move(repr_)); }

    Err error() const { return std::get<Err>(repr_); }

    T value_or(T fallback) const { return ok() ? value() : std::move(fallback); }

private:
    std::variant<T, Err> repr_;
};

struct Unit {
    constexpr bool operator==(const Unit&) const = default;
};

using Status = Outcome<Unit>;

inline Status ok_status() { return Status{Unit{}}; }

}  // namespace cvmsim
