// Copyright (c) 2026 the cvmsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <map>
#include <utility>

#include "cvmsim/core.hpp"
#include "cvmsim/mutation.hpp"
#include "cvmsim/platform.hpp"

namespace cvmsim {

enum class PageState : std::uint8_t { UnAllocated, Allocated };

template <PageState S>
class PageToken;

using UnallocatedPage = PageToken<PageState::UnAllocated>;
using AllocatedPage = PageToken<PageState::Allocated>;

class TokenPool;
class PageTable;

/// Capability for one aligned physical page. A token is move-only: handing
/// it to another component consumes the source, so at most one live token
/// per page can exist (the pool mints exactly one per page at boot).
///
/// The typestate is carried in the template parameter: UnAllocated tokens
/// live in the pool, Allocated tokens are held by page tables. Both
/// transitions pass through a zero-fill of the page, which is what isolates
/// a page's content in time when it moves between owners.
template <PageState S>
class PageToken {
public:
    PageToken(PageToken&& other) noexcept
        : base_(other.base_), size_(other.size_), serial_(other.serial_), live_(other.live_) {
        other.live_ = false;
    }

    PageToken& operator=(PageToken&& other) noexcept {
        base_ = other.base_;
        size_ = other.size_;
        serial_ = other.serial_;
        live_ = other.live_;
        other.live_ = false;
        return *this;
    }

    PageToken(const PageToken&) = delete;
    PageToken& operator=(const PageToken&) = delete;

    PhysAddr base() const { return base_; }
    std::uint64_t size() const { return size_; }
    std::uint64_t serial() const { return serial_; }
    AddrRange range() const { return AddrRange{base_, size_}; }
    std::uint64_t page_number() const { return base_.page_number(); }

    /// A moved-from token is dead; using one is a linearity violation.
    bool live() const { return live_; }

    static constexpr PageState state = S;

    /// UnAllocated -> Allocated. Clears the page, consumes the source.
    Outcome<AllocatedPage> into_allocated(Platform& platform, std::uint32_t hart) &&
        requires(S == PageState::UnAllocated)
    {
        if (!live_) return Err::ConsumedToken;
        auto st = platform.token_fill(hart, serial_, range(), 0);
        if (!st.ok()) return st.error();
        platform.trace().append(hart, DomainId::monitor(), "token_state",
                                {{"serial", arg_dec(serial_)},
                                 {"base", arg_hex(base_.value)},
                                 {"to", "allocated"},
                                 {"zeroed", platform.range_is_zero(range()) ? "1" : "0"}},
                                "ok");
        live_ = false;
        return AllocatedPage(base_, size_, serial_);
    }

    /// Allocated -> UnAllocated. Clears the page (the step that makes the
    /// content unrecoverable by the next owner), consumes the source.
    Outcome<UnallocatedPage> into_unallocated(Platform& platform, std::uint32_t hart) &&
        requires(S == PageState::Allocated)
    {
        if (!live_) return Err::ConsumedToken;
        if (!mutation_flags().skip_deallocate_zero) {
            auto st = platform.token_fill(hart, serial_, range(), 0);
            if (!st.ok()) return st.error();
        }
        platform.trace().append(hart, DomainId::monitor(), "token_state",
                                {{"serial", arg_dec(serial_)},
                                 {"base", arg_hex(base_.value)},
                                 {"to", "unallocated"},
                                 {"zeroed", platform.range_is_zero(range()) ? "1" : "0"}},
                                "ok");
        live_ = false;
        return UnallocatedPage(base_, size_, serial_);
    }

    /// Bounds-checked access to the page through the token. The only write
    /// path into tracker-managed memory the monitor uses.
    Status write(Platform& platform, std::uint32_t hart, std::uint64_t offset, Word value)
        requires(S == PageState::Allocated)
    {
        if (!live_) return Err::ConsumedToken;
        if (offset + 8 > size_ || offset + 8 < offset) return Err::OutOfBounds;
        auto r = platform.token_access(hart, serial_, base_.offset(offset), 8, true, value);
        if (!r.ok()) return r.error();
        return ok_status();
    }

    Outcome<Word> read(Platform& platform, std::uint32_t hart, std::uint64_t offset) const
        requires(S == PageState::Allocated)
    {
        if (!live_) return Err::ConsumedToken;
        if (offset + 8 > size_ || offset + 8 < offset) return Err::OutOfBounds;
        return platform.token_access(hart, serial_, base_.offset(offset), 8, false, 0);
    }

private:
    template <PageState>
    friend class PageToken;
    friend class TokenPool;
    friend class PageTable;

    PageToken(PhysAddr base, std::uint64_t size, std::uint64_t serial)
        : base_(base), size_(size), serial_(serial), live_(true) {}

    /// Snapshot support: duplicates the token into a cloned universe. Never
    /// used inside one universe — that would break the linear discipline.
    PageToken clone_unchecked() const { return PageToken(base_, size_, serial_); }

    PhysAddr base_{};
    std::uint64_t size_ = 0;
    std::uint64_t serial_ = 0;
    bool live_ = false;
};

/// Owner of all unallocated page tokens. Minted once, during boot, with one
/// token per aligned page of the managed range; allocation and deallocation
/// move tokens out and back but never change the total.
class TokenPool {
public:
    TokenPool() = default;
    TokenPool(TokenPool&&) = default;
    TokenPool& operator=(TokenPool&&) = default;

    /// One-shot constructor, guarded by a platform boot latch so it cannot
    /// be re-run after the boot sequence finished.
    static Outcome<TokenPool> initialize(Platform& platform, std::uint32_t hart,
                                         AddrRange range) {
        if (range.empty() || !range.page_aligned()) return Err::Misaligned;
        if (!platform.latch_once("memory_tracker_init")) {
            platform.trace().append(hart, DomainId::monitor(), "tracker_init",
                                    {{"base", arg_hex(range.base.value)},
                                     {"pages", arg_dec(range.page_count())}},
                                    "AlreadyInitialized");
            return Err::AlreadyInitialized;
        }
        TokenPool pool;
        pool.range_ = range;
        std::uint64_t first = range.base.page_number();
        for (std::uint64_t i = 0; i < range.page_count(); ++i) {
            std::uint64_t serial = i + 1;
            pool.free_.emplace_back(UnallocatedPage(PhysAddr::page(first + i), kPageSize, serial));
            platform.trace().append(hart, DomainId::monitor(), "token_mint",
                                    {{"serial", arg_dec(serial)},
                                     {"base", arg_hex(PhysAddr::page(first + i).value)}},
                                    "ok");
        }
        pool.total_created_ = range.page_count();
        platform.trace().append(hart, DomainId::monitor(), "tracker_init",
                                {{"base", arg_hex(range.base.value)},
                                 {"pages", arg_dec(range.page_count())}},
                                "ok");
        return pool;
    }

    Outcome<UnallocatedPage> allocate(Platform& platform, std::uint32_t hart) {
        if (free_.empty()) {
            platform.trace().append(hart, DomainId::monitor(), "token_alloc", {},
                                    "OutOfMemory");
            return Err::OutOfMemory;
        }
        UnallocatedPage token = std::move(free_.front());
        free_.pop_front();
        platform.trace().append(hart, DomainId::monitor(), "token_alloc",
                                {{"serial", arg_dec(token.serial())},
                                 {"base", arg_hex(token.base().value)}},
                                "ok");
        return token;
    }

    /// Returns a page to the pool. The Allocated -> UnAllocated transition
    /// zero-fills the page before it becomes reusable.
    Status deallocate(Platform& platform, std::uint32_t hart, AllocatedPage&& token) {
        std::uint64_t serial = token.serial();
        PhysAddr base = token.base();
        auto back = std::move(token).into_unallocated(platform, hart);
        if (!back.ok()) return back.error();
        free_.push_back(std::move(back).value());
        platform.trace().append(hart, DomainId::monitor(), "token_dealloc",
                                {{"serial", arg_dec(serial)}, {"base", arg_hex(base.value)}},
                                "ok");
        return ok_status();
    }

    std::uint64_t free_count() const { return free_.size(); }
    std::uint64_t total_created() const { return total_created_; }
    AddrRange managed_range() const { return range_; }

    const std::deque<UnallocatedPage>& free_tokens() const { return free_; }

    TokenPool clone() const {
        TokenPool c;
        c.range_ = range_;
        c.total_created_ = total_created_;
        for (const UnallocatedPage& t : free_) c.free_.push_back(t.clone_unchecked());
        return c;
    }

    /// Fault-injection hooks (checker self-tests only).
    std::deque<UnallocatedPage>& raw_free() { return free_; }
    static UnallocatedPage forge_token(PhysAddr base, std::uint64_t size, std::uint64_t serial) {
        return UnallocatedPage(base, size, serial);
    }

private:
    std::deque<UnallocatedPage> free_;
    std::uint64_t total_created_ = 0;
    AddrRange range_{};
};

/// Guest-physical to host-physical mapping for one domain, backed by one
/// Allocated token that stores the entry words. Mapping consumes tokens;
/// unmapping yields them back to the caller, who must deallocate them to
/// make the pages reusable.
class PageTable {
public:
    /// Entries are 8-byte words inside the root page.
    static constexpr std::uint64_t kMaxGuestPages = kPageSize / 8;

    PageTable(PageTable&&) = default;
    PageTable& operator=(PageTable&&) = default;

    static Outcome<PageTable> create(TokenPool& pool, Platform& platform, std::uint32_t hart,
                                     DomainId owner) {
        auto token = pool.allocate(platform, hart);
        if (!token.ok()) return token.error();
        auto root = std::move(token).value().into_allocated(platform, hart);
        if (!root.ok()) return root.error();
        PageTable pt(std::move(root).value(), owner);
        platform.trace().append(hart, DomainId::monitor(), "pt_create",
                                {{"owner", to_string(owner)},
                                 {"root_serial", arg_dec(pt.root_.serial())}},
                                "ok");
        return pt;
    }

    Status map_page(Platform& platform, std::uint32_t hart, std::uint64_t guest_page,
                    AllocatedPage&& token) {
        if (guest_page >= kMaxGuestPages) return Err::OutOfBounds;
        if (mappings_.count(guest_page) != 0) return Err::AlreadyMapped;
        if (!token.live()) return Err::ConsumedToken;
        Word entry = (token.page_number() << 1) | 1;
        auto st = root_.write(platform, hart, guest_page * 8, entry);
        if (!st.ok()) return st.error();
        platform.trace().append(hart, DomainId::monitor(), "token_map",
                                {{"serial", arg_dec(token.serial())},
                                 {"owner", to_string(owner_)},
                                 {"guest", arg_dec(guest_page)},
                                 {"base", arg_hex(token.base().value)}},
                                "ok");
        mappings_.emplace(guest_page, std::move(token));
        return ok_status();
    }

    Outcome<AllocatedPage> unmap_page(Platform& platform, std::uint32_t hart,
                                      std::uint64_t guest_page) {
        auto it = mappings_.find(guest_page);
        if (it == mappings_.end()) return Err::NotMapped;
        auto st = root_.write(platform, hart, guest_page * 8, 0);
        if (!st.ok()) return st.error();
        AllocatedPage token = std::move(it->second);
        mappings_.erase(it);
        platform.trace().append(hart, DomainId::monitor(), "token_unmap",
                                {{"serial", arg_dec(token.serial())},
                                 {"owner", to_string(owner_)},
                                 {"guest", arg_dec(guest_page)}},
                                "ok");
        return token;
    }

    Outcome<PhysAddr> translate(std::uint64_t guest_page) const {
        auto it = mappings_.find(guest_page);
        if (it == mappings_.end()) return Err::NotMapped;
        return it->second.base();
    }

    DomainId owner() const { return owner_; }
    const AllocatedPage& root() const { return root_; }

    /// Dissolves an (unmapped) page table back into its root token.
    AllocatedPage into_root() && { return std::move(root_); }
    const std::map<std::uint64_t, AllocatedPage>& mappings() const { return mappings_; }
    std::size_t mapped_count() const { return mappings_.size(); }

    std::vector<std::uint64_t> guest_pages() const {
        std::vector<std::uint64_t> out;
        out.reserve(mappings_.size());
        for (const auto& [g, t] : mappings_) out.push_back(g);
        return out;
    }

    /// Ranges the owning domain may touch (its mapped pages; the root page
    /// stays monitor-private).
    std::vector<AddrRange> granted_ranges() const {
        std::vector<AddrRange> out;
        out.reserve(mappings_.size());
        for (const auto& [g, t] : mappings_) out.push_back(t.range());
        return out;
    }

    PageTable clone() const {
        PageTable c(root_.clone_unchecked(), owner_);
        for (const auto& [g, t] : mappings_) c.mappings_.emplace(g, t.clone_unchecked());
        return c;
    }

    /// Fault-injection hooks (checker self-tests only).
    std::map<std::uint64_t, AllocatedPage>& raw_mappings() { return mappings_; }
    AllocatedPage& raw_root() { return root_; }

private:
    PageTable(AllocatedPage root, DomainId owner) : root_(std::move(root)), owner_(owner) {}

    AllocatedPage root_;
    std::map<std::uint64_t, AllocatedPage> mappings_;
    DomainId owner_{};
};

}  // namespace cvmsim
