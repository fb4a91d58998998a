// Per-VM 2D paging emulation: guest PTE A/D bits, EPT dirty bits for data
// pages and for last-level GPT pages, per-VCPU PML buffers with log-full
// exits, and the trap/TLB/bit-set charge accounting.
//
// PML logs an id exactly at a 0->1 transition of the corresponding EPT
// dirty bit. Guest A/D-bit setting is a guest write to the page's GPT page,
// so it can log that GPT page; data writes can log the data page itself
// once the migrator has cleared its EPT dirty bit. Data pages start with
// warm (set) EPT dirty bits, matching a VM whose mappings were established
// before tracking starts.
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hmmv/common.hpp"
#include "hmmv/cost_model.hpp"
#include "hmmv/trace.hpp"

namespace hmmv {

inline constexpr std::uint32_t kPmlBufferCapacity = 512;

struct PageState {
    static constexpr std::uint8_t kMapped = 1u << 0;
    static constexpr std::uint8_t kGuestA = 1u << 1;
    static constexpr std::uint8_t kGuestD = 1u << 2;
    static constexpr std::uint8_t kEptDataDirty = 1u << 3;
    static constexpr std::uint8_t kEptUnfilled = 1u << 4;   // next access EPT-faults
    static constexpr std::uint8_t kWriteProtected = 1u << 5;
    static constexpr std::uint8_t kTierNvm = 1u << 6;
    static constexpr std::uint8_t kMigDirty = 1u << 7;      // dirtied in current copy window

    std::uint8_t flags = 0;
    std::uint8_t level = 0;          // multi-level queue level
    std::uint16_t dnd_span = 0;      // DND length in windows; 0 = not in DND
    std::uint16_t epoch_reads = 0;
    std::uint16_t epoch_writes = 0;
    std::uint32_t last_obs_window = 0;
    std::uint32_t dnd_expiry_window = 0;

    bool mapped() const { return flags & kMapped; }
    bool guest_a() const { return flags & kGuestA; }
    bool guest_d() const { return flags & kGuestD; }
    Tier tier() const { return (flags & kTierNvm) ? Tier::Nvm : Tier::Dram; }
    void set_tier(Tier t) {
        if (t == Tier::Nvm) flags |= kTierNvm; else flags &= static_cast<std::uint8_t>(~kTierNvm);
    }
};
static_assert(sizeof(PageState) == 16);

struct TrapCounters {
    std::uint64_t pml_full = 0;
    std::uint64_t ept_fault = 0;
    std::uint64_t wp_fault = 0;
    std::uint64_t other_exits = 0;

    std::uint64_t total() const { return pml_full + ept_fault + wp_fault + other_exits; }
    TrapCounters operator-(const TrapCounters& o) const {
        return {pml_full - o.pml_full, ept_fault - o.ept_fault, wp_fault - o.wp_fault,
                other_exits - o.other_exits};
    }
    bool operator==(const TrapCounters&) const = default;
};

enum class TrapKind : std::uint8_t { PmlFull, EptFault, WpFault, Other };

// Simulated-time charges, kept per component so reports can show exactly
// where estimated time went. total() is the VM's estimated time.
struct ChargeAccount {
    std::uint64_t access_ns = 0;
    std::uint64_t ad_set_ns = 0;
    std::uint64_t tlb_ns = 0;
    std::uint64_t trap_ns = 0;
    std::uint64_t pause_ns = 0;

    std::uint64_t total() const { return access_ns + ad_set_ns + tlb_ns + trap_ns + pause_ns; }
    bool operator==(const ChargeAccount&) const = default;
};

struct AccessOutcome {
    std::uint64_t access_ns = 0;    // tier latency including contention
    std::uint64_t overhead_ns = 0;  // A/D-bit setting plus any PML-full traps
    std::uint32_t traps_raised = 0;
    bool bits_set = false;
};

struct TlbCharge {
    std::uint64_t ns = 0;
};

class VmMmu {
public:
    VmMmu(PageGeometry geom, const CostModel& model, std::uint64_t total_pages, std::uint32_t vcpus)
        : geom_(geom),
          model_(&model),
          vcpus_(vcpus == 0 ? 1 : vcpus),
          pages_(total_pages),
          gpt_ept_dirty_((total_pages + geom.ptes_per_gpt_page - 1) / geom.ptes_per_gpt_page, 1),
          pml_(vcpus_) {
        for (auto& buf : pml_) buf.reserve(kPmlBufferCapacity);
    }

    std::uint64_t total_pages() const { return pages_.size(); }
    std::uint64_t total_gpt_pages() const { return gpt_ept_dirty_.size(); }
    std::uint32_t vcpus() const { return vcpus_; }
    const PageGeometry& geometry() const { return geom_; }

    PageState& page(PageIndex p) { return pages_[p]; }
    const PageState& page(PageIndex p) const { return pages_[p]; }

    std::uint64_t dram_resident() const { return dram_resident_; }
    std::uint64_t nvm_resident() const { return nvm_resident_; }
    std::uint64_t mapped_count() const { return dram_resident_ + nvm_resident_; }

    const TrapCounters& traps() const { return traps_; }
    ChargeAccount& account() { return account_; }
    const ChargeAccount& account() const { return account_; }

    void map_page(PageIndex p, Tier tier) {
        PageState& ps = pages_[p];
        if (ps.mapped()) throw InvariantBreach("mmu", 0, "double map of page " + std::to_string(p));
        ps.flags |= PageState::kMapped | PageState::kEptDataDirty;  // warm EPT dirty bit
        ps.set_tier(tier);
        (tier == Tier::Dram ? dram_resident_ : nvm_resident_)++;
    }

    void unmap_page(PageIndex p) {
        PageState& ps = pages_[p];
        if (!ps.mapped()) throw InvariantBreach("mmu", 0, "unmap of unmapped page " + std::to_string(p));
        ps.flags &= static_cast<std::uint8_t>(~PageState::kMapped);
        (ps.tier() == Tier::Dram ? dram_resident_ : nvm_resident_)--;
    }

    // Remap after migration. warm_fill models the active EPT fill: the new
    // EPTE arrives with A/D set so re-accesses neither fault nor log.
    void remap_page(PageIndex p, Tier tier, bool warm_fill) {
        PageState& ps = pages_[p];
        if (ps.mapped()) throw InvariantBreach("mmu", 0, "remap of mapped page " + std::to_string(p));
        ps.flags |= PageState::kMapped;
        ps.set_tier(tier);
        if (warm_fill) {
            ps.flags |= PageState::kEptDataDirty;
            ps.flags &= static_cast<std::uint8_t>(~PageState::kEptUnfilled);
        } else {
            ps.flags |= PageState::kEptUnfilled | PageState::kEptDataDirty;
        }
        (tier == Tier::Dram ? dram_resident_ : nvm_resident_)++;
    }

    // The mapped access path. Contention multipliers are indexed by tier and
    // must be >= 1 (1.0 when no migration touches that tier).
    AccessOutcome simulate_access(const AccessEvent& e, const double contention[2]) {
        PageState& ps = pages_[e.page];
        if (!ps.mapped())
            throw InvariantBreach("mmu", e.time, "access to unmapped page " + std::to_string(e.page));
        const int t = static_cast<int>(ps.tier());
        const std::uint64_t base = access_latency(e.kind, ps.tier(), *model_);
        const std::uint64_t latency =
            contention[t] > 1.0
                ? static_cast<std::uint64_t>(std::llround(static_cast<double>(base) * contention[t]))
                : base;
        return access_with_latency(e, latency);
    }

    // Same A/D-bit and PML semantics with an externally computed latency
    // (the direct-mapped cache model supplies its own).
    AccessOutcome simulate_access_fixed_latency(const AccessEvent& e, std::uint64_t latency_ns) {
        if (!pages_[e.page].mapped())
            throw InvariantBreach("mmu", e.time, "access to unmapped page " + std::to_string(e.page));
        return access_with_latency(e, latency_ns);
    }

private:
    AccessOutcome access_with_latency(const AccessEvent& e, std::uint64_t latency_ns) {
        PageState& ps = pages_[e.page];
        AccessOutcome out;
        out.access_ns = latency_ns;
        account_.access_ns += out.access_ns;

        const bool need_a = !ps.guest_a();
        const bool need_d = e.kind == AccessKind::Write && !ps.guest_d();
        if (need_a || need_d) {
            ps.flags |= PageState::kGuestA;
            if (e.kind == AccessKind::Write) ps.flags |= PageState::kGuestD;
            account_.ad_set_ns += model_->ad_set_cost_ns;
            out.overhead_ns += model_->ad_set_cost_ns;
            out.bits_set = true;
            // Setting a bit writes the page's LL-GPT page through the EPT.
            const GptPageId g = geom_.gpt_page_of(e.page);
            if (!gpt_ept_dirty_[g]) {
                gpt_ept_dirty_[g] = 1;
                out.traps_raised += pml_log(e.vcpu, pack_gpt(g), out);
            }
        }
        if (e.kind == AccessKind::Write && !(ps.flags & PageState::kEptDataDirty)) {
            ps.flags |= PageState::kEptDataDirty;
            out.traps_raised += pml_log(e.vcpu, pack_data(e.page), out);
        }
        return out;
    }

public:
    // Charged VM exit. The hypervisor opportunistically flushes the PML
    // buffer of the exiting VCPU.
    void charge_trap(TrapKind kind, VcpuId vcpu) {
        switch (kind) {
            case TrapKind::PmlFull: traps_.pml_full++; break;
            case TrapKind::EptFault: traps_.ept_fault++; break;
            case TrapKind::WpFault: traps_.wp_fault++; break;
            case TrapKind::Other: traps_.other_exits++; break;
        }
        account_.trap_ns += model_->vmtrap_cost_ns;
        stage_drain(vcpu);
    }

    std::uint64_t tlb_flush_cost() const {
        return static_cast<std::uint64_t>(vcpus_) * model_->tlb_flush_cost_ns;
    }

    TlbCharge charge_tlb_flush() {
        TlbCharge c{tlb_flush_cost()};
        account_.tlb_ns += c.ns;
        return c;
    }

    // Spec-facing bit clears: charge one TLB flush per affected VCPU when the
    // set is non-empty. Composite callers (scanner windows) use the raw
    // variants and charge a single combined flush.
    TlbCharge clear_guest_ad(const std::vector<PageIndex>& pages) {
        if (pages.empty()) return {};
        for (PageIndex p : pages) raw_clear_guest_ad(p);
        return charge_tlb_flush();
    }

    TlbCharge clear_ept_gpt_dirty(const std::vector<GptPageId>& gpts) {
        if (gpts.empty()) return {};
        for (GptPageId g : gpts) raw_clear_gpt_dirty(g);
        return charge_tlb_flush();
    }

    void raw_clear_guest_ad(PageIndex p) {
        pages_[p].flags &= static_cast<std::uint8_t>(~(PageState::kGuestA | PageState::kGuestD));
    }
    void raw_clear_gpt_dirty(GptPageId g) { gpt_ept_dirty_[g] = 0; }
    bool gpt_dirty(GptPageId g) const { return gpt_ept_dirty_[g] != 0; }

    // Clears the EPT dirty bit of a data page so PML tracks writes to it
    // (migration phase 1).
    void arm_data_dirty_tracking(PageIndex p) {
        pages_[p].flags &= static_cast<std::uint8_t>(~PageState::kEptDataDirty);
    }

    // Drains one VCPU buffer: returns logged GPT pages, routes logged data
    // pages to the migration dirty log. The result is duplicate-free by the
    // 0->1 logging rule.
    std::vector<GptPageId> drain_pml(VcpuId vcpu) {
        std::vector<GptPageId> gpts;
        auto& buf = pml_[vcpu];
        for (std::uint64_t entry : buf) {
            if (is_gpt(entry)) gpts.push_back(unpack(entry));
            else migration_dirty_log_.push_back(unpack(entry));
        }
        buf.clear();
#ifndef NDEBUG
        auto sorted = gpts;
        std::sort(sorted.begin(), sorted.end());
        assert(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
#endif
        return gpts;
    }

    std::size_t pml_size(VcpuId vcpu) const { return pml_[vcpu].size(); }

    // Union of mid-window opportunistic drains and the live buffers; empties
    // both. Entries are unique per window by the 0->1 rule.
    std::vector<GptPageId> collect_logged_gpts() {
        std::vector<GptPageId> logged;
        logged.swap(staging_gpt_);
        for (VcpuId v = 0; v < vcpus_; ++v) {
            auto more = drain_pml(v);
            logged.insert(logged.end(), more.begin(), more.end());
        }
        return logged;
    }

    void stage_drain(VcpuId vcpu) {
        auto gpts = drain_pml(vcpu);
        staging_gpt_.insert(staging_gpt_.end(), gpts.begin(), gpts.end());
    }

    std::vector<PageIndex>& migration_dirty_log() { return migration_dirty_log_; }

    void discard_pml_state() {
        staging_gpt_.clear();
        migration_dirty_log_.clear();
        for (auto& buf : pml_) buf.clear();
    }

private:
    static std::uint64_t pack_gpt(GptPageId g) { return g | (1ULL << 63); }
    static std::uint64_t pack_data(PageIndex p) { return p; }
    static bool is_gpt(std::uint64_t entry) { return entry >> 63; }
    static std::uint64_t unpack(std::uint64_t entry) { return entry & ~(1ULL << 63); }

    // Returns the number of traps raised (0 or 1: a log-full exit drains the
    // buffer to staging, then the entry is logged).
    std::uint32_t pml_log(VcpuId vcpu, std::uint64_t entry, AccessOutcome& out) {
        auto& buf = pml_[vcpu];
        std::uint32_t raised = 0;
        if (buf.size() >= kPmlBufferCapacity) {
            charge_trap(TrapKind::PmlFull, vcpu);
            out.overhead_ns += model_->vmtrap_cost_ns;
            raised = 1;
        }
        buf.push_back(entry);
        return raised;
    }

    PageGeometry geom_;
    const CostModel* model_;
    std::uint32_t vcpus_;
    std::vector<PageState> pages_;
    std::vector<std::uint8_t> gpt_ept_dirty_;
    std::vector<std::vector<std::uint64_t>> pml_;
    std::vector<GptPageId> staging_gpt_;
    std::vector<PageIndex> migration_dirty_log_;
    TrapCounters traps_;
    ChargeAccount account_;
    std::uint64_t dram_resident_ = 0;
    std::uint64_t nvm_resident_ = 0;
};

}  // namespace hmmv
