// Reference policies: the full-EPT scanner, fixed-threshold hot-set
// selection, the two-list (active/inactive) LRU classifier, DRAM-preferred
// first-touch placement, and a direct-mapped DRAM cache in front of NVM.
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "hmmv/classifier.hpp"
#include "hmmv/common.hpp"
#include "hmmv/mmu.hpp"
#include "hmmv/tracker.hpp"
#include "hmmv/trace.hpp"

namespace hmmv {

// Scans every mapped page every window, PML unused. Costs scale with the
// mapping, not the working set: full examination plus a full TLB flush and
// an A/D re-set charge for every touched page every window.
class EptScanner : public AccessSensor {
public:
    explicit EptScanner(std::uint32_t windows_per_epoch) : windows_per_epoch_(windows_per_epoch) {}

    void init_epoch(VmMmu& mmu) override {
        for (PageIndex p = 0; p < mmu.total_pages(); ++p) mmu.raw_clear_guest_ad(p);
        mmu.charge_tlb_flush();
        for (PageIndex p : touched_) {
            PageState& ps = mmu.page(p);
            ps.epoch_reads = 0;
            ps.epoch_writes = 0;
        }
        touched_.clear();
        window_in_epoch_ = 0;
        epoch_active_ = true;
    }

    WindowReport end_window(VmMmu& mmu) override {
        if (!epoch_active_)
            throw InvariantBreach("ept_scanner", 0, "end_window without init_epoch");
        ++window_in_epoch_;
        WindowReport report;
        report.gpt_pages_scanned = mmu.total_gpt_pages();
        for (PageIndex p = 0; p < mmu.total_pages(); ++p) {
            PageState& ps = mmu.page(p);
            if (!ps.mapped()) continue;
            report.data_pages_examined++;
            const bool a = ps.guest_a();
            const bool d = ps.guest_d();
            if (!a && !d) continue;
            if (ps.epoch_reads == 0 && ps.epoch_writes == 0) touched_.push_back(p);
            if (a && ps.epoch_reads < 0xffff) ps.epoch_reads++;
            if (d && ps.epoch_writes < 0xffff) ps.epoch_writes++;
            report.observations.push_back({p, a, d});
            mmu.raw_clear_guest_ad(p);
        }
        mmu.charge_tlb_flush();
        return report;
    }

    std::vector<PageCount> epoch_counts(const VmMmu& mmu) const override {
        std::vector<PageCount> counts;
        counts.reserve(touched_.size());
        for (PageIndex p : touched_) {
            const PageState& ps = mmu.page(p);
            counts.push_back({p, ps.epoch_reads, ps.epoch_writes});
        }
        std::sort(counts.begin(), counts.end(),
                  [](const PageCount& a, const PageCount& b) { return a.page < b.page; });
        return counts;
    }

    std::uint32_t windows_completed() const override { return window_in_epoch_; }
    bool epoch_done() const { return window_in_epoch_ >= windows_per_epoch_; }

private:
    std::uint32_t windows_per_epoch_;
    std::uint32_t window_in_epoch_ = 0;
    bool epoch_active_ = false;
    std::vector<PageIndex> touched_;
};

// Hot set by threshold alone, no capacity awareness and no ranking.
inline std::vector<PageIndex> fixed_threshold_classify(const std::vector<PageCount>& counts,
                                                       Degree threshold,
                                                       const ClassifierConfig& cfg) {
    std::vector<PageIndex> hot;
    for (const PageCount& c : counts)
        if (page_degree(c.reads, c.writes, cfg) >= threshold) hot.push_back(c.page);
    return hot;
}

// Active/inactive LRU lists. A referenced inactive page moves to the active
// head immediately; each aging tick trims the active list down to capacity,
// pushing its tail onto the inactive head. Hot set = active list truncated
// to capacity.
class TwoListClassifier {
public:
    TwoListClassifier(std::uint64_t total_pages, std::uint64_t capacity_pages)
        : capacity_(capacity_pages), node_(total_pages) {}

    void update(PageIndex page, bool accessed) {
        if (!accessed) return;
        Node& n = node_[page];
        if (n.where == Where::Active) {
            unlink(active_, page);
        } else if (n.where == Where::Inactive) {
            unlink(inactive_, page);
        }
        push_head(active_, page);
        n.where = Where::Active;
    }

    void age() {
        while (active_.size > capacity_) {
            const PageIndex tail = active_.tail;
            unlink(active_, tail);
            push_head(inactive_, tail);
            node_[tail].where = Where::Inactive;
        }
    }

    std::vector<PageIndex> classify() const {
        std::vector<PageIndex> hot;
        hot.reserve(std::min<std::uint64_t>(capacity_, active_.size));
        PageIndex p = active_.head;
        for (std::uint64_t i = 0; i < capacity_ && p != kInvalidPage; ++i, p = node_[p].next)
            hot.push_back(p);
        return hot;
    }

    bool is_active(PageIndex p) const { return node_[p].where == Where::Active; }
    bool is_inactive(PageIndex p) const { return node_[p].where == Where::Inactive; }
    std::uint64_t active_size() const { return active_.size; }

    // Demotion candidates, least recently promoted first.
    std::vector<PageIndex> inactive_from_tail() const {
        std::vector<PageIndex> out;
        out.reserve(inactive_.size);
        for (PageIndex p = inactive_.tail; p != kInvalidPage; p = node_[p].prev) out.push_back(p);
        return out;
    }

private:
    enum class Where : std::uint8_t { Nowhere, Active, Inactive };
    struct Node {
        PageIndex prev = kInvalidPage;
        PageIndex next = kInvalidPage;
        Where where = Where::Nowhere;
    };
    struct List {
        PageIndex head = kInvalidPage;
        PageIndex tail = kInvalidPage;
        std::uint64_t size = 0;
    };

    void unlink(List& list, PageIndex p) {
        Node& n = node_[p];
        if (n.prev != kInvalidPage) node_[n.prev].next = n.next; else list.head = n.next;
        if (n.next != kInvalidPage) node_[n.next].prev = n.prev; else list.tail = n.prev;
        n.prev = n.next = kInvalidPage;
        list.size--;
    }

    void push_head(List& list, PageIndex p) {
        Node& n = node_[p];
        n.prev = kInvalidPage;
        n.next = list.head;
        if (list.head != kInvalidPage) node_[list.head].prev = p; else list.tail = p;
        list.head = p;
        list.size++;
    }

    std::uint64_t capacity_;
    std::vector<Node> node_;
    List active_;
    List inactive_;
};

// Static DRAM-preferred first-touch placement: pages fill DRAM in first
// access order until the quota, the rest land on NVM, nothing migrates.
// Pure function of the trace's first-touch order.
inline std::vector<Tier> numa_b_place(const Trace& trace, std::uint64_t dram_quota_pages) {
    std::vector<Tier> placement(trace.total_pages, Tier::Nvm);
    std::vector<std::uint8_t> seen(trace.total_pages, 0);
    std::uint64_t dram_used = 0;
    for (const AccessEvent& e : trace.events) {
        if (seen[e.page]) continue;
        seen[e.page] = 1;
        if (dram_used < dram_quota_pages) {
            placement[e.page] = Tier::Dram;
            dram_used++;
        }
    }
    return placement;
}

struct MmCacheConfig {
    std::uint64_t cache_frames = 0;   // all of DRAM
    std::uint64_t block_size = 4096;  // bytes; page-granular by default

    void validate() const {
        if (cache_frames == 0) throw ConfigError("mm_cache: cache_frames must be > 0");
        if (block_size == 0) throw ConfigError("mm_cache: block_size must be > 0");
    }
};

struct MmAccessResult {
    bool hit = false;
    bool victim_writeback = false;
    std::uint64_t latency_ns = 0;
};

struct MmCacheStats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t writebacks = 0;

    double miss_ratio() const {
        const std::uint64_t n = hits + misses;
        return n == 0 ? 0.0 : static_cast<double>(misses) / static_cast<double>(n);
    }
};

// Direct-mapped DRAM cache in front of NVM, shared across co-running VMs:
// both VMs' guest-physical blocks map by block index modulo the frame
// count, so overlapping footprints conflict.
class MmCache {
public:
    MmCache(MmCacheConfig cfg, const CostModel& model) : cfg_(cfg), model_(&model) {
        cfg_.validate();
        frames_.assign(cfg_.cache_frames, Frame{});
        fill_ns_ = transfer_time(cfg_.block_size, Tier::Nvm, Tier::Dram, 1, *model_);
        writeback_ns_ = transfer_time(cfg_.block_size, Tier::Dram, Tier::Nvm, 1, *model_);
    }

    MmAccessResult access(VmId vm, PageIndex block, AccessKind kind) {
        MmAccessResult r;
        Frame& f = frames_[block % cfg_.cache_frames];
        const std::uint64_t tag = (static_cast<std::uint64_t>(vm) << 48) | block;
        if (f.valid && f.tag == tag) {
            r.hit = true;
            r.latency_ns = access_latency(kind, Tier::Dram, *model_);
            if (kind == AccessKind::Write) f.dirty = true;
            stats_.hits++;
            return r;
        }
        stats_.misses++;
        r.latency_ns = access_latency(kind, Tier::Nvm, *model_) + fill_ns_;
        if (f.valid && f.dirty) {
            r.victim_writeback = true;
            r.latency_ns += writeback_ns_;
            stats_.writebacks++;
        }
        f.valid = true;
        f.dirty = kind == AccessKind::Write;
        f.tag = tag;
        return r;
    }

    const MmCacheStats& stats() const { return stats_; }

private:
    struct Frame {
        std::uint64_t tag = 0;
        bool valid = false;
        bool dirty = false;
    };

    MmCacheConfig cfg_;
    const CostModel* model_;
    std::vector<Frame> frames_;
    MmCacheStats stats_;
    std::uint64_t fill_ns_ = 0;
    std::uint64_t writeback_ns_ = 0;
};

}  // namespace hmmv
