// PML-based GPT scanner with the multi-level do-not-disturb queue, per-epoch
// read/write counting and the clock-switch feedback gate.
//
// Window machine, per page:
//  - level 0: bits are examined and cleared every window. Promotion to
//    level 1 requires bits found set in two consecutive windows (set,
//    cleared, set again).
//  - level x >= 1: the page sits in DND for 2^(x-1) windows. Its bits stay
//    set and it is assumed continuously visited (one read and one write
//    observation per window, so DND pages never undercount). In the window
//    where the DND span ends the bits are cleared; the following window
//    decides: observed -> level+1 (capped), not observed -> level-1, and a
//    level >= 1 survivor re-enters DND at the shorter span.
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "hmmv/common.hpp"
#include "hmmv/mmu.hpp"

namespace hmmv {

struct TrackerConfig {
    std::uint64_t mws_ns = 600'000'000;                       // monitoring window size
    std::uint32_t windows_per_epoch = 8;
    std::uint32_t max_level = 7;
    std::uint64_t clock_period_ns = 60'000'000'000;
    std::uint64_t migration_threshold_bytes = 256ull << 20;
    std::uint32_t counter_limit = 3;

    void validate() const {
        if (mws_ns == 0) throw ConfigError("tracker: mws must be > 0");
        if (windows_per_epoch < 1) throw ConfigError("tracker: windows_per_epoch must be >= 1");
        if (max_level < 1 || max_level > 15)
            throw ConfigError("tracker: max_level must be in [1, 15]");
        if (counter_limit < 1) throw ConfigError("tracker: counter_limit must be >= 1");
    }
};

struct PageObservation {
    PageIndex page;
    bool read_seen;
    bool write_seen;
};

struct WindowReport {
    std::uint64_t gpt_pages_scanned = 0;
    std::uint64_t data_pages_examined = 0;
    std::vector<PageObservation> observations;  // pages recorded this window (DND pages excluded)
};

struct PageCount {
    PageIndex page;
    std::uint32_t reads;
    std::uint32_t writes;
};

// Feedback gate over tracking. While tracking runs, a quiet period
// (migrated < threshold) pushes the counter toward the limit and an active
// period resets it; at the limit tracking turns off. While off, each tick
// counts down and tracking resumes at zero, so a placement change is picked
// up within counter_limit periods.
class ClockSwitch {
public:
    ClockSwitch(std::uint64_t migration_threshold_bytes, std::uint32_t counter_limit)
        : threshold_(migration_threshold_bytes), limit_(counter_limit) {}

    bool tick(std::uint64_t migrated_bytes_last_period) {
        if (enabled_) {
            if (migrated_bytes_last_period < threshold_) {
                counter_ = std::min(counter_ + 1, limit_);
                if (counter_ >= limit_) enabled_ = false;
            } else {
                counter_ = 0;
            }
        } else {
            if (counter_ > 0) counter_--;
            if (counter_ == 0) enabled_ = true;
        }
        return enabled_;
    }

    bool enabled() const { return enabled_; }
    std::uint32_t counter() const { return counter_; }

private:
    std::uint64_t threshold_;
    std::uint32_t limit_;
    std::uint32_t counter_ = 0;
    bool enabled_ = true;
};

// Scanner interface shared with the EPT-scanner baseline.
class AccessSensor {
public:
    virtual ~AccessSensor() = default;
    virtual void init_epoch(VmMmu& mmu) = 0;
    virtual WindowReport end_window(VmMmu& mmu) = 0;
    virtual std::vector<PageCount> epoch_counts(const VmMmu& mmu) const = 0;
    virtual std::uint32_t windows_completed() const = 0;
};

class Tracker : public AccessSensor {
public:
    explicit Tracker(TrackerConfig cfg)
        : cfg_(cfg), clock_(cfg.migration_threshold_bytes, cfg.counter_limit) {
        cfg_.validate();
        const std::uint32_t max_span = 1u << (cfg_.max_level - 1);
        expiry_ring_.resize(max_span + 2);
    }

    const TrackerConfig& config() const { return cfg_; }

    // Clears every guest A/D bit and every GPT-page EPT dirty bit (one
    // combined TLB flush), discards stale PML scanner state and resets all
    // queue/count state. Idempotent.
    void init_epoch(VmMmu& mmu) override {
        for (PageIndex p = 0; p < mmu.total_pages(); ++p) mmu.raw_clear_guest_ad(p);
        for (GptPageId g = 0; g < mmu.total_gpt_pages(); ++g) mmu.raw_clear_gpt_dirty(g);
        mmu.charge_tlb_flush();
        // Route any pending entries first so migration dirty state survives.
        for (VcpuId v = 0; v < mmu.vcpus(); ++v) mmu.stage_drain(v);
        discard_staged_gpts(mmu);
        for (PageIndex p : touched_) {
            PageState& ps = mmu.page(p);
            ps.level = 0;
            ps.dnd_span = 0;
            ps.dnd_expiry_window = 0;
            ps.epoch_reads = 0;
            ps.epoch_writes = 0;
            ps.last_obs_window = 0;
        }
        touched_.clear();
        armed_.clear();
        for (auto& bucket : expiry_ring_) bucket.clear();
        window_in_epoch_ = 0;
        epoch_active_ = true;
    }

    WindowReport end_window(VmMmu& mmu) override {
        if (!epoch_active_)
            throw InvariantBreach("tracker", 0, "end_window without init_epoch");
        const std::uint32_t w = ++window_index_;
        ++window_in_epoch_;
        WindowReport report;

        std::vector<GptPageId> logged = mmu.collect_logged_gpts();
        std::sort(logged.begin(), logged.end());
        report.gpt_pages_scanned = logged.size();

        const std::uint32_t ptes = mmu.geometry().ptes_per_gpt_page;
        bool cleared_anything = !logged.empty();
        for (GptPageId g : logged) {
            const PageIndex begin = static_cast<PageIndex>(g) * ptes;
            const PageIndex end = std::min<PageIndex>(begin + ptes, mmu.total_pages());
            for (PageIndex p = begin; p < end; ++p) {
                PageState& ps = mmu.page(p);
                if (!ps.mapped()) continue;
                report.data_pages_examined++;
                if (ps.dnd_span > 0) continue;  // do-not-disturb: not scanned
                const bool a = ps.guest_a();
                const bool d = ps.guest_d();
                if (!a && !d) continue;
                record(ps, p, a, d);
                report.observations.push_back({p, a, d});
                const std::uint32_t prev = ps.last_obs_window;
                ps.last_obs_window = w;
                if (ps.level == 0) {
                    if (prev + 1 == w && prev != 0) {
                        promote(ps, p, w);  // set again right after its clear
                    } else {
                        mmu.raw_clear_guest_ad(p);
                    }
                }
                // Pages at level >= 1 with dnd_span == 0 are decision-pending;
                // the armed pass below settles them.
            }
            mmu.raw_clear_gpt_dirty(g);
        }

        // Decisions for pages whose DND expired last window.
        for (PageIndex p : armed_) {
            PageState& ps = mmu.page(p);
            if (ps.level == 0 || ps.dnd_span != 0) continue;  // reset since arming
            if (ps.last_obs_window == w) {
                promote(ps, p, w);
            } else {
                ps.level--;
                if (ps.level >= 1) enter_dnd(ps, p, w);
                // bits are already clear either way
            }
        }
        armed_.clear();

        // DND spans ending this window: accrue the assumed observations and
        // clear bits; the next window decides.
        auto& bucket = expiry_ring_[w % expiry_ring_.size()];
        for (PageIndex p : bucket) {
            PageState& ps = mmu.page(p);
            if (ps.dnd_span == 0 || ps.dnd_expiry_window != w) continue;  // stale entry
            accrue(ps, ps.dnd_span);
            ps.dnd_span = 0;
            mmu.raw_clear_guest_ad(p);
            cleared_anything = true;
            armed_.push_back(p);
        }
        bucket.clear();

        if (cleared_anything) mmu.charge_tlb_flush();
        return report;
    }

    // Snapshot of per-page counts for the epoch so far; pages mid-DND get
    // their elapsed assumed observations. Pages absent from the result have
    // (0, 0). Sorted by page index.
    std::vector<PageCount> epoch_counts(const VmMmu& mmu) const override {
        std::vector<PageCount> counts;
        counts.reserve(touched_.size());
        for (PageIndex p : touched_) {
            const PageState& ps = mmu.page(p);
            std::uint32_t reads = ps.epoch_reads;
            std::uint32_t writes = ps.epoch_writes;
            if (ps.dnd_span > 0) {
                const std::uint32_t remaining = ps.dnd_expiry_window - window_index_;
                const std::uint32_t elapsed = ps.dnd_span - std::min<std::uint32_t>(ps.dnd_span, remaining);
                reads += elapsed;
                writes += elapsed;
            }
            counts.push_back({p, reads, writes});
        }
        std::sort(counts.begin(), counts.end(),
                  [](const PageCount& a, const PageCount& b) { return a.page < b.page; });
        return counts;
    }

    std::uint32_t windows_completed() const override { return window_in_epoch_; }
    bool epoch_done() const { return window_in_epoch_ >= cfg_.windows_per_epoch; }

    // Clock-switch feedback, once per clock period.
    bool clock_tick(std::uint64_t migrated_bytes_last_period) {
        return clock_.tick(migrated_bytes_last_period);
    }

    bool tracking_enabled() const { return clock_.enabled(); }
    std::uint32_t clock_counter() const { return clock_.counter(); }

    // Highest level each page reached this epoch; test/telemetry hook.
    std::uint8_t max_level_reached(PageIndex p) const {
        return p < max_level_reached_.size() ? max_level_reached_[p] : 0;
    }

    void enable_level_telemetry(std::uint64_t total_pages) {
        max_level_reached_.assign(total_pages, 0);
    }

private:
    void record(PageState& ps, PageIndex p, bool read_seen, bool write_seen) {
        if (ps.epoch_reads == 0 && ps.epoch_writes == 0) touched_.push_back(p);
        if (read_seen && ps.epoch_reads < 0xffff) ps.epoch_reads++;
        if (write_seen && ps.epoch_writes < 0xffff) ps.epoch_writes++;
    }

    void accrue(PageState& ps, std::uint32_t windows) {
        ps.epoch_reads = static_cast<std::uint16_t>(std::min<std::uint32_t>(ps.epoch_reads + windows, 0xffff));
        ps.epoch_writes = static_cast<std::uint16_t>(std::min<std::uint32_t>(ps.epoch_writes + windows, 0xffff));
    }

    void promote(PageState& ps, PageIndex p, std::uint32_t w) {
        ps.level = static_cast<std::uint8_t>(std::min<std::uint32_t>(ps.level + 1, cfg_.max_level));
        if (!max_level_reached_.empty() && ps.level > max_level_reached_[p])
            max_level_reached_[p] = ps.level;
        enter_dnd(ps, p, w);  // bits stay set for the whole span
    }

    void enter_dnd(PageState& ps, PageIndex p, std::uint32_t w) {
        const std::uint32_t span = 1u << (ps.level - 1);
        ps.dnd_span = static_cast<std::uint16_t>(span);
        ps.dnd_expiry_window = w + span;
        expiry_ring_[ps.dnd_expiry_window % expiry_ring_.size()].push_back(p);
    }

    void discard_staged_gpts(VmMmu& mmu) { mmu.collect_logged_gpts(); }

    TrackerConfig cfg_;
    ClockSwitch clock_;
    std::vector<PageIndex> touched_;
    std::vector<PageIndex> armed_;
    std::vector<std::vector<PageIndex>> expiry_ring_;
    std::vector<std::uint8_t> max_level_reached_;
    std::uint32_t window_index_ = 0;   // monotone across epochs
    std::uint32_t window_in_epoch_ = 0;
    bool epoch_active_ = false;
};

}  // namespace hmmv
