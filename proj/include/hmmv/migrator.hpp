// Page migration protocols over simulated time.
//
//   PML    parallel copy; EPT data-dirty bits of the in-flight slice are
//          cleared so writes land in the PML log; dirty pages are recopied
//          after unmap; new EPT mappings are filled actively (warm), so
//          re-accesses neither fault nor log. Traps: only PML-full events.
//   WP     the whole batch is write-protected up front; every write to a
//          protected page raises one wp_fault and marks it dirty; parallel
//          copy; pages dirtied inside their copy window are recopied;
//          mappings are not pre-filled, so the first re-access per migrated
//          page EPT-faults.
//   LINUX  serial copy; each slice is unmapped before copying and every
//          page remaps at its own copy completion; accesses to unmapped
//          pages stall until the remap; mappings are not pre-filled.
//
// Batches run as slices of at most batch_cap pages in flight, sequentially.
// Workload accesses to pages that are unmapped mid-protocol are deferred by
// the engine and replayed at remap time with the wait charged as pause.
//
// total_pause_time sums the stall every workload access experienced: remap
// waits plus trap-handling stalls (wp faults, EPT refaults). Remap waits are
// also charged to the VM's pause account; trap stalls are already billed as
// trap overhead and appear only in the report to avoid double counting.
#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <deque>
#include <limits>
#include <unordered_map>
#include <vector>

#include "hmmv/common.hpp"
#include "hmmv/cost_model.hpp"
#include "hmmv/mmu.hpp"

namespace hmmv {

inline constexpr SimTime kNoTime = std::numeric_limits<SimTime>::max();

enum class MigrationProtocol : std::uint8_t { Pml, Wp, Linux };

inline const char* protocol_name(MigrationProtocol p) {
    switch (p) {
        case MigrationProtocol::Pml: return "pml";
        case MigrationProtocol::Wp: return "wp";
        default: return "linux";
    }
}

struct MigrationBatch {
    std::vector<PageIndex> pages;
    Tier src = Tier::Nvm;
    Tier dst = Tier::Dram;
    MigrationProtocol protocol = MigrationProtocol::Pml;
    std::uint32_t threads = 4;
};

struct MigrationReport {
    std::uint64_t pages_moved = 0;
    std::uint64_t dirty_recopied = 0;
    std::vector<PageIndex> recopied_pages;  // sorted within each slice
    std::uint64_t truncated_pages = 0;  // dropped for lack of free destination frames
    TrapCounters traps;                 // delta over the batch interval
    std::uint64_t copy_time_ns = 0;     // primary copy phases only
    std::uint64_t recopy_time_ns = 0;
    std::uint64_t total_pause_time_ns = 0;
    std::uint64_t bytes = 0;            // moved + recopied bytes
    SimTime started = 0;
    SimTime finished = 0;
    MigrationProtocol protocol = MigrationProtocol::Pml;
    Tier src = Tier::Nvm;
    Tier dst = Tier::Dram;
};

// Host-wide free frame pool, shared by every VM's engine.
struct HostFrames {
    std::uint64_t free[2] = {0, 0};

    std::uint64_t& free_of(Tier t) { return free[static_cast<int>(t)]; }
    std::uint64_t free_of(Tier t) const { return free[static_cast<int>(t)]; }
};

// Cross-VM migration activity, used for bandwidth contention on workload
// accesses while any batch is in flight on a tier.
struct MigrationShared {
    int active[2] = {0, 0};
    double multiplier = 1.5;

    void fill_contention(double out[2]) const {
        out[0] = active[0] > 0 ? multiplier : 1.0;
        out[1] = active[1] > 0 ? multiplier : 1.0;
    }
};

class MigrationEngine {
    enum class Phase : std::uint8_t { None, Queued, InCopy, AwaitRemap };
    enum class Stage : std::uint8_t { Copying, Recopying };

public:
    MigrationEngine(const CostModel& model, PageGeometry geom, HostFrames& frames,
                    MigrationShared& shared, std::uint32_t batch_cap = 512)
        : model_(&model), geom_(geom), frames_(&frames), shared_(&shared),
          batch_cap_(batch_cap == 0 ? 1 : batch_cap) {}

    bool idle() const { return !active_ && queue_.empty(); }

    void enqueue_batch(MigrationBatch batch, VmMmu& mmu, SimTime now) {
        if (batch.threads == 0) throw ConfigError("migration batch needs at least one thread");
        if (batch.pages.empty()) {
            MigrationReport r;
            r.protocol = batch.protocol;
            r.src = batch.src;
            r.dst = batch.dst;
            r.started = r.finished = now;
            completed_.push_back(r);
            return;
        }
        for (PageIndex p : batch.pages) {
            const PageState& ps = mmu.page(p);
            if (!ps.mapped() || ps.tier() != batch.src)
                throw InvariantBreach("migrator", now,
                                      "batch page " + std::to_string(p) + " not mapped on source tier");
        }
        queue_.push_back(std::move(batch));
        if (!active_) start_next_batch(mmu, now);
    }

    SimTime next_control_time() const { return active_ ? next_time_ : kNoTime; }

    // Processes every phase completion at or before `now`; lazily remaps
    // serially-copied pages and replays their waiters.
    void advance(SimTime now, VmMmu& mmu) {
        while (active_) {
            if (run_batch_.protocol == MigrationProtocol::Linux) linux_remap_sweep(now, mmu);
            if (next_time_ == kNoTime || next_time_ > now) break;
            const SimTime t = next_time_;
            if (stage_ == Stage::Copying) finish_copy(t, mmu);
            else finish_recopy(t, mmu);
        }
    }

    // Pre-access hook; returns true when the engine consumed the event
    // (deferred until a remap). Must run before the unfilled-EPT check.
    bool on_access(const AccessEvent& e, VmMmu& mmu) {
        if (page_phase_.empty()) return false;
        if (page_phase_[e.page] == Phase::AwaitRemap) {
            waiters_[e.page].push_back(e);
            deferred_count_++;
            return true;
        }
        PageState& ps = mmu.page(e.page);
        if ((ps.flags & PageState::kWriteProtected) && e.kind == AccessKind::Write) {
            // One trap per write; the write then proceeds against the old
            // frame and the page is marked dirty for the recopy filter.
            mmu.charge_trap(TrapKind::WpFault, e.vcpu);
            report_pause(model_->vmtrap_cost_ns);
            ps.flags |= PageState::kMigDirty;
        }
        return false;
    }

    std::vector<MigrationReport>& completed_reports() { return completed_; }

    std::uint64_t take_period_bytes() {
        const std::uint64_t b = period_bytes_;
        period_bytes_ = 0;
        return b;
    }

    // Destination frames taken from the host pool but not yet holding a
    // remapped page; part of the global conservation identity.
    std::uint64_t reserved_frames(Tier t) const {
        return active_ && run_batch_.dst == t ? reserved_ : 0;
    }

private:
    void start_next_batch(VmMmu& mmu, SimTime now) {
        run_batch_ = std::move(queue_.front());
        queue_.pop_front();
        run_ = MigrationReport{};
        run_.protocol = run_batch_.protocol;
        run_.src = run_batch_.src;
        run_.dst = run_batch_.dst;
        run_.started = now;
        traps_at_start_ = mmu.traps();
        if (page_phase_.size() != mmu.total_pages()) page_phase_.assign(mmu.total_pages(), Phase::None);
        for (PageIndex p : run_batch_.pages) page_phase_[p] = Phase::Queued;
        if (run_batch_.protocol == MigrationProtocol::Wp) {
            for (PageIndex p : run_batch_.pages) mmu.page(p).flags |= PageState::kWriteProtected;
            mmu.charge_tlb_flush();
        }
        batch_cursor_ = 0;
        active_ = true;
        shared_->active[static_cast<int>(run_batch_.src)]++;
        shared_->active[static_cast<int>(run_batch_.dst)]++;
        start_slice(mmu, now);
    }

    void start_slice(VmMmu& mmu, SimTime now) {
        std::uint64_t remaining = run_batch_.pages.size() - batch_cursor_;
        // The raw serial path is one whole-list system call with no in-flight
        // cap; only the parallel protocols pace themselves in slices.
        std::uint64_t take = run_batch_.protocol == MigrationProtocol::Linux
                                 ? remaining
                                 : std::min<std::uint64_t>(remaining, batch_cap_);
        std::uint64_t& dst_free = frames_->free_of(run_batch_.dst);
        if (take > dst_free) {
            // Not enough pre-applied frames: drop the tail of the plan.
            run_.truncated_pages += remaining - dst_free;
            take = dst_free;
            for (std::uint64_t i = batch_cursor_ + take; i < run_batch_.pages.size(); ++i) {
                const PageIndex p = run_batch_.pages[i];
                page_phase_[p] = Phase::None;
                mmu.page(p).flags &= static_cast<std::uint8_t>(~PageState::kWriteProtected);
            }
            run_batch_.pages.resize(batch_cursor_ + take);
        }
        if (take == 0) {
            finish_batch(now, mmu);
            return;
        }
        slice_.assign(run_batch_.pages.begin() + static_cast<std::ptrdiff_t>(batch_cursor_),
                      run_batch_.pages.begin() + static_cast<std::ptrdiff_t>(batch_cursor_ + take));
        batch_cursor_ += take;
        dst_free -= take;
        reserved_ += take;

        const std::uint32_t threads =
            run_batch_.protocol == MigrationProtocol::Linux ? 1 : run_batch_.threads;
        slice_copy_start_ = now;
        const std::uint64_t copy_ns =
            transfer_time(take * geom_.page_size, run_batch_.src, run_batch_.dst, threads, *model_);
        slice_copy_end_ = now + copy_ns;
        run_.copy_time_ns += copy_ns;

        switch (run_batch_.protocol) {
            case MigrationProtocol::Pml:
                for (PageIndex p : slice_) {
                    mmu.arm_data_dirty_tracking(p);  // writes now hit the PML log
                    mmu.page(p).flags &= static_cast<std::uint8_t>(~PageState::kMigDirty);
                    page_phase_[p] = Phase::InCopy;
                }
                mmu.charge_tlb_flush();
                break;
            case MigrationProtocol::Wp:
                for (PageIndex p : slice_) {
                    mmu.page(p).flags &= static_cast<std::uint8_t>(~PageState::kMigDirty);
                    page_phase_[p] = Phase::InCopy;
                }
                break;
            case MigrationProtocol::Linux:
                // Unmap before copy; pages come back one by one as the serial
                // copy passes them.
                for (PageIndex p : slice_) {
                    mmu.unmap_page(p);
                    page_phase_[p] = Phase::AwaitRemap;
                }
                frames_->free_of(run_batch_.src) += take;
                mmu.charge_tlb_flush();
                linux_cursor_ = 0;
                break;
        }
        stage_ = Stage::Copying;
        next_time_ = slice_copy_end_;
    }

    void linux_remap_sweep(SimTime now, VmMmu& mmu) {
        if (stage_ != Stage::Copying) return;
        while (linux_cursor_ < slice_.size()) {
            const SimTime remap_t = linux_remap_time(linux_cursor_);
            if (remap_t > now) break;
            remap_and_replay(slice_[linux_cursor_], remap_t, mmu, /*warm_fill=*/false);
            linux_cursor_++;
        }
    }

    SimTime linux_remap_time(std::uint64_t index) const {
        return slice_copy_start_ + transfer_time((index + 1) * geom_.page_size, run_batch_.src,
                                                 run_batch_.dst, 1, *model_);
    }

    void finish_copy(SimTime t, VmMmu& mmu) {
        if (run_batch_.protocol == MigrationProtocol::Linux) {
            linux_remap_sweep(t, mmu);
            assert(linux_cursor_ == slice_.size());
            account_moved(slice_.size());
            slice_done(t, mmu);
            return;
        }

        // Identify pages dirtied inside the copy window, unmap everything,
        // remap clean pages immediately.
        dirty_.clear();
        if (run_batch_.protocol == MigrationProtocol::Pml) {
            for (VcpuId v = 0; v < mmu.vcpus(); ++v) mmu.stage_drain(v);
            auto& log = mmu.migration_dirty_log();
            for (PageIndex p : log)
                if (page_phase_[p] == Phase::InCopy) dirty_.push_back(p);
            log.clear();
            std::sort(dirty_.begin(), dirty_.end());
            for (PageIndex p : dirty_) mmu.page(p).flags |= PageState::kMigDirty;
        } else {
            for (PageIndex p : slice_)
                if (mmu.page(p).flags & PageState::kMigDirty) dirty_.push_back(p);
        }
        const bool warm = run_batch_.protocol == MigrationProtocol::Pml;
        for (PageIndex p : slice_) {
            mmu.unmap_page(p);
            page_phase_[p] = Phase::AwaitRemap;
        }
        frames_->free_of(run_batch_.src) += slice_.size();
        for (PageIndex p : slice_) {
            if (mmu.page(p).flags & PageState::kMigDirty) continue;  // remapped after recopy
            remap_and_replay(p, t, mmu, warm);
        }
        account_moved(slice_.size());

        if (dirty_.empty()) {
            slice_done(t, mmu);
            return;
        }
        const std::uint64_t recopy_ns = transfer_time(dirty_.size() * geom_.page_size, run_batch_.src,
                                                      run_batch_.dst, run_batch_.threads, *model_);
        run_.recopy_time_ns += recopy_ns;
        stage_ = Stage::Recopying;
        next_time_ = t + recopy_ns;
    }

    void finish_recopy(SimTime t, VmMmu& mmu) {
        const bool warm = run_batch_.protocol == MigrationProtocol::Pml;
        for (PageIndex p : dirty_) {
            mmu.page(p).flags &= static_cast<std::uint8_t>(~PageState::kMigDirty);
            remap_and_replay(p, t, mmu, warm);
        }
        run_.dirty_recopied += dirty_.size();
        run_.recopied_pages.insert(run_.recopied_pages.end(), dirty_.begin(), dirty_.end());
        run_.bytes += dirty_.size() * geom_.page_size;
        period_bytes_ += dirty_.size() * geom_.page_size;
        dirty_.clear();
        slice_done(t, mmu);
    }

    void account_moved(std::uint64_t n) {
        run_.pages_moved += n;
        run_.bytes += n * geom_.page_size;
        period_bytes_ += n * geom_.page_size;
    }

    void slice_done(SimTime t, VmMmu& mmu) {
        if (batch_cursor_ < run_batch_.pages.size()) {
            start_slice(mmu, t);
            return;
        }
        finish_batch(t, mmu);
    }

    void finish_batch(SimTime t, VmMmu& mmu) {
        assert(deferred_count_ == 0);
        assert(reserved_ == 0);
        run_.finished = t;
        run_.traps = mmu.traps() - traps_at_start_;
        completed_.push_back(run_);
        shared_->active[static_cast<int>(run_batch_.src)]--;
        shared_->active[static_cast<int>(run_batch_.dst)]--;
        active_ = false;
        next_time_ = kNoTime;
        if (!queue_.empty()) start_next_batch(mmu, t);
    }

    void remap_and_replay(PageIndex p, SimTime remap_t, VmMmu& mmu, bool warm_fill) {
        mmu.remap_page(p, run_batch_.dst, warm_fill);
        reserved_--;
        mmu.page(p).flags &=
            static_cast<std::uint8_t>(~(PageState::kWriteProtected | PageState::kMigDirty));
        page_phase_[p] = Phase::None;
        auto it = waiters_.find(p);
        if (it == waiters_.end()) return;
        for (const AccessEvent& e : it->second) {
            const std::uint64_t wait = remap_t - e.time;
            mmu.account().pause_ns += wait;
            report_pause(wait);
            resolve_deferred(e, mmu);
            deferred_count_--;
        }
        waiters_.erase(it);
    }

    // Replays a deferred access at remap time: first touch of an unfilled
    // mapping raises the EPT fault here.
    void resolve_deferred(const AccessEvent& e, VmMmu& mmu) {
        PageState& ps = mmu.page(e.page);
        if (ps.flags & PageState::kEptUnfilled) {
            mmu.charge_trap(TrapKind::EptFault, e.vcpu);
            report_pause(model_->vmtrap_cost_ns);
            ps.flags &= static_cast<std::uint8_t>(~PageState::kEptUnfilled);
        }
        double contention[2];
        shared_->fill_contention(contention);
        mmu.simulate_access(e, contention);
    }

    void report_pause(std::uint64_t ns) { run_.total_pause_time_ns += ns; }

    const CostModel* model_;
    PageGeometry geom_;
    HostFrames* frames_;
    MigrationShared* shared_;
    std::uint32_t batch_cap_;

    std::deque<MigrationBatch> queue_;
    MigrationBatch run_batch_;
    MigrationReport run_;
    TrapCounters traps_at_start_;
    std::vector<MigrationReport> completed_;
    std::vector<Phase> page_phase_;
    std::unordered_map<PageIndex, std::vector<AccessEvent>> waiters_;

    std::vector<PageIndex> slice_;
    std::vector<PageIndex> dirty_;
    std::uint64_t batch_cursor_ = 0;
    std::uint64_t linux_cursor_ = 0;
    std::uint64_t reserved_ = 0;
    std::uint64_t deferred_count_ = 0;
    SimTime slice_copy_start_ = 0;
    SimTime slice_copy_end_ = 0;
    SimTime next_time_ = kNoTime;
    Stage stage_ = Stage::Copying;
    bool active_ = false;
    std::uint64_t period_bytes_ = 0;
};

}  // namespace hmmv
