// The deterministic event loop: merges per-VM traces in global time order,
// fires window/epoch/clock/pool boundaries, routes accesses through the MMU
// and any in-flight migration, and assembles the run report. A pure-DRAM
// replay of the same traces provides the slowdown baseline.
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hmmv/baselines.hpp"
#include "hmmv/classifier.hpp"
#include "hmmv/common.hpp"
#include "hmmv/cost_model.hpp"
#include "hmmv/migrator.hpp"
#include "hmmv/mmu.hpp"
#include "hmmv/pool.hpp"
#include "hmmv/report.hpp"
#include "hmmv/scenario.hpp"
#include "hmmv/tracker.hpp"
#include "hmmv/trace.hpp"
#include "hmmv/workload.hpp"

namespace hmmv {

class Simulation {
public:
    explicit Simulation(const Scenario& sc) : sc_(sc) {
        if (sc_.policy.kind == PolicyKind::MmCache)
            for (VmConfig& vm : sc_.vms) vm.placement = InitialPlacement::AllNvm;
        sc_.validate();
        shared_.multiplier = sc_.cost.migration_contention_multiplier;
        host_.free[0] = sc_.total_dram_pages;
        host_.free[1] = sc_.total_nvm_pages;
        if (sc_.policy.kind == PolicyKind::MmCache) {
            MmCacheConfig mc;
            mc.block_size = sc_.mm.block_size == 0 ? sc_.geometry.page_size : sc_.mm.block_size;
            // Page-granular traces: one cache frame per DRAM page equivalent.
            mc.cache_frames =
                std::max<std::uint64_t>(1, sc_.total_dram_pages * sc_.geometry.page_size / mc.block_size);
            if (mc.block_size == sc_.geometry.page_size) mc.cache_frames = sc_.total_dram_pages;
            mm_cache_ = std::make_unique<MmCache>(mc, sc_.cost);
        }
        epoch_len_ns_ = sc_.tracker.mws_ns * sc_.tracker.windows_per_epoch;
        pool_period_ns_ = sc_.pool.rebalance_period_ns == 0 ? epoch_len_ns_ : sc_.pool.rebalance_period_ns;

        for (std::size_t i = 0; i < sc_.vms.size(); ++i) {
            auto rt = std::make_unique<VmRt>(sc_, i, host_, shared_);
            horizon_ = std::max(horizon_, rt->trace.events.empty()
                                              ? SimTime{0}
                                              : rt->trace.events.back().time);
            vms_.push_back(std::move(rt));
        }
        // First window boundary strictly after the last event.
        horizon_ = vms_.empty() ? 0 : (horizon_ / sc_.tracker.mws_ns + 1) * sc_.tracker.mws_ns;
        if (sc_.policy.kind == PolicyKind::HmmvPool) {
            pool_state_.free_dram_frames = sc_.total_dram_pages - total_quota();
            pool_state_.free_nvm_frames = sc_.total_nvm_pages;
        }
    }

    RunReport run() {
        const auto wall_start = std::chrono::steady_clock::now();
        RunReport replay_report;
        if (sc_.compute_slowdown) {
            Simulation replay(make_replay_scenario(sc_));
            replay_report = replay.run();
        }

        for (auto& vm : vms_)
            if (vm->sensor && vm->tracking_on && !vm->trace.events.empty())
                vm->sensor->init_epoch(vm->mmu);

        // Merge per-VM event streams by (time, vm); order within a VM is
        // positional.
        for (;;) {
            std::size_t best = vms_.size();
            for (std::size_t i = 0; i < vms_.size(); ++i) {
                VmRt& vm = *vms_[i];
                if (vm.cursor >= vm.trace.events.size()) continue;
                if (best == vms_.size() ||
                    vm.trace.events[vm.cursor].time < vms_[best]->trace.events[vms_[best]->cursor].time)
                    best = i;
            }
            if (best == vms_.size()) break;
            VmRt& vm = *vms_[best];
            const AccessEvent& e = vm.trace.events[vm.cursor++];
            process_boundaries_until(e.time);
            dispatch(e, vm);
            if (sc_.check_conservation) verify_frame_conservation(e.time);
        }
        process_boundaries_until(kNoTime - 1);  // drain windows to horizon + engines to idle
        for (auto& vm : vms_) collect_reports(*vm);

        RunReport report = assemble_report();
        if (sc_.compute_slowdown) merge_replay(report, replay_report);
        report.wall_clock_ms = static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                  wall_start)
                .count());
        return report;
    }

    // Test hooks.
    const VmMmu& vm_mmu(std::size_t i) const { return vms_[i]->mmu; }
    const PoolState& pool_state() const { return pool_state_; }
    const HostFrames& host_frames() const { return host_; }
    std::uint64_t total_resident(Tier t) const {
        std::uint64_t n = 0;
        for (const auto& vm : vms_)
            n += t == Tier::Dram ? vm->mmu.dram_resident() : vm->mmu.nvm_resident();
        return n;
    }

private:
    struct VmRt {
        VmRt(const Scenario& sc, std::size_t index, HostFrames& host, MigrationShared& shared)
            : cfg(sc.vms[index]),
              id(static_cast<VmId>(index)),
              trace(build_vm_trace(sc, index)),
              mmu(sc.geometry, sc.cost, cfg.mapped_pages, cfg.vcpus),
              clock(sc.tracker.migration_threshold_bytes, sc.tracker.counter_limit),
              dram_quota(cfg.dram_quota_pages) {
            trace.validate();
            engine = std::make_unique<MigrationEngine>(sc.cost, sc.geometry, host, shared,
                                                       sc.migration.batch_cap);
            switch (sc.policy.kind) {
                case PolicyKind::HmmvIsland:
                case PolicyKind::HmmvPool:
                case PolicyKind::FixedThreshold: {
                    auto t = std::make_unique<Tracker>(sc.tracker);
                    tracker = t.get();
                    sensor = std::move(t);
                    break;
                }
                case PolicyKind::EptScan:
                case PolicyKind::TwoList:
                    sensor = std::make_unique<EptScanner>(sc.tracker.windows_per_epoch);
                    break;
                default:
                    break;  // numa_b / mm_cache: unmanaged
            }
            if (sc.policy.kind == PolicyKind::TwoList)
                two_list = std::make_unique<TwoListClassifier>(cfg.mapped_pages, dram_quota);

            // Pre-mapped placements; first_touch maps on access.
            if (cfg.placement == InitialPlacement::DramFirst) {
                for (PageIndex p = 0; p < cfg.mapped_pages; ++p) {
                    const Tier t = p < dram_quota ? Tier::Dram : Tier::Nvm;
                    host.free_of(t)--;
                    mmu.map_page(p, t);
                }
            } else if (cfg.placement == InitialPlacement::AllNvm) {
                for (PageIndex p = 0; p < cfg.mapped_pages; ++p) {
                    host.free_of(Tier::Nvm)--;
                    mmu.map_page(p, Tier::Nvm);
                }
            }
        }

        VmConfig cfg;
        VmId id;
        Trace trace;
        std::size_t cursor = 0;
        VmMmu mmu;
        std::unique_ptr<AccessSensor> sensor;
        Tracker* tracker = nullptr;
        std::unique_ptr<MigrationEngine> engine;
        std::unique_ptr<TwoListClassifier> two_list;
        ClockSwitch clock;

        std::uint64_t dram_quota = 0;
        std::uint64_t dram_inbound = 0;  // promoted pages not yet landed
        bool tracking_on = true;
        std::vector<PageDegree> last_ordering;
        std::vector<PageCount> last_counts;
        DegreeHistogram last_histogram;
        std::uint64_t last_hss = 0;
        bool ordering_fresh = false;

        std::uint64_t windows_grid_done = 0;
        std::uint64_t clocks_done = 0;

        std::uint32_t windows_processed = 0;
        std::uint64_t gpt_scanned_total = 0;
        std::uint64_t data_examined_total = 0;
        std::uint64_t bytes_migrated_cum = 0;
        std::uint64_t pages_migrated_cum = 0;
        std::uint64_t dirty_recopied_cum = 0;
        std::uint64_t total_pause_report = 0;
        std::uint64_t last_bucket_est = 0;
        std::uint64_t last_bucket_bytes = 0;
        MmStatsRecord mm;
        std::vector<WindowRecord> window_series;
        std::vector<EpochRecord> epoch_series;
        std::vector<ClockRecord> clock_series;
    };

    enum BoundaryKind : int { kEngine = 0, kWindow = 1, kClock = 2, kPool = 3, kNone = 99 };

    struct Boundary {
        SimTime t = kNoTime;
        int kind = kNone;
        std::size_t vm = 0;
    };

    std::uint64_t total_quota() const {
        std::uint64_t q = 0;
        for (const auto& vm : vms_) q += vm->dram_quota;
        return q;
    }

    bool policy_manages() const { return sc_.policy.manages_placement(); }

    Boundary next_boundary() const {
        Boundary best;
        auto consider = [&best](SimTime t, int kind, std::size_t vm) {
            if (t == kNoTime) return;
            if (t < best.t || (t == best.t && (kind < best.kind || (kind == best.kind && vm < best.vm))))
                best = Boundary{t, kind, vm};
        };
        for (std::size_t i = 0; i < vms_.size(); ++i) {
            const VmRt& vm = *vms_[i];
            consider(vm.engine->next_control_time(), kEngine, i);
            if (vm.trace.events.empty()) continue;  // idle VM: nothing to track
            const SimTime w = (vm.windows_grid_done + 1) * sc_.tracker.mws_ns;
            if (w <= horizon_) consider(w, kWindow, i);
            if (policy_manages()) {
                const SimTime c = (vm.clocks_done + 1) * sc_.tracker.clock_period_ns;
                if (c <= horizon_) consider(c, kClock, i);
            }
        }
        if (sc_.policy.kind == PolicyKind::HmmvPool) {
            const SimTime p = (pools_done_ + 1) * pool_period_ns_;
            if (p <= horizon_) consider(p, kPool, 0);
        }
        return best;
    }

    void process_boundaries_until(SimTime t) {
        for (;;) {
            const Boundary b = next_boundary();
            if (b.kind == kNone || b.t > t) break;
            switch (b.kind) {
                case kEngine: {
                    VmRt& vm = *vms_[b.vm];
                    vm.engine->advance(b.t, vm.mmu);
                    collect_reports(vm);
                    break;
                }
                case kWindow: window_boundary(*vms_[b.vm], b.t); break;
                case kClock: clock_boundary(*vms_[b.vm], b.t); break;
                case kPool: pool_boundary(b.t); break;
            }
            poll_pool_executor(b.t);
        }
    }

    void window_boundary(VmRt& vm, SimTime t) {
        vm.windows_grid_done++;
        vm.engine->advance(t, vm.mmu);
        collect_reports(vm);
        if (vm.sensor && vm.tracking_on) {
            WindowReport rep = vm.sensor->end_window(vm.mmu);
            vm.windows_processed++;
            vm.gpt_scanned_total += rep.gpt_pages_scanned;
            vm.data_examined_total += rep.data_pages_examined;
            vm.window_series.push_back(
                {vm.windows_processed, rep.gpt_pages_scanned, rep.data_pages_examined});
            if (vm.two_list) {
                for (const PageObservation& obs : rep.observations) vm.two_list->update(obs.page, true);
                vm.two_list->age();
            }
            if (vm.sensor->windows_completed() >= sc_.tracker.windows_per_epoch) epoch_end(vm, t);
        }
        if (vm.windows_grid_done % sc_.tracker.windows_per_epoch == 0) push_epoch_bucket(vm);
    }

    void push_epoch_bucket(VmRt& vm) {
        EpochRecord rec;
        rec.index = static_cast<std::uint32_t>(vm.windows_grid_done / sc_.tracker.windows_per_epoch - 1);
        const std::uint64_t est_now = vm.mmu.account().total();
        rec.est_ns = est_now - vm.last_bucket_est;
        vm.last_bucket_est = est_now;
        rec.migrated_bytes = vm.bytes_migrated_cum - vm.last_bucket_bytes;
        vm.last_bucket_bytes = vm.bytes_migrated_cum;
        rec.quota_pages = vm.dram_quota;
        rec.hss_pages = vm.last_hss;
        vm.epoch_series.push_back(rec);
    }

    void epoch_end(VmRt& vm, SimTime t) {
        vm.last_counts = vm.sensor->epoch_counts(vm.mmu);
        std::vector<PageDegree> degrees = degrees_from_counts(vm.last_counts, sc_.classifier);
        vm.last_ordering = bucket_sort(
            degrees, sc_.classifier.max_degree(sc_.tracker.windows_per_epoch), &vm.last_histogram);
        vm.last_hss = hot_set_size(vm.last_ordering, sc_.classifier,
                                   sc_.pool.lower_pages(vm.cfg.dram_quota_pages),
                                   sc_.pool.upper_pages(vm.cfg.dram_quota_pages));
        vm.ordering_fresh = true;
        // When a pool rebalance lands on this same instant it runs after the
        // window pass and owns the migration decisions for this epoch.
        if (!pool_due_at(t)) try_refine(vm, t);
        vm.sensor->init_epoch(vm.mmu);
    }

    bool pool_due_at(SimTime t) const {
        return sc_.policy.kind == PolicyKind::HmmvPool && (pools_done_ + 1) * pool_period_ns_ == t;
    }

    // Within-quota placement refinement via the classifier's exchange plan.
    void try_refine(VmRt& vm, SimTime t) {
        if (!sc_.migration.enabled || !policy_manages() || !vm.engine->idle()) return;
        if (vm.dram_inbound != 0 || vm.mmu.dram_resident() > vm.dram_quota) return;
        MigrationPlan plan = build_plan(vm);
        if (!plan.demote.empty()) enqueue(vm, std::move(plan.demote), Tier::Dram, Tier::Nvm, t);
        if (!plan.promote.empty()) enqueue(vm, std::move(plan.promote), Tier::Nvm, Tier::Dram, t);
    }

    MigrationPlan build_plan(VmRt& vm) {
        switch (sc_.policy.kind) {
            case PolicyKind::HmmvIsland:
            case PolicyKind::HmmvPool:
            case PolicyKind::EptScan:
                return diff_placement(vm.last_ordering, vm.dram_quota, vm.mmu, vm.dram_quota);
            case PolicyKind::FixedThreshold: {
                std::vector<PageIndex> hot = fixed_threshold_classify(
                    vm.last_counts, sc_.policy.fixed_threshold, sc_.classifier);
                return plan_from_hotset(vm, hot, {});
            }
            case PolicyKind::TwoList: {
                std::vector<PageIndex> hot = vm.two_list->classify();
                return plan_from_hotset(vm, hot, vm.two_list->inactive_from_tail());
            }
            default:
                return {};
        }
    }

    // Promote hot NVM pages in priority order into free quota, then exchange
    // against DRAM pages outside the hot set. Demote order: the supplied
    // candidates first (stale-first), then remaining cold DRAM pages by
    // ascending index.
    MigrationPlan plan_from_hotset(VmRt& vm, const std::vector<PageIndex>& hotset,
                                   const std::vector<PageIndex>& demote_candidates) {
        MigrationPlan plan;
        std::vector<std::uint8_t> in_hot(vm.cfg.mapped_pages, 0);
        for (PageIndex p : hotset) in_hot[p] = 1;
        std::vector<PageIndex> want;
        for (PageIndex p : hotset) {
            const PageState& ps = vm.mmu.page(p);
            if (ps.mapped() && ps.tier() == Tier::Nvm) want.push_back(p);
        }
        if (want.empty()) return plan;
        std::vector<PageIndex> cold;
        std::vector<std::uint8_t> listed(vm.cfg.mapped_pages, 0);
        for (PageIndex p : demote_candidates) {
            const PageState& ps = vm.mmu.page(p);
            if (!in_hot[p] && ps.mapped() && ps.tier() == Tier::Dram && !listed[p]) {
                cold.push_back(p);
                listed[p] = 1;
            }
        }
        for (PageIndex p = 0; p < vm.cfg.mapped_pages; ++p) {
            const PageState& ps = vm.mmu.page(p);
            if (!in_hot[p] && ps.mapped() && ps.tier() == Tier::Dram && !listed[p]) cold.push_back(p);
        }
        const std::uint64_t free_quota = vm.dram_quota - vm.mmu.dram_resident();
        const std::uint64_t limit = std::min<std::uint64_t>(want.size(), free_quota + cold.size());
        for (std::uint64_t i = 0; i < limit; ++i) {
            plan.promote.push_back(want[i]);
            if (i >= free_quota) plan.demote.push_back(cold[i - free_quota]);
        }
        return plan;
    }

    void enqueue(VmRt& vm, std::vector<PageIndex> pages, Tier src, Tier dst, SimTime t) {
        enqueue_proto(vm, std::move(pages), src, dst, sc_.migration.protocol, t);
    }

    void enqueue_proto(VmRt& vm, std::vector<PageIndex> pages, Tier src, Tier dst,
                       MigrationProtocol proto, SimTime t) {
        MigrationBatch batch;
        batch.pages = std::move(pages);
        batch.src = src;
        batch.dst = dst;
        batch.protocol = proto;
        batch.threads = sc_.migration.threads;
        if (dst == Tier::Dram) vm.dram_inbound += batch.pages.size();
        vm.engine->enqueue_batch(std::move(batch), vm.mmu, t);
        collect_reports(vm);  // zero-length batches complete synchronously
    }

    void clock_boundary(VmRt& vm, SimTime t) {
        vm.clocks_done++;
        const std::uint64_t bytes = vm.engine->take_period_bytes();
        if (vm.sensor) {
            const bool was = vm.clock.enabled();
            const bool now = vm.clock.tick(bytes);
            vm.clock_series.push_back({static_cast<std::uint32_t>(vm.clocks_done - 1), now,
                                       vm.clock.counter(), bytes});
            if (!was && now) vm.sensor->init_epoch(vm.mmu);
            vm.tracking_on = now;
        } else {
            vm.clock_series.push_back(
                {static_cast<std::uint32_t>(vm.clocks_done - 1), false, 0, bytes});
        }
        (void)t;
    }

    void pool_boundary(SimTime t) {
        pools_done_++;
        if (!grow_pending_.empty() || any_engine_busy()) {
            // Previous plan or a long migration still in flight: keep per-VM
            // refinement going and retry the rebalance next period.
            for (auto& vm : vms_) try_refine(*vm, t);
            record_pool_snapshot();
            return;
        }
        std::vector<VmPoolInput> inputs;
        std::vector<std::uint64_t> quotas, initials;
        for (const auto& vm : vms_) {
            VmPoolInput in;
            in.vm = vm->id;
            in.current_quota = vm->dram_quota;
            in.initial_quota = vm->cfg.dram_quota_pages;
            in.tracking_enabled = vm->tracking_on;
            in.ordering_fresh = vm->ordering_fresh;
            in.ordering = &vm->last_ordering;
            inputs.push_back(in);
            quotas.push_back(vm->dram_quota);
            initials.push_back(vm->cfg.dram_quota_pages);
        }
        const auto targets = compute_targets(inputs, sc_.classifier, sc_.pool);
        RebalancePlan plan = rebalance(inputs, targets, pool_state_);
        std::vector<std::uint8_t> in_plan(vms_.size(), 0);
        if (!plan.empty()) {
            apply_plan_quotas(plan, quotas, initials, sc_.pool, pool_state_);
            for (std::size_t i = 0; i < vms_.size(); ++i) vms_[i]->dram_quota = quotas[i];
            for (const RebalanceStep& s : plan.shrinks) {
                VmRt& vm = *vms_[s.vm];
                in_plan[s.vm] = 1;
                const std::uint64_t excess =
                    vm.mmu.dram_resident() > vm.dram_quota ? vm.mmu.dram_resident() - vm.dram_quota : 0;
                // Pool moves run one-way through the PML protocol: the target
                // frames are free, so no exchange and near-zero traps.
                if (excess > 0)
                    enqueue_proto(vm, coldest_dram_pages(vm, excess), Tier::Dram, Tier::Nvm,
                                  MigrationProtocol::Pml, t);
            }
            for (const RebalanceStep& g : plan.grows) in_plan[g.vm] = 1;
            grow_pending_.assign(plan.grows.begin(), plan.grows.end());
            poll_pool_executor(t);
        }
        for (std::size_t i = 0; i < vms_.size(); ++i)
            if (!in_plan[i]) try_refine(*vms_[i], t);
        record_pool_snapshot();
    }

    // Grow batches wait for every shrink migration to settle so the freed
    // DRAM frames physically exist.
    void poll_pool_executor(SimTime t) {
        if (grow_pending_.empty() || any_engine_busy()) return;
        std::vector<RebalanceStep> grows;
        grows.swap(grow_pending_);
        for (const RebalanceStep& g : grows) {
            VmRt& vm = *vms_[g.vm];
            std::vector<PageIndex> pages;
            for (const PageDegree& d : vm.last_ordering) {
                if (pages.size() >= g.frames) break;
                const PageState& ps = vm.mmu.page(d.page);
                if (ps.mapped() && ps.tier() == Tier::Nvm) pages.push_back(d.page);
            }
            if (!pages.empty())
                enqueue_proto(vm, std::move(pages), Tier::Nvm, Tier::Dram, MigrationProtocol::Pml, t);
        }
    }

    // Residency plus in-flight reservations plus host free frames must
    // cover each tier exactly, at any instant.
    void verify_frame_conservation(SimTime t) const {
        for (Tier tier : {Tier::Dram, Tier::Nvm}) {
            std::uint64_t sum = host_.free_of(tier);
            for (const auto& vm : vms_) {
                sum += tier == Tier::Dram ? vm->mmu.dram_resident() : vm->mmu.nvm_resident();
                sum += vm->engine->reserved_frames(tier);
            }
            const std::uint64_t total =
                tier == Tier::Dram ? sc_.total_dram_pages : sc_.total_nvm_pages;
            if (sum != total)
                throw InvariantBreach("harness", t,
                                      std::string("frame conservation broken on ") +
                                          tier_name(tier) + ": " + std::to_string(sum) +
                                          " != " + std::to_string(total));
        }
    }

    bool any_engine_busy() const {
        for (const auto& vm : vms_)
            if (!vm->engine->idle()) return true;
        return false;
    }

    std::vector<PageIndex> coldest_dram_pages(VmRt& vm, std::uint64_t n) {
        std::vector<std::uint64_t> degree_of(vm.cfg.mapped_pages, 0);
        for (const PageDegree& d : vm.last_ordering) degree_of[d.page] = d.degree;
        std::vector<PageDegree> dram;
        for (PageIndex p = 0; p < vm.cfg.mapped_pages; ++p) {
            const PageState& ps = vm.mmu.page(p);
            if (ps.mapped() && ps.tier() == Tier::Dram) dram.push_back({p, degree_of[p]});
        }
        std::sort(dram.begin(), dram.end(), [](const PageDegree& a, const PageDegree& b) {
            return a.degree != b.degree ? a.degree < b.degree : a.page < b.page;
        });
        std::vector<PageIndex> out;
        for (std::uint64_t i = 0; i < n && i < dram.size(); ++i) out.push_back(dram[i].page);
        return out;
    }

    void record_pool_snapshot() {
        PoolEpochRecord rec;
        rec.index = static_cast<std::uint32_t>(pools_done_ - 1);
        for (const auto& vm : vms_) rec.quotas.push_back(vm->dram_quota);
        rec.pool_free_dram = pool_state_.free_dram_frames;
        // Conservation: quotas plus pool always cover all DRAM frames.
        std::uint64_t sum = rec.pool_free_dram;
        for (auto q : rec.quotas) sum += q;
        if (sum != sc_.total_dram_pages)
            throw InvariantBreach("pool", 0, "quota conservation broken: " + std::to_string(sum) +
                                                 " != " + std::to_string(sc_.total_dram_pages));
        pool_series_.push_back(std::move(rec));
    }

    void collect_reports(VmRt& vm) {
        auto& reports = vm.engine->completed_reports();
        for (const MigrationReport& r : reports) {
            MigrationRecord rec;
            rec.vm = vm.id;
            rec.protocol = protocol_name(r.protocol);
            rec.src = tier_name(r.src);
            rec.dst = tier_name(r.dst);
            rec.started_ns = r.started;
            rec.finished_ns = r.finished;
            rec.pages_moved = r.pages_moved;
            rec.dirty_recopied = r.dirty_recopied;
            rec.truncated_pages = r.truncated_pages;
            rec.copy_time_ns = r.copy_time_ns;
            rec.recopy_time_ns = r.recopy_time_ns;
            rec.pause_time_ns = r.total_pause_time_ns;
            rec.bytes = r.bytes;
            rec.traps = r.traps.total();
            migrations_.push_back(std::move(rec));
            vm.bytes_migrated_cum += r.bytes;
            vm.pages_migrated_cum += r.pages_moved;
            vm.dirty_recopied_cum += r.dirty_recopied;
            vm.total_pause_report += r.total_pause_time_ns;
            if (r.dst == Tier::Dram)
                vm.dram_inbound -= std::min(vm.dram_inbound, r.pages_moved + r.truncated_pages);
        }
        reports.clear();
    }

    void dispatch(const AccessEvent& e, VmRt& vm) {
        vm.engine->advance(e.time, vm.mmu);
        collect_reports(vm);
        if (vm.engine->on_access(e, vm.mmu)) return;  // deferred until remap
        if (!vm.mmu.page(e.page).mapped()) {
            if (vm.cfg.placement != InitialPlacement::FirstTouch)
                throw InvariantBreach("harness", e.time,
                                      "access to unmapped page " + std::to_string(e.page));
            // In-flight promotions hold quota reservations, so first-touch
            // fills may not race them past the quota.
            const Tier tier = vm.mmu.dram_resident() + vm.dram_inbound < vm.dram_quota &&
                                      host_.free_of(Tier::Dram) > 0
                                  ? Tier::Dram
                                  : Tier::Nvm;
            if (host_.free_of(tier) == 0)
                throw InvariantBreach("harness", e.time, "out of host frames");
            host_.free_of(tier)--;
            vm.mmu.map_page(e.page, tier);
            vm.mmu.charge_trap(TrapKind::EptFault, e.vcpu);  // first-touch fault
            vm.total_pause_report += sc_.cost.vmtrap_cost_ns;
        }
        PageState& ps = vm.mmu.page(e.page);
        if (ps.flags & PageState::kEptUnfilled) {
            vm.mmu.charge_trap(TrapKind::EptFault, e.vcpu);
            vm.total_pause_report += sc_.cost.vmtrap_cost_ns;
            ps.flags &= static_cast<std::uint8_t>(~PageState::kEptUnfilled);
        }
        if (mm_cache_) {
            const MmAccessResult r = mm_cache_->access(e.vm, e.page, e.kind);
            vm.mm.hits += r.hit ? 1 : 0;
            vm.mm.misses += r.hit ? 0 : 1;
            vm.mm.writebacks += r.victim_writeback ? 1 : 0;
            vm.mmu.simulate_access_fixed_latency(e, r.latency_ns);
            return;
        }
        double contention[2];
        shared_.fill_contention(contention);
        vm.mmu.simulate_access(e, contention);
    }

    RunReport assemble_report() {
        RunReport report;
        report.seed = sc_.seed;
        report.policy = policy_name(sc_.policy.kind);
        for (auto& vmp : vms_) {
            VmRt& vm = *vmp;
            VmReport r;
            const ChargeAccount& a = vm.mmu.account();
            r.estimated_time_ns = a.total();
            r.access_ns = a.access_ns;
            r.ad_set_ns = a.ad_set_ns;
            r.tlb_ns = a.tlb_ns;
            r.trap_ns = a.trap_ns;
            r.pause_ns = a.pause_ns;
            r.total_pause_report_ns = vm.total_pause_report;
            const TrapCounters& tc = vm.mmu.traps();
            r.pml_full_traps = tc.pml_full;
            r.ept_fault_traps = tc.ept_fault;
            r.wp_fault_traps = tc.wp_fault;
            r.other_traps = tc.other_exits;
            r.gpt_pages_scanned_total = vm.gpt_scanned_total;
            r.data_pages_examined_total = vm.data_examined_total;
            r.windows_processed = vm.windows_processed;
            r.pages_migrated = vm.pages_migrated_cum;
            r.bytes_migrated = vm.bytes_migrated_cum;
            r.dirty_recopied = vm.dirty_recopied_cum;
            r.initial_quota_pages = vm.cfg.dram_quota_pages;
            r.final_quota_pages = vm.dram_quota;
            r.mm = vm.mm;
            r.degree_histogram = std::move(vm.last_histogram.buckets);
            r.windows = std::move(vm.window_series);
            r.epochs = std::move(vm.epoch_series);
            r.clocks = std::move(vm.clock_series);
            report.vms.push_back(std::move(r));
        }
        report.migrations = std::move(migrations_);
        report.pool_series = std::move(pool_series_);
        return report;
    }

    void merge_replay(RunReport& report, const RunReport& replay) {
        for (std::size_t i = 0; i < report.vms.size(); ++i) {
            VmReport& vm = report.vms[i];
            const VmReport& base = replay.vms[i];
            vm.dram_replay_ns = base.estimated_time_ns;
            vm.slowdown = base.estimated_time_ns == 0
                              ? (vm.estimated_time_ns == 0 ? 1.0 : 0.0)
                              : static_cast<double>(vm.estimated_time_ns) /
                                    static_cast<double>(base.estimated_time_ns);
            for (std::size_t k = 0; k < vm.epochs.size() && k < base.epochs.size(); ++k)
                vm.epochs[k].dram_ns = base.epochs[k].est_ns;
        }
    }

    static Scenario make_replay_scenario(const Scenario& sc) {
        Scenario r = sc;
        r.policy.kind = PolicyKind::NumaB;
        r.compute_slowdown = false;
        r.migration.enabled = false;
        std::uint64_t mapped_sum = 0;
        for (VmConfig& vm : r.vms) {
            vm.dram_quota_pages = vm.mapped_pages;
            mapped_sum += vm.mapped_pages;
            if (vm.placement == InitialPlacement::AllNvm) vm.placement = InitialPlacement::DramFirst;
        }
        r.total_dram_pages = mapped_sum;
        return r;
    }

    Scenario sc_;
    std::vector<std::unique_ptr<VmRt>> vms_;
    HostFrames host_;
    MigrationShared shared_;
    PoolState pool_state_;
    std::unique_ptr<MmCache> mm_cache_;
    std::vector<MigrationRecord> migrations_;
    std::vector<PoolEpochRecord> pool_series_;
    std::vector<RebalanceStep> grow_pending_;
    SimTime horizon_ = 0;
    std::uint64_t epoch_len_ns_ = 0;
    std::uint64_t pool_period_ns_ = 0;
    std::uint64_t pools_done_ = 0;
};

inline RunReport run_scenario(const Scenario& sc) { return Simulation(sc).run(); }

}  // namespace hmmv
