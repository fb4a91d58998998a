// Multi-VM DRAM balancing through a free-frame pool. Quota accounting is
// planned and applied here; the physical page moves are one-way PML batches
// that the harness executes, shrink phase strictly before grow phase.
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "hmmv/classifier.hpp"
#include "hmmv/common.hpp"

namespace hmmv {

struct PoolConfig {
    double lower_ratio = 0.75;  // of the initial DRAM size
    double upper_ratio = 1.25;
    std::uint64_t rebalance_period_ns = 0;  // 0: every epoch

    void validate() const {
        if (!(lower_ratio > 0.0) || lower_ratio > 1.0 || upper_ratio < 1.0)
            throw ConfigError("pool: need 0 < lower_ratio <= 1 <= upper_ratio");
    }

    std::uint64_t lower_pages(std::uint64_t initial_quota) const {
        return static_cast<std::uint64_t>(lower_ratio * static_cast<double>(initial_quota));
    }
    std::uint64_t upper_pages(std::uint64_t initial_quota) const {
        return static_cast<std::uint64_t>(upper_ratio * static_cast<double>(initial_quota));
    }
};

struct PoolState {
    std::uint64_t free_dram_frames = 0;
    std::uint64_t free_nvm_frames = 0;

    bool operator==(const PoolState&) const = default;
};

struct VmPoolInput {
    VmId vm = 0;
    std::uint64_t current_quota = 0;
    std::uint64_t initial_quota = 0;
    bool tracking_enabled = true;
    bool ordering_fresh = false;
    const std::vector<PageDegree>* ordering = nullptr;  // descending degree
};

// Per-VM DRAM targets: the clamped hot-set size, or the current quota when
// tracking is off or no fresh epoch ordering exists.
inline std::vector<std::uint64_t> compute_targets(const std::vector<VmPoolInput>& vms,
                                                  const ClassifierConfig& classifier,
                                                  const PoolConfig& pool) {
    std::vector<std::uint64_t> targets;
    targets.reserve(vms.size());
    for (const VmPoolInput& in : vms) {
        if (!in.tracking_enabled || !in.ordering_fresh || in.ordering == nullptr) {
            targets.push_back(in.current_quota);
            continue;
        }
        targets.push_back(hot_set_size(*in.ordering, classifier,
                                       pool.lower_pages(in.initial_quota),
                                       pool.upper_pages(in.initial_quota)));
    }
    return targets;
}

struct RebalanceStep {
    VmId vm = 0;
    std::uint64_t frames = 0;
};

struct RebalancePlan {
    std::vector<RebalanceStep> shrinks;  // demote coldest DRAM pages, frames to pool
    std::vector<RebalanceStep> grows;    // promote hottest NVM pages into pool frames

    bool empty() const { return shrinks.empty() && grows.empty(); }
};

// Shrinkers release quota down to target; growers are served in descending
// deficit order (ties by VM id) from the pool supply left after all
// shrinkers. Shortage is absorbed by partial grants.
inline RebalancePlan rebalance(const std::vector<VmPoolInput>& vms,
                               const std::vector<std::uint64_t>& targets,
                               const PoolState& pool) {
    if (vms.size() != targets.size())
        throw ConfigError("rebalance: one target per VM required");
    RebalancePlan plan;
    std::uint64_t supply = pool.free_dram_frames;
    std::vector<RebalanceStep> deficits;
    for (std::size_t i = 0; i < vms.size(); ++i) {
        if (targets[i] < vms[i].current_quota) {
            const std::uint64_t frames = vms[i].current_quota - targets[i];
            plan.shrinks.push_back({vms[i].vm, frames});
            supply += frames;
        } else if (targets[i] > vms[i].current_quota) {
            deficits.push_back({vms[i].vm, targets[i] - vms[i].current_quota});
        }
    }
    std::sort(deficits.begin(), deficits.end(), [](const RebalanceStep& a, const RebalanceStep& b) {
        return a.frames != b.frames ? a.frames > b.frames : a.vm < b.vm;
    });
    for (const RebalanceStep& d : deficits) {
        if (supply == 0) break;
        const std::uint64_t grant = std::min(d.frames, supply);
        plan.grows.push_back({d.vm, grant});
        supply -= grant;
    }
    return plan;
}

// Applies the quota accounting of a plan. All-or-nothing: any limit or
// conservation violation rolls quotas and pool back to the pre-plan
// snapshot and throws.
inline void apply_plan_quotas(const RebalancePlan& plan,
                              std::vector<std::uint64_t>& quotas,
                              const std::vector<std::uint64_t>& initial_quotas,
                              const PoolConfig& cfg,
                              PoolState& pool) {
    const std::vector<std::uint64_t> quotas_snapshot = quotas;
    const PoolState pool_snapshot = pool;
    auto fail = [&](const std::string& why) {
        quotas = quotas_snapshot;
        pool = pool_snapshot;
        throw InvariantBreach("pool", 0, "plan aborted, state rolled back: " + why);
    };
    for (const RebalanceStep& s : plan.shrinks) {
        if (s.vm >= quotas.size()) fail("shrink names unknown vm");
        if (quotas[s.vm] < s.frames) fail("shrink below zero quota");
        quotas[s.vm] -= s.frames;
        pool.free_dram_frames += s.frames;
        if (quotas[s.vm] < cfg.lower_pages(initial_quotas[s.vm])) fail("shrink below lower limit");
    }
    for (const RebalanceStep& g : plan.grows) {
        if (g.vm >= quotas.size()) fail("grow names unknown vm");
        if (pool.free_dram_frames < g.frames) fail("grow exceeds pool supply");
        pool.free_dram_frames -= g.frames;
        quotas[g.vm] += g.frames;
        if (quotas[g.vm] > cfg.upper_pages(initial_quotas[g.vm])) fail("grow above upper limit");
    }
}

}  // namespace hmmv
