#include <doctest.h>

#include <vector>

#include "hmmv/classifier.hpp"
#include "hmmv/pool.hpp"

using namespace hmmv;

namespace {

std::vector<PageDegree> hot_ordering(std::uint64_t hot_pages, Degree degree = 10) {
    std::vector<PageDegree> v;
    for (PageIndex p = 0; p < hot_pages; ++p) v.push_back({p, degree});
    return v;
}

VmPoolInput input(VmId id, std::uint64_t quota, std::uint64_t initial,
                  const std::vector<PageDegree>* ordering, bool tracking = true) {
    VmPoolInput in;
    in.vm = id;
    in.current_quota = quota;
    in.initial_quota = initial;
    in.tracking_enabled = tracking;
    in.ordering_fresh = ordering != nullptr;
    in.ordering = ordering;
    return in;
}

}  // namespace

TEST_CASE("targets clamp to limits and freeze for untracked VMs") {
    ClassifierConfig classifier;
    PoolConfig pool;
    const auto cold = hot_ordering(100, 1);        // nothing above threshold
    const auto huge = hot_ordering(20000);         // far beyond the upper limit
    const auto mid = hot_ordering(9000);           // inside the limits

    std::vector<VmPoolInput> vms = {
        input(0, 8192, 8192, &cold),
        input(1, 8192, 8192, &huge),
        input(2, 8192, 8192, &mid),
        input(3, 8192, 8192, &mid, /*tracking=*/false),
    };
    const auto targets = compute_targets(vms, classifier, pool);
    CHECK(targets[0] == 6144);   // lower limit 0.75 * 8192
    CHECK(targets[1] == 10240);  // upper limit 1.25 * 8192
    CHECK(targets[2] == 7200);   // floor(0.8 * 9000)
    CHECK(targets[3] == 8192);   // tracking off: unchanged
}

TEST_CASE("rebalance produces shrinks first and serves larger deficits first") {
    PoolState pool;
    pool.free_dram_frames = 0;
    std::vector<VmPoolInput> vms = {
        input(0, 8192, 8192, nullptr),
        input(1, 8192, 8192, nullptr),
        input(2, 8192, 8192, nullptr),
    };
    const std::vector<std::uint64_t> targets = {10000, 6000, 9000};
    const RebalancePlan plan = rebalance(vms, targets, pool);
    REQUIRE(plan.shrinks.size() == 1);
    CHECK(plan.shrinks[0].vm == 1);
    CHECK(plan.shrinks[0].frames == 2192);
    REQUIRE(plan.grows.size() == 2);
    CHECK(plan.grows[0].vm == 0);  // deficit 1808 > 808
    CHECK(plan.grows[0].frames == 1808);
    CHECK(plan.grows[1].vm == 2);
    CHECK(plan.grows[1].frames == 384);  // remainder of the supply
}

TEST_CASE("rebalance with everyone at target is empty") {
    PoolState pool;
    std::vector<VmPoolInput> vms = {input(0, 100, 100, nullptr), input(1, 50, 50, nullptr)};
    CHECK(rebalance(vms, {100, 50}, pool).empty());
}

TEST_CASE("one shrinker feeding one grower conserves pool frames") {
    PoolState pool;
    pool.free_dram_frames = 7;
    std::vector<std::uint64_t> quotas = {100, 100};
    const std::vector<std::uint64_t> initials = {100, 100};
    std::vector<VmPoolInput> vms = {input(0, 100, 100, nullptr), input(1, 100, 100, nullptr)};
    PoolConfig cfg;
    const RebalancePlan plan = rebalance(vms, {80, 120}, pool);
    apply_plan_quotas(plan, quotas, initials, cfg, pool);
    CHECK(quotas[0] == 80);
    CHECK(quotas[1] == 120);
    CHECK(pool.free_dram_frames == 7);  // transient +20 then -20
    CHECK(quotas[0] + quotas[1] + pool.free_dram_frames == 207);
}

TEST_CASE("partial grants absorb pool shortage") {
    PoolState pool;
    pool.free_dram_frames = 10;
    std::vector<VmPoolInput> vms = {input(0, 100, 100, nullptr), input(1, 100, 100, nullptr)};
    const RebalancePlan plan = rebalance(vms, {125, 110}, pool);
    REQUIRE(plan.grows.size() == 1);
    CHECK(plan.grows[0].vm == 0);
    CHECK(plan.grows[0].frames == 10);  // nothing left for the smaller deficit
}

TEST_CASE("invalid plans roll back quota state bit-identically") {
    PoolConfig cfg;
    PoolState pool;
    pool.free_dram_frames = 5;
    std::vector<std::uint64_t> quotas = {100, 100};
    const std::vector<std::uint64_t> initials = {100, 100};
    const std::vector<std::uint64_t> quotas_before = quotas;
    const PoolState pool_before = pool;

    SUBCASE("grow beyond the pool supply aborts") {
        RebalancePlan plan;
        plan.grows.push_back({0, 25});  // only 5 available, limit allows 125
        CHECK_THROWS_AS(apply_plan_quotas(plan, quotas, initials, cfg, pool), InvariantBreach);
    }
    SUBCASE("shrink below the lower limit aborts") {
        RebalancePlan plan;
        plan.shrinks.push_back({1, 30});  // 70 < lower limit 75
        CHECK_THROWS_AS(apply_plan_quotas(plan, quotas, initials, cfg, pool), InvariantBreach);
    }
    SUBCASE("grow above the upper limit aborts") {
        RebalancePlan plan;
        plan.shrinks.push_back({1, 25});
        plan.grows.push_back({0, 26});  // 126 > upper limit 125
        CHECK_THROWS_AS(apply_plan_quotas(plan, quotas, initials, cfg, pool), InvariantBreach);
    }
    CHECK(quotas == quotas_before);
    CHECK(pool == pool_before);
}

TEST_CASE("empty plan application changes nothing") {
    PoolConfig cfg;
    PoolState pool;
    pool.free_dram_frames = 3;
    std::vector<std::uint64_t> quotas = {10, 20};
    apply_plan_quotas({}, quotas, {10, 20}, cfg, pool);
    CHECK(quotas == std::vector<std::uint64_t>{10, 20});
    CHECK(pool.free_dram_frames == 3);
}

TEST_CASE("stationary targets reach a fixed point with empty follow-up plans") {
    PoolConfig cfg;
    PoolState pool;
    pool.free_dram_frames = 0;
    std::vector<std::uint64_t> quotas = {8192, 8192, 8192, 8192};
    const std::vector<std::uint64_t> initials = quotas;
    const std::vector<std::uint64_t> targets = {9500, 6500, 7000, 8192};
    for (int epoch = 0; epoch < 4; ++epoch) {
        std::vector<VmPoolInput> vms;
        for (VmId v = 0; v < 4; ++v) vms.push_back(input(v, quotas[v], initials[v], nullptr));
        const RebalancePlan plan = rebalance(vms, targets, pool);
        if (epoch >= 1) CHECK(plan.empty());
        if (!plan.empty()) apply_plan_quotas(plan, quotas, initials, cfg, pool);
    }
    CHECK(quotas == targets);
}
