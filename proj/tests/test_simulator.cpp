#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hmmv/report.hpp"
#include "hmmv/scenario.hpp"
#include "hmmv/simulator.hpp"

using namespace hmmv;

namespace {

Scenario base_scenario() {
    Scenario sc;
    sc.seed = 42;
    sc.total_dram_pages = 10000;
    sc.total_nvm_pages = 40000;
    sc.tracker.mws_ns = 2'000'000;  // 2 ms windows
    sc.tracker.windows_per_epoch = 4;
    sc.cost.ad_set_cost_ns = 20;
    VmConfig vm;
    vm.mapped_pages = 4000;
    vm.dram_quota_pages = 2000;
    HotspotSpec hs;
    hs.total_pages = 4000;
    hs.hot_fraction = 0.25;
    hs.hot_access_prob = 0.9;
    hs.ops = 100000;
    hs.inter_access_gap_ns = 200;
    hs.seed = 9;
    vm.trace.hotspot = hs;
    sc.vms.push_back(vm);
    return sc;
}

// Cold pages first (filling DRAM under first touch), then a 90/10 hotspot
// on the first `hot` pages: the pathology static DRAM-preferred placement
// cannot recover from.
Trace adversarial_trace(std::uint64_t pages, std::uint64_t hot, std::uint64_t ops,
                        std::uint64_t gap, std::uint64_t seed) {
    Trace t;
    t.total_pages = pages;
    Rng rng(seed);
    SimTime now = 0;
    for (PageIndex p = hot; p < pages; ++p) {
        AccessEvent e;
        e.time = now;
        now += gap;
        e.page = p;
        e.kind = AccessKind::Read;
        t.events.push_back(e);
    }
    for (std::uint64_t i = 0; i < ops; ++i) {
        AccessEvent e;
        e.time = now;
        now += gap;
        e.page = rng.next_bool(0.9) ? rng.next_below(hot) : rng.next_below(pages);
        e.kind = rng.next_bool(0.5) ? AccessKind::Read : AccessKind::Write;
        t.events.push_back(e);
    }
    return t;
}

}  // namespace

TEST_CASE("empty trace produces a zero report") {
    Scenario sc = base_scenario();
    HotspotSpec& hs = *sc.vms[0].trace.hotspot;
    hs.ops = 0;
    const RunReport r = run_scenario(sc);
    CHECK(r.vms[0].estimated_time_ns == 0);
    CHECK(r.vms[0].slowdown == 1.0);
    CHECK(r.vms[0].traps_total() == 0);
    CHECK(r.migrations.empty());
}

TEST_CASE("identical scenarios give identical reports") {
    const Scenario sc = base_scenario();
    const RunReport a = run_scenario(sc);
    const RunReport b = run_scenario(sc);
    CHECK(a == b);  // wall clock excluded from equality
    CHECK(to_json(a)["vms"] == to_json(b)["vms"]);
}

TEST_CASE("all-DRAM first-touch run has slowdown exactly 1") {
    Scenario sc = base_scenario();
    sc.policy.kind = PolicyKind::NumaB;
    sc.vms[0].dram_quota_pages = sc.vms[0].mapped_pages;  // everything fits
    const RunReport r = run_scenario(sc);
    CHECK(r.vms[0].slowdown == 1.0);
    CHECK(r.vms[0].estimated_time_ns == r.vms[0].dram_replay_ns);
}

TEST_CASE("static all-NVM placement approaches the read latency ratio") {
    Scenario sc;
    sc.total_dram_pages = 200;
    sc.total_nvm_pages = 200;
    sc.policy.kind = PolicyKind::NumaB;
    VmConfig vm;
    vm.mapped_pages = 100;
    vm.dram_quota_pages = 0;
    vm.placement = InitialPlacement::AllNvm;
    UniformSpec us;
    us.total_pages = 100;
    us.read_ratio = 1.0;
    us.ops = 50000;
    us.seed = 2;
    vm.trace.uniform = us;
    sc.vms.push_back(vm);
    const RunReport r = run_scenario(sc);
    CHECK(r.vms[0].slowdown == doctest::Approx(310.0 / 81.0).epsilon(0.01));
}

TEST_CASE("managed slowdown is never below 1") {
    Scenario sc = base_scenario();
    for (PolicyKind kind : {PolicyKind::HmmvIsland, PolicyKind::EptScan, PolicyKind::NumaB}) {
        sc.policy.kind = kind;
        const RunReport r = run_scenario(sc);
        CHECK(r.vms[0].slowdown >= 1.0);
    }
}

TEST_CASE("hot-set management beats static placement on adversarial first touch") {
    const auto path = std::filesystem::temp_directory_path() / "hmmv_adversarial.trace";
    store_trace(adversarial_trace(4000, 1000, 600000, 200, 5), path.string());

    Scenario sc = base_scenario();
    sc.vms[0].trace = TraceSpec{};
    sc.vms[0].trace.file = path.string();
    sc.tracker.mws_ns = 750'000;
    sc.cost.ad_set_cost_ns = 5;
    sc.cost.migration_contention_multiplier = 1.2;

    sc.policy.kind = PolicyKind::NumaB;
    const RunReport numa = run_scenario(sc);
    sc.policy.kind = PolicyKind::HmmvIsland;
    const RunReport hmmv = run_scenario(sc);
    std::filesystem::remove(path);

    CHECK(numa.vms[0].slowdown >= 1.25);
    CHECK(hmmv.vms[0].slowdown <= 1.15);
    CHECK(hmmv.vms[0].slowdown < numa.vms[0].slowdown);
    CHECK(hmmv.vms[0].bytes_migrated > 0);
    // Per-epoch series converges below the asymptotic bound late in the run.
    const auto& epochs = hmmv.vms[0].epochs;
    REQUIRE(epochs.size() >= 4);
    CHECK(epochs.back().slowdown() <= 1.13);
}

TEST_CASE("time accounting closes exactly") {
    Scenario sc = base_scenario();
    for (PolicyKind kind :
         {PolicyKind::HmmvIsland, PolicyKind::EptScan, PolicyKind::FixedThreshold,
          PolicyKind::TwoList, PolicyKind::MmCache}) {
        sc.policy.kind = kind;
        const RunReport r = run_scenario(sc);
        const VmReport& vm = r.vms[0];
        CHECK(vm.estimated_time_ns ==
              vm.access_ns + vm.ad_set_ns + vm.tlb_ns + vm.trap_ns + vm.pause_ns);
        // Epoch series sums to the total.
        std::uint64_t epoch_sum = 0;
        for (const EpochRecord& e : vm.epochs) epoch_sum += e.est_ns;
        CHECK(epoch_sum <= vm.estimated_time_ns);
    }
}

TEST_CASE("frame conservation holds at run end") {
    Scenario sc = base_scenario();
    sc.policy.kind = PolicyKind::HmmvIsland;
    Simulation sim(sc);
    sim.run();
    const std::uint64_t dram_used = sim.total_resident(Tier::Dram);
    const std::uint64_t nvm_used = sim.total_resident(Tier::Nvm);
    CHECK(dram_used + sim.host_frames().free_of(Tier::Dram) == sc.total_dram_pages);
    CHECK(nvm_used + sim.host_frames().free_of(Tier::Nvm) == sc.total_nvm_pages);
    CHECK(dram_used <= sc.vms[0].dram_quota_pages);
}

TEST_CASE("pool mode rebalances quotas with conservation") {
    Scenario sc;
    sc.seed = 7;
    sc.total_dram_pages = 4096;
    sc.total_nvm_pages = 40000;
    sc.tracker.mws_ns = 1'000'000;
    sc.tracker.windows_per_epoch = 4;
    sc.cost.ad_set_cost_ns = 20;
    sc.policy.kind = PolicyKind::HmmvPool;
    for (int i = 0; i < 2; ++i) {
        VmConfig vm;
        vm.mapped_pages = 4000;
        vm.dram_quota_pages = 2000;
        HotspotSpec hs;
        hs.total_pages = 4000;
        // VM0 wants more DRAM than its quota; VM1 needs much less.
        hs.hot_fraction = i == 0 ? 0.75 : 0.25;
        hs.hot_access_prob = 0.95;
        hs.ops = 120000;
        hs.inter_access_gap_ns = 100;
        hs.seed = 100 + i;
        vm.trace.hotspot = hs;
        sc.vms.push_back(vm);
    }
    const RunReport r = run_scenario(sc);
    REQUIRE(!r.pool_series.empty());
    for (const PoolEpochRecord& rec : r.pool_series) {
        std::uint64_t sum = rec.pool_free_dram;
        for (std::uint64_t q : rec.quotas) sum += q;
        CHECK(sum == sc.total_dram_pages);  // conservation each epoch
        CHECK(rec.quotas[0] >= 1500);       // within 75 percent lower limit
        CHECK(rec.quotas[0] <= 2500);       // within 125 percent upper limit
        CHECK(rec.quotas[1] >= 1500);
        CHECK(rec.quotas[1] <= 2500);
    }
    CHECK(r.vms[0].final_quota_pages > 2000);  // the hungry VM grew
    CHECK(r.vms[1].final_quota_pages < 2000);  // the light VM shrank
}

TEST_CASE("scenario json parsing is strict about unknown keys") {
    Json j;
    j["total_dram_pages"] = 100;
    j["total_nvm_pages"] = 100;
    j["vms"] = Json::array();
    Json vm;
    vm["mapped_pages"] = 10;
    vm["dram_quota_pages"] = 5;
    vm["trace"] = Json{{"uniform", Json{{"ops", 100}}}};
    j["vms"].push_back(vm);
    CHECK_NOTHROW(scenario_from_json(j));

    Json bad = j;
    bad["totaldram"] = 5;
    CHECK_THROWS_AS(scenario_from_json(bad), ConfigError);

    Json bad2 = j;
    bad2["vms"][0]["quota"] = 5;
    CHECK_THROWS_AS(scenario_from_json(bad2), ConfigError);

    Json bad3 = j;
    bad3["policy"] = "defrag";
    CHECK_THROWS_AS(scenario_from_json(bad3), ConfigError);

    Json bad4 = j;
    bad4["vms"][0]["dram_quota_pages"] = 50;  // above mapped_pages
    CHECK_THROWS_AS(scenario_from_json(bad4), ConfigError);
}

TEST_CASE("run report round-trips through json") {
    Scenario sc = base_scenario();
    sc.policy.kind = PolicyKind::HmmvIsland;
    const RunReport r = run_scenario(sc);
    const RunReport back = report_from_json(to_json(r));
    CHECK(back == r);
}

TEST_CASE("emitted files carry the schema version and expected row counts") {
    Scenario sc = base_scenario();
    const RunReport r = run_scenario(sc);
    const auto dir = std::filesystem::temp_directory_path() / "hmmv_report_test";
    const auto written = emit_report(r, dir.string(), "csv,json");
    CHECK(written.size() == 7);
    for (const std::string& f : written) {
        std::ifstream in(f);
        std::string head(256, '\0');
        in.read(head.data(), 256);
        CHECK(head.find("schema_version") != std::string::npos);
    }
    // windows.csv rows = processed windows (+ version + header).
    std::ifstream in(dir / "windows.csv");
    std::size_t lines = 0;
    std::string line;
    while (std::getline(in, line)) lines++;
    CHECK(lines == 2 + r.vms[0].windows.size());
    std::filesystem::remove_all(dir);
}

TEST_CASE("randomized scenario fuzzing holds the global invariants") {
    Rng meta(777);
    for (int iter = 0; iter < 24; ++iter) {
        Scenario sc;
        sc.seed = 50000 + iter;
        sc.tracker.mws_ns = 300'000 + meta.next_below(1'000'000);
        sc.tracker.windows_per_epoch = 2 + static_cast<std::uint32_t>(meta.next_below(7));
        sc.tracker.max_level = 3 + static_cast<std::uint32_t>(meta.next_below(5));
        sc.tracker.clock_period_ns = sc.tracker.mws_ns * sc.tracker.windows_per_epoch *
                                     (1 + meta.next_below(3));
        sc.tracker.migration_threshold_bytes = 1 + meta.next_below(8ull << 20);
        sc.cost.ad_set_cost_ns = meta.next_below(200);
        sc.cost.vmtrap_cost_ns = 500 + meta.next_below(4000);
        sc.migration.batch_cap = 64 + static_cast<std::uint32_t>(meta.next_below(512));
        const PolicyKind kinds[] = {PolicyKind::HmmvIsland, PolicyKind::HmmvPool,
                                    PolicyKind::EptScan,    PolicyKind::FixedThreshold,
                                    PolicyKind::TwoList,    PolicyKind::NumaB,
                                    PolicyKind::MmCache};
        sc.policy.kind = kinds[meta.next_below(7)];
        sc.policy.fixed_threshold = meta.next_below(16);
        sc.check_conservation = true;
        const MigrationProtocol protos[] = {MigrationProtocol::Pml, MigrationProtocol::Wp,
                                            MigrationProtocol::Linux};
        sc.migration.protocol = protos[meta.next_below(3)];

        const int nvms = 1 + static_cast<int>(meta.next_below(3));
        std::uint64_t quota_sum = 0, mapped_sum = 0;
        for (int v = 0; v < nvms; ++v) {
            VmConfig vm;
            vm.mapped_pages = 600 + meta.next_below(3000);
            vm.dram_quota_pages = vm.mapped_pages / (2 + meta.next_below(3));
            vm.vcpus = 1 + static_cast<std::uint32_t>(meta.next_below(4));
            const InitialPlacement placements[] = {InitialPlacement::FirstTouch,
                                                   InitialPlacement::DramFirst,
                                                   InitialPlacement::AllNvm};
            vm.placement = placements[meta.next_below(3)];
            HotspotSpec hs;
            hs.total_pages = vm.mapped_pages;
            hs.hot_fraction = 0.1 + 0.5 * meta.next_double();
            hs.hot_access_prob = 0.5 + 0.5 * meta.next_double();
            hs.read_ratio = meta.next_double();
            hs.ops = 20'000 + meta.next_below(60'000);
            hs.inter_access_gap_ns = 50 + meta.next_below(400);
            hs.phases = 1 + static_cast<std::uint32_t>(meta.next_below(3));
            hs.vcpus = vm.vcpus;
            hs.seed = 1 + meta.next_below(1 << 20);
            vm.trace.hotspot = hs;
            quota_sum += vm.dram_quota_pages;
            mapped_sum += vm.mapped_pages;
            sc.vms.push_back(vm);
        }
        sc.total_dram_pages = quota_sum + meta.next_below(2000);
        sc.total_nvm_pages = mapped_sum + meta.next_below(4000);

        CAPTURE(iter);
        CAPTURE(policy_name(sc.policy.kind));
        Simulation sim(sc);
        RunReport r;
        REQUIRE_NOTHROW(r = sim.run());
        for (const VmReport& vm : r.vms) {
            CHECK(vm.estimated_time_ns ==
                  vm.access_ns + vm.ad_set_ns + vm.tlb_ns + vm.trap_ns + vm.pause_ns);
            CHECK(vm.slowdown >= 1.0);
        }
        CHECK(sim.total_resident(Tier::Dram) + sim.host_frames().free_of(Tier::Dram) ==
              sc.total_dram_pages);
        CHECK(sim.total_resident(Tier::Nvm) + sim.host_frames().free_of(Tier::Nvm) ==
              sc.total_nvm_pages);
        if (iter % 6 == 0) CHECK(run_scenario(sc) == r);  // determinism spot checks
    }
}

TEST_CASE("huge-page geometry runs the same machinery at 2 MiB granularity") {
    Scenario sc = base_scenario();
    sc.geometry.page_size = 2097152;
    sc.policy.kind = PolicyKind::HmmvIsland;
    const RunReport r = run_scenario(sc);
    CHECK(r.vms[0].slowdown >= 1.0);
    CHECK(r.vms[0].estimated_time_ns ==
          r.vms[0].access_ns + r.vms[0].ad_set_ns + r.vms[0].tlb_ns + r.vms[0].trap_ns +
              r.vms[0].pause_ns);
    if (r.vms[0].pages_migrated > 0)
        CHECK(r.vms[0].bytes_migrated >= r.vms[0].pages_migrated * 2097152);
}

TEST_CASE("mm cache policy reports hit statistics") {
    Scenario sc = base_scenario();
    sc.policy.kind = PolicyKind::MmCache;
    sc.total_dram_pages = 1000;  // cache of 1000 frames, 4000-page footprint
    sc.vms[0].dram_quota_pages = 0;  // tiers are hardware-managed here
    const RunReport r = run_scenario(sc);
    CHECK(r.vms[0].mm.hits + r.vms[0].mm.misses == 100000);
    CHECK(r.vms[0].mm.misses > 0);
    CHECK(r.vms[0].slowdown >= 1.0);
}
