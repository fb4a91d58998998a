#include <doctest.h>

#include <algorithm>
#include <vector>

#include "hmmv/migrator.hpp"
#include "hmmv/mmu.hpp"

using namespace hmmv;

namespace {

// Mini replay harness mirroring the simulator's access path: engine hook,
// then EPT-unfilled refault, then the plain MMU access.
struct MigRig {
    explicit MigRig(std::uint64_t pages, std::uint64_t free_dram, std::uint64_t free_nvm,
                    std::uint32_t batch_cap = 512)
        : mmu(PageGeometry{}, model, pages, 1),
          engine(model, PageGeometry{}, frames, shared, batch_cap) {
        frames.free[0] = free_dram;
        frames.free[1] = free_nvm;
        shared.multiplier = model.migration_contention_multiplier;
    }

    void map_all(Tier tier) {
        for (PageIndex p = 0; p < mmu.total_pages(); ++p) mmu.map_page(p, tier);
    }

    void access(PageIndex page, AccessKind kind, SimTime t) {
        AccessEvent e;
        e.page = page;
        e.kind = kind;
        e.time = t;
        engine.advance(t, mmu);
        if (engine.on_access(e, mmu)) return;
        PageState& ps = mmu.page(e.page);
        if (ps.flags & PageState::kEptUnfilled) {
            mmu.charge_trap(TrapKind::EptFault, e.vcpu);
            refault_pause_ns += model.vmtrap_cost_ns;
            ps.flags &= static_cast<std::uint8_t>(~PageState::kEptUnfilled);
        }
        double contention[2];
        shared.fill_contention(contention);
        mmu.simulate_access(e, contention);
    }

    MigrationReport drain() {
        engine.advance(kNoTime - 1, mmu);
        REQUIRE(engine.idle());
        REQUIRE(!engine.completed_reports().empty());
        MigrationReport r = engine.completed_reports().back();
        engine.completed_reports().clear();
        return r;
    }

    MigrationBatch batch(std::uint64_t n, MigrationProtocol proto, Tier src = Tier::Nvm,
                         Tier dst = Tier::Dram) {
        MigrationBatch b;
        for (PageIndex p = 0; p < n; ++p) b.pages.push_back(p);
        b.src = src;
        b.dst = dst;
        b.protocol = proto;
        return b;
    }

    CostModel model;
    HostFrames frames;
    MigrationShared shared;
    VmMmu mmu;
    MigrationEngine engine;
    std::uint64_t refault_pause_ns = 0;
};

}  // namespace

TEST_CASE("empty batch completes immediately with a zero report") {
    MigRig rig(8, 8, 8);
    rig.map_all(Tier::Nvm);
    rig.engine.enqueue_batch(rig.batch(0, MigrationProtocol::Pml), rig.mmu, 100);
    REQUIRE(rig.engine.idle());
    const MigrationReport r = rig.engine.completed_reports().back();
    CHECK(r.pages_moved == 0);
    CHECK(r.bytes == 0);
    CHECK(r.copy_time_ns == 0);
}

TEST_CASE("access-free migrations obey the trap laws") {
    const std::uint64_t n = 1000;

    SUBCASE("PML: zero traps, even after retouch (warm EPT fill)") {
        MigRig rig(n, n, n);
        rig.map_all(Tier::Nvm);
        rig.engine.enqueue_batch(rig.batch(n, MigrationProtocol::Pml), rig.mmu, 0);
        const MigrationReport r = rig.drain();
        CHECK(r.traps.total() == 0);
        CHECK(r.pages_moved == n);
        for (PageIndex p = 0; p < n; ++p) rig.access(p, AccessKind::Read, r.finished + 1000 + p);
        CHECK(rig.mmu.traps().total() == 0);
        CHECK(rig.mmu.dram_resident() == n);
    }
    SUBCASE("WP: exactly one EPT refault per page, deferred until touched") {
        MigRig rig(n, n, n);
        rig.map_all(Tier::Nvm);
        rig.engine.enqueue_batch(rig.batch(n, MigrationProtocol::Wp), rig.mmu, 0);
        const MigrationReport r = rig.drain();
        CHECK(r.traps.total() == 0);  // nothing touched during migration
        for (PageIndex p = 0; p < n / 2; ++p) rig.access(p, AccessKind::Read, r.finished + 1000 + p);
        CHECK(rig.mmu.traps().ept_fault == n / 2);  // untouched pages fault later
        for (PageIndex p = n / 2; p < n; ++p) rig.access(p, AccessKind::Read, r.finished + 2000 + p);
        CHECK(rig.mmu.traps().ept_fault == n);
        // Second touches do not fault again.
        for (PageIndex p = 0; p < n; ++p) rig.access(p, AccessKind::Read, r.finished + 9000 + p);
        CHECK(rig.mmu.traps().ept_fault == n);
    }
    SUBCASE("LINUX: one EPT refault per page on first re-access") {
        MigRig rig(n, n, n);
        rig.map_all(Tier::Nvm);
        rig.engine.enqueue_batch(rig.batch(n, MigrationProtocol::Linux), rig.mmu, 0);
        const MigrationReport r = rig.drain();
        CHECK(r.traps.total() == 0);
        for (PageIndex p = 0; p < n; ++p) rig.access(p, AccessKind::Read, r.finished + 1000 + p);
        CHECK(rig.mmu.traps().ept_fault == n);
    }
}

TEST_CASE("serial copy takes twice as long as four-thread copy") {
    const std::uint64_t n = 4096;
    MigRig pml_rig(n, n, n);
    pml_rig.map_all(Tier::Nvm);
    pml_rig.engine.enqueue_batch(pml_rig.batch(n, MigrationProtocol::Pml), pml_rig.mmu, 0);
    const MigrationReport pml = pml_rig.drain();

    MigRig linux_rig(n, n, n);
    linux_rig.map_all(Tier::Nvm);
    linux_rig.engine.enqueue_batch(linux_rig.batch(n, MigrationProtocol::Linux), linux_rig.mmu, 0);
    const MigrationReport linux_r = linux_rig.drain();

    const double ratio =
        static_cast<double>(linux_r.copy_time_ns) / static_cast<double>(pml.copy_time_ns);
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.025));
}

TEST_CASE("PML recopies exactly the pages written inside their copy window") {
    const std::uint64_t n = 64;
    MigRig rig(n, n, n, 64);
    rig.map_all(Tier::Nvm);
    // Write page 3 before the batch starts: captured by the primary copy.
    rig.access(3, AccessKind::Write, 10);
    rig.engine.enqueue_batch(rig.batch(n, MigrationProtocol::Pml), rig.mmu, 1000);
    const std::uint64_t copy_ns = transfer_time(n * 4096, Tier::Nvm, Tier::Dram, 4, rig.model);
    // Writes to pages 5 and 9 land inside the copy window; page 3 again too.
    rig.access(5, AccessKind::Write, 1000 + copy_ns / 4);
    rig.access(9, AccessKind::Write, 1000 + copy_ns / 2);
    const MigrationReport r = rig.drain();
    CHECK(r.dirty_recopied == 2);
    CHECK(r.pages_moved == n);
    CHECK(r.bytes == (n + 2) * 4096);
    CHECK(r.traps.total() == 0);  // dirty handling needs no exits
}

TEST_CASE("WP faults every write to a protected page and recopies copy-window dirt") {
    const std::uint64_t n = 64;
    MigRig rig(n, n, n, 64);
    rig.map_all(Tier::Nvm);
    rig.engine.enqueue_batch(rig.batch(n, MigrationProtocol::Wp), rig.mmu, 1000);
    const std::uint64_t copy_ns = transfer_time(n * 4096, Tier::Nvm, Tier::Dram, 4, rig.model);
    rig.access(7, AccessKind::Write, 1000 + copy_ns / 4);
    rig.access(7, AccessKind::Write, 1000 + copy_ns / 3);  // faults again: still protected
    rig.access(12, AccessKind::Read, 1000 + copy_ns / 2);  // reads sail through
    const MigrationReport r = rig.drain();
    CHECK(r.traps.wp_fault == 2);
    CHECK(r.dirty_recopied == 1);
    CHECK(r.total_pause_time_ns >= 2 * rig.model.vmtrap_cost_ns);
}

TEST_CASE("WP leaves concurrent reads alone") {
    const std::uint64_t n = 64;
    MigRig rig(n, n, n, 64);
    rig.map_all(Tier::Nvm);
    rig.engine.enqueue_batch(rig.batch(n, MigrationProtocol::Wp), rig.mmu, 1000);
    const std::uint64_t copy_ns = transfer_time(n * 4096, Tier::Nvm, Tier::Dram, 4, rig.model);
    for (int i = 0; i < 20; ++i)
        rig.access(static_cast<PageIndex>(i), AccessKind::Read, 1000 + i * (copy_ns / 32));
    const MigrationReport r = rig.drain();
    CHECK(r.traps.wp_fault == 0);
    CHECK(r.dirty_recopied == 0);
    // Refaults arrive only as pages are touched after their remap.
    for (PageIndex p = 0; p < n; ++p) rig.access(p, AccessKind::Read, r.finished + 100 + p);
    CHECK(rig.mmu.traps().ept_fault == n);
}

TEST_CASE("LINUX stalls accesses to not-yet-remapped pages until their remap") {
    MigRig rig(1, 1, 1, 64);
    rig.map_all(Tier::Nvm);
    rig.engine.enqueue_batch(rig.batch(1, MigrationProtocol::Linux), rig.mmu, 1000);
    // Single page, one access right at the unmap instant: the pause equals
    // the page's full copy time.
    const std::uint64_t copy_ns = transfer_time(4096, Tier::Nvm, Tier::Dram, 1, rig.model);
    rig.access(0, AccessKind::Read, 1000);
    const MigrationReport r = rig.drain();
    CHECK(r.total_pause_time_ns >= copy_ns);
    CHECK(rig.mmu.account().pause_ns == copy_ns);
    CHECK(rig.mmu.traps().ept_fault == 1);  // resolved access fills the EPT
    CHECK(rig.mmu.dram_resident() == 1);
}

TEST_CASE("frames move between tiers by exactly the batch size") {
    const std::uint64_t n = 256;
    MigRig rig(n, n + 10, n + 3);
    rig.map_all(Tier::Nvm);  // consumes no frames here: map_page only counts residency
    const std::uint64_t dram0 = rig.frames.free[0];
    const std::uint64_t nvm0 = rig.frames.free[1];
    rig.engine.enqueue_batch(rig.batch(n, MigrationProtocol::Pml), rig.mmu, 0);
    rig.drain();
    CHECK(rig.frames.free[0] == dram0 - n);
    CHECK(rig.frames.free[1] == nvm0 + n);
    CHECK(rig.mmu.dram_resident() == n);
    CHECK(rig.mmu.nvm_resident() == 0);
}

TEST_CASE("insufficient destination frames truncate the plan with a note") {
    const std::uint64_t n = 100;
    MigRig rig(n, 30, n, 16);
    rig.map_all(Tier::Nvm);
    rig.engine.enqueue_batch(rig.batch(n, MigrationProtocol::Pml), rig.mmu, 0);
    const MigrationReport r = rig.drain();
    CHECK(r.pages_moved == 30);
    CHECK(r.truncated_pages == 70);
    CHECK(rig.mmu.dram_resident() == 30);
    CHECK(rig.frames.free[0] == 0);
    // Untruncated pages stay usable on the source tier.
    rig.access(99, AccessKind::Read, r.finished + 10);
    CHECK(rig.mmu.page(99).tier() == Tier::Nvm);
}

TEST_CASE("batch on pages absent from the source tier is rejected") {
    MigRig rig(8, 8, 8);
    rig.map_all(Tier::Dram);
    CHECK_THROWS_AS(rig.engine.enqueue_batch(rig.batch(4, MigrationProtocol::Pml), rig.mmu, 0),
                    InvariantBreach);
}

TEST_CASE("pause dominance holds across randomized write-bearing replays") {
    const std::uint64_t n = 512;
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        std::uint64_t pauses[3] = {0, 0, 0};
        const MigrationProtocol protos[3] = {MigrationProtocol::Pml, MigrationProtocol::Wp,
                                             MigrationProtocol::Linux};
        // One shared event schedule: accesses spread over the longest
        // (serial) migration window plus a retouch tail.
        CostModel model;
        const std::uint64_t linux_ns = transfer_time(n * 4096, Tier::Nvm, Tier::Dram, 1, model);
        std::vector<AccessEvent> events;
        Rng rng(seed);
        for (int i = 0; i < 400; ++i) {
            AccessEvent e;
            e.time = 1000 + rng.next_below(linux_ns + linux_ns / 4);
            e.page = rng.next_below(n);
            e.kind = rng.next_bool(0.6) ? AccessKind::Write : AccessKind::Read;
            events.push_back(e);
        }
        std::sort(events.begin(), events.end(),
                  [](const AccessEvent& a, const AccessEvent& b) { return a.time < b.time; });
        for (int pi = 0; pi < 3; ++pi) {
            MigRig rig(n, n, n, 128);
            rig.map_all(Tier::Nvm);
            rig.engine.enqueue_batch(rig.batch(n, protos[pi]), rig.mmu, 1000);
            for (const AccessEvent& e : events) rig.access(e.page, e.kind, e.time);
            const MigrationReport r = rig.drain();
            pauses[pi] = r.total_pause_time_ns + rig.refault_pause_ns;
        }
        CAPTURE(seed);
        CHECK(pauses[0] <= pauses[1]);  // PML <= WP
        CHECK(pauses[1] <= pauses[2]);  // WP <= LINUX
    }
}

TEST_CASE("data consistency proxy: recopied pages are exactly the copy-window writes") {
    // Single-slice batches make the copy window a closed form, so a replay
    // bookkeeping oracle can predict the dirty set exactly.
    const std::uint64_t n = 256;
    const SimTime t0 = 5000;
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
        for (MigrationProtocol proto : {MigrationProtocol::Pml, MigrationProtocol::Wp}) {
            CostModel model;
            const std::uint64_t copy_ns = transfer_time(n * 4096, Tier::Nvm, Tier::Dram, 4, model);
            Rng rng(seed);
            std::vector<AccessEvent> events;
            for (int i = 0; i < 500; ++i) {
                AccessEvent e;
                e.time = rng.next_below(t0 + 3 * copy_ns);
                e.page = rng.next_below(n);
                e.kind = rng.next_bool(0.5) ? AccessKind::Write : AccessKind::Read;
                events.push_back(e);
            }
            std::sort(events.begin(), events.end(),
                      [](const AccessEvent& a, const AccessEvent& b) { return a.time < b.time; });

            std::vector<std::uint8_t> expect_dirty(n, 0);
            for (const AccessEvent& e : events)
                if (e.kind == AccessKind::Write && e.time >= t0 && e.time < t0 + copy_ns)
                    expect_dirty[e.page] = 1;
            std::vector<PageIndex> expected;
            for (PageIndex p = 0; p < n; ++p)
                if (expect_dirty[p]) expected.push_back(p);

            MigRig rig(n, n, n, /*batch_cap=*/static_cast<std::uint32_t>(n));
            rig.map_all(Tier::Nvm);
            std::size_t i = 0;
            for (; i < events.size() && events[i].time < t0; ++i)
                rig.access(events[i].page, events[i].kind, events[i].time);
            rig.engine.enqueue_batch(rig.batch(n, proto), rig.mmu, t0);
            for (; i < events.size(); ++i) rig.access(events[i].page, events[i].kind, events[i].time);
            MigrationReport r = rig.drain();
            std::sort(r.recopied_pages.begin(), r.recopied_pages.end());
            CAPTURE(seed);
            CAPTURE(protocol_name(proto));
            CHECK(r.recopied_pages == expected);
        }
    }
}
