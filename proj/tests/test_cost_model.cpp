#include <doctest.h>

#include "hmmv/common.hpp"
#include "hmmv/cost_model.hpp"

using namespace hmmv;

TEST_CASE("access latency defaults per tier and kind") {
    CostModel m;
    CHECK(access_latency(AccessKind::Read, Tier::Dram, m) == 81);
    CHECK(access_latency(AccessKind::Write, Tier::Dram, m) == 82);
    CHECK(access_latency(AccessKind::Read, Tier::Nvm, m) == 310);
    CHECK(access_latency(AccessKind::Write, Tier::Nvm, m) == 94);
}

TEST_CASE("transfer time at one thread runs at the slower endpoint bandwidth") {
    CostModel m;
    // 4096 B at min(120, 13) = 13 GB/s and min(37, 82) = 37 GB/s.
    CHECK(transfer_time(4096, Tier::Dram, Tier::Nvm, 1, m) == 315);
    CHECK(transfer_time(4096, Tier::Nvm, Tier::Dram, 1, m) == 111);
}

TEST_CASE("transfer with zero threads is a configuration error") {
    CostModel m;
    CHECK_THROWS_AS(transfer_time(4096, Tier::Dram, Tier::Nvm, 0, m), ConfigError);
}

TEST_CASE("thread scaling doubles throughput at the default cap") {
    CostModel m;
    const std::uint64_t serial = transfer_time(1 << 20, Tier::Nvm, Tier::Dram, 1, m);
    const std::uint64_t parallel = transfer_time(1 << 20, Tier::Nvm, Tier::Dram, 4, m);
    CHECK(static_cast<double>(serial) / static_cast<double>(parallel) == doctest::Approx(2.0).epsilon(0.01));
    // Flat beyond the cap.
    CHECK(transfer_time(1 << 20, Tier::Nvm, Tier::Dram, 16, m) == parallel);
}

TEST_CASE("transfer time is pure and monotone") {
    CostModel m;
    Rng rng(99);
    for (int i = 0; i < 200; ++i) {
        const std::uint64_t bytes = 1 + rng.next_below(1 << 26);
        const Tier src = rng.next_bool(0.5) ? Tier::Dram : Tier::Nvm;
        const Tier dst = rng.next_bool(0.5) ? Tier::Dram : Tier::Nvm;
        const std::uint32_t threads = 1 + static_cast<std::uint32_t>(rng.next_below(8));
        const std::uint64_t t1 = transfer_time(bytes, src, dst, threads, m);
        CHECK(transfer_time(bytes, src, dst, threads, m) == t1);  // same inputs, same output
        CHECK(transfer_time(bytes + 4096, src, dst, threads, m) >= t1);
        if (threads > 1) CHECK(transfer_time(bytes, src, dst, threads - 1, m) >= t1);
    }
}

TEST_CASE("default model keeps NVM at or above DRAM latency") {
    CostModel m;
    CHECK(access_latency(AccessKind::Read, Tier::Nvm, m) >=
          access_latency(AccessKind::Read, Tier::Dram, m));
    CHECK(access_latency(AccessKind::Write, Tier::Nvm, m) >=
          access_latency(AccessKind::Write, Tier::Dram, m));
    CHECK(m.validate().empty());
}

TEST_CASE("inverted what-if configs warn instead of failing") {
    CostModel m;
    m.read_latency_ns[1] = 40;  // NVM faster than DRAM
    m.read_bw[1] = 200e9;
    const auto warnings = m.validate();
    CHECK(warnings.size() == 2);
}

TEST_CASE("invalid models are rejected") {
    CostModel m;
    m.read_latency_ns[0] = 0;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    CostModel m2;
    m2.write_bw[1] = 0.0;
    CHECK_THROWS_AS(m2.validate(), ConfigError);
    CostModel m3;
    m3.migration_contention_multiplier = 0.5;
    CHECK_THROWS_AS(m3.validate(), ConfigError);
}

TEST_CASE("page geometry rules") {
    PageGeometry g;
    g.validate();
    CHECK(g.gpt_page_of(0) == 0);
    CHECK(g.gpt_page_of(511) == 0);
    CHECK(g.gpt_page_of(512) == 1);
    PageGeometry bad;
    bad.page_size = 8192;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    PageGeometry bad2;
    bad2.ptes_per_gpt_page = 256;  // must be 512 at 4 KiB
    CHECK_THROWS_AS(bad2.validate(), ConfigError);
}
