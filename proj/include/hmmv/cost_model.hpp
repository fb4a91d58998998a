// Memory tiers, page geometry and the latency/bandwidth cost model that
// turns simulated events into estimated nanoseconds.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hmmv/common.hpp"

namespace hmmv {

enum class Tier : std::uint8_t { Dram = 0, Nvm = 1 };

inline const char* tier_name(Tier t) { return t == Tier::Dram ? "dram" : "nvm"; }

enum class AccessKind : std::uint8_t { Read = 0, Write = 1 };

struct PageGeometry {
    std::uint64_t page_size = 4096;        // bytes; 4 KiB or 2 MiB
    std::uint32_t ptes_per_gpt_page = 512; // guest data pages per LL-GPT page

    void validate() const {
        if (page_size != 4096 && page_size != 2097152)
            throw ConfigError("page_size must be 4096 or 2097152, got " + std::to_string(page_size));
        if (ptes_per_gpt_page == 0)
            throw ConfigError("ptes_per_gpt_page must be positive");
        if (page_size == 4096 && ptes_per_gpt_page != 512)
            throw ConfigError("ptes_per_gpt_page must be 512 for 4 KiB pages");
    }

    GptPageId gpt_page_of(PageIndex page) const { return page / ptes_per_gpt_page; }
};

// Latencies in ns, bandwidths in bytes/second. Defaults for the two tiers
// come from measured DRAM / Optane PMem numbers; the overhead charges
// (vmtrap, tlb flush, A/D-bit set) are tunable estimates and are reported
// separately so results never hinge on them.
struct CostModel {
    std::uint64_t read_latency_ns[2] = {81, 310};
    std::uint64_t write_latency_ns[2] = {82, 94};
    double read_bw[2] = {120e9, 37e9};
    double write_bw[2] = {82e9, 13e9};

    std::uint64_t vmtrap_cost_ns = 2000;
    std::uint64_t tlb_flush_cost_ns = 500;  // per VCPU flushed
    std::uint64_t ad_set_cost_ns = 200;     // per access that sets an A/D bit
    double migration_contention_multiplier = 1.5;
    std::uint32_t threads_cap = 4;

    // Returns human-readable warnings for what-if configs that invert the
    // expected tier ordering; such configs are allowed, not errors.
    std::vector<std::string> validate() const {
        auto positive = [](double v) { return v > 0.0; };
        for (int t = 0; t < 2; ++t) {
            if (read_latency_ns[t] == 0 || write_latency_ns[t] == 0)
                throw ConfigError("all latencies must be > 0");
            if (!positive(read_bw[t]) || !positive(write_bw[t]))
                throw ConfigError("all bandwidths must be > 0");
        }
        if (migration_contention_multiplier < 1.0)
            throw ConfigError("migration_contention_multiplier must be >= 1");
        if (threads_cap == 0) throw ConfigError("threads_cap must be >= 1");
        std::vector<std::string> warnings;
        if (read_latency_ns[1] < read_latency_ns[0])
            warnings.push_back("NVM read latency below DRAM read latency");
        if (read_bw[1] > read_bw[0] || write_bw[1] > write_bw[0])
            warnings.push_back("NVM bandwidth above DRAM bandwidth");
        return warnings;
    }
};

inline std::uint64_t access_latency(AccessKind kind, Tier tier, const CostModel& model) {
    const int t = static_cast<int>(tier);
    return kind == AccessKind::Read ? model.read_latency_ns[t] : model.write_latency_ns[t];
}

// Thread speedup for bulk copies: sqrt(min(threads, cap)). One thread
// already reaches min(read_bw[src], write_bw[dst]); cap (default 4) threads
// reach twice that, the model's bandwidth ceiling, then the curve is flat.
inline double transfer_speedup(std::uint32_t threads, const CostModel& model) {
    const std::uint32_t effective = threads < model.threads_cap ? threads : model.threads_cap;
    return std::sqrt(static_cast<double>(effective));
}

inline std::uint64_t transfer_time(std::uint64_t bytes, Tier src, Tier dst,
                                   std::uint32_t threads, const CostModel& model) {
    if (bytes == 0) return 0;
    if (threads == 0) throw ConfigError("transfer requires at least one thread");
    const double bw = std::min(model.read_bw[static_cast<int>(src)],
                               model.write_bw[static_cast<int>(dst)]);
    if (!(bw > 0.0)) throw ConfigError("transfer bandwidth is zero");
    const double ns = static_cast<double>(bytes) * 1e9 / (bw * transfer_speedup(threads, model));
    return static_cast<std::uint64_t>(std::llround(ns));
}

}  // namespace hmmv
