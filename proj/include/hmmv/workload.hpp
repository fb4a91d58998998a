// Synthetic trace generators: hotspot (optionally phased), sequential sweeps
// and uniform random. All generators are pure functions of their spec
// including the seed.
#pragma once

#include <cstdint>
#include <string>

#include "hmmv/common.hpp"
#include "hmmv/trace.hpp"

namespace hmmv {

struct HotspotSpec {
    std::uint64_t total_pages = 0;
    double hot_fraction = 0.2;    // (0, 1]: share of pages forming the hot region
    double hot_access_prob = 0.9; // probability an op targets the hot region
    double read_ratio = 0.5;
    std::uint64_t ops = 0;
    std::uint64_t inter_access_gap_ns = 10'000;
    std::uint32_t phases = 1;     // each phase relocates the hot region
    std::uint32_t vcpus = 1;
    std::uint64_t seed = 1;

    void validate() const {
        if (total_pages == 0) throw ConfigError("hotspot: total_pages must be > 0");
        if (!(hot_fraction > 0.0) || hot_fraction > 1.0)
            throw ConfigError("hotspot: hot_fraction must be in (0,1]");
        if (hot_access_prob < 0.0 || hot_access_prob > 1.0)
            throw ConfigError("hotspot: hot_access_prob must be in [0,1]");
        if (read_ratio < 0.0 || read_ratio > 1.0)
            throw ConfigError("hotspot: read_ratio must be in [0,1]");
        if (phases < 1) throw ConfigError("hotspot: phases must be >= 1");
        if (vcpus < 1) throw ConfigError("hotspot: vcpus must be >= 1");
        const auto hot_pages = static_cast<std::uint64_t>(hot_fraction * static_cast<double>(total_pages));
        if (hot_pages < 1) throw ConfigError("hotspot: hot region smaller than one page");
        if (hot_pages > total_pages) throw ConfigError("hotspot: hot region larger than footprint");
    }

    std::uint64_t hot_pages() const {
        return static_cast<std::uint64_t>(hot_fraction * static_cast<double>(total_pages));
    }
};

// Phase p uses the disjoint range [p*hot, (p+1)*hot) while it fits in the
// footprint, then falls back to a freshly drawn start.
inline Trace gen_hotspot(const HotspotSpec& spec) {
    spec.validate();
    Trace trace;
    trace.total_pages = spec.total_pages;
    trace.events.reserve(spec.ops);
    Rng rng(spec.seed);

    const std::uint64_t hot = spec.hot_pages();
    SimTime t = 0;
    for (std::uint32_t phase = 0; phase < spec.phases; ++phase) {
        std::uint64_t hot_start;
        if ((phase + 1) * hot <= spec.total_pages) {
            hot_start = phase * hot;
        } else {
            hot_start = rng.next_below(spec.total_pages - hot + 1);
        }
        const std::uint64_t phase_ops =
            spec.ops / spec.phases + (phase == spec.phases - 1 ? spec.ops % spec.phases : 0);
        for (std::uint64_t i = 0; i < phase_ops; ++i) {
            AccessEvent e;
            e.time = t;
            t += spec.inter_access_gap_ns;
            e.vcpu = static_cast<VcpuId>(trace.events.size() % spec.vcpus);
            e.page = rng.next_bool(spec.hot_access_prob)
                         ? hot_start + rng.next_below(hot)
                         : rng.next_below(spec.total_pages);
            e.kind = rng.next_bool(spec.read_ratio) ? AccessKind::Read : AccessKind::Write;
            trace.events.push_back(e);
        }
    }
    return trace;
}

struct SequentialSpec {
    std::uint64_t total_pages = 0;
    double read_ratio = 0.5;
    std::uint32_t passes = 1;
    std::uint64_t inter_access_gap_ns = 10'000;
    std::uint32_t vcpus = 1;
    std::uint64_t seed = 1;

    void validate() const {
        if (total_pages == 0) throw ConfigError("sequential: total_pages must be > 0");
        if (read_ratio < 0.0 || read_ratio > 1.0)
            throw ConfigError("sequential: read_ratio must be in [0,1]");
        if (passes < 1) throw ConfigError("sequential: passes must be >= 1");
        if (vcpus < 1) throw ConfigError("sequential: vcpus must be >= 1");
    }
};

inline Trace gen_sequential(const SequentialSpec& spec) {
    spec.validate();
    Trace trace;
    trace.total_pages = spec.total_pages;
    trace.events.reserve(spec.total_pages * spec.passes);
    Rng rng(spec.seed);
    SimTime t = 0;
    for (std::uint32_t pass = 0; pass < spec.passes; ++pass) {
        for (std::uint64_t p = 0; p < spec.total_pages; ++p) {
            AccessEvent e;
            e.time = t;
            t += spec.inter_access_gap_ns;
            e.vcpu = static_cast<VcpuId>(trace.events.size() % spec.vcpus);
            e.page = p;
            e.kind = rng.next_bool(spec.read_ratio) ? AccessKind::Read : AccessKind::Write;
            trace.events.push_back(e);
        }
    }
    return trace;
}

struct UniformSpec {
    std::uint64_t total_pages = 0;
    double read_ratio = 0.5;
    std::uint64_t ops = 0;
    std::uint64_t inter_access_gap_ns = 10'000;
    std::uint32_t vcpus = 1;
    std::uint64_t seed = 1;

    void validate() const {
        if (total_pages == 0) throw ConfigError("uniform: total_pages must be > 0");
        if (read_ratio < 0.0 || read_ratio > 1.0)
            throw ConfigError("uniform: read_ratio must be in [0,1]");
        if (vcpus < 1) throw ConfigError("uniform: vcpus must be >= 1");
    }
};

inline Trace gen_uniform(const UniformSpec& spec) {
    spec.validate();
    Trace trace;
    trace.total_pages = spec.total_pages;
    trace.events.reserve(spec.ops);
    Rng rng(spec.seed);
    SimTime t = 0;
    for (std::uint64_t i = 0; i < spec.ops; ++i) {
        AccessEvent e;
        e.time = t;
        t += spec.inter_access_gap_ns;
        e.vcpu = static_cast<VcpuId>(i % spec.vcpus);
        e.page = rng.next_below(spec.total_pages);
        e.kind = rng.next_bool(spec.read_ratio) ? AccessKind::Read : AccessKind::Write;
        trace.events.push_back(e);
    }
    return trace;
}

}  // namespace hmmv
