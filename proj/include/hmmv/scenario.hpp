// Scenario configuration: one declarative JSON document per run. Unknown
// keys anywhere are errors.
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmmv/baselines.hpp"
#include "hmmv/classifier.hpp"
#include "hmmv/common.hpp"
#include "hmmv/cost_model.hpp"
#include "hmmv/migrator.hpp"
#include "hmmv/pool.hpp"
#include "hmmv/tracker.hpp"
#include "hmmv/workload.hpp"

namespace hmmv {

using Json = nlohmann::ordered_json;

enum class PolicyKind : std::uint8_t {
    HmmvIsland,
    HmmvPool,
    EptScan,
    FixedThreshold,
    TwoList,
    NumaB,
    MmCache,
};

inline const char* policy_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::HmmvIsland: return "hmmv_island";
        case PolicyKind::HmmvPool: return "hmmv_pool";
        case PolicyKind::EptScan: return "ept_scan";
        case PolicyKind::FixedThreshold: return "fixed_threshold";
        case PolicyKind::TwoList: return "two_list";
        case PolicyKind::NumaB: return "numa_b";
        default: return "mm_cache";
    }
}

inline PolicyKind policy_from_name(const std::string& name) {
    for (PolicyKind k : {PolicyKind::HmmvIsland, PolicyKind::HmmvPool, PolicyKind::EptScan,
                         PolicyKind::FixedThreshold, PolicyKind::TwoList, PolicyKind::NumaB,
                         PolicyKind::MmCache})
        if (name == policy_name(k)) return k;
    throw ConfigError("unknown policy: " + name);
}

struct PolicyConfig {
    PolicyKind kind = PolicyKind::HmmvIsland;
    Degree fixed_threshold = 8;

    bool manages_placement() const {
        return kind != PolicyKind::NumaB && kind != PolicyKind::MmCache;
    }
};

struct MigrationConfig {
    MigrationProtocol protocol = MigrationProtocol::Pml;
    std::uint32_t threads = 4;
    std::uint32_t batch_cap = 512;
    bool enabled = true;

    void validate() const {
        if (threads == 0) throw ConfigError("migration: threads must be >= 1");
        if (batch_cap == 0) throw ConfigError("migration: batch_cap must be >= 1");
    }
};

enum class InitialPlacement : std::uint8_t { FirstTouch, DramFirst, AllNvm };

inline const char* placement_name(InitialPlacement p) {
    switch (p) {
        case InitialPlacement::FirstTouch: return "first_touch";
        case InitialPlacement::DramFirst: return "dram_first";
        default: return "all_nvm";
    }
}

// Exactly one source must be set.
struct TraceSpec {
    std::string file;
    std::optional<HotspotSpec> hotspot;
    std::optional<UniformSpec> uniform;
    std::optional<SequentialSpec> sequential;

    int sources() const {
        return (file.empty() ? 0 : 1) + (hotspot ? 1 : 0) + (uniform ? 1 : 0) +
               (sequential ? 1 : 0);
    }
};

struct VmConfig {
    std::uint64_t mapped_pages = 0;
    std::uint64_t dram_quota_pages = 0;
    std::uint32_t vcpus = 1;
    InitialPlacement placement = InitialPlacement::FirstTouch;
    TraceSpec trace;
};

struct MmPolicyConfig {
    std::uint64_t block_size = 4096;
};

struct Scenario {
    std::uint32_t schema_version = 1;
    std::uint64_t seed = 1;
    PageGeometry geometry;
    CostModel cost;
    std::uint64_t total_dram_pages = 0;
    std::uint64_t total_nvm_pages = 0;
    PolicyConfig policy;
    TrackerConfig tracker;
    ClassifierConfig classifier;
    PoolConfig pool;
    MigrationConfig migration;
    MmPolicyConfig mm;
    std::vector<VmConfig> vms;
    bool compute_slowdown = true;
    bool check_conservation = false;  // verify frame conservation at every event

    void validate() const {
        geometry.validate();
        cost.validate();
        tracker.validate();
        classifier.validate();
        pool.validate();
        migration.validate();
        if (vms.empty()) throw ConfigError("scenario: at least one vm required");
        if (vms.size() > 0xffff) throw ConfigError("scenario: too many vms");
        if (total_dram_pages == 0) throw ConfigError("scenario: total_dram_pages must be > 0");
        std::uint64_t quota_sum = 0, nvm_need = 0;
        for (std::size_t i = 0; i < vms.size(); ++i) {
            const VmConfig& vm = vms[i];
            const std::string tag = "vm " + std::to_string(i) + ": ";
            if (vm.mapped_pages == 0) throw ConfigError(tag + "mapped_pages must be > 0");
            if (vm.dram_quota_pages > vm.mapped_pages)
                throw ConfigError(tag + "dram_quota_pages above mapped_pages");
            if (vm.vcpus == 0) throw ConfigError(tag + "vcpus must be >= 1");
            if (vm.trace.sources() != 1)
                throw ConfigError(tag + "exactly one trace source required");
            quota_sum += vm.dram_quota_pages;
            // all_nvm keeps the whole mapping on NVM regardless of quota.
            nvm_need += vm.placement == InitialPlacement::AllNvm
                            ? vm.mapped_pages
                            : vm.mapped_pages - vm.dram_quota_pages;
        }
        if (quota_sum > total_dram_pages)
            throw ConfigError("scenario: sum of DRAM quotas exceeds total_dram_pages");
        if (nvm_need > total_nvm_pages)
            throw ConfigError("scenario: NVM demand exceeds total_nvm_pages");
    }
};

namespace detail {

inline void expect_object(const Json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

inline void reject_unknown(const Json& j, std::initializer_list<const char*> known,
                           const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool found = false;
        for (const char* k : known)
            if (it.key() == k) { found = true; break; }
        if (!found) throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
}

template <typename T>
void get_if(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline void parse_cost(const Json& j, CostModel& m) {
    reject_unknown(j,
                   {"dram_read_latency_ns", "dram_write_latency_ns", "nvm_read_latency_ns",
                    "nvm_write_latency_ns", "dram_read_bw_gbps", "dram_write_bw_gbps",
                    "nvm_read_bw_gbps", "nvm_write_bw_gbps", "vmtrap_cost_ns", "tlb_flush_cost_ns",
                    "ad_set_cost_ns", "migration_contention_multiplier", "threads_cap"},
                   "cost_model");
    get_if(j, "dram_read_latency_ns", m.read_latency_ns[0]);
    get_if(j, "dram_write_latency_ns", m.write_latency_ns[0]);
    get_if(j, "nvm_read_latency_ns", m.read_latency_ns[1]);
    get_if(j, "nvm_write_latency_ns", m.write_latency_ns[1]);
    double gbps;
    if (j.contains("dram_read_bw_gbps")) { gbps = j.at("dram_read_bw_gbps").get<double>(); m.read_bw[0] = gbps * 1e9; }
    if (j.contains("dram_write_bw_gbps")) { gbps = j.at("dram_write_bw_gbps").get<double>(); m.write_bw[0] = gbps * 1e9; }
    if (j.contains("nvm_read_bw_gbps")) { gbps = j.at("nvm_read_bw_gbps").get<double>(); m.read_bw[1] = gbps * 1e9; }
    if (j.contains("nvm_write_bw_gbps")) { gbps = j.at("nvm_write_bw_gbps").get<double>(); m.write_bw[1] = gbps * 1e9; }
    get_if(j, "vmtrap_cost_ns", m.vmtrap_cost_ns);
    get_if(j, "tlb_flush_cost_ns", m.tlb_flush_cost_ns);
    get_if(j, "ad_set_cost_ns", m.ad_set_cost_ns);
    get_if(j, "migration_contention_multiplier", m.migration_contention_multiplier);
    get_if(j, "threads_cap", m.threads_cap);
}

inline void parse_hotspot(const Json& j, HotspotSpec& s) {
    reject_unknown(j,
                   {"total_pages", "hot_fraction", "hot_access_prob", "read_ratio", "ops",
                    "inter_access_gap_ns", "phases", "vcpus", "seed"},
                   "hotspot trace");
    get_if(j, "total_pages", s.total_pages);
    get_if(j, "hot_fraction", s.hot_fraction);
    get_if(j, "hot_access_prob", s.hot_access_prob);
    get_if(j, "read_ratio", s.read_ratio);
    get_if(j, "ops", s.ops);
    get_if(j, "inter_access_gap_ns", s.inter_access_gap_ns);
    get_if(j, "phases", s.phases);
    get_if(j, "vcpus", s.vcpus);
    get_if(j, "seed", s.seed);
}

inline void parse_uniform(const Json& j, UniformSpec& s) {
    reject_unknown(j, {"total_pages", "read_ratio", "ops", "inter_access_gap_ns", "vcpus", "seed"},
                   "uniform trace");
    get_if(j, "total_pages", s.total_pages);
    get_if(j, "read_ratio", s.read_ratio);
    get_if(j, "ops", s.ops);
    get_if(j, "inter_access_gap_ns", s.inter_access_gap_ns);
    get_if(j, "vcpus", s.vcpus);
    get_if(j, "seed", s.seed);
}

inline void parse_sequential(const Json& j, SequentialSpec& s) {
    reject_unknown(j, {"total_pages", "read_ratio", "passes", "inter_access_gap_ns", "vcpus", "seed"},
                   "sequential trace");
    get_if(j, "total_pages", s.total_pages);
    get_if(j, "read_ratio", s.read_ratio);
    get_if(j, "passes", s.passes);
    get_if(j, "inter_access_gap_ns", s.inter_access_gap_ns);
    get_if(j, "vcpus", s.vcpus);
    get_if(j, "seed", s.seed);
}

inline void parse_vm(const Json& j, VmConfig& vm, std::size_t index) {
    const std::string where = "vms[" + std::to_string(index) + "]";
    expect_object(j, where);
    reject_unknown(j, {"mapped_pages", "dram_quota_pages", "vcpus", "initial_placement", "trace"},
                   where);
    get_if(j, "mapped_pages", vm.mapped_pages);
    get_if(j, "dram_quota_pages", vm.dram_quota_pages);
    get_if(j, "vcpus", vm.vcpus);
    if (j.contains("initial_placement")) {
        const std::string p = j.at("initial_placement").get<std::string>();
        if (p == "first_touch") vm.placement = InitialPlacement::FirstTouch;
        else if (p == "dram_first") vm.placement = InitialPlacement::DramFirst;
        else if (p == "all_nvm") vm.placement = InitialPlacement::AllNvm;
        else throw ConfigError(where + ": unknown initial_placement \"" + p + "\"");
    }
    if (!j.contains("trace")) throw ConfigError(where + ": trace required");
    const Json& t = j.at("trace");
    expect_object(t, where + ".trace");
    reject_unknown(t, {"file", "hotspot", "uniform", "sequential"}, where + ".trace");
    if (t.contains("file")) vm.trace.file = t.at("file").get<std::string>();
    if (t.contains("hotspot")) { HotspotSpec s; parse_hotspot(t.at("hotspot"), s); vm.trace.hotspot = s; }
    if (t.contains("uniform")) { UniformSpec s; parse_uniform(t.at("uniform"), s); vm.trace.uniform = s; }
    if (t.contains("sequential")) { SequentialSpec s; parse_sequential(t.at("sequential"), s); vm.trace.sequential = s; }
}

}  // namespace detail

inline Scenario scenario_from_json(const Json& j) {
    using detail::get_if;
    detail::expect_object(j, "scenario");
    detail::reject_unknown(j,
                           {"schema_version", "seed", "geometry", "cost_model", "total_dram_pages",
                            "total_nvm_pages", "policy", "tracker", "classifier", "pool",
                            "migration", "mm_cache", "vms", "compute_slowdown",
                            "check_conservation"},
                           "scenario");
    Scenario sc;
    get_if(j, "schema_version", sc.schema_version);
    if (sc.schema_version != 1)
        throw ConfigError("unsupported schema_version " + std::to_string(sc.schema_version));
    get_if(j, "seed", sc.seed);
    if (j.contains("geometry")) {
        const Json& g = j.at("geometry");
        detail::reject_unknown(g, {"page_size", "ptes_per_gpt_page"}, "geometry");
        get_if(g, "page_size", sc.geometry.page_size);
        get_if(g, "ptes_per_gpt_page", sc.geometry.ptes_per_gpt_page);
    }
    if (j.contains("cost_model")) detail::parse_cost(j.at("cost_model"), sc.cost);
    get_if(j, "total_dram_pages", sc.total_dram_pages);
    get_if(j, "total_nvm_pages", sc.total_nvm_pages);
    if (j.contains("policy")) {
        const Json& p = j.at("policy");
        if (p.is_string()) {
            sc.policy.kind = policy_from_name(p.get<std::string>());
        } else {
            detail::reject_unknown(p, {"name", "threshold"}, "policy");
            sc.policy.kind = policy_from_name(p.at("name").get<std::string>());
            get_if(p, "threshold", sc.policy.fixed_threshold);
        }
    }
    if (j.contains("tracker")) {
        const Json& t = j.at("tracker");
        detail::reject_unknown(t,
                               {"mws_ns", "windows_per_epoch", "max_level", "clock_period_ns",
                                "migration_threshold_bytes", "counter_limit"},
                               "tracker");
        get_if(t, "mws_ns", sc.tracker.mws_ns);
        get_if(t, "windows_per_epoch", sc.tracker.windows_per_epoch);
        get_if(t, "max_level", sc.tracker.max_level);
        get_if(t, "clock_period_ns", sc.tracker.clock_period_ns);
        get_if(t, "migration_threshold_bytes", sc.tracker.migration_threshold_bytes);
        get_if(t, "counter_limit", sc.tracker.counter_limit);
    }
    if (j.contains("classifier")) {
        const Json& c = j.at("classifier");
        detail::reject_unknown(c, {"read_weight", "write_weight", "base_threshold", "hot_take_ratio"},
                               "classifier");
        get_if(c, "read_weight", sc.classifier.read_weight);
        get_if(c, "write_weight", sc.classifier.write_weight);
        get_if(c, "base_threshold", sc.classifier.base_threshold);
        get_if(c, "hot_take_ratio", sc.classifier.hot_take_ratio);
    }
    if (j.contains("pool")) {
        const Json& p = j.at("pool");
        detail::reject_unknown(p, {"lower_ratio", "upper_ratio", "rebalance_period_ns"}, "pool");
        get_if(p, "lower_ratio", sc.pool.lower_ratio);
        get_if(p, "upper_ratio", sc.pool.upper_ratio);
        get_if(p, "rebalance_period_ns", sc.pool.rebalance_period_ns);
    }
    if (j.contains("migration")) {
        const Json& m = j.at("migration");
        detail::reject_unknown(m, {"protocol", "threads", "batch_cap", "enabled"}, "migration");
        if (m.contains("protocol")) {
            const std::string p = m.at("protocol").get<std::string>();
            if (p == "pml") sc.migration.protocol = MigrationProtocol::Pml;
            else if (p == "wp") sc.migration.protocol = MigrationProtocol::Wp;
            else if (p == "linux") sc.migration.protocol = MigrationProtocol::Linux;
            else throw ConfigError("unknown migration protocol \"" + p + "\"");
        }
        get_if(m, "threads", sc.migration.threads);
        get_if(m, "batch_cap", sc.migration.batch_cap);
        get_if(m, "enabled", sc.migration.enabled);
    }
    if (j.contains("mm_cache")) {
        const Json& m = j.at("mm_cache");
        detail::reject_unknown(m, {"block_size"}, "mm_cache");
        get_if(m, "block_size", sc.mm.block_size);
    }
    if (!j.contains("vms")) throw ConfigError("scenario: vms required");
    const Json& vms = j.at("vms");
    if (!vms.is_array()) throw ConfigError("scenario: vms must be an array");
    for (std::size_t i = 0; i < vms.size(); ++i) {
        VmConfig vm;
        detail::parse_vm(vms[i], vm, i);
        sc.vms.push_back(vm);
    }
    get_if(j, "compute_slowdown", sc.compute_slowdown);
    get_if(j, "check_conservation", sc.check_conservation);
    sc.validate();
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario: " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError("scenario " + path + ": " + e.what());
    }
    return scenario_from_json(j);
}

// Builds the per-VM trace: loads the file or runs the named generator. The
// generator footprint defaults to the VM mapping; a zero seed derives one
// from the scenario seed and VM index.
inline Trace build_vm_trace(const Scenario& sc, std::size_t vm_index) {
    const VmConfig& vm = sc.vms[vm_index];
    std::uint64_t derived = sc.seed ^ (0x9e3779b97f4a7c15ULL * (vm_index + 1));
    Trace trace;
    if (!vm.trace.file.empty()) {
        trace = load_trace(vm.trace.file);
    } else if (vm.trace.hotspot) {
        HotspotSpec s = *vm.trace.hotspot;
        if (s.total_pages == 0) s.total_pages = vm.mapped_pages;
        if (s.seed == 0) s.seed = splitmix64(derived);
        trace = gen_hotspot(s);
    } else if (vm.trace.uniform) {
        UniformSpec s = *vm.trace.uniform;
        if (s.total_pages == 0) s.total_pages = vm.mapped_pages;
        if (s.seed == 0) s.seed = splitmix64(derived);
        trace = gen_uniform(s);
    } else {
        SequentialSpec s = *vm.trace.sequential;
        if (s.total_pages == 0) s.total_pages = vm.mapped_pages;
        if (s.seed == 0) s.seed = splitmix64(derived);
        trace = gen_sequential(s);
    }
    if (trace.total_pages > vm.mapped_pages)
        throw ConfigError("vm " + std::to_string(vm_index) + ": trace footprint " +
                          std::to_string(trace.total_pages) + " exceeds mapped_pages");
    for (AccessEvent& e : trace.events) e.vm = static_cast<VmId>(vm_index);
    return trace;
}

}  // namespace hmmv
