// Run reports: per-VM metrics with window/epoch/clock series, migration
// records and pool trajectory. JSON round-trips exactly; CSV series mirror
// the data for plotting. Every emitted file carries the schema version.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmmv/common.hpp"
#include "hmmv/mmu.hpp"

namespace hmmv {

using Json = nlohmann::ordered_json;

inline constexpr std::uint32_t kReportSchemaVersion = 1;

struct WindowRecord {
    std::uint32_t index = 0;
    std::uint64_t gpt_pages_scanned = 0;
    std::uint64_t data_pages_examined = 0;

    bool operator==(const WindowRecord&) const = default;
};

struct EpochRecord {
    std::uint32_t index = 0;
    std::uint64_t est_ns = 0;        // estimated time accrued in this bucket
    std::uint64_t dram_ns = 0;       // pure-DRAM replay time for the same bucket
    std::uint64_t migrated_bytes = 0;
    std::uint64_t quota_pages = 0;
    std::uint64_t hss_pages = 0;     // hot-set size from this epoch's degrees

    double slowdown() const {
        return dram_ns == 0 ? (est_ns == 0 ? 1.0 : 0.0)
                            : static_cast<double>(est_ns) / static_cast<double>(dram_ns);
    }

    bool operator==(const EpochRecord&) const = default;
};

struct ClockRecord {
    std::uint32_t index = 0;
    bool tracking_enabled = false;
    std::uint32_t counter = 0;
    std::uint64_t migrated_bytes = 0;

    bool operator==(const ClockRecord&) const = default;
};

struct MigrationRecord {
    std::uint16_t vm = 0;
    std::string protocol;
    std::string src;
    std::string dst;
    std::uint64_t started_ns = 0;
    std::uint64_t finished_ns = 0;
    std::uint64_t pages_moved = 0;
    std::uint64_t dirty_recopied = 0;
    std::uint64_t truncated_pages = 0;
    std::uint64_t copy_time_ns = 0;
    std::uint64_t recopy_time_ns = 0;
    std::uint64_t pause_time_ns = 0;
    std::uint64_t bytes = 0;
    std::uint64_t traps = 0;

    bool operator==(const MigrationRecord&) const = default;
};

struct MmStatsRecord {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t writebacks = 0;

    double miss_ratio() const {
        const std::uint64_t n = hits + misses;
        return n == 0 ? 0.0 : static_cast<double>(misses) / static_cast<double>(n);
    }

    bool operator==(const MmStatsRecord&) const = default;
};

struct VmReport {
    std::uint64_t estimated_time_ns = 0;
    std::uint64_t access_ns = 0;
    std::uint64_t ad_set_ns = 0;
    std::uint64_t tlb_ns = 0;
    std::uint64_t trap_ns = 0;
    std::uint64_t pause_ns = 0;           // billed remap-wait stalls
    std::uint64_t total_pause_report_ns = 0;  // stalls incl. trap handling, report-only
    std::uint64_t pml_full_traps = 0;
    std::uint64_t ept_fault_traps = 0;
    std::uint64_t wp_fault_traps = 0;
    std::uint64_t other_traps = 0;
    std::uint64_t gpt_pages_scanned_total = 0;
    std::uint64_t data_pages_examined_total = 0;
    std::uint32_t windows_processed = 0;
    std::uint64_t pages_migrated = 0;
    std::uint64_t bytes_migrated = 0;
    std::uint64_t dirty_recopied = 0;
    std::uint64_t initial_quota_pages = 0;
    std::uint64_t final_quota_pages = 0;
    std::uint64_t dram_replay_ns = 0;
    double slowdown = 0.0;  // 0 when the replay was not computed
    MmStatsRecord mm;
    std::vector<std::uint64_t> degree_histogram;  // last epoch, index = degree
    std::vector<WindowRecord> windows;
    std::vector<EpochRecord> epochs;
    std::vector<ClockRecord> clocks;

    std::uint64_t traps_total() const {
        return pml_full_traps + ept_fault_traps + wp_fault_traps + other_traps;
    }

    bool operator==(const VmReport&) const = default;
};

struct PoolEpochRecord {
    std::uint32_t index = 0;
    std::vector<std::uint64_t> quotas;
    std::uint64_t pool_free_dram = 0;

    bool operator==(const PoolEpochRecord&) const = default;
};

struct RunReport {
    std::uint32_t schema_version = kReportSchemaVersion;
    std::uint64_t seed = 0;
    std::string policy;
    std::vector<VmReport> vms;
    std::vector<MigrationRecord> migrations;
    std::vector<PoolEpochRecord> pool_series;
    std::uint64_t wall_clock_ms = 0;  // excluded from equality: not deterministic

    bool operator==(const RunReport& o) const {
        return schema_version == o.schema_version && seed == o.seed && policy == o.policy &&
               vms == o.vms && migrations == o.migrations && pool_series == o.pool_series;
    }
};

// --- JSON ---

inline Json to_json(const RunReport& r) {
    Json j;
    j["schema_version"] = r.schema_version;
    j["seed"] = r.seed;
    j["policy"] = r.policy;
    j["wall_clock_ms"] = r.wall_clock_ms;
    j["vms"] = Json::array();
    for (const VmReport& vm : r.vms) {
        Json v;
        v["estimated_time_ns"] = vm.estimated_time_ns;
        v["access_ns"] = vm.access_ns;
        v["ad_set_ns"] = vm.ad_set_ns;
        v["tlb_ns"] = vm.tlb_ns;
        v["trap_ns"] = vm.trap_ns;
        v["pause_ns"] = vm.pause_ns;
        v["total_pause_report_ns"] = vm.total_pause_report_ns;
        v["traps"] = {{"pml_full", vm.pml_full_traps},
                      {"ept_fault", vm.ept_fault_traps},
                      {"wp_fault", vm.wp_fault_traps},
                      {"other", vm.other_traps}};
        v["gpt_pages_scanned_total"] = vm.gpt_pages_scanned_total;
        v["data_pages_examined_total"] = vm.data_pages_examined_total;
        v["windows_processed"] = vm.windows_processed;
        v["pages_migrated"] = vm.pages_migrated;
        v["bytes_migrated"] = vm.bytes_migrated;
        v["dirty_recopied"] = vm.dirty_recopied;
        v["initial_quota_pages"] = vm.initial_quota_pages;
        v["final_quota_pages"] = vm.final_quota_pages;
        v["dram_replay_ns"] = vm.dram_replay_ns;
        v["slowdown"] = vm.slowdown;
        v["mm"] = {{"hits", vm.mm.hits}, {"misses", vm.mm.misses}, {"writebacks", vm.mm.writebacks}};
        v["degree_histogram"] = vm.degree_histogram;
        v["windows"] = Json::array();
        for (const WindowRecord& w : vm.windows)
            v["windows"].push_back({{"index", w.index},
                                    {"gpt_pages_scanned", w.gpt_pages_scanned},
                                    {"data_pages_examined", w.data_pages_examined}});
        v["epochs"] = Json::array();
        for (const EpochRecord& e : vm.epochs)
            v["epochs"].push_back({{"index", e.index},
                                   {"est_ns", e.est_ns},
                                   {"dram_ns", e.dram_ns},
                                   {"migrated_bytes", e.migrated_bytes},
                                   {"quota_pages", e.quota_pages},
                                   {"hss_pages", e.hss_pages}});
        v["clocks"] = Json::array();
        for (const ClockRecord& c : vm.clocks)
            v["clocks"].push_back({{"index", c.index},
                                   {"tracking_enabled", c.tracking_enabled},
                                   {"counter", c.counter},
                                   {"migrated_bytes", c.migrated_bytes}});
        j["vms"].push_back(std::move(v));
    }
    j["migrations"] = Json::array();
    for (const MigrationRecord& m : r.migrations)
        j["migrations"].push_back({{"vm", m.vm},
                                   {"protocol", m.protocol},
                                   {"src", m.src},
                                   {"dst", m.dst},
                                   {"started_ns", m.started_ns},
                                   {"finished_ns", m.finished_ns},
                                   {"pages_moved", m.pages_moved},
                                   {"dirty_recopied", m.dirty_recopied},
                                   {"truncated_pages", m.truncated_pages},
                                   {"copy_time_ns", m.copy_time_ns},
                                   {"recopy_time_ns", m.recopy_time_ns},
                                   {"pause_time_ns", m.pause_time_ns},
                                   {"bytes", m.bytes},
                                   {"traps", m.traps}});
    j["pool_series"] = Json::array();
    for (const PoolEpochRecord& p : r.pool_series)
        j["pool_series"].push_back(
            {{"index", p.index}, {"quotas", p.quotas}, {"pool_free_dram", p.pool_free_dram}});
    return j;
}

inline RunReport report_from_json(const Json& j) {
    RunReport r;
    r.schema_version = j.at("schema_version").get<std::uint32_t>();
    if (r.schema_version != kReportSchemaVersion)
        throw ValidationError("unsupported report schema_version");
    r.seed = j.at("seed").get<std::uint64_t>();
    r.policy = j.at("policy").get<std::string>();
    r.wall_clock_ms = j.at("wall_clock_ms").get<std::uint64_t>();
    for (const Json& v : j.at("vms")) {
        VmReport vm;
        vm.estimated_time_ns = v.at("estimated_time_ns").get<std::uint64_t>();
        vm.access_ns = v.at("access_ns").get<std::uint64_t>();
        vm.ad_set_ns = v.at("ad_set_ns").get<std::uint64_t>();
        vm.tlb_ns = v.at("tlb_ns").get<std::uint64_t>();
        vm.trap_ns = v.at("trap_ns").get<std::uint64_t>();
        vm.pause_ns = v.at("pause_ns").get<std::uint64_t>();
        vm.total_pause_report_ns = v.at("total_pause_report_ns").get<std::uint64_t>();
        vm.pml_full_traps = v.at("traps").at("pml_full").get<std::uint64_t>();
        vm.ept_fault_traps = v.at("traps").at("ept_fault").get<std::uint64_t>();
        vm.wp_fault_traps = v.at("traps").at("wp_fault").get<std::uint64_t>();
        vm.other_traps = v.at("traps").at("other").get<std::uint64_t>();
        vm.gpt_pages_scanned_total = v.at("gpt_pages_scanned_total").get<std::uint64_t>();
        vm.data_pages_examined_total = v.at("data_pages_examined_total").get<std::uint64_t>();
        vm.windows_processed = v.at("windows_processed").get<std::uint32_t>();
        vm.pages_migrated = v.at("pages_migrated").get<std::uint64_t>();
        vm.bytes_migrated = v.at("bytes_migrated").get<std::uint64_t>();
        vm.dirty_recopied = v.at("dirty_recopied").get<std::uint64_t>();
        vm.initial_quota_pages = v.at("initial_quota_pages").get<std::uint64_t>();
        vm.final_quota_pages = v.at("final_quota_pages").get<std::uint64_t>();
        vm.dram_replay_ns = v.at("dram_replay_ns").get<std::uint64_t>();
        vm.slowdown = v.at("slowdown").get<double>();
        vm.mm.hits = v.at("mm").at("hits").get<std::uint64_t>();
        vm.mm.misses = v.at("mm").at("misses").get<std::uint64_t>();
        vm.mm.writebacks = v.at("mm").at("writebacks").get<std::uint64_t>();
        vm.degree_histogram = v.at("degree_histogram").get<std::vector<std::uint64_t>>();
        for (const Json& w : v.at("windows"))
            vm.windows.push_back({w.at("index").get<std::uint32_t>(),
                                  w.at("gpt_pages_scanned").get<std::uint64_t>(),
                                  w.at("data_pages_examined").get<std::uint64_t>()});
        for (const Json& e : v.at("epochs"))
            vm.epochs.push_back({e.at("index").get<std::uint32_t>(),
                                 e.at("est_ns").get<std::uint64_t>(),
                                 e.at("dram_ns").get<std::uint64_t>(),
                                 e.at("migrated_bytes").get<std::uint64_t>(),
                                 e.at("quota_pages").get<std::uint64_t>(),
                                 e.at("hss_pages").get<std::uint64_t>()});
        for (const Json& c : v.at("clocks"))
            vm.clocks.push_back({c.at("index").get<std::uint32_t>(),
                                 c.at("tracking_enabled").get<bool>(),
                                 c.at("counter").get<std::uint32_t>(),
                                 c.at("migrated_bytes").get<std::uint64_t>()});
        r.vms.push_back(std::move(vm));
    }
    for (const Json& m : j.at("migrations")) {
        MigrationRecord rec;
        rec.vm = m.at("vm").get<std::uint16_t>();
        rec.protocol = m.at("protocol").get<std::string>();
        rec.src = m.at("src").get<std::string>();
        rec.dst = m.at("dst").get<std::string>();
        rec.started_ns = m.at("started_ns").get<std::uint64_t>();
        rec.finished_ns = m.at("finished_ns").get<std::uint64_t>();
        rec.pages_moved = m.at("pages_moved").get<std::uint64_t>();
        rec.dirty_recopied = m.at("dirty_recopied").get<std::uint64_t>();
        rec.truncated_pages = m.at("truncated_pages").get<std::uint64_t>();
        rec.copy_time_ns = m.at("copy_time_ns").get<std::uint64_t>();
        rec.recopy_time_ns = m.at("recopy_time_ns").get<std::uint64_t>();
        rec.pause_time_ns = m.at("pause_time_ns").get<std::uint64_t>();
        rec.bytes = m.at("bytes").get<std::uint64_t>();
        rec.traps = m.at("traps").get<std::uint64_t>();
        r.migrations.push_back(std::move(rec));
    }
    for (const Json& p : j.at("pool_series")) {
        PoolEpochRecord rec;
        rec.index = p.at("index").get<std::uint32_t>();
        rec.quotas = p.at("quotas").get<std::vector<std::uint64_t>>();
        rec.pool_free_dram = p.at("pool_free_dram").get<std::uint64_t>();
        r.pool_series.push_back(std::move(rec));
    }
    return r;
}

// --- files ---

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + p.string());
    return out;
}
}  // namespace detail

// Writes report.json plus flat CSV series into `dir`. `formats` accepts
// "json", "csv" or "csv,json".
inline std::vector<std::string> emit_report(const RunReport& r, const std::string& dir,
                                            const std::string& formats = "csv,json") {
    const bool want_json = formats.find("json") != std::string::npos;
    const bool want_csv = formats.find("csv") != std::string::npos;
    if (!want_json && !want_csv) throw ConfigError("emit_report: unknown format \"" + formats + "\"");
    std::filesystem::create_directories(dir);
    std::vector<std::string> written;
    const std::filesystem::path base(dir);

    if (want_json) {
        auto out = detail::open_out(base / "report.json");
        out << to_json(r).dump(2) << "\n";
        written.push_back((base / "report.json").string());
    }
    if (!want_csv) return written;

    {
        auto out = detail::open_out(base / "windows.csv");
        out << "# schema_version," << r.schema_version << "\n";
        out << "vm,window,gpt_pages_scanned,data_pages_examined\n";
        for (std::size_t v = 0; v < r.vms.size(); ++v)
            for (const WindowRecord& w : r.vms[v].windows)
                out << v << ',' << w.index << ',' << w.gpt_pages_scanned << ','
                    << w.data_pages_examined << "\n";
        written.push_back((base / "windows.csv").string());
    }
    {
        auto out = detail::open_out(base / "epochs.csv");
        out << "# schema_version," << r.schema_version << "\n";
        out << "vm,epoch,est_ns,dram_ns,slowdown,migrated_bytes,quota_pages,hss_pages\n";
        for (std::size_t v = 0; v < r.vms.size(); ++v)
            for (const EpochRecord& e : r.vms[v].epochs)
                out << v << ',' << e.index << ',' << e.est_ns << ',' << e.dram_ns << ','
                    << e.slowdown() << ',' << e.migrated_bytes << ',' << e.quota_pages << ','
                    << e.hss_pages << "\n";
        written.push_back((base / "epochs.csv").string());
    }
    {
        auto out = detail::open_out(base / "histogram.csv");
        out << "# schema_version," << r.schema_version << "\n";
        out << "vm,degree,pages\n";
        for (std::size_t v = 0; v < r.vms.size(); ++v)
            for (std::size_t d = 0; d < r.vms[v].degree_histogram.size(); ++d)
                out << v << ',' << d << ',' << r.vms[v].degree_histogram[d] << "\n";
        written.push_back((base / "histogram.csv").string());
    }
    {
        auto out = detail::open_out(base / "quotas.csv");
        out << "# schema_version," << r.schema_version << "\n";
        out << "epoch,vm,quota_pages,pool_free_dram\n";
        for (const PoolEpochRecord& p : r.pool_series)
            for (std::size_t v = 0; v < p.quotas.size(); ++v)
                out << p.index << ',' << v << ',' << p.quotas[v] << ',' << p.pool_free_dram << "\n";
        written.push_back((base / "quotas.csv").string());
    }
    {
        auto out = detail::open_out(base / "migrations.csv");
        out << "# schema_version," << r.schema_version << "\n";
        out << "vm,protocol,src,dst,started_ns,finished_ns,pages_moved,dirty_recopied,"
               "truncated_pages,copy_time_ns,recopy_time_ns,pause_time_ns,bytes,traps\n";
        for (const MigrationRecord& m : r.migrations)
            out << m.vm << ',' << m.protocol << ',' << m.src << ',' << m.dst << ',' << m.started_ns
                << ',' << m.finished_ns << ',' << m.pages_moved << ',' << m.dirty_recopied << ','
                << m.truncated_pages << ',' << m.copy_time_ns << ',' << m.recopy_time_ns << ','
                << m.pause_time_ns << ',' << m.bytes << ',' << m.traps << "\n";
        written.push_back((base / "migrations.csv").string());
    }
    {
        auto out = detail::open_out(base / "summary.csv");
        out << "# schema_version," << r.schema_version << "\n";
        out << "vm,policy,estimated_time_ns,dram_replay_ns,slowdown,traps_total,pml_full,"
               "ept_fault,wp_fault,pages_migrated,bytes_migrated,pause_ns,final_quota_pages,"
               "mm_miss_ratio\n";
        for (std::size_t v = 0; v < r.vms.size(); ++v) {
            const VmReport& vm = r.vms[v];
            out << v << ',' << r.policy << ',' << vm.estimated_time_ns << ',' << vm.dram_replay_ns
                << ',' << vm.slowdown << ',' << vm.traps_total() << ',' << vm.pml_full_traps << ','
                << vm.ept_fault_traps << ',' << vm.wp_fault_traps << ',' << vm.pages_migrated << ','
                << vm.bytes_migrated << ',' << vm.pause_ns << ',' << vm.final_quota_pages << ','
                << vm.mm.miss_ratio() << "\n";
        }
        written.push_back((base / "summary.csv").string());
    }
    return written;
}

}  // namespace hmmv
