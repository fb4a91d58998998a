// Command-line front end: trace generation, scenario runs, parameter sweeps
// and policy comparisons.
//
// Exit codes: 0 success, 2 configuration/validation error, 3 invariant
// breach during a run.
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hmmv/hmmv.hpp"

namespace {

using namespace hmmv;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Sets a dotted path like "vms.0.trace.hotspot.hot_fraction" in a JSON
// document, parsing the value as JSON so numbers stay numbers.
void set_json_path(Json& root, const std::string& path, const std::string& value) {
    std::vector<std::string> keys;
    std::string cur;
    for (char c : path) {
        if (c == '.') {
            keys.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    keys.push_back(cur);

    Json* node = &root;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        const std::string& k = keys[i];
        if (node->is_array()) {
            const std::size_t idx = std::stoul(k);
            if (idx >= node->size()) throw ConfigError("sweep: index out of range in " + path);
            node = &(*node)[idx];
        } else {
            node = &(*node)[k];
        }
    }
    Json parsed;
    try {
        parsed = Json::parse(value);
    } catch (...) {
        parsed = value;  // plain string
    }
    if (node->is_array()) (*node)[std::stoul(keys.back())] = parsed;
    else (*node)[keys.back()] = parsed;
}

Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario: " + path);
    try {
        return Json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError("scenario " + path + ": " + e.what());
    }
}

void override_policy(Json& j, const std::string& policy) {
    if (j.contains("policy") && j["policy"].is_object()) j["policy"]["name"] = policy;
    else j["policy"] = policy;
}

void print_vm_summary(const RunReport& r) {
    std::printf("policy=%s seed=%llu\n", r.policy.c_str(),
                static_cast<unsigned long long>(r.seed));
    for (std::size_t v = 0; v < r.vms.size(); ++v) {
        const VmReport& vm = r.vms[v];
        std::printf(
            "  vm%zu: est=%llu ns slowdown=%.4f traps=%llu (pml_full=%llu ept=%llu wp=%llu) "
            "scanned=%llu migrated=%llu quota=%llu->%llu\n",
            v, static_cast<unsigned long long>(vm.estimated_time_ns), vm.slowdown,
            static_cast<unsigned long long>(vm.traps_total()),
            static_cast<unsigned long long>(vm.pml_full_traps),
            static_cast<unsigned long long>(vm.ept_fault_traps),
            static_cast<unsigned long long>(vm.wp_fault_traps),
            static_cast<unsigned long long>(vm.data_pages_examined_total),
            static_cast<unsigned long long>(vm.pages_migrated),
            static_cast<unsigned long long>(vm.initial_quota_pages),
            static_cast<unsigned long long>(vm.final_quota_pages));
    }
}

struct GenOptions {
    std::string kind = "hotspot";
    std::string out = "trace.bin";
    std::uint64_t pages = 4096;
    std::uint64_t ops = 100000;
    std::uint64_t gap = 10000;
    std::uint64_t seed = 1;
    std::uint32_t passes = 1;
    std::uint32_t phases = 1;
    std::uint32_t vcpus = 1;
    double hot_fraction = 0.2;
    double hot_prob = 0.9;
    double read_ratio = 0.5;
    bool csv = false;
};

int cmd_gen(const GenOptions& o) {
    Trace trace;
    if (o.kind == "hotspot") {
        HotspotSpec s;
        s.total_pages = o.pages;
        s.ops = o.ops;
        s.hot_fraction = o.hot_fraction;
        s.hot_access_prob = o.hot_prob;
        s.read_ratio = o.read_ratio;
        s.inter_access_gap_ns = o.gap;
        s.phases = o.phases;
        s.vcpus = o.vcpus;
        s.seed = o.seed;
        trace = gen_hotspot(s);
    } else if (o.kind == "uniform") {
        UniformSpec s;
        s.total_pages = o.pages;
        s.ops = o.ops;
        s.read_ratio = o.read_ratio;
        s.inter_access_gap_ns = o.gap;
        s.vcpus = o.vcpus;
        s.seed = o.seed;
        trace = gen_uniform(s);
    } else if (o.kind == "sequential") {
        SequentialSpec s;
        s.total_pages = o.pages;
        s.passes = o.passes;
        s.read_ratio = o.read_ratio;
        s.inter_access_gap_ns = o.gap;
        s.vcpus = o.vcpus;
        s.seed = o.seed;
        trace = gen_sequential(s);
    } else {
        throw ConfigError("unknown generator kind: " + o.kind);
    }
    store_trace(trace, o.out);
    if (o.csv) store_trace_csv(trace, o.out + ".csv");
    std::printf("wrote %zu events over %llu pages to %s\n", trace.events.size(),
                static_cast<unsigned long long>(trace.total_pages), o.out.c_str());
    return 0;
}

int cmd_run(const std::string& scenario_path, const std::string& out, std::int64_t seed,
            const std::string& policy, const std::string& format) {
    Json j = load_json_file(scenario_path);
    if (seed >= 0) j["seed"] = static_cast<std::uint64_t>(seed);
    if (!policy.empty()) override_policy(j, policy);
    Scenario sc = scenario_from_json(j);
    const RunReport report = run_scenario(sc);
    print_vm_summary(report);
    if (!out.empty()) {
        for (const std::string& f : emit_report(report, out, format))
            std::printf("  wrote %s\n", f.c_str());
    }
    return 0;
}

int cmd_sweep(const std::string& scenario_path, const std::string& param,
              const std::string& values, const std::string& out, std::int64_t seed,
              const std::string& format) {
    const Json base = load_json_file(scenario_path);
    const auto value_list = split_list(values);
    if (value_list.empty()) throw ConfigError("sweep: no values given");
    const std::filesystem::path out_dir(out.empty() ? "." : out);
    std::filesystem::create_directories(out_dir);
    std::ofstream sweep_csv(out_dir / "sweep.csv", std::ios::trunc);
    sweep_csv << "# schema_version,1\n";
    sweep_csv << "value,vm,slowdown,estimated_time_ns,data_pages_examined,bytes_migrated,"
                 "traps_total\n";
    for (const std::string& value : value_list) {
        Json j = base;
        set_json_path(j, param, value);
        if (seed >= 0) j["seed"] = static_cast<std::uint64_t>(seed);
        Scenario sc = scenario_from_json(j);
        const RunReport report = run_scenario(sc);
        std::printf("%s = %s\n", param.c_str(), value.c_str());
        print_vm_summary(report);
        for (std::size_t v = 0; v < report.vms.size(); ++v) {
            const VmReport& vm = report.vms[v];
            sweep_csv << value << ',' << v << ',' << vm.slowdown << ',' << vm.estimated_time_ns
                      << ',' << vm.data_pages_examined_total << ',' << vm.bytes_migrated << ','
                      << vm.traps_total() << "\n";
        }
        if (!out.empty()) emit_report(report, (out_dir / (param + "=" + value)).string(), format);
    }
    std::printf("wrote %s\n", (out_dir / "sweep.csv").string().c_str());
    return 0;
}

int cmd_compare(const std::string& scenario_path, const std::string& policies,
                const std::string& out, std::int64_t seed, const std::string& format) {
    const Json base = load_json_file(scenario_path);
    const auto policy_list = split_list(policies);
    if (policy_list.empty()) throw ConfigError("compare: no policies given");
    std::vector<RunReport> reports;
    for (const std::string& policy : policy_list) {
        Json j = base;
        override_policy(j, policy);
        if (seed >= 0) j["seed"] = static_cast<std::uint64_t>(seed);
        Scenario sc = scenario_from_json(j);
        reports.push_back(run_scenario(sc));
    }
    // Performance normalized to the first policy (its slowdown over ours;
    // higher is better).
    std::printf("%-18s", "policy");
    for (std::size_t v = 0; v < reports[0].vms.size(); ++v) std::printf("  vm%zu_perf", v);
    std::printf("  geomean\n");
    std::filesystem::path out_dir;
    std::ofstream csv;
    if (!out.empty()) {
        out_dir = out;
        std::filesystem::create_directories(out_dir);
        csv.open(out_dir / "compare.csv", std::ios::trunc);
        csv << "# schema_version,1\n";
        csv << "policy,vm,slowdown,normalized_performance\n";
    }
    for (std::size_t i = 0; i < reports.size(); ++i) {
        std::printf("%-18s", policy_list[i].c_str());
        double log_sum = 0.0;
        for (std::size_t v = 0; v < reports[i].vms.size(); ++v) {
            const double norm = reports[i].vms[v].slowdown == 0.0
                                    ? 0.0
                                    : reports[0].vms[v].slowdown / reports[i].vms[v].slowdown;
            log_sum += std::log(norm);
            std::printf("  %8.4f", norm);
            if (csv.is_open())
                csv << policy_list[i] << ',' << v << ',' << reports[i].vms[v].slowdown << ','
                    << norm << "\n";
        }
        std::printf("  %7.4f\n", std::exp(log_sum / static_cast<double>(reports[i].vms.size())));
        if (!out.empty()) emit_report(reports[i], (out_dir / policy_list[i]).string(), format);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trace-driven simulator of tiered-memory management for virtual machines"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "Generate a synthetic access trace");
    GenOptions g;
    gen->add_option("--kind", g.kind, "hotspot, uniform or sequential");
    gen->add_option("--pages", g.pages, "footprint in pages");
    gen->add_option("--ops", g.ops, "operation count (hotspot/uniform)");
    gen->add_option("--passes", g.passes, "full sweeps (sequential)");
    gen->add_option("--hot-fraction", g.hot_fraction, "hot region share of the footprint");
    gen->add_option("--hot-prob", g.hot_prob, "probability an op hits the hot region");
    gen->add_option("--read-ratio", g.read_ratio, "share of reads");
    gen->add_option("--gap", g.gap, "inter-access gap in ns");
    gen->add_option("--phases", g.phases, "hot-region relocations (hotspot)");
    gen->add_option("--vcpus", g.vcpus, "VCPUs to round-robin events over");
    gen->add_option("--seed", g.seed, "generator seed");
    gen->add_option("--out", g.out, "output trace file");
    gen->add_flag("--csv", g.csv, "also write a CSV mirror");

    std::string scenario_path, out_dir, policy, format = "csv,json";
    std::int64_t seed_override = -1;

    auto* run = app.add_subcommand("run", "Run one scenario");
    run->add_option("--scenario", scenario_path, "scenario JSON")->required();
    run->add_option("--out", out_dir, "output directory for report files");
    run->add_option("--seed", seed_override, "override the scenario seed");
    run->add_option("--policy", policy, "override the scenario policy");
    run->add_option("--format", format, "csv, json or csv,json");

    auto* sweep = app.add_subcommand("sweep", "Run a scenario over a parameter grid");
    std::string sweep_param, sweep_values;
    sweep->add_option("--scenario", scenario_path, "scenario JSON")->required();
    sweep
        ->add_option("--param", sweep_param,
                     "dotted JSON path, e.g. vms.0.trace.hotspot.hot_fraction")
        ->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->required();
    sweep->add_option("--out", out_dir, "output directory");
    sweep->add_option("--seed", seed_override, "override the scenario seed");
    sweep->add_option("--format", format, "csv, json or csv,json");

    auto* compare = app.add_subcommand("compare", "Run several policies on one scenario");
    std::string compare_policies;
    compare->add_option("--scenario", scenario_path, "scenario JSON")->required();
    compare->add_option("--policies", compare_policies, "comma-separated policy names")->required();
    compare->add_option("--out", out_dir, "output directory");
    compare->add_option("--seed", seed_override, "override the scenario seed");
    compare->add_option("--format", format, "csv, json or csv,json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen(g);
        if (run->parsed()) return cmd_run(scenario_path, out_dir, seed_override, policy, format);
        if (sweep->parsed())
            return cmd_sweep(scenario_path, sweep_param, sweep_values, out_dir, seed_override,
                             format);
        if (compare->parsed())
            return cmd_compare(scenario_path, compare_policies, out_dir, seed_override, format);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const InvariantBreach& e) {
        std::cerr << "invariant breach: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
