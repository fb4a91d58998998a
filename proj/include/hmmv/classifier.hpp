// Hot/cold classification: page-degree, O(n) bucket sort over the finite
// degree range, hot-set selection and migration plan diffing.
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "hmmv/common.hpp"
#include "hmmv/mmu.hpp"
#include "hmmv/tracker.hpp"

namespace hmmv {

using Degree = std::uint64_t;

struct ClassifierConfig {
    std::uint32_t read_weight = 1;
    std::uint32_t write_weight = 3;
    Degree base_threshold = 3;
    double hot_take_ratio = 0.8;

    void validate() const {
        if (read_weight == 0 && write_weight == 0)
            throw ConfigError("classifier: weights must not both be zero");
        if (!(hot_take_ratio > 0.0) || hot_take_ratio > 1.0)
            throw ConfigError("classifier: hot_take_ratio must be in (0,1]");
    }

    Degree max_degree(std::uint32_t windows_per_epoch) const {
        return static_cast<Degree>(read_weight + write_weight) * windows_per_epoch;
    }
};

inline Degree page_degree(std::uint32_t reads, std::uint32_t writes, const ClassifierConfig& cfg) {
    return static_cast<Degree>(cfg.read_weight) * reads + static_cast<Degree>(cfg.write_weight) * writes;
}

struct PageDegree {
    PageIndex page;
    Degree degree;

    bool operator==(const PageDegree&) const = default;
};

inline std::vector<PageDegree> degrees_from_counts(const std::vector<PageCount>& counts,
                                                   const ClassifierConfig& cfg) {
    std::vector<PageDegree> out;
    out.reserve(counts.size());
    for (const PageCount& c : counts) out.push_back({c.page, page_degree(c.reads, c.writes, cfg)});
    return out;
}

struct DegreeHistogram {
    std::vector<std::uint64_t> buckets;  // index = degree value

    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (auto b : buckets) n += b;
        return n;
    }
};

// Descending degree, ascending page index inside a bucket. Input must be
// sorted by page index for the stability contract. Single O(n + max_degree)
// pass; a degree beyond max_degree is an invariant breach.
inline std::vector<PageDegree> bucket_sort(const std::vector<PageDegree>& degrees,
                                           Degree max_degree,
                                           DegreeHistogram* histogram = nullptr) {
    std::vector<std::uint64_t> count(static_cast<std::size_t>(max_degree) + 1, 0);
    for (const PageDegree& d : degrees) {
        if (d.degree > max_degree)
            throw InvariantBreach("classifier", 0,
                                  "degree " + std::to_string(d.degree) + " above max " +
                                      std::to_string(max_degree));
        count[static_cast<std::size_t>(d.degree)]++;
    }
    if (histogram) histogram->buckets = count;

    // Prefix offsets with buckets laid out from the highest degree down.
    std::vector<std::uint64_t> offset(count.size() + 1, 0);
    std::uint64_t running = 0;
    for (std::size_t deg = count.size(); deg-- > 0;) {
        offset[deg] = running;
        running += count[deg];
    }
    std::vector<PageDegree> ordered(degrees.size());
    for (const PageDegree& d : degrees)
        ordered[offset[static_cast<std::size_t>(d.degree)]++] = d;
    return ordered;
}

inline std::vector<PageIndex> select_hotset(const std::vector<PageDegree>& ordering,
                                            std::uint64_t dram_capacity_pages) {
    const std::uint64_t take = std::min<std::uint64_t>(dram_capacity_pages, ordering.size());
    std::vector<PageIndex> hot;
    hot.reserve(take);
    for (std::uint64_t i = 0; i < take; ++i) hot.push_back(ordering[i].page);
    return hot;
}

// Pool-mode hot set size: the top hot_take_ratio share of pages strictly
// above the base threshold, clamped to the VM's DRAM limits.
inline std::uint64_t hot_set_size(const std::vector<PageDegree>& ordering_with_degrees,
                                  const ClassifierConfig& cfg,
                                  std::uint64_t lower_pages, std::uint64_t upper_pages) {
    if (lower_pages > upper_pages)
        throw ConfigError("hot_set_size: lower limit above upper limit");
    std::uint64_t n_above = 0;
    for (const PageDegree& d : ordering_with_degrees)
        if (d.degree > cfg.base_threshold) n_above++;
    const auto hss = static_cast<std::uint64_t>(cfg.hot_take_ratio * static_cast<double>(n_above));
    return std::clamp(hss, lower_pages, upper_pages);
}

struct MigrationPlan {
    std::vector<PageIndex> promote;  // NVM-resident pages entering DRAM, hottest first
    std::vector<PageIndex> demote;   // DRAM-resident pages leaving, coldest first

    bool empty() const { return promote.empty() && demote.empty(); }
};

// Exchange plan against the current placement. Free DRAM quota is filled
// with the hottest NVM pages of the hot set first; beyond that, pages are
// exchanged pairwise only while the incoming page is strictly hotter than
// the coldest DRAM page left, so a DRAM already holding the hottest prefix
// yields an empty plan.
inline MigrationPlan diff_placement(const std::vector<PageDegree>& ordering,
                                    std::uint64_t hotset_size,
                                    const VmMmu& mmu,
                                    std::uint64_t dram_quota_pages) {
    MigrationPlan plan;
    if (mmu.dram_resident() > dram_quota_pages)
        throw InvariantBreach("classifier", 0, "DRAM residency above quota before planning");

    std::vector<PageDegree> wanted;  // hot-set pages currently on NVM, hottest first
    const std::uint64_t take = std::min<std::uint64_t>(hotset_size, ordering.size());
    for (std::uint64_t i = 0; i < take; ++i) {
        const PageState& ps = mmu.page(ordering[i].page);
        if (ps.mapped() && ps.tier() == Tier::Nvm) wanted.push_back(ordering[i]);
    }
    if (wanted.empty()) return plan;

    std::uint64_t free_quota = dram_quota_pages - mmu.dram_resident();
    std::size_t next = 0;
    for (; next < wanted.size() && free_quota > 0; ++next, --free_quota)
        plan.promote.push_back(wanted[next].page);
    if (next == wanted.size()) return plan;

    // Coldest DRAM pages: epoch degree 0 for pages missing from the epoch
    // ordering, ascending degree, ascending page index.
    std::vector<std::uint64_t> degree_of;  // lazy map page -> degree + 1 (0 = absent)
    degree_of.assign(mmu.total_pages(), 0);
    for (const PageDegree& d : ordering) degree_of[d.page] = d.degree + 1;
    std::vector<PageDegree> dram_pages;
    dram_pages.reserve(mmu.dram_resident());
    for (PageIndex p = 0; p < mmu.total_pages(); ++p) {
        const PageState& ps = mmu.page(p);
        if (ps.mapped() && ps.tier() == Tier::Dram)
            dram_pages.push_back({p, degree_of[p] == 0 ? 0 : degree_of[p] - 1});
    }
    std::sort(dram_pages.begin(), dram_pages.end(), [](const PageDegree& a, const PageDegree& b) {
        return a.degree != b.degree ? a.degree < b.degree : a.page < b.page;
    });

    for (std::size_t i = 0; next < wanted.size() && i < dram_pages.size(); ++next, ++i) {
        if (wanted[next].degree <= dram_pages[i].degree) break;  // no colder page: stop migration
        plan.promote.push_back(wanted[next].page);
        plan.demote.push_back(dram_pages[i].page);
    }
    return plan;
}

}  // namespace hmmv
