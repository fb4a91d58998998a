// Access traces: the AccessEvent record, in-memory Trace container and the
// fixed-width binary trace format plus its CSV mirror.
//
// Binary layout (little endian):
//   header: 8-byte magic "HMMVTRCE", u8 version, 7 zero bytes,
//           u64 total_pages, u64 event_count          (32 bytes)
//   record: u64 time_ns, u16 vm, u16 vcpu, u8 kind, u8 pad, u64 page
//           (22 bytes, kind 0 = read, 1 = write)
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hmmv/common.hpp"
#include "hmmv/cost_model.hpp"

namespace hmmv {

struct AccessEvent {
    SimTime time = 0;
    VmId vm = 0;
    VcpuId vcpu = 0;
    PageIndex page = 0;
    AccessKind kind = AccessKind::Read;

    bool operator==(const AccessEvent&) const = default;
};

struct Trace {
    std::uint64_t total_pages = 0;  // footprint: events reference pages < total_pages
    std::vector<AccessEvent> events;

    bool operator==(const Trace&) const = default;

    // Sortedness (time, then vm/vcpu/sequence which is positional) and
    // page-bound checks. Throws ValidationError naming the first bad record.
    void validate() const {
        for (std::size_t i = 0; i < events.size(); ++i) {
            const AccessEvent& e = events[i];
            if (e.page >= total_pages)
                throw ValidationError("event " + std::to_string(i) + ": page " +
                                      std::to_string(e.page) + " out of bounds (" +
                                      std::to_string(total_pages) + " pages)");
            if (i > 0 && e.time < events[i - 1].time)
                throw ValidationError("event " + std::to_string(i) + ": time decreases");
        }
    }
};

namespace detail {

inline constexpr char kTraceMagic[8] = {'H', 'M', 'M', 'V', 'T', 'R', 'C', 'E'};
inline constexpr std::uint8_t kTraceVersion = 1;
inline constexpr std::size_t kTraceHeaderBytes = 32;
inline constexpr std::size_t kTraceRecordBytes = 22;

inline void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace detail

inline void store_trace(const Trace& trace, const std::string& path) {
    std::string buf;
    buf.reserve(detail::kTraceHeaderBytes + trace.events.size() * detail::kTraceRecordBytes);
    buf.append(detail::kTraceMagic, sizeof(detail::kTraceMagic));
    buf.push_back(static_cast<char>(detail::kTraceVersion));
    buf.append(7, '\0');
    detail::put_u64(buf, trace.total_pages);
    detail::put_u64(buf, trace.events.size());
    for (const AccessEvent& e : trace.events) {
        detail::put_u64(buf, e.time);
        detail::put_u16(buf, e.vm);
        detail::put_u16(buf, e.vcpu);
        buf.push_back(static_cast<char>(e.kind == AccessKind::Write ? 1 : 0));
        buf.push_back('\0');
        detail::put_u64(buf, e.page);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw ValidationError("short write: " + path);
}

inline Trace load_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open trace: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());

    if (data.size() < detail::kTraceHeaderBytes)
        throw ValidationError(path + ": truncated header at byte offset " +
                              std::to_string(data.size()));
    if (std::memcmp(p, detail::kTraceMagic, sizeof(detail::kTraceMagic)) != 0)
        throw ValidationError(path + ": bad magic");
    if (p[8] != detail::kTraceVersion)
        throw ValidationError(path + ": unsupported version " + std::to_string(p[8]));

    Trace trace;
    trace.total_pages = detail::get_u64(p + 16);
    const std::uint64_t count = detail::get_u64(p + 24);
    const std::uint64_t want = detail::kTraceHeaderBytes + count * detail::kTraceRecordBytes;
    if (data.size() < want)
        throw ValidationError(path + ": truncated at byte offset " + std::to_string(data.size()) +
                              " (expected " + std::to_string(want) + " bytes)");

    trace.events.resize(count);
    const unsigned char* rec = p + detail::kTraceHeaderBytes;
    for (std::uint64_t i = 0; i < count; ++i, rec += detail::kTraceRecordBytes) {
        AccessEvent& e = trace.events[i];
        e.time = detail::get_u64(rec);
        e.vm = detail::get_u16(rec + 8);
        e.vcpu = detail::get_u16(rec + 10);
        if (rec[12] > 1)
            throw ValidationError(path + ": record " + std::to_string(i) + ": bad kind byte");
        e.kind = rec[12] ? AccessKind::Write : AccessKind::Read;
        e.page = detail::get_u64(rec + 14);
    }
    trace.validate();
    return trace;
}

// Debug mirror: time_ns,vm,vcpu,kind,page with kind R or W.
inline void store_trace_csv(const Trace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << "# schema_version,1\n";
    out << "# total_pages," << trace.total_pages << "\n";
    out << "time_ns,vm,vcpu,kind,page\n";
    for (const AccessEvent& e : trace.events)
        out << e.time << ',' << e.vm << ',' << e.vcpu << ','
            << (e.kind == AccessKind::Write ? 'W' : 'R') << ',' << e.page << "\n";
}

}  // namespace hmmv
