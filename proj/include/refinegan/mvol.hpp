#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "refinegan/core.hpp"

namespace refinegan {

// MVOL container, little-endian:
//   magic "MVL1"
//   u8  dtype        0 = f32 voxels, 1 = u8 labels
//   u8  ndim         3 or 4
//   u32 dims[ndim]
//   f32 spacing[3]
//   u16 name block length, then UTF-8 names joined by ';'
//   row-major payload, no compression
//
// This is the only ingestion format; converters from clinical formats are
// external to the repo.

namespace mvol_detail {

inline void put_u8(std::string& b, std::uint8_t v) { b.push_back(static_cast<char>(v)); }
inline void put_u16(std::string& b, std::uint16_t v) {
    b.push_back(static_cast<char>(v & 0xff));
    b.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put_u32(std::string& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& b, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(b, bits);
}

struct Reader {
    const std::uint8_t* p;
    std::size_t n;
    std::size_t off = 0;

    void need(std::size_t k, const char* what) {
        if (off + k > n) throw FormatError(FormatError::Kind::truncated, std::string("truncated ") + what);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return p[off++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(p[off]) | static_cast<std::uint16_t>(p[off + 1]) << 8;
        off += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
        off += 8;
        return v;
    }
    float f32(const char* what) {
        std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

inline std::string join_names(const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) s += ';';
        s += names[i];
    }
    return s;
}

inline std::vector<std::string> split_names(const std::string& s) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t sep = s.find(';', start);
        if (sep == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, sep - start));
        start = sep + 1;
    }
    return out;
}

}  // namespace mvol_detail

/// Raw decoded MVOL file; exactly one of voxels/labels is populated.
struct MvolData {
    std::uint8_t dtype = 0;
    std::vector<std::uint32_t> dims;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::vector<std::string> names;
    Tensor<float> voxels;
    Tensor<std::uint8_t> labels;
};

inline void write_mvol_bytes(std::string& out, std::uint8_t dtype, const std::vector<std::uint32_t>& dims,
                             const std::array<double, 3>& spacing, const std::vector<std::string>& names,
                             const void* payload, std::size_t payload_bytes) {
    using namespace mvol_detail;
    out.clear();
    out += "MVL1";
    put_u8(out, dtype);
    put_u8(out, static_cast<std::uint8_t>(dims.size()));
    for (std::uint32_t d : dims) put_u32(out, d);
    for (double s : spacing) put_f32(out, static_cast<float>(s));
    const std::string joined = join_names(names);
    if (joined.size() > 0xffff) throw DataError("mvol: name block too long");
    put_u16(out, static_cast<std::uint16_t>(joined.size()));
    out += joined;
    out.append(static_cast<const char*>(payload), payload_bytes);
}

inline MvolData parse_mvol(const std::uint8_t* bytes, std::size_t n) {
    using namespace mvol_detail;
    Reader r{bytes, n};
    r.need(4, "magic");
    if (std::memcmp(bytes, "MVL1", 4) != 0)
        throw FormatError(FormatError::Kind::bad_magic, "mvol: bad magic");
    r.off = 4;
    MvolData d;
    d.dtype = r.u8("dtype");
    if (d.dtype > 1)
        throw FormatError(FormatError::Kind::unknown_dtype,
                          "mvol: unknown dtype code " + std::to_string(int(d.dtype)));
    const std::uint8_t ndim = r.u8("ndim");
    if (ndim != 3 && ndim != 4)
        throw FormatError(FormatError::Kind::bad_header, "mvol: ndim must be 3 or 4");
    d.dims.resize(ndim);
    std::size_t count = 1;
    for (std::uint8_t i = 0; i < ndim; ++i) {
        d.dims[i] = r.u32("dims");
        if (d.dims[i] == 0) throw FormatError(FormatError::Kind::bad_header, "mvol: zero dimension");
        count *= d.dims[i];
    }
    for (int i = 0; i < 3; ++i) d.spacing[static_cast<std::size_t>(i)] = r.f32("spacing");
    const std::uint16_t name_len = r.u16("name block");
    r.need(name_len, "name block");
    d.names = split_names(std::string(reinterpret_cast<const char*>(bytes + r.off), name_len));
    r.off += name_len;

    const std::size_t c = ndim == 4 ? d.dims[3] : 1;
    const std::size_t s = d.dims[0], rw = d.dims[1], cl = d.dims[2];
    if (d.dtype == 0) {
        r.need(count * 4, "payload");
        d.voxels = Tensor<float>(s, rw, cl, c);
        std::memcpy(d.voxels.data(), bytes + r.off, count * 4);
        r.off += count * 4;
    } else {
        r.need(count, "payload");
        d.labels = Tensor<std::uint8_t>(s, rw, cl, c);
        std::memcpy(d.labels.data(), bytes + r.off, count);
        r.off += count;
    }
    return d;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed: " + path);
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_mvol(const Volume& v, const std::string& path) {
    std::string bytes;
    write_mvol_bytes(bytes, 0,
                     {static_cast<std::uint32_t>(v.slices()), static_cast<std::uint32_t>(v.rows()),
                      static_cast<std::uint32_t>(v.cols()), static_cast<std::uint32_t>(v.channels())},
                     v.spacing, v.modality_names, v.voxels.data(), v.voxels.size() * 4);
    write_file_bytes(path, bytes);
}

inline void write_mvol(const SegMap& m, const std::string& path,
                       const std::array<double, 3>& spacing = {1.0, 1.0, 1.0}) {
    if (m.is_probs()) throw DataError("mvol: only hard label maps are written as dtype 1");
    const auto& l = m.labels;
    std::string bytes;
    write_mvol_bytes(bytes, 1,
                     {static_cast<std::uint32_t>(l.dim(0)), static_cast<std::uint32_t>(l.dim(1)),
                      static_cast<std::uint32_t>(l.dim(2))},
                     spacing, m.class_names, l.data(), l.size());
    write_file_bytes(path, bytes);
}

inline MvolData read_mvol(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    return parse_mvol(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
}

/// Reads a dtype-0 file as a validated Volume; patient id defaults to the
/// file stem (the format itself carries no identity).
inline Volume read_volume(const std::string& path) {
    MvolData d = read_mvol(path);
    if (d.dtype != 0) throw DataError("expected f32 voxel file: " + path);
    Volume v;
    v.voxels = std::move(d.voxels);
    v.spacing = d.spacing;
    v.modality_names = d.names;
    if (v.modality_names.empty())
        for (std::size_t i = 0; i < v.channels(); ++i) v.modality_names.push_back("ch" + std::to_string(i));
    v.patient_id = std::filesystem::path(path).stem().string();
    validate(v);
    return v;
}

/// Reads a dtype-1 file as a validated hard-label SegMap.
inline SegMap read_labels(const std::string& path) {
    MvolData d = read_mvol(path);
    if (d.dtype != 1) throw DataError("expected u8 label file: " + path);
    SegMap m;
    m.labels = std::move(d.labels);
    m.class_names = d.names;
    int max_label = 0;
    for (std::uint8_t v : m.labels.flat()) max_label = std::max<int>(max_label, v);
    m.class_count = m.class_names.empty() ? std::max(2, max_label + 1)
                                          : static_cast<int>(m.class_names.size());
    validate(m);
    return m;
}

}  // namespace refinegan
