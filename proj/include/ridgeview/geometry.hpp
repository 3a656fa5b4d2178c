#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ridgeview/dataset.hpp"
#include "ridgeview/error.hpp"
#include "ridgeview/json_format.hpp"

namespace ridgeview {

/// STL stores single precision; meshes keep that precision so that
/// parse/serialize round trips are bit-exact.
using Vec3f = std::array<float, 3>;
using Facet = std::array<std::uint32_t, 3>;

inline Eigen::Vector3d to_eigen(const Vec3f& v) { return {v[0], v[1], v[2]}; }

struct TriangleMesh {
    std::vector<Vec3f> vertices;
    std::vector<Facet> facets;
    std::vector<Vec3f> facet_normals;
    bool normals_recomputed = false; // at least one normal was rebuilt from the vertices

    std::size_t facet_count() const { return facets.size(); }
    std::size_t vertex_count() const { return vertices.size(); }

    void validate() const {
        if (facets.empty()) fail(ErrorKind::data, "mesh: empty mesh");
        if (facet_normals.size() != facets.size()) fail(ErrorKind::data, "mesh: one normal per facet required");
        for (std::size_t f = 0; f < facets.size(); ++f) {
            const auto& t = facets[f];
            for (auto idx : t)
                if (idx >= vertices.size())
                    fail(ErrorKind::data, "mesh: facet " + std::to_string(f) + " references missing vertex");
            if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
                fail(ErrorKind::data, "mesh: facet " + std::to_string(f) + " is degenerate");
        }
    }

    bool same_topology_and_positions(const TriangleMesh& o) const {
        return vertices == o.vertices && facets == o.facets;
    }
};

/// Right-hand-rule unit normal of triangle (a, b, c); zero for collinear points.
inline Vec3f triangle_normal(const Vec3f& a, const Vec3f& b, const Vec3f& c) {
    const Eigen::Vector3d n = (to_eigen(b) - to_eigen(a)).cross(to_eigen(c) - to_eigen(a));
    const double len = n.norm();
    if (len == 0.0) return {0.0f, 0.0f, 0.0f};
    return {static_cast<float>(n.x() / len), static_cast<float>(n.y() / len), static_cast<float>(n.z() / len)};
}

namespace detail {

struct VertexKey {
    std::uint32_t x, y, z;
    bool operator==(const VertexKey&) const = default;
};

struct VertexKeyHash {
    std::size_t operator()(const VertexKey& k) const noexcept {
        std::uint64_t h = k.x;
        h = h * 0x9E3779B97F4A7C15ULL ^ k.y;
        h = h * 0x9E3779B97F4A7C15ULL ^ k.z;
        return static_cast<std::size_t>(h ^ (h >> 29));
    }
};

/// Accumulates triangle soup into an indexed mesh, merging vertices whose
/// coordinates are bit-identical.
class MeshBuilder {
public:
    void add(const Vec3f& normal, const std::array<Vec3f, 3>& corners) {
        Facet f{};
        for (int k = 0; k < 3; ++k) f[static_cast<std::size_t>(k)] = index_of(corners[static_cast<std::size_t>(k)]);
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
            fail(ErrorKind::data, "stl: facet " + std::to_string(mesh_.facets.size()) + " is degenerate");
        Vec3f n = normal;
        const double len = std::sqrt(double(n[0]) * n[0] + double(n[1]) * n[1] + double(n[2]) * n[2]);
        if (std::abs(len - 1.0) > 1e-6 || !std::isfinite(len)) {
            n = triangle_normal(corners[0], corners[1], corners[2]);
            mesh_.normals_recomputed = true;
        }
        mesh_.facets.push_back(f);
        mesh_.facet_normals.push_back(n);
    }

    TriangleMesh finish() && {
        if (mesh_.facets.empty()) fail(ErrorKind::data, "stl: empty mesh");
        return std::move(mesh_);
    }

private:
    std::uint32_t index_of(const Vec3f& v) {
        const VertexKey key{std::bit_cast<std::uint32_t>(v[0]), std::bit_cast<std::uint32_t>(v[1]),
                            std::bit_cast<std::uint32_t>(v[2])};
        auto [it, inserted] = lookup_.try_emplace(key, static_cast<std::uint32_t>(mesh_.vertices.size()));
        if (inserted) mesh_.vertices.push_back(v);
        return it->second;
    }

    TriangleMesh mesh_;
    std::unordered_map<VertexKey, std::uint32_t, VertexKeyHash> lookup_;
};

inline std::uint32_t read_u32le(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

inline float read_f32le(const std::uint8_t* p) { return std::bit_cast<float>(read_u32le(p)); }

inline void write_u32le(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out += static_cast<char>((v >> (8 * k)) & 0xFFu);
}

inline void write_f32le(std::string& out, float v) { write_u32le(out, std::bit_cast<std::uint32_t>(v)); }

inline TriangleMesh parse_binary_stl(std::span<const std::uint8_t> bytes) {
    const std::uint32_t count = read_u32le(bytes.data() + 80);
    const std::uint64_t need = 84 + 50ULL * count;
    if (bytes.size() < need)
        fail(ErrorKind::data, "stl: truncated binary body, header declares " + std::to_string(count) +
                                  " triangles (" + std::to_string(need) + " bytes) but only " +
                                  std::to_string(bytes.size()) + " bytes present");
    MeshBuilder b;
    const std::uint8_t* p = bytes.data() + 84;
    for (std::uint32_t t = 0; t < count; ++t, p += 50) {
        const Vec3f n{read_f32le(p), read_f32le(p + 4), read_f32le(p + 8)};
        std::array<Vec3f, 3> c{};
        for (int k = 0; k < 3; ++k) {
            const auto* q = p + 12 + 12 * k;
            c[static_cast<std::size_t>(k)] = {read_f32le(q), read_f32le(q + 4), read_f32le(q + 8)};
        }
        b.add(n, c);
    }
    return std::move(b).finish();
}

class AsciiTokens {
public:
    explicit AsciiTokens(std::string_view text) : text_(text) {}

    std::optional<std::string_view> next() {
        while (pos_ < text_.size() && is_space(text_[pos_])) advance();
        if (pos_ >= text_.size()) return std::nullopt;
        const auto start = pos_;
        while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
        return text_.substr(start, pos_ - start);
    }

    void skip_line() {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
    }

    std::size_t line() const { return line_; }

private:
    static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }
    void advance() {
        if (text_[pos_] == '\n') ++line_;
        ++pos_;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
};

inline TriangleMesh parse_ascii_stl(std::string_view text) {
    AsciiTokens tok(text);
    auto malformed = [&](const std::string& what) -> void {
        fail(ErrorKind::data, "stl: malformed ASCII near line " + std::to_string(tok.line()) + ": " + what);
    };
    auto expect = [&](std::string_view word) {
        const auto t = tok.next();
        if (!t || *t != word) malformed("expected '" + std::string(word) + "', got '" + std::string(t.value_or("<eof>")) + "'");
    };
    auto number = [&]() -> float {
        const auto t = tok.next();
        if (!t) malformed("unexpected end of file");
        std::string_view s = *t;
        if (!s.empty() && s.front() == '+') s.remove_prefix(1);
        float v = 0.0f;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
            malformed("bad number '" + std::string(*t) + "'");
        return v;
    };

    expect("solid");
    tok.skip_line(); // solid name
    MeshBuilder b;
    while (true) {
        const auto t = tok.next();
        if (!t) malformed("missing 'endsolid'");
        if (*t == "endsolid") break;
        if (*t != "facet") malformed("expected 'facet', got '" + std::string(*t) + "'");
        expect("normal");
        Vec3f n{};
        for (auto& c : n) c = number();
        expect("outer");
        expect("loop");
        std::array<Vec3f, 3> corners{};
        for (auto& v : corners) {
            expect("vertex");
            for (auto& c : v) c = number();
        }
        expect("endloop");
        expect("endfacet");
        b.add(n, corners);
    }
    return std::move(b).finish();
}

} // namespace detail

/// Parses ASCII or binary STL. A buffer whose size matches the binary
/// header's triangle count is read as binary even if it begins with "solid".
inline TriangleMesh parse_stl(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) fail(ErrorKind::data, "stl: empty input");
    if (bytes.size() >= 84) {
        const std::uint64_t expect = 84 + 50ULL * detail::read_u32le(bytes.data() + 80);
        if (expect == bytes.size()) return detail::parse_binary_stl(bytes);
    }
    std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && text.substr(first, 5) == "solid") {
        // Binary writers sometimes start the header with "solid"; only commit
        // to ASCII when a facet keyword follows.
        const auto head = text.substr(0, std::min<std::size_t>(text.size(), 512));
        if (head.find("facet") != std::string_view::npos || head.find("endsolid") != std::string_view::npos ||
            bytes.size() < 84)
            return detail::parse_ascii_stl(text.substr(first));
    }
    if (bytes.size() < 84) fail(ErrorKind::data, "stl: input too short for a binary header");
    return detail::parse_binary_stl(bytes);
}

inline TriangleMesh parse_stl(std::string_view bytes) {
    return parse_stl(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

enum class StlFormat { binary, ascii };

inline std::string serialize_stl(const TriangleMesh& mesh, StlFormat format = StlFormat::binary) {
    mesh.validate();
    std::string out;
    if (format == StlFormat::binary) {
        out.reserve(84 + 50 * mesh.facets.size());
        std::string header = "binary STL (ridgeview)";
        header.resize(80, ' ');
        out += header;
        detail::write_u32le(out, static_cast<std::uint32_t>(mesh.facets.size()));
        for (std::size_t f = 0; f < mesh.facets.size(); ++f) {
            for (float c : mesh.facet_normals[f]) detail::write_f32le(out, c);
            for (auto idx : mesh.facets[f])
                for (float c : mesh.vertices[idx]) detail::write_f32le(out, c);
            out += '\0';
            out += '\0';
        }
        return out;
    }
    char buf[64];
    auto triple = [&](const Vec3f& v) {
        std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g", double(v[0]), double(v[1]), double(v[2]));
        return std::string(buf);
    };
    out += "solid ridgeview\n";
    for (std::size_t f = 0; f < mesh.facets.size(); ++f) {
        out += "  facet normal " + triple(mesh.facet_normals[f]) + "\n    outer loop\n";
        for (auto idx : mesh.facets[f]) out += "      vertex " + triple(mesh.vertices[idx]) + "\n";
        out += "    endloop\n  endfacet\n";
    }
    out += "endsolid ridgeview\n";
    return out;
}

/// Builds an indexed mesh from triangle soup with right-hand-rule normals.
inline TriangleMesh mesh_from_triangles(std::span<const std::array<Vec3f, 3>> triangles) {
    detail::MeshBuilder b;
    for (const auto& t : triangles) b.add(triangle_normal(t[0], t[1], t[2]), t);
    return std::move(b).finish();
}

inline TriangleMesh load_stl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::not_found, "cannot open mesh " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_stl(std::string_view(ss.str()));
    } catch (const Error& e) {
        fail(e.kind(), path.string() + ": " + e.what());
    }
}

inline void save_stl(const std::filesystem::path& path, const TriangleMesh& mesh, StlFormat format = StlFormat::binary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::data, "cannot write mesh " + path.string());
    const auto bytes = serialize_stl(mesh, format);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Statistics and comparison
// ---------------------------------------------------------------------------

struct MeshStats {
    Eigen::Vector3d bbox_min;
    Eigen::Vector3d bbox_max;
    std::size_t facet_count = 0;
    std::size_t vertex_count = 0;
};

inline MeshStats mesh_stats(const TriangleMesh& mesh) {
    mesh.validate();
    MeshStats s;
    s.bbox_min = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    s.bbox_max = -s.bbox_min;
    for (const auto& v : mesh.vertices) {
        s.bbox_min = s.bbox_min.cwiseMin(to_eigen(v));
        s.bbox_max = s.bbox_max.cwiseMax(to_eigen(v));
    }
    s.facet_count = mesh.facet_count();
    s.vertex_count = mesh.vertex_count();
    return s;
}

/// Closest point on triangle (a, b, c) to p (Voronoi-region walk).
inline Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                                 const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
    const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return a;
    const Eigen::Vector3d bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
    const Eigen::Vector3d cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

enum class DiffMode { vertexwise, sampled };

struct GeometryDiff {
    DiffMode mode = DiffMode::vertexwise;
    double max_displacement = 0.0;
    double mean_displacement = 0.0;
    std::vector<double> per_vertex;
};

/// Same vertex count: index-aligned displacements. Otherwise each vertex of
/// `other` is measured against the nearest point on any nominal facet.
inline GeometryDiff diff_meshes(const TriangleMesh& nominal, const TriangleMesh& other) {
    nominal.validate();
    other.validate();
    GeometryDiff diff;
    diff.per_vertex.reserve(other.vertex_count());
    if (nominal.vertex_count() == other.vertex_count()) {
        diff.mode = DiffMode::vertexwise;
        for (std::size_t i = 0; i < other.vertices.size(); ++i)
            diff.per_vertex.push_back((to_eigen(other.vertices[i]) - to_eigen(nominal.vertices[i])).norm());
    } else {
        diff.mode = DiffMode::sampled;
        for (const auto& v : other.vertices) {
            const Eigen::Vector3d p = to_eigen(v);
            double best = std::numeric_limits<double>::infinity();
            for (const auto& f : nominal.facets) {
                const auto q = closest_point_on_triangle(p, to_eigen(nominal.vertices[f[0]]),
                                                         to_eigen(nominal.vertices[f[1]]), to_eigen(nominal.vertices[f[2]]));
                best = std::min(best, (p - q).norm());
            }
            diff.per_vertex.push_back(best);
        }
    }
    double sum = 0.0;
    for (double v : diff.per_vertex) {
        diff.max_displacement = std::max(diff.max_displacement, v);
        sum += v;
    }
    diff.mean_displacement = diff.per_vertex.empty() ? 0.0 : sum / static_cast<double>(diff.per_vertex.size());
    // Guard the invariant against summation rounding when all values agree.
    diff.mean_displacement = std::min(diff.mean_displacement, diff.max_displacement);
    return diff;
}

inline json diff_to_json(const GeometryDiff& d, bool include_per_vertex = false) {
    json j{{"mode", d.mode == DiffMode::vertexwise ? "vertexwise" : "sampled"},
           {"max_displacement", d.max_displacement},
           {"mean_displacement", d.mean_displacement}};
    if (include_per_vertex) j["per_vertex"] = d.per_vertex;
    return j;
}

inline json stats_to_json(const MeshStats& s) {
    return json{{"bbox", json::array({to_json_array(s.bbox_min), to_json_array(s.bbox_max)})},
                {"facet_count", s.facet_count},
                {"vertex_count", s.vertex_count}};
}

// ---------------------------------------------------------------------------
// Catalog: design index -> mesh
// ---------------------------------------------------------------------------

/// Maps every design index to exactly one mesh. Design meshes are loaded on
/// first use; concurrent first requests for one index load it once.
class GeometryCatalog {
public:
    GeometryCatalog() = default;
    GeometryCatalog(GeometryCatalog&&) noexcept = default;
    GeometryCatalog& operator=(GeometryCatalog&&) noexcept = default;

    /// Reads `geometry.json`; indices missing from "designs" fall back to the
    /// table's geometry key in the manifest's directory.
    static GeometryCatalog from_manifest(const std::filesystem::path& manifest, const DesignTable& table) {
        std::ifstream in(manifest);
        if (!in) fail(ErrorKind::data, "cannot open geometry manifest " + manifest.string());
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            fail(ErrorKind::data, manifest.string() + ": " + e.what());
        }
        const auto base = manifest.parent_path();
        if (!j.contains("nominal") || !j["nominal"].is_string())
            fail(ErrorKind::data, manifest.string() + ": missing \"nominal\" path");

        GeometryCatalog cat;
        cat.nominal_ = std::make_shared<const TriangleMesh>(load_stl(base / j["nominal"].get<std::string>()));
        if (j.contains("context") && j["context"].is_string())
            cat.context_ = std::make_shared<const TriangleMesh>(load_stl(base / j["context"].get<std::string>()));

        std::map<std::size_t, std::string> listed;
        if (j.contains("designs")) {
            for (auto it = j["designs"].begin(); it != j["designs"].end(); ++it) {
                std::size_t idx = 0;
                const auto& key = it.key();
                const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
                if (ec != std::errc{} || ptr != key.data() + key.size())
                    fail(ErrorKind::data, manifest.string() + ": design key '" + key + "' is not an index");
                if (idx >= table.size())
                    fail(ErrorKind::data, manifest.string() + ": design " + key + " has no row in the design table");
                listed[idx] = it.value().get<std::string>();
            }
        }
        for (std::size_t i = 0; i < table.size(); ++i) {
            auto slot = std::make_unique<Slot>();
            slot->key = table.geometry_key(i);
            auto found = listed.find(i);
            slot->path = base / (found != listed.end() ? found->second : slot->key);
            if (!std::filesystem::exists(slot->path))
                fail(ErrorKind::data, manifest.string() + ": mesh for design " + std::to_string(i) + " not found at " +
                                          slot->path.string());
            cat.slots_.push_back(std::move(slot));
        }
        return cat;
    }

    /// Catalog over meshes already in memory (synthetic data, tests).
    static GeometryCatalog in_memory(TriangleMesh nominal, std::vector<TriangleMesh> designs,
                                     std::optional<TriangleMesh> context = std::nullopt) {
        GeometryCatalog cat;
        cat.nominal_ = std::make_shared<const TriangleMesh>(std::move(nominal));
        if (context) cat.context_ = std::make_shared<const TriangleMesh>(std::move(*context));
        for (std::size_t i = 0; i < designs.size(); ++i) {
            auto slot = std::make_unique<Slot>();
            slot->key = default_geometry_key(i);
            slot->mesh = std::make_shared<const TriangleMesh>(std::move(designs[i]));
            std::call_once(slot->once, [] {});
            cat.slots_.push_back(std::move(slot));
        }
        return cat;
    }

    std::size_t size() const { return slots_.size(); }
    const TriangleMesh& nominal() const { return *nominal_; }
    const TriangleMesh* context() const { return context_.get(); }

    const std::string& key(std::size_t index) const { return slot(index).key; }
    const std::filesystem::path& path(std::size_t index) const { return slot(index).path; }

    std::shared_ptr<const TriangleMesh> design(std::size_t index) const {
        auto& s = slot(index);
        std::call_once(s.once, [&] { s.mesh = std::make_shared<const TriangleMesh>(load_stl(s.path)); });
        return s.mesh;
    }

    bool is_loaded(std::size_t index) const { return slot(index).mesh != nullptr; }

    void check_alignment(std::size_t n) const {
        if (size() != n)
            fail(ErrorKind::data, "geometry catalog has " + std::to_string(size()) + " designs but the table has " +
                                      std::to_string(n));
    }

private:
    struct Slot {
        std::string key;
        std::filesystem::path path;
        mutable std::once_flag once;
        mutable std::shared_ptr<const TriangleMesh> mesh;
    };

    Slot& slot(std::size_t index) const {
        if (index >= slots_.size())
            fail(ErrorKind::not_found, "design index " + std::to_string(index) + " out of range");
        return *slots_[index];
    }

    std::shared_ptr<const TriangleMesh> nominal_;
    std::shared_ptr<const TriangleMesh> context_;
    std::vector<std::unique_ptr<Slot>> slots_;
};

struct CatalogEntryReport {
    std::size_t index = 0;
    std::optional<MeshStats> stats;
    std::string error;
};

/// Stats for every design; failures are reported per entry instead of aborting.
inline std::vector<CatalogEntryReport> catalog_stats(const GeometryCatalog& catalog) {
    std::vector<CatalogEntryReport> out;
    out.reserve(catalog.size());
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        CatalogEntryReport r{i, std::nullopt, {}};
        try {
            r.stats = mesh_stats(*catalog.design(i));
        } catch (const Error& e) {
            r.error = e.what();
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace ridgeview
