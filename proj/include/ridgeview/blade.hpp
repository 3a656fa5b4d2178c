#pragma once

// Procedural fan-blade geometry and the bundled demo dataset.
//
// A blade is a stack of cambered airfoil sections. Five shape parameters act
// at each of five span stations (0, 25, 50, 75, 100 %): axial shift,
// tangential shift, rotation about the section centroid, leading-edge
// recamber and trailing-edge recamber, 25 parameters in total. Between
// stations the parameters are interpolated linearly. This is a stand-in
// geometry generator for demos and tests; it makes no aerodynamic claim.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ridgeview/dataset.hpp"
#include "ridgeview/geometry.hpp"
#include "ridgeview/json_format.hpp"

namespace ridgeview {

inline constexpr std::array<double, 5> blade_span_stations{0.0, 0.25, 0.5, 0.75, 1.0};
inline constexpr std::array<const char*, 5> blade_parameter_kinds{"axial", "tangential", "rotation", "le_recamber",
                                                                   "te_recamber"};

struct BladeShape {
    double chord = 50.0;      // mm
    double span = 100.0;      // mm
    double thickness = 0.08;  // fraction of chord
    double camber = 0.04;     // fraction of chord
    double stagger_deg = 30.0;
    int chord_points = 24;    // points per surface, leading to trailing edge
    int span_sections = 11;
};

/// Raw bounds of the 25 parameters (mm for shifts, degrees for angles).
inline DomainSpec blade_domain() {
    DomainSpec dom;
    const std::array<double, 5> half{1.0, 1.0, 1.5, 3.0, 3.0};
    for (std::size_t s = 0; s < blade_span_stations.size(); ++s)
        for (double h : half) dom.bounds.emplace_back(-h, h);
    return dom;
}

inline std::vector<std::string> blade_parameter_names() {
    std::vector<std::string> names;
    for (double s : blade_span_stations)
        for (const char* kind : blade_parameter_kinds)
            names.push_back(std::string(kind) + "_" + std::to_string(static_cast<int>(std::lround(s * 100))));
    return names;
}

namespace detail {

/// Thickness half-distribution with a closed trailing edge.
inline double naca_half_thickness(double s, double t) {
    return 5.0 * t *
           (0.2969 * std::sqrt(s) - 0.1260 * s - 0.3516 * s * s + 0.2843 * s * s * s - 0.1036 * s * s * s * s);
}

} // namespace detail

/// Builds the blade for raw parameters `raw` (length 25); an empty vector
/// gives the nominal blade. Vertex count and order are the same for every
/// design, so vertexwise diffs apply.
inline TriangleMesh make_blade(const Eigen::VectorXd& raw, const BladeShape& shape = {}) {
    constexpr std::size_t per_station = 5;
    Eigen::VectorXd params = raw.size() ? raw : Eigen::VectorXd::Zero(25);
    if (params.size() != 25) fail(ErrorKind::usage, "make_blade: expected 25 parameters");
    const int nc = shape.chord_points;
    const int ns = shape.span_sections;
    if (nc < 3 || ns < 2) fail(ErrorKind::usage, "make_blade: resolution too coarse");
    const double deg = std::numbers::pi / 180.0;

    auto param_at = [&](double span_frac, std::size_t kind) {
        const double pos = span_frac * 4.0;
        const auto lo = static_cast<std::size_t>(std::min(3.0, std::floor(pos)));
        const double w = pos - static_cast<double>(lo);
        return (1.0 - w) * params[static_cast<Eigen::Index>(lo * per_station + kind)] +
               w * params[static_cast<Eigen::Index>((lo + 1) * per_station + kind)];
    };

    // Section loop: upper surface TE -> LE, then lower surface LE+1 -> TE-1.
    const int loop = 2 * nc;
    std::vector<Vec3f> verts;
    verts.reserve(static_cast<std::size_t>(loop * ns + 2));
    for (int k = 0; k < ns; ++k) {
        const double sf = static_cast<double>(k) / (ns - 1);
        const double axial = param_at(sf, 0), tangential = param_at(sf, 1);
        const double rot = param_at(sf, 2) * deg, le = param_at(sf, 3) * deg, te = param_at(sf, 4) * deg;
        const double stagger = shape.stagger_deg * deg + rot;
        const double z = sf * shape.span;

        auto point = [&](int i, bool upper) {
            const double s = 0.5 * (1.0 - std::cos(std::numbers::pi * i / nc)); // cosine spacing, 0 = LE
            // Parabolic camber plus local recambering near each edge.
            const double yc = 4.0 * shape.camber * s * (1.0 - s) + std::tan(le) * 0.25 * (1.0 - s) * (1.0 - s) * (1.0 - s) -
                              std::tan(te) * 0.25 * s * s * s;
            const double yt = detail::naca_half_thickness(s, shape.thickness);
            const double u = s - 0.5;                       // about mid-chord
            const double v = yc + (upper ? yt : -yt) - 0.5 * shape.camber;
            const double cx = shape.chord * (u * std::cos(stagger) - v * std::sin(stagger)) + axial;
            const double cy = shape.chord * (u * std::sin(stagger) + v * std::cos(stagger)) + tangential;
            return Vec3f{static_cast<float>(cx), static_cast<float>(cy), static_cast<float>(z)};
        };
        for (int i = nc; i >= 0; --i) verts.push_back(point(i, true));
        for (int i = 1; i < nc; ++i) verts.push_back(point(i, false));
    }
    // Cap centres: centroid of the hub and tip loops.
    for (int k : {0, ns - 1}) {
        Eigen::Vector3d c = Eigen::Vector3d::Zero();
        for (int i = 0; i < loop; ++i) c += to_eigen(verts[static_cast<std::size_t>(k * loop + i)]);
        c /= loop;
        verts.push_back({static_cast<float>(c.x()), static_cast<float>(c.y()), static_cast<float>(c.z())});
    }

    // Emitted as triangle soup so vertex order is the canonical
    // first-appearance order that parse_stl reproduces.
    std::vector<std::array<Vec3f, 3>> tris;
    auto at = [&](int k, int i) { return verts[static_cast<std::size_t>(k * loop + ((i % loop) + loop) % loop)]; };
    for (int k = 0; k + 1 < ns; ++k)
        for (int i = 0; i < loop; ++i) {
            tris.push_back({at(k, i), at(k, i + 1), at(k + 1, i + 1)});
            tris.push_back({at(k, i), at(k + 1, i + 1), at(k + 1, i)});
        }
    const Vec3f hub = verts[static_cast<std::size_t>(loop * ns)], tip = verts[static_cast<std::size_t>(loop * ns + 1)];
    for (int i = 0; i < loop; ++i) {
        tris.push_back({hub, at(0, i + 1), at(0, i)});
        tris.push_back({tip, at(ns - 1, i), at(ns - 1, i + 1)});
    }
    return mesh_from_triangles(tris);
}

/// Placeholder engine context: a hub cylinder the blade sits on.
inline TriangleMesh make_hub_placeholder(double radius = 60.0, double length = 80.0, int segments = 48) {
    std::vector<std::array<Vec3f, 3>> tris;
    auto p = [&](int i, double x) {
        const double a = 2.0 * std::numbers::pi * i / segments;
        return Vec3f{static_cast<float>(x), static_cast<float>(radius * std::cos(a)),
                     static_cast<float>(radius * std::sin(a) - radius)};
    };
    for (int i = 0; i < segments; ++i) {
        const double x0 = -0.5 * length, x1 = 0.5 * length;
        tris.push_back({p(i, x0), p(i + 1, x0), p(i + 1, x1)});
        tris.push_back({p(i, x0), p(i + 1, x1), p(i, x1)});
    }
    return mesh_from_triangles(tris);
}

// ---------------------------------------------------------------------------
// Demo dataset
// ---------------------------------------------------------------------------

struct DemoOptions {
    std::size_t n = 548;
    std::uint64_t seed = 42;
    double noise_sd = 0.005;
    BladeShape shape;
    bool write_context = true;
};

struct DemoTruth {
    Eigen::MatrixXd pressure_ratio_direction; // d x 1
    Eigen::MatrixXd efficiency_directions;    // d x 2
};

/// Design table over the blade domain with a 1D-ridge `pressure_ratio` and
/// a 2D-ridge `efficiency`.
inline DesignTable make_demo_table(const DemoOptions& opt, DemoTruth* truth = nullptr) {
    const auto dom = blade_domain();
    auto table = sample_uniform_doe(dom, opt.n, opt.seed);
    table.parameter_names = blade_parameter_names();
    const Eigen::MatrixXd U = random_orthonormal(static_cast<Eigen::Index>(dom.dim()), 3, opt.seed + 1);
    const Eigen::MatrixXd u_pr = U.col(0);
    const Eigen::MatrixXd u_eff = U.rightCols(2);
    table = evaluate_oracle(SyntheticOracle::ridge_1d(u_pr, opt.noise_sd, opt.seed + 2), table, "pressure_ratio");
    table = evaluate_oracle(SyntheticOracle::ridge_2d(u_eff, opt.noise_sd, opt.seed + 3), table, "efficiency");
    if (truth) *truth = {u_pr, u_eff};
    return table;
}

/// Writes a dataset directory: domain.json, designs.csv, geometry.json and
/// geometry/{nominal,design_NNNN,hub}.stl.
inline DesignTable write_demo_dataset(const std::filesystem::path& dir, const DemoOptions& opt = {},
                                      DemoTruth* truth = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "geometry");
    auto table = make_demo_table(opt, truth);
    for (std::size_t i = 0; i < table.size(); ++i) table.samples[i].geometry_key = default_geometry_key(i);

    std::ofstream(dir / "domain.json") << dump_json(domain_to_json(table.domain)) << '\n';
    std::ofstream(dir / "designs.csv") << design_table_to_csv(table);

    json manifest{{"nominal", "geometry/nominal.stl"}, {"designs", json::object()}};
    save_stl(dir / "geometry" / "nominal.stl", make_blade(Eigen::VectorXd(), opt.shape));
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto rel = "geometry/" + table.geometry_key(i);
        save_stl(dir / rel, make_blade(denormalize_design(table.samples[i].x, table.domain), opt.shape));
        manifest["designs"][std::to_string(i)] = rel;
    }
    if (opt.write_context) {
        save_stl(dir / "geometry" / "hub.stl", make_hub_placeholder());
        manifest["context"] = "geometry/hub.stl";
    }
    std::ofstream(dir / "geometry.json") << manifest.dump(1) << '\n';
    return table;
}

} // namespace ridgeview
