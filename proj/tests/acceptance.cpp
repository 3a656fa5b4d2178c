// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "ridgeview/blade.hpp"
#include "ridgeview/http_server.hpp"
#include "ridgeview/linkage.hpp"
#include "ridgeview/service.hpp"
#include "ridgeview/surrogate.hpp"
#include "ridgeview/verify.hpp"

using namespace ridgeview;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("violated: ") + what;
        }
    }
    void note(const std::string& s) {
        if (pass) detail += (detail.empty() ? "" : " ") + s;
    }
};

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

QuadraticModel random_model(Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::MatrixXd A(d, d);
    Eigen::VectorXd c(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        c[i] = g(rng);
        for (Eigen::Index j = 0; j < d; ++j) A(i, j) = g(rng);
    }
    return QuadraticModel::from_parts(A, c, g(rng));
}

// ---------------------------------------------------------------------------

Outcome ridge_1d_recovery() {
    Outcome o;
    const Eigen::MatrixXd u = random_orthonormal(10, 1, 101);
    const auto t0 = std::chrono::steady_clock::now();
    const auto table = evaluate_oracle(SyntheticOracle::ridge_1d(u), sample_uniform_doe(DomainSpec::unit(10), 500, 102), "f");
    const auto a = analyze_qoi(table, "f");
    const double secs = seconds_since(t0);
    const double angle = principal_angle(a.subspace.W.leftCols(1), u);
    const double ratio = a.subspace.eigenvalues[1] / a.subspace.eigenvalues[0];
    o.check(angle <= 1e-6, "angle " + sci(angle) + " > 1e-6");
    o.check(ratio <= 1e-10, "lambda2/lambda1 " + sci(ratio) + " > 1e-10");
    o.check(secs < 5.0, "runtime " + sci(secs) + " s >= 5 s");
    o.note("angle=" + sci(angle) + " lambda2/lambda1=" + sci(ratio) + " t=" + sci(secs) + "s");
    return o;
}

Outcome ridge_2d_recovery() {
    Outcome o;
    const Eigen::MatrixXd u = random_orthonormal(10, 2, 201);
    const auto table = evaluate_oracle(SyntheticOracle::ridge_2d(u), sample_uniform_doe(DomainSpec::unit(10), 500, 202), "f");
    const auto a = analyze_qoi(table, "f");
    o.check(a.subspace.m == 2, "selected m = " + std::to_string(a.subspace.m));
    if (a.subspace.m == 2) {
        const double angle = principal_angle(a.subspace.W1(), u);
        o.check(angle <= 1e-6, "angle " + sci(angle) + " > 1e-6");
        o.note("m=2 angle=" + sci(angle));
    }
    return o;
}

Outcome full_scale_noisy_recovery() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<RecoveryResult> results;
    for (const auto& c : default_recovery_cases())
        if (c.noise_sd == 0.01) results.push_back(run_recovery_case(c, 548));
    const double secs = seconds_since(t0);
    o.check(results.size() == 2, "expected both noisy oracles");
    for (const auto& r : results) {
        o.check(r.found_m == r.expected_m, r.spec.name + " m = " + std::to_string(r.found_m));
        o.check(r.angle <= 0.05, r.spec.name + " angle " + sci(r.angle) + " > 0.05");
        o.note(r.spec.name + ".angle=" + sci(r.angle));
    }
    o.check(secs < 10.0, "runtime " + sci(secs) + " s >= 10 s");
    o.note("t=" + sci(secs) + "s");
    return o;
}

Outcome covariance_mc_vs_closed_form() {
    Outcome o;
    for (Eigen::Index d : {2, 5, 10}) {
        const auto m = random_model(d, 300 + static_cast<std::uint64_t>(d));
        const auto exact = covariance_analytic(m).C;
        const auto mc = covariance_monte_carlo(m, 1000000, 400 + static_cast<std::uint64_t>(d)).C;
        const double rel = (mc - exact).norm() / exact.norm();
        o.check(rel <= 1e-2, "d=" + std::to_string(d) + " discrepancy " + sci(rel));
        o.note("d" + std::to_string(d) + "=" + sci(rel));
    }
    return o;
}

Outcome quadratic_exactness() {
    Outcome o;
    const Eigen::Index d = 8;
    const auto truth = random_model(d, 501);
    const auto n = quadratic_basis_size(d);
    const auto table = evaluate_oracle(SyntheticOracle::full(truth), sample_uniform_doe(DomainSpec::unit(d), n, 502), "f");
    const auto fit = fit_quadratic(table, "f");
    const double eA = (fit.A - truth.A).norm() / truth.A.norm();
    const double ec = (fit.c - truth.c).norm() / truth.c.norm();
    const double ed = std::abs(fit.d0 - truth.d0) / std::abs(truth.d0);
    o.check(eA <= 1e-8, "A rel error " + sci(eA));
    o.check(ec <= 1e-8, "c rel error " + sci(ec));
    o.check(ed <= 1e-8, "d0 rel error " + sci(ed));
    o.note("N=p=" + std::to_string(n) + " A=" + sci(eA) + " c=" + sci(ec) + " d0=" + sci(ed));
    return o;
}

Outcome numerical_invariants() {
    Outcome o;
    std::mt19937_64 rng(601);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst_fd = 0, worst_orth = 0, worst_res = 0, worst_psd = 0, worst_ridge = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const Eigen::Index d = 2 + trial % 9;
        const auto m = random_model(d, 700 + static_cast<std::uint64_t>(trial));
        Eigen::VectorXd x(d);
        for (Eigen::Index k = 0; k < d; ++k) x[k] = u(rng);
        const auto g = gradient(m, x);
        const double h = 1e-5;
        for (Eigen::Index k = 0; k < d; ++k) {
            Eigen::VectorXd xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            worst_fd = std::max(worst_fd, std::abs((m.evaluate(xp) - m.evaluate(xm)) / (2 * h) - g[k]));
        }
        const auto cov = covariance_analytic(m);
        const auto s = eigendecompose(cov);
        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
        worst_orth = std::max(worst_orth, (s.W.transpose() * s.W - I).cwiseAbs().maxCoeff());
        worst_res = std::max(worst_res, (cov.C * s.W - s.W * s.eigenvalues.asDiagonal()).norm() / cov.C.norm());
        worst_psd = std::max(worst_psd, -s.eigenvalues.minCoeff() / s.eigenvalues.maxCoeff());
    }
    // Ridge property on zero-noise oracles: the true function and the fitted
    // surrogate are both flat along directions orthogonal to the ridge span.
    for (int k : {1, 2}) {
        const Eigen::MatrixXd U = random_orthonormal(6, k, 800 + static_cast<std::uint64_t>(k));
        const auto oracle = k == 1 ? SyntheticOracle::ridge_1d(U.col(0)) : SyntheticOracle::ridge_2d(U);
        const auto a = analyze_qoi(evaluate_oracle(oracle, sample_uniform_doe(DomainSpec::unit(6), 60, 810), "f"), "f");
        const Eigen::MatrixXd W1 = a.subspace.W1();
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::VectorXd x(6), h(6);
            for (int j = 0; j < 6; ++j) {
                x[j] = 0.5 * u(rng);
                h[j] = 0.5 * u(rng);
            }
            const Eigen::VectorXd h_true = h - U * (U.transpose() * h);
            const Eigen::VectorXd h_fit = h - W1 * (W1.transpose() * h);
            worst_ridge = std::max(worst_ridge, std::abs(oracle.evaluate(x + h_true) - oracle.evaluate(x)));
            worst_ridge = std::max(worst_ridge, std::abs(a.model.evaluate(x + h_fit) - a.model.evaluate(x)));
        }
    }
    o.check(worst_fd <= 1e-6, "gradient vs finite differences " + sci(worst_fd));
    o.check(worst_orth <= 1e-10, "W^T W - I " + sci(worst_orth));
    o.check(worst_res <= 1e-10, "eigen-residual / |C| " + sci(worst_res));
    o.check(worst_psd <= 1e-10, "negative eigenvalue ratio " + sci(worst_psd));
    o.check(worst_ridge <= 1e-10, "ridge property " + sci(worst_ridge));
    o.note("fd=" + sci(worst_fd) + " orth=" + sci(worst_orth) + " res=" + sci(worst_res) + " ridge=" + sci(worst_ridge));
    return o;
}

struct IndexSource {
    std::size_t n;
    std::size_t size() const { return n; }
    SummaryPoint plot_point(const std::string&, std::size_t i) const { return {i, Eigen::VectorXd::Zero(1), 0.0}; }
    std::string geometry_key(std::size_t i) const { return default_geometry_key(i); }
};

Outcome linkage_properties() {
    Outcome o;
    constexpr int sequences = 10000;
    std::mt19937_64 rng(901);
    const std::vector<std::string> catalog{"D1", "D2"};
    const std::map<std::string, std::size_t> n_of{{"D1", 548}, {"D2", 31}};
    const auto sizes = [&](const std::string& id) -> std::optional<std::size_t> {
        auto it = n_of.find(id);
        return it == n_of.end() ? std::nullopt : std::optional<std::size_t>(it->second);
    };
    const std::array<std::string, 2> plots{"A", "B"};
    const std::array<Axis, 3> axes{Axis::X, Axis::Y, Axis::Z};
    std::size_t sync_fail = 0, selector_fail = 0, quarter_fail = 0, rigid_fail = 0, replay_fail = 0, quant_fail = 0;
    double worst_rigid = 0.0;
    for (int seq = 0; seq < sequences; ++seq) {
        auto s = start_session("D1", default_layout(), "t");
        const int len = 1 + static_cast<int>(rng() % 40);
        for (int step = 0; step < len; ++step) {
            const auto& plot = plots[rng() % 2];
            const auto t = "t" + std::to_string(step);
            try {
                switch (rng() % 8) {
                case 0: s = select_point(s, plot, rng() % 600, sizes, t); break;
                case 1: s = clear_selection(s, t); break;
                case 2:
                    s = activate_selector(s, plot, rng() % 2 ? SelectorKind::move : SelectorKind::rotate, axes[rng() % 3],
                                          rng() % 4 != 0, t);
                    break;
                case 3: s = rotate_plot(s, plot, axes[rng() % 3], rng() % 2 ? 1 : -1, t); break;
                case 4: {
                    // Four quarter turns about the active axis return the pose.
                    const auto& pose = s.plot_poses.at(plot);
                    if (!pose.rotation_selector_active) break;
                    auto r = s;
                    const int dir = rng() % 2 ? 1 : -1;
                    for (int k = 0; k < 4; ++k) r = rotate_plot(r, plot, *pose.rotation_selector_active, dir, t);
                    quarter_fail += !(r.plot_poses == s.plot_poses);
                    s = std::move(r);
                    break;
                }
                case 5: {
                    std::uniform_real_distribution<double> u(-8, 8);
                    const auto before = s.plot_poses;
                    s = move_plots(s, {"A", "B"}, {u(rng), u(rng), u(rng)}, t);
                    const double dist0 = (before.at("A").position - before.at("B").position).norm();
                    const double dist1 = (s.plot_poses.at("A").position - s.plot_poses.at("B").position).norm();
                    worst_rigid = std::max(worst_rigid, std::abs(dist0 - dist1));
                    rigid_fail += std::abs(dist0 - dist1) > 1e-12;
                    break;
                }
                case 6: s = rng() % 3 ? reset_session(s, t) : next_dataset(s, catalog, t); break;
                case 7: s = activate_selector(s, plot, SelectorKind::move, std::nullopt, true, t); break;
                }
            } catch (const Error&) {
            }
            selector_fail += s.active_rotation_selectors() > 1;
            for (const auto& [id, pose] : s.plot_poses) quant_fail += !pose.orientation.is_axis_aligned_rotation();
            if (s.selected_index) {
                const auto r = make_selection_result(s, IndexSource{*sizes(s.dataset_id)});
                sync_fail += !r.synchronized() || r.geometry_key != default_geometry_key(*s.selected_index) ||
                             *s.selected_index >= *sizes(s.dataset_id);
            }
        }
        std::stringstream log;
        for (const auto& e : s.history) log << event_log_line(e);
        replay_fail += !(replay(read_event_log(log), sizes) == s);
    }
    o.check(sync_fail == 0, std::to_string(sync_fail) + " selection synchrony failures");
    o.check(selector_fail == 0, std::to_string(selector_fail) + " states with >1 rotation selector");
    o.check(quarter_fail == 0, std::to_string(quarter_fail) + " quarter-turn cycles not identity");
    o.check(quant_fail == 0, std::to_string(quant_fail) + " orientations outside the rotation group");
    o.check(rigid_fail == 0, "pairwise distance drift " + sci(worst_rigid));
    o.check(replay_fail == 0, std::to_string(replay_fail) + " replay mismatches");
    o.note("sequences=" + std::to_string(sequences) + " max_distance_drift=" + sci(worst_rigid));
    return o;
}

/// Height field on a 1/8 grid: every coordinate is dyadic, so translated
/// positions are exact in float.
TriangleMesh dyadic_grid(int n) {
    std::vector<std::array<Vec3f, 3>> tris;
    auto p = [](int i, int j) { return Vec3f{i / 8.0f, j / 8.0f, static_cast<float>((i * j) % 7) / 8.0f}; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            tris.push_back({p(i, j), p(i + 1, j), p(i + 1, j + 1)});
            tris.push_back({p(i, j), p(i + 1, j + 1), p(i, j + 1)});
        }
    return mesh_from_triangles(tris);
}

Outcome stl_round_trip() {
    Outcome o;
    const std::string one_facet =
        "solid one\n facet normal 0 0 1\n  outer loop\n   vertex 0 0 0\n   vertex 1 0 0\n   vertex 0 1 0\n"
        "  endloop\n endfacet\nendsolid one\n";
    BladeShape fine;
    fine.chord_points = 100;
    fine.span_sections = 60;
    const std::vector<std::pair<std::string, std::string>> corpus{
        {"one-facet-ascii", one_facet},
        {"blade-ascii", serialize_stl(make_blade(Eigen::VectorXd()), StlFormat::ascii)},
        {"blade-binary", serialize_stl(make_blade(Eigen::VectorXd(), fine))},
        {"grid-binary", serialize_stl(dyadic_grid(80))},
    };
    std::size_t largest = 0;
    for (const auto& [name, bytes] : corpus) {
        const auto m1 = parse_stl(std::string_view(bytes));
        largest = std::max(largest, m1.facets.size());
        for (auto fmt : {StlFormat::binary, StlFormat::ascii}) {
            const auto s1 = serialize_stl(m1, fmt);
            const auto m2 = parse_stl(std::string_view(s1));
            const auto s2 = serialize_stl(m2, fmt);
            o.check(m2.same_topology_and_positions(m1) && m2.facet_normals == m1.facet_normals,
                    name + " mesh changed through " + (fmt == StlFormat::binary ? "binary" : "ascii"));
            o.check(s1 == s2, name + " bytes differ on re-serialization");
        }
        const auto self = diff_meshes(m1, m1);
        o.check(self.max_displacement == 0.0 && self.mean_displacement == 0.0, name + " self-diff nonzero");
    }
    o.check(largest >= 10000, "largest mesh has only " + std::to_string(largest) + " facets");

    const auto grid = dyadic_grid(80);
    for (const Eigen::Vector3d t : {Eigen::Vector3d(0.75, 1.0, 0.0), Eigen::Vector3d(2.0, -3.0, 6.0)}) {
        auto moved = grid;
        for (auto& v : moved.vertices)
            for (int k = 0; k < 3; ++k) v[static_cast<std::size_t>(k)] += static_cast<float>(t[k]);
        const auto d = diff_meshes(grid, moved);
        o.check(d.max_displacement == t.norm() && d.mean_displacement == t.norm(),
                "translation |t|=" + sci(t.norm()) + " gave max " + sci(d.max_displacement));
    }
    o.note("corpus=" + std::to_string(corpus.size()) + " largest_facets=" + std::to_string(largest));
    return o;
}

Outcome service_contract() {
    Outcome o;
    const auto root = fs::temp_directory_path() / ("ridgeview_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    write_demo_dataset(root / "demo");
    ServiceConfig cfg;
    cfg.data_root = root;
    auto svc = Service::from_data_root(cfg);
    const auto& bundle = svc.bundle("demo");
    o.check(bundle.table.size() == 548 && bundle.plots.at("pressure_ratio").points.size() == 548, "bundle not index-aligned");
    o.check(bundle.subspaces.at("pressure_ratio").m == 1 && bundle.subspaces.at("efficiency").m == 2,
            "demo qois not recovered as 1D and 2D ridges");

    HttpServer server(svc);
    const int port = server.start("127.0.0.1", 0);
    httplib::Client http("127.0.0.1", port);
    std::mt19937_64 rng(1001);
    std::size_t selections = 0;
    for (int k = 0; k < 40; ++k) {
        const std::size_t i = rng() % 548;
        const std::string plot = k % 2 ? "A" : "B";
        const auto res = http.Post("/session/acc", json{{"op", "select_point"}, {"args", {{"plot", plot}, {"index", i}}}}.dump(),
                                   "application/json");
        if (!res || res->status != 200) {
            o.check(false, "select_point request failed");
            break;
        }
        const auto j = json::parse(res->body);
        const auto& sel = j["selection"];
        o.check(j["state"]["selected_index"] == i && sel["plot_points"]["A"]["i"] == i && sel["plot_points"]["B"]["i"] == i &&
                    sel["geometry_key"] == bundle.geometry.key(i),
                "linked selection mismatch at index " + std::to_string(i));
        if (k % 10 == 0) {
            const auto stl = http.Get("/datasets/demo/geometry/" + std::to_string(i));
            o.check(stl && stl->status == 200 &&
                        parse_stl(std::string_view(stl->body)).same_topology_and_positions(*bundle.geometry.design(i)),
                    "geometry body for " + std::to_string(i) + " differs from the catalog");
        }
        ++selections;
    }

    for (const char* p : {"A", "B"})
        http.Post("/session/acc", json{{"op", "activate_selector"}, {"args", {{"plot", p}, {"selector", "move"}}}}.dump(),
                  "application/json");
    const auto before = *svc.session_state("acc");
    const Eigen::Vector3d target(1.5, -0.25, -4.0);
    const auto res = http.Post("/session/acc", R"({"op":"move_plots","args":{"plots":["A","B"],"target":[1.5,-0.25,-4.0]}})",
                               "application/json");
    o.check(res && res->status == 200, "move_plots request failed");
    if (res && res->status == 200) {
        const auto poses = json::parse(res->body)["state"]["plot_poses"];
        const Eigen::Vector3d a = before.plot_poses.at("A").position, b = before.plot_poses.at("B").position;
        const Eigen::Vector3d bary = (a + b) / 2.0;
        double worst = 0.0;
        for (int k = 0; k < 3; ++k) {
            worst = std::max(worst, std::abs(poses["A"]["position"][k].get<double>() - (a[k] + target[k] - bary[k])));
            worst = std::max(worst, std::abs(poses["B"]["position"][k].get<double>() - (b[k] + target[k] - bary[k])));
        }
        o.check(worst <= 1e-12, "move_plots off the barycentre translation by " + sci(worst));
    }
    const auto conflict = http.Post("/session/acc", R"({"op":"rotate_plot","args":{"plot":"A","axis":"X"}})", "application/json");
    o.check(conflict && conflict->status == 409, "rotate without selector did not return 409");
    server.stop();
    fs::remove_all(root);
    o.note("selections=" + std::to_string(selections) + " over HTTP");
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"ridge-1d-recovery", ridge_1d_recovery},
        {"ridge-2d-recovery", ridge_2d_recovery},
        {"full-scale-noisy-recovery", full_scale_noisy_recovery},
        {"covariance-mc-vs-closed-form", covariance_mc_vs_closed_form},
        {"quadratic-exactness", quadratic_exactness},
        {"numerical-invariants", numerical_invariants},
        {"linkage-properties", linkage_properties},
        {"stl-round-trip", stl_round_trip},
        {"service-contract", service_contract},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += !o.pass;
        std::printf("%s %-30s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
