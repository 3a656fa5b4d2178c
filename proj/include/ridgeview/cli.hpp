#pragma once

// Batch driver behind the `ridgeview` executable. Output is one key=value
// per line. Exit codes: 0 ok, 1 usage, 2 data, 3 numerical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ridgeview/blade.hpp"
#include "ridgeview/dataset.hpp"
#include "ridgeview/error.hpp"
#include "ridgeview/http_server.hpp"
#include "ridgeview/linkage.hpp"
#include "ridgeview/service.hpp"
#include "ridgeview/surrogate.hpp"
#include "ridgeview/verify.hpp"

namespace ridgeview {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_numerical = 3 };

inline int exit_code_for(ErrorKind k) {
    switch (k) {
    case ErrorKind::usage: return exit_usage;
    case ErrorKind::numerical: return exit_numerical;
    default: return exit_data;
    }
}

namespace cli_detail {

inline std::string real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6e", v);
    return buf;
}

struct Inputs {
    std::filesystem::path designs, domain;
    std::optional<std::filesystem::path> geometry;
};

/// `--input` may name a dataset directory or a CSV file.
inline Inputs resolve_inputs(const std::string& input, const std::string& domain, const std::string& geometry) {
    namespace fs = std::filesystem;
    if (input.empty()) fail(ErrorKind::usage, "--input is required");
    Inputs in;
    if (fs::is_directory(input)) {
        in.designs = fs::path(input) / "designs.csv";
        in.domain = domain.empty() ? fs::path(input) / "domain.json" : fs::path(domain);
        if (geometry.empty() && fs::exists(fs::path(input) / "geometry.json")) in.geometry = fs::path(input) / "geometry.json";
    } else {
        in.designs = input;
        if (domain.empty()) fail(ErrorKind::usage, "--domain is required when --input is a CSV file");
        in.domain = domain;
    }
    if (!geometry.empty()) in.geometry = geometry;
    if (!fs::exists(in.designs)) fail(ErrorKind::data, "design table not found: " + in.designs.string());
    if (!fs::exists(in.domain)) fail(ErrorKind::data, "domain file not found: " + in.domain.string());
    return in;
}

inline DesignTable load_inputs(const Inputs& in) { return load_design_table(in.designs, load_domain_json(in.domain)); }

inline std::vector<std::string> pick_qois(const DesignTable& t, const std::vector<std::string>& requested) {
    if (requested.empty()) return t.qoi_names;
    for (const auto& q : requested)
        if (!t.has_qoi(q)) fail(ErrorKind::data, "qoi '" + q + "' is not a column of the design table");
    return requested;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::data, "cannot write " + path.string());
    out << dump_json(j) << '\n';
}

inline void print_subspace(std::ostream& out, const std::string& q, const ActiveSubspace& s) {
    out << q << ".m=" << s.m << '\n' << q << ".degenerate=" << (s.degenerate ? 1 : 0) << '\n';
    for (Eigen::Index k = 0; k < std::min<Eigen::Index>(s.eigenvalues.size(), 4); ++k)
        out << q << ".eigenvalue_" << k + 1 << '=' << real(s.eigenvalues[k]) << '\n';
}

} // namespace cli_detail

/// Runs one invocation; `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    using namespace cli_detail;
    CLI::App app{"Active-subspace dimension reduction and linked exploration of design datasets", "ridgeview"};
    app.require_subcommand(1);

    std::string input, domain, geometry, out_dir, subspace_dir, listen = "127.0.0.1:8080", data_root, session_dir;
    std::vector<std::string> qois;
    std::uint64_t seed = 42;
    Eigen::Index max_m = 2;
    int degree = 2;
    double ridge = 0.0;
    bool cors = false, dry_run = false;

    auto add_data_flags = [&](CLI::App* sub) {
        sub->add_option("--input", input, "dataset directory or design CSV");
        sub->add_option("--domain", domain, "domain JSON (defaults to <input>/domain.json)");
    };
    auto add_fit_flags = [&](CLI::App* sub) {
        sub->add_option("--qoi", qois, "quantity of interest (repeatable; default all)");
        sub->add_option("--max-m", max_m, "largest subspace dimension")->check(CLI::Range(1, 2));
        sub->add_option("--degree", degree, "ridge profile degree")->check(CLI::Range(0, 8));
        sub->add_option("--ridge", ridge, "Tikhonov weight for the quadratic fit")->check(CLI::NonNegativeNumber);
    };

    auto* ingest = app.add_subcommand("ingest", "validate a dataset and report geometry statistics");
    add_data_flags(ingest);
    ingest->add_option("--geometry", geometry, "geometry manifest");

    auto* fit = app.add_subcommand("fit", "run the pipeline; write subspace-<qoi>.json and plot-<qoi>.json");
    add_data_flags(fit);
    add_fit_flags(fit);
    fit->add_option("--out-dir", out_dir, "output directory")->required();

    auto* exportp = app.add_subcommand("export-plots", "project designs onto saved subspaces; write plot and profile JSON");
    add_data_flags(exportp);
    exportp->add_option("--qoi", qois, "quantity of interest (repeatable; default all)");
    exportp->add_option("--degree", degree, "ridge profile degree")->check(CLI::Range(0, 8));
    exportp->add_option("--subspace-dir", subspace_dir, "directory holding subspace-<qoi>.json (default --out-dir)");
    exportp->add_option("--out-dir", out_dir, "output directory")->required();

    auto* verify = app.add_subcommand("verify-synthetic", "planted-ridge recovery check at d = 25, N = 548");
    verify->add_option("--seed", seed, "random seed");
    verify->add_option("--out-dir", out_dir, "also write a demo dataset directory here");
    verify->add_option("--max-m", max_m, "largest subspace dimension")->check(CLI::Range(1, 2));

    auto* replay_cmd = app.add_subcommand("replay", "re-apply a JSON-lines session log and print the final state");
    replay_cmd->add_option("--input", input, "session log")->required();
    replay_cmd->add_option("--data-root", data_root, "validate indices against these datasets")->envname(data_root_env);

    auto* serve = app.add_subcommand("serve", "start the HTTP service");
    serve->add_option("--listen", listen, "host:port");
    serve->add_option("--data-root", data_root, "directory of datasets")->envname(data_root_env);
    serve->add_option("--session-dir", session_dir, "persist session logs here");
    serve->add_option("--max-m", max_m, "largest subspace dimension")->check(CLI::Range(1, 2));
    serve->add_option("--degree", degree, "ridge profile degree")->check(CLI::Range(0, 8));
    serve->add_flag("--cors", cors, "allow cross-origin requests");
    serve->add_flag("--dry-run", dry_run, "load datasets, report and exit");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }

    PipelineOptions pipeline;
    pipeline.max_m = max_m;
    pipeline.degree = degree;
    pipeline.fit.ridge_regularization = ridge;

    try {
        if (ingest->parsed()) {
            const auto in = resolve_inputs(input, domain, geometry);
            const auto table = load_inputs(in);
            out << "n=" << table.size() << "\nd=" << table.dim() << "\nqois=";
            for (std::size_t i = 0; i < table.qoi_names.size(); ++i) out << (i ? "," : "") << table.qoi_names[i];
            out << '\n';
            if (in.geometry) {
                const auto catalog = GeometryCatalog::from_manifest(*in.geometry, table);
                const auto reports = catalog_stats(catalog);
                std::size_t failed = 0, facets = 0;
                for (const auto& r : reports) {
                    if (r.stats) facets += r.stats->facet_count;
                    if (!r.error.empty()) {
                        ++failed;
                        out << "geometry.error." << r.index << '=' << catalog.path(r.index).string() << ": " << r.error << '\n';
                    }
                }
                const auto nominal = mesh_stats(catalog.nominal());
                out << "geometry.entries=" << reports.size() << "\ngeometry.failed=" << failed
                    << "\ngeometry.nominal_facets=" << nominal.facet_count << "\ngeometry.total_facets=" << facets << '\n';
                if (failed) return exit_data;
            }
            return exit_ok;
        }

        if (fit->parsed()) {
            const auto table = load_inputs(resolve_inputs(input, domain, ""));
            std::filesystem::create_directories(out_dir);
            for (const auto& q : pick_qois(table, qois)) {
                const auto a = analyze_qoi(table, q, pipeline);
                write_json_file(std::filesystem::path(out_dir) / ("subspace-" + q + ".json"), subspace_to_json(q, a.subspace));
                write_json_file(std::filesystem::path(out_dir) / ("plot-" + q + ".json"), plot_to_json(a.plot));
                print_subspace(out, q, a.subspace);
                const Eigen::VectorXd f = table.qoi_column(q);
                double sq = 0.0;
                for (std::size_t i = 0; i < table.size(); ++i) {
                    const double e = a.model.evaluate(table.samples[i].x) - f[static_cast<Eigen::Index>(i)];
                    sq += e * e;
                }
                out << q << ".surrogate_rmse=" << real(std::sqrt(sq / static_cast<double>(table.size()))) << '\n';
                out << q << ".profile_rmse=" << real(a.profile.training_rmse) << '\n';
            }
            return exit_ok;
        }

        if (exportp->parsed()) {
            const auto table = load_inputs(resolve_inputs(input, domain, ""));
            const std::filesystem::path src = subspace_dir.empty() ? out_dir : subspace_dir;
            std::filesystem::create_directories(out_dir);
            for (const auto& q : pick_qois(table, qois)) {
                const auto path = src / ("subspace-" + q + ".json");
                std::ifstream in(path);
                if (!in) fail(ErrorKind::data, "subspace file not found: " + path.string());
                json j;
                try {
                    in >> j;
                } catch (const json::exception& e) {
                    fail(ErrorKind::data, path.string() + ": " + e.what());
                }
                ActiveSubspace s;
                try {
                    s = subspace_from_json(j);
                } catch (const Error& e) {
                    fail(ErrorKind::data, path.string() + ": " + e.what());
                }
                if (s.dim() != static_cast<Eigen::Index>(table.dim()))
                    fail(ErrorKind::data, path.string() + ": subspace dimension does not match the design table");
                const auto plot = build_summary_plot(table, s, q);
                const auto profile = fit_ridge_profile(plot, degree);
                write_json_file(std::filesystem::path(out_dir) / ("plot-" + q + ".json"), plot_to_json(plot));
                write_json_file(std::filesystem::path(out_dir) / ("profile-" + q + ".json"), profile_to_json(profile));
                out << q << ".m=" << s.m << '\n' << q << ".points=" << plot.points.size() << '\n'
                    << q << ".profile_rmse=" << real(profile.training_rmse) << '\n';
            }
            return exit_ok;
        }

        if (verify->parsed()) {
            bool ok = true;
            for (const auto& c : default_recovery_cases()) {
                const auto r = run_recovery_case(c, seed, {}, pipeline);
                out << c.name << ".m=" << r.found_m << '\n'
                    << c.name << ".angle=" << real(r.angle) << '\n'
                    << c.name << ".gap_ratio=" << real(r.gap_ratio) << '\n'
                    << c.name << ".heldout_rmse=" << real(r.heldout_rmse) << '\n'
                    << c.name << ".pass=" << (r.passed() ? 1 : 0) << '\n';
                ok = ok && r.passed();
            }
            if (!out_dir.empty()) {
                DemoOptions opt;
                opt.seed = seed;
                write_demo_dataset(std::filesystem::path(out_dir), opt);
                out << "dataset=" << out_dir << '\n';
            }
            out << "result=" << (ok ? "pass" : "fail") << '\n';
            if (!ok) err << "error: synthetic recovery outside tolerance\n";
            return ok ? exit_ok : exit_numerical;
        }

        if (replay_cmd->parsed()) {
            std::ifstream in(input);
            if (!in) fail(ErrorKind::data, "session log not found: " + input);
            const auto events = read_event_log(in);
            std::map<std::string, std::size_t> sizes;
            if (!data_root.empty())
                for (const auto& dir : discover_datasets(data_root))
                    sizes[dir.filename().string()] =
                        load_design_table(dir / "designs.csv", load_domain_json(dir / "domain.json")).size();
            const auto lookup = [&](const std::string& id) -> std::optional<std::size_t> {
                if (data_root.empty()) return std::numeric_limits<std::size_t>::max();
                auto it = sizes.find(id);
                return it == sizes.end() ? std::nullopt : std::optional<std::size_t>(it->second);
            };
            SessionState s;
            for (std::size_t k = 0; k < events.size(); ++k) {
                try {
                    s = apply_event(std::move(s), events[k], lookup);
                } catch (const Error& e) {
                    fail(ErrorKind::data, input + ": event " + std::to_string(k + 1) + " (" + events[k].op + "): " + e.what());
                }
            }
            out << "events=" << events.size() << "\ndataset_id=" << s.dataset_id << "\nselected_index="
                << (s.selected_index ? std::to_string(*s.selected_index) : "none") << "\nstate="
                << dump_json(session_to_json(s)) << '\n';
            return exit_ok;
        }

        if (serve->parsed()) {
            if (data_root.empty()) fail(ErrorKind::usage, std::string("--data-root or ") + data_root_env + " is required");
            ServiceConfig cfg;
            cfg.listen_address = listen;
            cfg.data_root = data_root;
            cfg.cors_allowed = cors;
            cfg.pipeline = pipeline;
            if (!session_dir.empty()) cfg.session_dir = session_dir;
            const auto [host, port] = parse_listen_address(listen);
            auto service = Service::from_data_root(cfg);
            for (const auto& id : service.dataset_ids()) out << "dataset=" << id << '\n';
            if (dry_run) return exit_ok;
            HttpServer server(service);
            out << "listening=" << host << ':' << port << std::endl;
            server.listen(host, port);
            return exit_ok;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_data;
    }
    return exit_usage;
}

} // namespace ridgeview
