#pragma once

// Transport-independent request handling for datasets, subspaces, plots,
// geometry and sessions. http_server.hpp binds this to HTTP.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "ridgeview/dataset.hpp"
#include "ridgeview/error.hpp"
#include "ridgeview/geometry.hpp"
#include "ridgeview/json_format.hpp"
#include "ridgeview/linkage.hpp"
#include "ridgeview/surrogate.hpp"

namespace ridgeview {

inline constexpr const char* data_root_env = "AEROVR_DATA_ROOT";

struct ServiceConfig {
    std::string listen_address = "127.0.0.1:8080";
    std::filesystem::path data_root;
    Layout initial_layout = default_layout();
    bool cors_allowed = false;
    std::optional<std::filesystem::path> session_dir; // JSON-lines logs, one file per session
    PipelineOptions pipeline;
};

/// Splits "host:port"; a bare port binds to 127.0.0.1.
inline std::pair<std::string, int> parse_listen_address(const std::string& addr) {
    const auto colon = addr.rfind(':');
    const std::string host = colon == std::string::npos ? "127.0.0.1" : addr.substr(0, colon);
    const std::string port_text = colon == std::string::npos ? addr : addr.substr(colon + 1);
    int port = -1;
    const auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port < 0 || port > 65535 || host.empty())
        fail(ErrorKind::usage, "invalid listen address '" + addr + "' (expected host:port)");
    return {host, port};
}

// ---------------------------------------------------------------------------
// Bundles
// ---------------------------------------------------------------------------

struct DatasetBundle {
    std::string id;
    DesignTable table;
    std::vector<std::string> qois;
    std::map<std::string, ActiveSubspace> subspaces;
    std::map<std::string, SummaryPlot> plots;
    std::map<std::string, RidgeProfile> profiles;
    std::map<std::string, std::string> plot_qoi; // plot id ("A", "B") -> qoi
    GeometryCatalog geometry;

    const std::string& qoi_of_plot(const std::string& plot_id) const {
        auto it = plot_qoi.find(plot_id);
        if (it == plot_qoi.end()) fail(ErrorKind::not_found, "unknown plot '" + plot_id + "'");
        return it->second;
    }
};

/// Runs the per-qoi pipeline. Plot A shows the first qoi, plot B the second
/// (or the first again when only one is given).
inline DatasetBundle compute_bundle(std::string id, DesignTable table, const std::vector<std::string>& qoi_names,
                                    GeometryCatalog geometry, const PipelineOptions& options = {}) {
    if (qoi_names.empty()) fail(ErrorKind::usage, "dataset '" + id + "': no qoi to analyze");
    for (const auto& q : qoi_names)
        if (!table.has_qoi(q)) fail(ErrorKind::not_found, "dataset '" + id + "': unknown qoi '" + q + "'");
    geometry.check_alignment(table.size());

    DatasetBundle b{.id = std::move(id), .table = std::move(table), .qois = qoi_names, .geometry = std::move(geometry)};
    for (const auto& q : qoi_names) {
        auto a = analyze_qoi(b.table, q, options);
        b.subspaces.emplace(q, std::move(a.subspace));
        b.plots.emplace(q, std::move(a.plot));
        b.profiles.emplace(q, std::move(a.profile));
    }
    b.plot_qoi["A"] = qoi_names[0];
    b.plot_qoi["B"] = qoi_names.size() > 1 ? qoi_names[1] : qoi_names[0];
    return b;
}

/// Everything derived from the table, in a stable byte form.
inline json bundle_to_json(const DatasetBundle& b) {
    json subspaces = json::object(), plots = json::object(), profiles = json::object();
    for (const auto& q : b.qois) {
        subspaces[q] = subspace_to_json(q, b.subspaces.at(q));
        plots[q] = plot_to_json(b.plots.at(q));
        profiles[q] = profile_to_json(b.profiles.at(q));
    }
    return json{{"id", b.id},         {"n", b.table.size()},  {"d", b.table.dim()},
                {"qois", b.qois},     {"plot_qoi", b.plot_qoi}, {"subspaces", std::move(subspaces)},
                {"plots", std::move(plots)}, {"profiles", std::move(profiles)}};
}

/// Loads `dir/{domain.json,designs.csv,geometry.json}` and analyzes every
/// qoi column (or only `qois` when given).
inline DatasetBundle load_dataset_dir(const std::filesystem::path& dir, const PipelineOptions& options = {},
                                      std::vector<std::string> qois = {}) {
    const auto domain = load_domain_json(dir / "domain.json");
    auto table = load_design_table(dir / "designs.csv", domain);
    auto catalog = GeometryCatalog::from_manifest(dir / "geometry.json", table);
    if (qois.empty()) qois = table.qoi_names;
    return compute_bundle(dir.filename().string(), std::move(table), qois, std::move(catalog), options);
}

inline bool is_dataset_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    return fs::is_directory(dir) && fs::exists(dir / "domain.json") && fs::exists(dir / "designs.csv") &&
           fs::exists(dir / "geometry.json");
}

/// Dataset directories under `root`, sorted by name. `root` itself counts
/// when it is a dataset directory.
inline std::vector<std::filesystem::path> discover_datasets(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) fail(ErrorKind::data, "data root " + root.string() + " is not a directory");
    std::vector<fs::path> out;
    if (is_dataset_dir(root)) out.push_back(root);
    for (const auto& entry : fs::directory_iterator(root))
        if (is_dataset_dir(entry.path())) out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    if (out.empty())
        fail(ErrorKind::data, "data root " + root.string() +
                                  " contains no dataset (expected domain.json, designs.csv and geometry.json)");
    return out;
}

/// Adapts a bundle to the linkage source concept.
class BundleSource {
public:
    explicit BundleSource(const DatasetBundle& b) : b_(b) {}
    std::size_t size() const { return b_.table.size(); }
    SummaryPoint plot_point(const std::string& plot_id, std::size_t i) const {
        const auto& plot = b_.plots.at(b_.qoi_of_plot(plot_id));
        return plot.points.at(i);
    }
    std::string geometry_key(std::size_t i) const { return b_.geometry.key(i); }
    GeometryDiff geometry_diff(std::size_t i) const { return diff_meshes(b_.geometry.nominal(), *b_.geometry.design(i)); }

private:
    const DatasetBundle& b_;
};

// ---------------------------------------------------------------------------
// Request handling
// ---------------------------------------------------------------------------

struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::string etag;
};

inline int http_status(ErrorKind k) {
    switch (k) {
    case ErrorKind::usage: return 400;
    case ErrorKind::data: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::precondition: return 409;
    case ErrorKind::numerical: return 500;
    }
    return 500;
}

inline Response error_response(int status, const std::string& message) {
    return {status, "application/json", dump_json(json{{"error", message}}), {}};
}

inline std::string content_etag(std::string_view body) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "\"%016llx\"", static_cast<unsigned long long>(fnv1a64(body)));
    return buf;
}

class Service {
public:
    Service(std::vector<DatasetBundle> bundles, ServiceConfig config) : config_(std::move(config)) {
        if (bundles.empty()) fail(ErrorKind::data, "service needs at least one dataset");
        for (auto& b : bundles) {
            const std::string id = b.id;
            if (bundles_.count(id)) fail(ErrorKind::data, "duplicate dataset id '" + id + "'");
            ids_.push_back(id);
            bundles_.emplace(id, std::make_unique<DatasetBundle>(std::move(b)));
        }
        if (config_.session_dir) std::filesystem::create_directories(*config_.session_dir);
    }

    static Service from_data_root(ServiceConfig config) {
        std::vector<DatasetBundle> bundles;
        for (const auto& dir : discover_datasets(config.data_root))
            bundles.push_back(load_dataset_dir(dir, config.pipeline));
        return Service(std::move(bundles), std::move(config));
    }

    const ServiceConfig& config() const { return config_; }
    const std::vector<std::string>& dataset_ids() const { return ids_; }

    const DatasetBundle& bundle(const std::string& id) const {
        auto it = bundles_.find(id);
        if (it == bundles_.end()) fail(ErrorKind::not_found, "unknown dataset '" + id + "'");
        return *it->second;
    }

    std::optional<std::size_t> dataset_size(const std::string& id) const {
        auto it = bundles_.find(id);
        if (it == bundles_.end()) return std::nullopt;
        return it->second->table.size();
    }

    /// GET. Bundle resources carry an ETag; a matching `if_none_match` gives 304.
    Response handle_get(std::string_view target, std::string_view if_none_match = {}) const {
        try {
            Response r = route_get(strip_query(target));
            if (r.status == 200 && r.etag.empty() && !is_session_path(target)) r.etag = content_etag(r.body);
            if (!r.etag.empty() && !if_none_match.empty() && if_none_match == r.etag)
                return {304, r.content_type, {}, r.etag};
            return r;
        } catch (const Error& e) {
            return error_response(http_status(e.kind()), e.what());
        }
    }

    /// POST /session/{sid}. Unknown sessions are created on the first
    /// dataset with the configured layout before the event is applied.
    Response handle_session_event(const std::string& sid, std::string_view body) {
        if (!valid_sid(sid)) return error_response(400, "invalid session id '" + sid + "'");
        SessionEvent ev;
        try {
            ev = event_from_json(json::parse(body));
        } catch (const json::exception& e) {
            return error_response(400, std::string("malformed event: ") + e.what());
        } catch (const Error& e) {
            return error_response(400, e.what());
        }
        if (ev.t.empty()) ev.t = utc_timestamp();

        Session& session = session_for(sid);
        std::lock_guard lock(session.mutex);
        try {
            const auto sizes = [this](const std::string& id) { return dataset_size(id); };
            if (!session.state) {
                auto fresh = start_session(ids_.front(), config_.initial_layout, ev.t);
                persist(sid, fresh.history, 0);
                session.state = std::move(fresh);
            }
            const std::size_t before = session.state->history.size();
            if (ev.op == "start_session" && !ev.args.contains("layout"))
                ev.args["layout"] = layout_to_json(config_.initial_layout);
            SessionState next = apply_event(*session.state, ev, sizes, ids_);
            if (ev.op == "start_session" && !dataset_size(next.dataset_id))
                fail(ErrorKind::not_found, "unknown dataset '" + next.dataset_id + "'");

            json out{{"session", sid}, {"state", session_to_json(next)}};
            if (ev.op == "select_point") {
                const BundleSource source(bundle(next.dataset_id));
                out["selection"] = selection_to_json(make_selection_result(next, source));
            }
            persist(sid, next.history, before);
            session.state = std::move(next);
            return {200, "application/json", dump_json(out), {}};
        } catch (const Error& e) {
            return error_response(http_status(e.kind()), e.what());
        }
    }

    std::optional<SessionState> session_state(const std::string& sid) const {
        std::shared_ptr<Session> s;
        {
            std::lock_guard lock(sessions_mutex_);
            auto it = sessions_.find(sid);
            if (it == sessions_.end()) return std::nullopt;
            s = it->second;
        }
        std::lock_guard lock(s->mutex);
        return s->state;
    }

private:
    struct Session {
        std::mutex mutex;
        std::optional<SessionState> state;
    };

    static std::string_view strip_query(std::string_view target) {
        const auto q = target.find('?');
        return q == std::string_view::npos ? target : target.substr(0, q);
    }

    static bool is_session_path(std::string_view target) { return target.rfind("/session/", 0) == 0; }

    static bool valid_sid(const std::string& sid) {
        static const std::regex re("[A-Za-z0-9_-]{1,64}");
        return std::regex_match(sid, re);
    }

    static std::vector<std::string> split_path(std::string_view path) {
        std::vector<std::string> parts;
        std::size_t pos = 0;
        while (pos < path.size()) {
            const auto next = path.find('/', pos);
            const auto end = next == std::string_view::npos ? path.size() : next;
            if (end > pos) parts.emplace_back(path.substr(pos, end - pos));
            pos = end + 1;
        }
        return parts;
    }

    static std::size_t parse_index(const std::string& text, std::size_t n) {
        std::size_t idx = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), idx);
        if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
            fail(ErrorKind::usage, "malformed design index '" + text + "'");
        if (idx >= n)
            fail(ErrorKind::not_found, "design index " + text + " out of range (N = " + std::to_string(n) + ")");
        return idx;
    }

    static Response json_ok(const json& j) { return {200, "application/json", dump_json(j), {}}; }
    static Response stl_ok(const TriangleMesh& m) {
        return {200, "application/octet-stream", serialize_stl(m, StlFormat::binary), {}};
    }

    Response route_get(std::string_view path) const {
        const auto p = split_path(path);
        if (p.size() == 1 && p[0] == "datasets") {
            json list = json::array();
            for (const auto& id : ids_) {
                const auto& b = bundle(id);
                json subspace_dims = json::object();
                for (const auto& q : b.qois) subspace_dims[q] = b.subspaces.at(q).m;
                list.push_back(json{{"id", id},
                                    {"n", b.table.size()},
                                    {"d", b.table.dim()},
                                    {"qois", b.qois},
                                    {"m", std::move(subspace_dims)},
                                    {"plot_qoi", b.plot_qoi},
                                    {"parameter_names", b.table.parameter_names},
                                    {"has_context", b.geometry.context() != nullptr}});
            }
            return json_ok(json{{"datasets", std::move(list)},
                                {"initial_layout", layout_to_json(config_.initial_layout)}});
        }
        if (p.size() == 2 && p[0] == "session") {
            const auto s = session_state(p[1]);
            if (!s) fail(ErrorKind::not_found, "unknown session '" + p[1] + "'");
            return json_ok(session_to_json(*s));
        }
        if (p.size() >= 3 && p[0] == "datasets") {
            const auto& b = bundle(p[1]);
            const auto& what = p[2];
            auto qoi = [&]() -> const std::string& {
                if (p.size() != 4) fail(ErrorKind::not_found, "no route for " + std::string(path));
                if (!b.subspaces.count(p[3])) fail(ErrorKind::not_found, "unknown qoi '" + p[3] + "' in dataset '" + b.id + "'");
                return p[3];
            };
            if (what == "plots") return json_ok(plot_to_json(b.plots.at(qoi())));
            if (what == "subspace") {
                const auto& q = qoi();
                return json_ok(subspace_to_json(q, b.subspaces.at(q)));
            }
            if (what == "profile") return json_ok(profile_to_json(b.profiles.at(qoi())));
            if (what == "geometry" && p.size() == 4) {
                if (p[3] == "nominal") return stl_ok(b.geometry.nominal());
                if (p[3] == "context") {
                    if (!b.geometry.context()) fail(ErrorKind::not_found, "dataset '" + b.id + "' has no context mesh");
                    return stl_ok(*b.geometry.context());
                }
                return stl_ok(*b.geometry.design(parse_index(p[3], b.geometry.size())));
            }
            if (what == "diff" && p.size() == 4) {
                const auto i = parse_index(p[3], b.geometry.size());
                return json_ok(diff_to_json(diff_meshes(b.geometry.nominal(), *b.geometry.design(i)), true));
            }
        }
        fail(ErrorKind::not_found, "no route for " + std::string(path));
    }

    Session& session_for(const std::string& sid) {
        std::lock_guard lock(sessions_mutex_);
        auto& slot = sessions_[sid];
        if (!slot) slot = std::make_shared<Session>();
        return *slot;
    }

    void persist(const std::string& sid, const std::vector<SessionEvent>& history, std::size_t from) const {
        if (!config_.session_dir) return;
        std::ofstream out(*config_.session_dir / (sid + ".jsonl"), std::ios::app);
        if (!out) fail(ErrorKind::data, "cannot write session log for '" + sid + "'");
        for (std::size_t i = from; i < history.size(); ++i) out << event_log_line(history[i]);
    }

    ServiceConfig config_;
    std::vector<std::string> ids_;
    std::map<std::string, std::unique_ptr<DatasetBundle>> bundles_;
    mutable std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

} // namespace ridgeview
