#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ridgeview/error.hpp"
#include "ridgeview/geometry.hpp"
#include "ridgeview/json_format.hpp"
#include "ridgeview/surrogate.hpp"

namespace ridgeview {

// ---------------------------------------------------------------------------
// Axis-aligned orientations
// ---------------------------------------------------------------------------

enum class Axis { X, Y, Z };

inline const char* axis_name(Axis a) { return a == Axis::X ? "X" : a == Axis::Y ? "Y" : "Z"; }

inline Axis parse_axis(const std::string& s) {
    if (s == "X" || s == "x") return Axis::X;
    if (s == "Y" || s == "y") return Axis::Y;
    if (s == "Z" || s == "z") return Axis::Z;
    fail(ErrorKind::usage, "unknown axis '" + s + "' (expected X, Y or Z)");
}

/// One of the 24 proper rotations that map coordinate axes onto coordinate
/// axes, held as an integer matrix so composition is exact.
class Orientation {
public:
    using Matrix = std::array<std::array<int, 3>, 3>;

    Orientation() : m_{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}} {}

    /// Right-handed quarter turn about a world axis; +1 about X maps +Y to +Z.
    static Orientation quarter_turn(Axis axis, int direction) {
        if (direction != 1 && direction != -1) fail(ErrorKind::usage, "rotation direction must be +1 or -1");
        const int s = direction;
        Orientation o;
        switch (axis) {
        case Axis::X: o.m_ = {{{1, 0, 0}, {0, 0, -s}, {0, s, 0}}}; break;
        case Axis::Y: o.m_ = {{{0, 0, s}, {0, 1, 0}, {-s, 0, 0}}}; break;
        case Axis::Z: o.m_ = {{{0, -s, 0}, {s, 0, 0}, {0, 0, 1}}}; break;
        }
        return o;
    }

    static Orientation from_matrix(const Matrix& m) {
        Orientation o;
        o.m_ = m;
        if (!o.is_axis_aligned_rotation()) fail(ErrorKind::usage, "orientation is not an axis-aligned rotation");
        return o;
    }

    /// this ∘ other (apply `other` first).
    Orientation operator*(const Orientation& other) const {
        Orientation r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                int acc = 0;
                for (int k = 0; k < 3; ++k) acc += m_[i][k] * other.m_[k][j];
                r.m_[i][j] = acc;
            }
        return r;
    }

    Eigen::Vector3d apply(const Eigen::Vector3d& v) const {
        Eigen::Vector3d r;
        for (int i = 0; i < 3; ++i) r[i] = m_[i][0] * v[0] + m_[i][1] * v[1] + m_[i][2] * v[2];
        return r;
    }

    /// Signed permutation matrix with determinant +1.
    bool is_axis_aligned_rotation() const {
        for (int i = 0; i < 3; ++i) {
            int nonzero_row = 0, nonzero_col = 0;
            for (int j = 0; j < 3; ++j) {
                if (m_[i][j] != 0 && std::abs(m_[i][j]) != 1) return false;
                nonzero_row += m_[i][j] != 0;
                nonzero_col += m_[j][i] != 0;
            }
            if (nonzero_row != 1 || nonzero_col != 1) return false;
        }
        const int det = m_[0][0] * (m_[1][1] * m_[2][2] - m_[1][2] * m_[2][1]) -
                        m_[0][1] * (m_[1][0] * m_[2][2] - m_[1][2] * m_[2][0]) +
                        m_[0][2] * (m_[1][0] * m_[2][1] - m_[1][1] * m_[2][0]);
        return det == 1;
    }

    const Matrix& matrix() const { return m_; }
    bool operator==(const Orientation&) const = default;

private:
    Matrix m_;
};

// ---------------------------------------------------------------------------
// Session state
// ---------------------------------------------------------------------------

struct PlotPose {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Orientation orientation;
    bool move_selector_active = false;
    std::optional<Axis> rotation_selector_active;

    bool operator==(const PlotPose& o) const {
        return position == o.position && orientation == o.orientation &&
               move_selector_active == o.move_selector_active &&
               rotation_selector_active == o.rotation_selector_active;
    }
};

using Layout = std::map<std::string, PlotPose>;

/// Two plots flanking the geometry at ±45° from the forward axis (-Z),
/// `distance` scene units from the viewer at the origin.
inline Layout default_layout(double distance = 3.0) {
    const double a = std::numbers::pi / 4.0;
    Layout l;
    l["A"].position = Eigen::Vector3d(-distance * std::sin(a), 0.0, -distance * std::cos(a));
    l["B"].position = Eigen::Vector3d(distance * std::sin(a), 0.0, -distance * std::cos(a));
    return l;
}

struct SessionEvent {
    std::string t;
    std::string op;
    json args = json::object();

    bool operator==(const SessionEvent& o) const { return t == o.t && op == o.op && args == o.args; }
};

struct SessionState {
    std::string dataset_id;
    std::optional<std::size_t> selected_index;
    std::map<std::string, PlotPose> plot_poses;
    Layout initial_layout;
    std::vector<SessionEvent> history;

    bool operator==(const SessionState&) const = default;

    /// Equality ignoring the event log.
    bool same_view(const SessionState& o) const {
        return dataset_id == o.dataset_id && selected_index == o.selected_index && plot_poses == o.plot_poses &&
               initial_layout == o.initial_layout;
    }

    std::size_t active_rotation_selectors() const {
        std::size_t n = 0;
        for (const auto& [id, pose] : plot_poses) n += pose.rotation_selector_active.has_value();
        return n;
    }
};

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

// ---------------------------------------------------------------------------
// JSON forms
// ---------------------------------------------------------------------------

inline json pose_to_json(const PlotPose& p) {
    json orient = json::array();
    for (const auto& row : p.orientation.matrix())
        for (int v : row) orient.push_back(v);
    return json{{"position", json::array({p.position.x(), p.position.y(), p.position.z()})},
                {"orientation", std::move(orient)},
                {"move_selector_active", p.move_selector_active},
                {"rotation_selector_active",
                 p.rotation_selector_active ? json(axis_name(*p.rotation_selector_active)) : json(nullptr)}};
}

inline PlotPose pose_from_json(const json& j) {
    try {
        PlotPose p;
        const auto& pos = j.at("position");
        p.position = Eigen::Vector3d(pos.at(0).get<double>(), pos.at(1).get<double>(), pos.at(2).get<double>());
        if (j.contains("orientation")) {
            Orientation::Matrix m{};
            const auto& o = j.at("orientation");
            if (o.size() != 9) fail(ErrorKind::usage, "pose: orientation needs 9 entries");
            for (int i = 0; i < 9; ++i) m[static_cast<std::size_t>(i / 3)][static_cast<std::size_t>(i % 3)] = o[static_cast<std::size_t>(i)].get<int>();
            p.orientation = Orientation::from_matrix(m);
        }
        p.move_selector_active = j.value("move_selector_active", false);
        if (j.contains("rotation_selector_active") && !j["rotation_selector_active"].is_null())
            p.rotation_selector_active = parse_axis(j["rotation_selector_active"].get<std::string>());
        return p;
    } catch (const json::exception& e) {
        fail(ErrorKind::usage, std::string("pose: ") + e.what());
    }
}

inline json layout_to_json(const Layout& l) {
    json j = json::object();
    for (const auto& [id, pose] : l) j[id] = pose_to_json(pose);
    return j;
}

inline Layout layout_from_json(const json& j) {
    Layout l;
    for (auto it = j.begin(); it != j.end(); ++it) l[it.key()] = pose_from_json(it.value());
    return l;
}

inline json event_to_json(const SessionEvent& e) { return json{{"t", e.t}, {"op", e.op}, {"args", e.args}}; }

inline SessionEvent event_from_json(const json& j) {
    if (!j.is_object() || !j.contains("op") || !j["op"].is_string())
        fail(ErrorKind::usage, "event: expected {\"op\": string, \"args\": {...}}");
    SessionEvent e;
    e.op = j["op"].get<std::string>();
    if (j.contains("t") && j["t"].is_string()) e.t = j["t"].get<std::string>();
    if (j.contains("args")) {
        if (!j["args"].is_object()) fail(ErrorKind::usage, "event: args must be an object");
        e.args = j["args"];
    }
    return e;
}

inline json session_to_json(const SessionState& s) {
    json history = json::array();
    for (const auto& e : s.history) history.push_back(event_to_json(e));
    return json{{"dataset_id", s.dataset_id},
                {"selected_index", s.selected_index ? json(*s.selected_index) : json(nullptr)},
                {"plot_poses", layout_to_json(s.plot_poses)},
                {"history", std::move(history)}};
}

// ---------------------------------------------------------------------------
// Transitions
//
// Each operation returns the next state and appends its canonical event to
// the history, so folding `apply_event` over a history rebuilds the state.
// ---------------------------------------------------------------------------

namespace detail {

inline PlotPose& pose_of(SessionState& s, const std::string& plot_id) {
    auto it = s.plot_poses.find(plot_id);
    if (it == s.plot_poses.end()) fail(ErrorKind::not_found, "unknown plot '" + plot_id + "'");
    return it->second;
}

inline void record(SessionState& s, std::string t, std::string op, json args) {
    s.history.push_back({t.empty() ? utc_timestamp() : std::move(t), std::move(op), std::move(args)});
}

inline void require_dataset(const SessionState& s) {
    if (s.dataset_id.empty()) fail(ErrorKind::precondition, "no dataset loaded");
}

} // namespace detail

/// Resolves a dataset id to its design count; nullopt for unknown ids.
template <class F>
concept DatasetSizeLookup = std::invocable<const F&, const std::string&> &&
                            std::convertible_to<std::invoke_result_t<const F&, const std::string&>,
                                                std::optional<std::size_t>>;

inline SessionState start_session(const std::string& dataset_id, Layout layout = default_layout(),
                                  std::string t = {}) {
    if (dataset_id.empty()) fail(ErrorKind::usage, "start_session: dataset id is empty");
    SessionState s;
    s.dataset_id = dataset_id;
    s.initial_layout = layout;
    s.plot_poses = std::move(layout);
    detail::record(s, std::move(t), "start_session",
                   json{{"dataset", dataset_id}, {"layout", layout_to_json(s.initial_layout)}});
    return s;
}

/// Single global selection, whichever plot it came from.
template <DatasetSizeLookup Sizes>
SessionState select_point(SessionState s, const std::string& plot_id, std::size_t index, const Sizes& sizes,
                          std::string t = {}) {
    detail::require_dataset(s);
    detail::pose_of(s, plot_id);
    const std::optional<std::size_t> n = sizes(s.dataset_id);
    if (!n) fail(ErrorKind::not_found, "unknown dataset '" + s.dataset_id + "'");
    if (index >= *n)
        fail(ErrorKind::not_found, "design index " + std::to_string(index) + " out of range for dataset '" +
                                       s.dataset_id + "' (N = " + std::to_string(*n) + ")");
    s.selected_index = index;
    detail::record(s, std::move(t), "select_point", json{{"plot", plot_id}, {"index", index}});
    return s;
}

inline SessionState clear_selection(SessionState s, std::string t = {}) {
    s.selected_index.reset();
    detail::record(s, std::move(t), "clear_selection", json::object());
    return s;
}

enum class SelectorKind { move, rotate };

/// Rotation selectors are exclusive across all plots: activating one
/// deactivates whichever was active before.
inline SessionState activate_selector(SessionState s, const std::string& plot_id, SelectorKind kind,
                                      std::optional<Axis> axis, bool active, std::string t = {}) {
    auto& pose = detail::pose_of(s, plot_id);
    json args{{"plot", plot_id}, {"selector", kind == SelectorKind::move ? "move" : "rotate"}, {"active", active}};
    if (kind == SelectorKind::move) {
        pose.move_selector_active = active;
    } else {
        if (!axis) fail(ErrorKind::usage, "activate_selector: rotate selector needs an axis");
        args["axis"] = axis_name(*axis);
        if (active) {
            for (auto& [id, other] : s.plot_poses) other.rotation_selector_active.reset();
            detail::pose_of(s, plot_id).rotation_selector_active = axis;
        } else if (pose.rotation_selector_active == axis) {
            pose.rotation_selector_active.reset();
        }
    }
    detail::record(s, std::move(t), "activate_selector", std::move(args));
    return s;
}

/// Quarter turn about a world axis; requires that axis's selector on the plot.
inline SessionState rotate_plot(SessionState s, const std::string& plot_id, Axis axis, int direction,
                                std::string t = {}) {
    auto& pose = detail::pose_of(s, plot_id);
    if (pose.rotation_selector_active != axis)
        fail(ErrorKind::precondition, std::string("rotate_plot: rotation selector ") + axis_name(axis) +
                                          " is not active on plot '" + plot_id + "'");
    pose.orientation = Orientation::quarter_turn(axis, direction) * pose.orientation;
    detail::record(s, std::move(t), "rotate_plot",
                   json{{"plot", plot_id}, {"axis", axis_name(axis)}, {"direction", direction}});
    return s;
}

/// Translates the selected plots so their barycentre lands on `target`;
/// relative offsets and orientations are unchanged.
inline SessionState move_plots(SessionState s, const std::set<std::string>& plot_ids, const Eigen::Vector3d& target,
                               std::string t = {}) {
    if (plot_ids.empty()) fail(ErrorKind::usage, "move_plots: no plots given");
    if (!target.allFinite()) fail(ErrorKind::usage, "move_plots: target must be finite");
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (const auto& id : plot_ids) {
        const auto& pose = detail::pose_of(s, id);
        if (!pose.move_selector_active)
            fail(ErrorKind::precondition, "move_plots: move selector is not active on plot '" + id + "'");
        sum += pose.position;
    }
    const Eigen::Vector3d barycentre = sum / static_cast<double>(plot_ids.size());
    const Eigen::Vector3d shift = target - barycentre;
    for (const auto& id : plot_ids) detail::pose_of(s, id).position += shift;
    detail::record(s, std::move(t), "move_plots",
                   json{{"plots", json(std::vector<std::string>(plot_ids.begin(), plot_ids.end()))},
                        {"target", json::array({target.x(), target.y(), target.z()})}});
    return s;
}

inline SessionState reset_session(SessionState s, std::string t = {}) {
    s.selected_index.reset();
    s.plot_poses = s.initial_layout;
    detail::record(s, std::move(t), "reset_session", json::object());
    return s;
}

/// Cycles to the dataset after the current one in `catalog`.
inline SessionState next_dataset(SessionState s, const std::vector<std::string>& catalog, std::string t = {}) {
    if (catalog.empty()) fail(ErrorKind::precondition, "next_dataset: dataset catalog is empty");
    auto it = std::find(catalog.begin(), catalog.end(), s.dataset_id);
    s.dataset_id = it == catalog.end() || std::next(it) == catalog.end() ? catalog.front() : *std::next(it);
    s.selected_index.reset();
    s.plot_poses = s.initial_layout;
    detail::record(s, std::move(t), "next_dataset", json{{"catalog", catalog}});
    return s;
}

// ---------------------------------------------------------------------------
// Event dispatch and replay
// ---------------------------------------------------------------------------

/// Applies one wire-format event. `catalog` is used by next_dataset when the
/// event does not carry its own.
template <DatasetSizeLookup Sizes>
SessionState apply_event(SessionState s, const SessionEvent& ev, const Sizes& sizes,
                         const std::vector<std::string>& catalog = {}) {
    const auto& a = ev.args;
    try {
        auto str = [&](const char* key) {
            if (!a.contains(key) || !a[key].is_string())
                fail(ErrorKind::usage, ev.op + ": missing string argument '" + key + "'");
            return a[key].get<std::string>();
        };
        if (ev.op == "start_session") {
            Layout layout = a.contains("layout") ? layout_from_json(a["layout"]) : default_layout();
            auto fresh = start_session(str("dataset"), std::move(layout), ev.t);
            fresh.history.insert(fresh.history.begin(), s.history.begin(), s.history.end());
            return fresh;
        }
        if (ev.op == "select_point") {
            if (!a.contains("index") || !a["index"].is_number_integer() || a["index"].get<std::int64_t>() < 0)
                fail(ErrorKind::usage, "select_point: 'index' must be a non-negative integer");
            return select_point(std::move(s), str("plot"), a["index"].get<std::size_t>(), sizes, ev.t);
        }
        if (ev.op == "clear_selection") return clear_selection(std::move(s), ev.t);
        if (ev.op == "activate_selector") {
            const auto kind = str("selector");
            if (kind != "move" && kind != "rotate") fail(ErrorKind::usage, "activate_selector: selector must be move|rotate");
            std::optional<Axis> axis;
            if (a.contains("axis") && a["axis"].is_string()) axis = parse_axis(a["axis"].get<std::string>());
            return activate_selector(std::move(s), str("plot"), kind == "move" ? SelectorKind::move : SelectorKind::rotate,
                                     axis, a.value("active", true), ev.t);
        }
        if (ev.op == "rotate_plot") {
            const int dir = a.value("direction", 1);
            return rotate_plot(std::move(s), str("plot"), parse_axis(str("axis")), dir, ev.t);
        }
        if (ev.op == "move_plots") {
            if (!a.contains("plots") || !a["plots"].is_array() || !a.contains("target") || !a["target"].is_array() ||
                a["target"].size() != 3)
                fail(ErrorKind::usage, "move_plots: expected {plots: [...], target: [x, y, z]}");
            std::set<std::string> ids;
            for (const auto& p : a["plots"]) ids.insert(p.get<std::string>());
            const auto& tg = a["target"];
            return move_plots(std::move(s), ids, Eigen::Vector3d(tg[0].get<double>(), tg[1].get<double>(), tg[2].get<double>()),
                              ev.t);
        }
        if (ev.op == "reset_session") return reset_session(std::move(s), ev.t);
        if (ev.op == "next_dataset") {
            if (a.contains("catalog")) return next_dataset(std::move(s), a["catalog"].get<std::vector<std::string>>(), ev.t);
            return next_dataset(std::move(s), catalog, ev.t);
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::usage, ev.op + ": " + e.what());
    }
    fail(ErrorKind::usage, "unknown session event '" + ev.op + "'");
}

/// Folds events over an empty state.
template <DatasetSizeLookup Sizes>
SessionState replay(const std::vector<SessionEvent>& events, const Sizes& sizes) {
    SessionState s;
    for (const auto& ev : events) s = apply_event(std::move(s), ev, sizes);
    return s;
}

inline std::vector<SessionEvent> read_event_log(std::istream& in) {
    std::vector<SessionEvent> out;
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(event_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            fail(ErrorKind::data, "event log line " + std::to_string(ln) + ": " + e.what());
        } catch (const Error& e) {
            fail(ErrorKind::data, "event log line " + std::to_string(ln) + ": " + e.what());
        }
    }
    return out;
}

inline std::string event_log_line(const SessionEvent& e) { return dump_json(event_to_json(e)) + "\n"; }

// ---------------------------------------------------------------------------
// Linked selection payload
// ---------------------------------------------------------------------------

struct SelectionResult {
    std::size_t selected_index = 0;
    std::map<std::string, SummaryPoint> plot_points;
    std::string geometry_key;
    std::optional<GeometryDiff> diff_summary;

    /// Every plot payload refers to the selected design.
    bool synchronized() const {
        return std::all_of(plot_points.begin(), plot_points.end(),
                           [&](const auto& kv) { return kv.second.design_index == selected_index; });
    }
};

/// A dataset the session can link against: per-plot points and geometry
/// keys addressed by the shared design index.
template <class S>
concept LinkedSource = requires(const S& s, const std::string& plot_id, std::size_t i) {
    { s.size() } -> std::convertible_to<std::size_t>;
    { s.plot_point(plot_id, i) } -> std::convertible_to<SummaryPoint>;
    { s.geometry_key(i) } -> std::convertible_to<std::string>;
};

template <class S>
concept DiffingSource = LinkedSource<S> && requires(const S& s, std::size_t i) {
    { s.geometry_diff(i) } -> std::convertible_to<GeometryDiff>;
};

template <LinkedSource Source>
SelectionResult make_selection_result(const SessionState& s, const Source& source) {
    if (!s.selected_index) fail(ErrorKind::precondition, "no design selected");
    SelectionResult r;
    r.selected_index = *s.selected_index;
    for (const auto& [id, pose] : s.plot_poses) r.plot_points[id] = source.plot_point(id, r.selected_index);
    r.geometry_key = source.geometry_key(r.selected_index);
    if constexpr (DiffingSource<Source>) r.diff_summary = source.geometry_diff(r.selected_index);
    return r;
}

/// select_point against a concrete source, returning the chained payload.
template <LinkedSource Source>
std::pair<SessionState, SelectionResult> select_point(SessionState s, const std::string& plot_id, std::size_t index,
                                                      const Source& source, std::string t = {}) {
    const std::size_t n = source.size();
    auto next = select_point(std::move(s), plot_id, index,
                             [n](const std::string&) { return std::optional<std::size_t>(n); }, std::move(t));
    auto result = make_selection_result(next, source);
    return {std::move(next), std::move(result)};
}

inline json selection_to_json(const SelectionResult& r) {
    json points = json::object();
    for (const auto& [id, p] : r.plot_points)
        points[id] = json{{"i", p.design_index}, {"y", to_json_array(p.y)}, {"f", p.f}};
    json j{{"selected_index", r.selected_index}, {"plot_points", std::move(points)}, {"geometry_key", r.geometry_key}};
    j["diff_summary"] = r.diff_summary ? diff_to_json(*r.diff_summary) : json(nullptr);
    return j;
}

} // namespace ridgeview
