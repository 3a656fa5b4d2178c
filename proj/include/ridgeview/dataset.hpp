#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ridgeview/error.hpp"
#include "ridgeview/json_format.hpp"
#include "ridgeview/quadratic.hpp"

namespace ridgeview {

// ---------------------------------------------------------------------------
// Domain
// ---------------------------------------------------------------------------

inline constexpr std::string_view uniform_hypercube = "uniform-hypercube";

/// Raw engineering bounds of each design parameter. The input density is
/// always uniform on the normalized hypercube [-1, 1]^d.
struct DomainSpec {
    std::vector<std::pair<double, double>> bounds;

    std::size_t dim() const { return bounds.size(); }

    static DomainSpec unit(std::size_t d) {
        return DomainSpec{std::vector<std::pair<double, double>>(d, {-1.0, 1.0})};
    }

    void validate() const {
        if (bounds.empty()) fail(ErrorKind::data, "domain: d must be >= 1");
        for (std::size_t i = 0; i < bounds.size(); ++i) {
            const auto [lo, hi] = bounds[i];
            if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
                fail(ErrorKind::data, "domain: bounds[" + std::to_string(i) + "] must satisfy lower < upper");
        }
    }

    bool operator==(const DomainSpec&) const = default;
};

inline DomainSpec domain_from_json(const json& j) {
    if (!j.is_object() || !j.contains("d") || !j.contains("bounds"))
        fail(ErrorKind::data, "domain.json: expected {\"d\": int, \"bounds\": [[lo,hi],...]}");
    if (j.contains("density") && j["density"] != std::string(uniform_hypercube))
        fail(ErrorKind::data, "domain.json: unsupported density '" + j["density"].dump() +
                                  "' (only uniform-hypercube)");
    DomainSpec dom;
    try {
        const auto d = j["d"].get<std::int64_t>();
        for (const auto& b : j["bounds"]) {
            if (!b.is_array() || b.size() != 2) fail(ErrorKind::data, "domain.json: each bound must be [lo, hi]");
            dom.bounds.emplace_back(b[0].get<double>(), b[1].get<double>());
        }
        if (d != static_cast<std::int64_t>(dom.bounds.size()))
            fail(ErrorKind::data, "domain.json: d = " + std::to_string(d) + " but " +
                                      std::to_string(dom.bounds.size()) + " bounds given");
    } catch (const json::exception& e) {
        fail(ErrorKind::data, std::string("domain.json: ") + e.what());
    }
    dom.validate();
    return dom;
}

inline json domain_to_json(const DomainSpec& dom) {
    json b = json::array();
    for (const auto& [lo, hi] : dom.bounds) b.push_back(json::array({lo, hi}));
    return json{{"d", dom.dim()}, {"bounds", std::move(b)}};
}

inline DomainSpec load_domain_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::data, "cannot open domain file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorKind::data, path.string() + ": " + e.what());
    }
    try {
        return domain_from_json(j);
    } catch (const Error& e) {
        fail(ErrorKind::data, path.string() + ": " + e.what());
    }
}

/// Affine map of raw values onto [-1, 1]^d (lower -> -1, upper -> +1).
inline Eigen::VectorXd normalize_design(const Eigen::VectorXd& raw, const DomainSpec& domain) {
    if (static_cast<std::size_t>(raw.size()) != domain.dim())
        fail(ErrorKind::data, "normalize: expected " + std::to_string(domain.dim()) + " values, got " +
                                  std::to_string(raw.size()));
    Eigen::VectorXd x(raw.size());
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
        const auto [lo, hi] = domain.bounds[static_cast<std::size_t>(i)];
        const double v = raw[i];
        if (!(v >= lo && v <= hi))
            fail(ErrorKind::data, "normalize: component " + std::to_string(i) + " = " + format_real(v) +
                                      " outside [" + format_real(lo) + ", " + format_real(hi) + "]");
        x[i] = 2.0 * (v - lo) / (hi - lo) - 1.0;
    }
    return x;
}

inline Eigen::VectorXd denormalize_design(const Eigen::VectorXd& x, const DomainSpec& domain) {
    if (static_cast<std::size_t>(x.size()) != domain.dim())
        fail(ErrorKind::data, "denormalize: length mismatch");
    Eigen::VectorXd raw(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const auto [lo, hi] = domain.bounds[static_cast<std::size_t>(i)];
        raw[i] = lo + 0.5 * (x[i] + 1.0) * (hi - lo);
    }
    return raw;
}

// ---------------------------------------------------------------------------
// Design table
// ---------------------------------------------------------------------------

struct DesignSample {
    Eigen::VectorXd x; // normalized
    std::map<std::string, double> qoi;
    std::optional<std::string> geometry_key;
};

/// Zero-padded fallback mesh name for a design without an explicit key.
inline std::string default_geometry_key(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "design_%04zu.stl", index);
    return buf;
}

/// Ordered set of designs. Row position is the design index shared by
/// every plot and the geometry catalog.
struct DesignTable {
    DomainSpec domain;
    std::vector<DesignSample> samples;
    std::vector<std::string> qoi_names;
    std::vector<std::string> parameter_names; // optional column labels, size d when set

    std::size_t size() const { return samples.size(); }
    std::size_t dim() const { return domain.dim(); }

    bool has_qoi(std::string_view name) const {
        return std::find(qoi_names.begin(), qoi_names.end(), name) != qoi_names.end();
    }

    /// N x d matrix of normalized designs.
    Eigen::MatrixXd design_matrix() const {
        Eigen::MatrixXd X(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(dim()));
        for (std::size_t i = 0; i < size(); ++i) X.row(static_cast<Eigen::Index>(i)) = samples[i].x.transpose();
        return X;
    }

    Eigen::VectorXd qoi_column(const std::string& name) const {
        if (!has_qoi(name)) fail(ErrorKind::not_found, "unknown qoi '" + name + "'");
        Eigen::VectorXd f(static_cast<Eigen::Index>(size()));
        for (std::size_t i = 0; i < size(); ++i) f[static_cast<Eigen::Index>(i)] = samples[i].qoi.at(name);
        return f;
    }

    std::string geometry_key(std::size_t index) const {
        if (index >= size()) fail(ErrorKind::not_found, "design index " + std::to_string(index) + " out of range");
        const auto& k = samples[index].geometry_key;
        return k ? *k : default_geometry_key(index);
    }

    void validate() const {
        domain.validate();
        if (samples.empty()) fail(ErrorKind::data, "design table: N must be >= 1");
        const std::set<std::string> names(qoi_names.begin(), qoi_names.end());
        if (names.size() != qoi_names.size()) fail(ErrorKind::data, "design table: duplicate qoi name");
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto& s = samples[i];
            const auto where = "design " + std::to_string(i);
            if (static_cast<std::size_t>(s.x.size()) != dim())
                fail(ErrorKind::data, where + ": expected " + std::to_string(dim()) + " coordinates");
            for (Eigen::Index k = 0; k < s.x.size(); ++k)
                if (!(std::abs(s.x[k]) <= 1.0 + 1e-12))
                    fail(ErrorKind::data, where + ": coordinate " + std::to_string(k) + " outside [-1, 1]");
            if (s.qoi.size() != qoi_names.size())
                fail(ErrorKind::data, where + ": qoi set differs from table header");
            for (const auto& name : qoi_names) {
                auto it = s.qoi.find(name);
                if (it == s.qoi.end()) fail(ErrorKind::data, where + ": missing qoi '" + name + "'");
                if (!std::isfinite(it->second))
                    fail(ErrorKind::data, where + ": non-finite value for qoi '" + name + "'");
            }
        }
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::optional<double> parse_real(std::string_view tok) {
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc{} || ptr != end || tok.empty()) return std::nullopt;
    return v;
}

} // namespace detail

/// Parses a design CSV held in memory. `source` names the file in messages.
inline DesignTable parse_design_csv(std::string_view text, const DomainSpec& domain,
                                    const std::string& source = "<csv>") {
    domain.validate();
    const std::size_t d = domain.dim();
    std::vector<std::string_view> lines;
    {
        std::size_t start = 0;
        while (start <= text.size()) {
            const auto nl = text.find('\n', start);
            lines.push_back(text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
            if (nl == std::string_view::npos) break;
            start = nl + 1;
        }
    }
    // Skip a UTF-8 byte order mark.
    if (!lines.empty() && lines[0].substr(0, 3) == "\xEF\xBB\xBF") lines[0].remove_prefix(3);
    if (lines.empty() || detail::trim(lines[0]).empty()) fail(ErrorKind::data, source + ": missing header row");

    const auto header = detail::split_csv(lines[0]);
    {
        std::set<std::string_view> seen;
        for (auto h : header) {
            if (h.empty()) fail(ErrorKind::data, source + ": empty column name in header");
            if (!seen.insert(h).second) fail(ErrorKind::data, source + ": duplicate header '" + std::string(h) + "'");
        }
    }
    const bool has_key = !header.empty() && header.back() == "geometry_key";
    const std::size_t numeric_cols = header.size() - (has_key ? 1 : 0);
    if (numeric_cols < d)
        fail(ErrorKind::data, source + ": header has " + std::to_string(numeric_cols) +
                                  " numeric columns but the domain declares d = " + std::to_string(d));

    DesignTable table;
    table.domain = domain;
    for (std::size_t k = 0; k < d; ++k) table.parameter_names.emplace_back(header[k]);
    for (std::size_t k = d; k < numeric_cols; ++k) table.qoi_names.emplace_back(header[k]);

    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (detail::trim(lines[ln]).empty()) continue;
        const auto where = source + ": line " + std::to_string(ln + 1) + " (design " +
                           std::to_string(table.samples.size()) + ")";
        const auto cells = detail::split_csv(lines[ln]);
        if (cells.size() != header.size())
            fail(ErrorKind::data, where + ": dimension mismatch, expected " + std::to_string(header.size()) +
                                      " columns, got " + std::to_string(cells.size()));
        Eigen::VectorXd raw(static_cast<Eigen::Index>(d));
        DesignSample s;
        for (std::size_t k = 0; k < numeric_cols; ++k) {
            const auto v = detail::parse_real(cells[k]);
            if (!v) fail(ErrorKind::data, where + ": malformed number '" + std::string(cells[k]) + "' in column '" +
                                              std::string(header[k]) + "'");
            if (!std::isfinite(*v))
                fail(ErrorKind::data, where + ": non-finite value in column '" + std::string(header[k]) + "'");
            if (k < d)
                raw[static_cast<Eigen::Index>(k)] = *v;
            else
                s.qoi.emplace(std::string(header[k]), *v);
        }
        try {
            s.x = normalize_design(raw, domain);
        } catch (const Error& e) {
            fail(ErrorKind::data, where + ": " + e.what());
        }
        if (has_key && !cells.back().empty()) s.geometry_key = std::string(cells.back());
        table.samples.push_back(std::move(s));
    }
    if (table.samples.empty()) fail(ErrorKind::data, source + ": no data rows");
    table.validate();
    return table;
}

inline DesignTable load_design_table(const std::filesystem::path& path, const DomainSpec& domain) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::data, "cannot open design table " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_design_csv(ss.str(), domain, path.string());
}

/// Writes raw (denormalized) values; load_design_table inverts this.
inline std::string design_table_to_csv(const DesignTable& table) {
    std::string out;
    for (std::size_t k = 0; k < table.dim(); ++k) {
        if (k) out += ',';
        out += table.parameter_names.size() == table.dim() ? table.parameter_names[k] : "x" + std::to_string(k + 1);
    }
    for (const auto& q : table.qoi_names) out += ',' + q;
    const bool keys = std::any_of(table.samples.begin(), table.samples.end(),
                                  [](const DesignSample& s) { return s.geometry_key.has_value(); });
    if (keys) out += ",geometry_key";
    out += '\n';
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& s = table.samples[i];
        const auto raw = denormalize_design(s.x, table.domain);
        for (Eigen::Index k = 0; k < raw.size(); ++k) {
            if (k) out += ',';
            out += format_real(raw[k]);
        }
        for (const auto& q : table.qoi_names) out += ',' + format_real(s.qoi.at(q));
        if (keys) out += ',' + table.geometry_key(i);
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Design of experiments
// ---------------------------------------------------------------------------

/// i.i.d. uniform draws on [-1, 1]^d; deterministic for a fixed seed.
inline DesignTable sample_uniform_doe(const DomainSpec& domain, std::size_t n, std::uint64_t seed) {
    domain.validate();
    if (n == 0) fail(ErrorKind::usage, "sample_uniform_doe: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    DesignTable t;
    t.domain = domain;
    t.samples.resize(n);
    for (auto& s : t.samples) {
        s.x.resize(static_cast<Eigen::Index>(domain.dim()));
        for (Eigen::Index k = 0; k < s.x.size(); ++k) s.x[k] = unif(rng);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Synthetic oracles
// ---------------------------------------------------------------------------

enum class OracleKind { exact_ridge_1d, exact_ridge_2d, full_quadratic };

/// Test functions with a known ridge structure:
///   exact-ridge-1d:  f = (u1ᵀx + 0.2)²
///   exact-ridge-2d:  f = (u1ᵀx)² + 0.5 (u2ᵀx)²
///   full-quadratic:  f = ½ xᵀA x + cᵀx + d0
struct SyntheticOracle {
    OracleKind kind = OracleKind::exact_ridge_1d;
    Eigen::MatrixXd directions; // d x k, orthonormal columns
    double noise_sd = 0.0;
    std::uint64_t seed = 0;
    std::optional<QuadraticModel> quadratic; // full-quadratic only

    void validate() const {
        const Eigen::Index need = kind == OracleKind::exact_ridge_1d ? 1 : kind == OracleKind::exact_ridge_2d ? 2 : 0;
        if (directions.cols() < need)
            fail(ErrorKind::usage, "oracle: needs " + std::to_string(need) + " direction column(s)");
        if (directions.cols() > 0) {
            const Eigen::MatrixXd gram = directions.transpose() * directions;
            const double dev = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
            if (dev > 1e-12) fail(ErrorKind::usage, "oracle: directions are not orthonormal (deviation " +
                                                        format_real(dev) + ")");
        }
        if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) fail(ErrorKind::usage, "oracle: noise_sd must be >= 0");
        if (kind == OracleKind::full_quadratic && !quadratic)
            fail(ErrorKind::usage, "oracle: full-quadratic needs a stored model");
    }

    Eigen::Index dim() const {
        return kind == OracleKind::full_quadratic && quadratic ? quadratic->dim() : directions.rows();
    }

    /// Noise-free value at x.
    double evaluate(const Eigen::VectorXd& x) const {
        if (x.size() != dim()) fail(ErrorKind::usage, "oracle: direction-dimension mismatch");
        switch (kind) {
        case OracleKind::exact_ridge_1d: {
            const double t = directions.col(0).dot(x) + 0.2;
            return t * t;
        }
        case OracleKind::exact_ridge_2d: {
            const double a = directions.col(0).dot(x);
            const double b = directions.col(1).dot(x);
            return a * a + 0.5 * b * b;
        }
        case OracleKind::full_quadratic:
            return quadratic->evaluate(x);
        }
        return 0.0;
    }

    static SyntheticOracle ridge_1d(Eigen::VectorXd u1, double noise_sd = 0.0, std::uint64_t seed = 0) {
        SyntheticOracle o{OracleKind::exact_ridge_1d, Eigen::MatrixXd(std::move(u1)), noise_sd, seed, std::nullopt};
        o.validate();
        return o;
    }

    static SyntheticOracle ridge_2d(Eigen::MatrixXd u12, double noise_sd = 0.0, std::uint64_t seed = 0) {
        SyntheticOracle o{OracleKind::exact_ridge_2d, std::move(u12), noise_sd, seed, std::nullopt};
        o.validate();
        return o;
    }

    static SyntheticOracle full(QuadraticModel model, double noise_sd = 0.0, std::uint64_t seed = 0) {
        const auto d = model.dim();
        SyntheticOracle o{OracleKind::full_quadratic, Eigen::MatrixXd::Identity(d, d), noise_sd, seed,
                          std::move(model)};
        o.validate();
        return o;
    }
};

/// d x k matrix with orthonormal columns drawn from a Gaussian matrix.
inline Eigen::MatrixXd random_orthonormal(Eigen::Index d, Eigen::Index k, std::uint64_t seed) {
    if (k > d || k < 0) fail(ErrorKind::usage, "random_orthonormal: need 0 <= k <= d");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::MatrixXd G(d, k);
    for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index i = 0; i < d; ++i) G(i, j) = g(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    return qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
}

/// Returns a copy of `table` with `qoi_name` filled by the oracle.
inline DesignTable evaluate_oracle(const SyntheticOracle& oracle, const DesignTable& table,
                                   const std::string& qoi_name) {
    oracle.validate();
    if (oracle.dim() != static_cast<Eigen::Index>(table.dim()))
        fail(ErrorKind::usage, "evaluate_oracle: oracle has d = " + std::to_string(oracle.dim()) +
                                   " but table has d = " + std::to_string(table.dim()));
    DesignTable out = table;
    std::mt19937_64 rng(oracle.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto& s : out.samples) {
        double f = oracle.evaluate(s.x);
        if (oracle.noise_sd > 0.0) f += oracle.noise_sd * noise(rng);
        s.qoi[qoi_name] = f;
    }
    if (!out.has_qoi(qoi_name)) out.qoi_names.push_back(qoi_name);
    return out;
}

} // namespace ridgeview
