#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ridgeview/dataset.hpp"
#include "ridgeview/error.hpp"
#include "ridgeview/json_format.hpp"
#include "ridgeview/quadratic.hpp"

namespace ridgeview {

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

/// Singular values below this fraction of the largest count as rank loss.
inline constexpr double rank_tolerance = 1e-10;

struct LeastSquaresResult {
    Eigen::VectorXd coefficients;
    Eigen::Index rank = 0;
};

/// Minimum-residual solve through an SVD. Throws on numerical rank loss
/// rather than returning a pseudo-inverse solution.
inline LeastSquaresResult solve_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                              const std::string& what) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    Eigen::Index rank = 0;
    const double cutoff = s.size() > 0 ? rank_tolerance * s[0] : 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s[i] > cutoff) ++rank;
    if (rank < X.cols())
        fail(ErrorKind::numerical, what + ": rank-deficient design matrix (estimated rank " + std::to_string(rank) +
                                       " of " + std::to_string(X.cols()) + ")");
    return {svd.solve(y), rank};
}

// ---------------------------------------------------------------------------
// Global quadratic fit
// ---------------------------------------------------------------------------

/// Number of distinct monomials of a symmetric quadratic in d variables.
constexpr std::size_t quadratic_basis_size(std::size_t d) { return 1 + d + d * (d + 1) / 2; }

struct QuadraticFitOptions {
    /// Tikhonov weight on the non-constant coefficients; > 0 admits N < p.
    double ridge_regularization = 0.0;
};

/// Rows: [1, x_1..x_d, x_i x_j (i <= j)].
inline Eigen::MatrixXd quadratic_design_matrix(const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.rows(), d = X.cols();
    Eigen::MatrixXd V(n, static_cast<Eigen::Index>(quadratic_basis_size(static_cast<std::size_t>(d))));
    V.col(0).setOnes();
    V.middleCols(1, d) = X;
    Eigen::Index col = 1 + d;
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = i; j < d; ++j) V.col(col++) = X.col(i).cwiseProduct(X.col(j));
    return V;
}

inline QuadraticModel fit_quadratic(const DesignTable& table, const std::string& qoi_name,
                                    const QuadraticFitOptions& opts = {}) {
    if (!table.has_qoi(qoi_name)) fail(ErrorKind::not_found, "fit_quadratic: unknown qoi '" + qoi_name + "'");
    if (!(opts.ridge_regularization >= 0.0))
        fail(ErrorKind::usage, "fit_quadratic: ridge_regularization must be >= 0");
    const auto d = static_cast<Eigen::Index>(table.dim());
    const auto n = static_cast<Eigen::Index>(table.size());
    const auto p = static_cast<Eigen::Index>(quadratic_basis_size(table.dim()));
    if (n < p && opts.ridge_regularization == 0.0)
        fail(ErrorKind::numerical, "fit_quadratic(" + qoi_name + "): N = " + std::to_string(n) +
                                       " < p = " + std::to_string(p) + " with zero regularization");

    Eigen::MatrixXd V = quadratic_design_matrix(table.design_matrix());
    Eigen::VectorXd f = table.qoi_column(qoi_name);
    if (opts.ridge_regularization > 0.0) {
        const double w = std::sqrt(opts.ridge_regularization);
        Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + p - 1, p);
        aug.topRows(n) = V;
        aug.bottomRightCorner(p - 1, p - 1).diagonal().setConstant(w);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + p - 1);
        rhs.head(n) = f;
        V = std::move(aug);
        f = std::move(rhs);
    }
    const auto beta = solve_least_squares(V, f, "fit_quadratic(" + qoi_name + ")").coefficients;

    QuadraticModel m;
    m.d0 = beta[0];
    m.c = beta.segment(1, d);
    m.A = Eigen::MatrixXd::Zero(d, d);
    Eigen::Index col = 1 + d;
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i; j < d; ++j, ++col) {
            // ½xᵀAx puts ½A_ii on x_i² and A_ij on x_i x_j.
            if (i == j)
                m.A(i, i) = 2.0 * beta[col];
            else
                m.A(i, j) = m.A(j, i) = beta[col];
        }
    }
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// Gradient covariance
// ---------------------------------------------------------------------------

enum class CovarianceMethod { analytic, monte_carlo };

struct CovarianceEstimate {
    Eigen::MatrixXd C;
    CovarianceMethod method = CovarianceMethod::analytic;
    std::optional<std::uint64_t> mc_samples;
    std::optional<std::uint64_t> seed;
};

/// E[(Ax + c)(Ax + c)ᵀ] for x uniform on [-1,1]^d: E[x] = 0 and
/// E[xxᵀ] = I/3, so the cross terms vanish.
inline CovarianceEstimate covariance_analytic(const QuadraticModel& model) {
    model.validate();
    Eigen::MatrixXd C = (model.A * model.A) / 3.0 + model.c * model.c.transpose();
    C = 0.5 * (C + C.transpose()).eval();
    return {std::move(C), CovarianceMethod::analytic, std::nullopt, std::nullopt};
}

/// Sample mean of ∇f ∇fᵀ over n uniform draws. Accumulated as
/// S + m cᵀ + c mᵀ + c cᵀ with h = A x, m = mean(h), S = mean(h hᵀ), which is
/// algebraically the plain estimator but exact when A = 0.
inline CovarianceEstimate covariance_monte_carlo(const QuadraticModel& model, std::uint64_t n,
                                                 std::uint64_t seed) {
    model.validate();
    if (n == 0) fail(ErrorKind::usage, "covariance_monte_carlo: n must be >= 1");
    const Eigen::Index d = model.dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);

    constexpr std::uint64_t batch = 4096;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd msum = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd X(d, static_cast<Eigen::Index>(batch));
    for (std::uint64_t done = 0; done < n;) {
        const auto b = static_cast<Eigen::Index>(std::min(batch, n - done));
        for (Eigen::Index j = 0; j < b; ++j)
            for (Eigen::Index i = 0; i < d; ++i) X(i, j) = unif(rng);
        const Eigen::MatrixXd H = model.A * X.leftCols(b);
        S.noalias() += H * H.transpose();
        msum += H.rowwise().sum();
        done += static_cast<std::uint64_t>(b);
    }
    const double inv = 1.0 / static_cast<double>(n);
    const Eigen::VectorXd m = msum * inv;
    Eigen::MatrixXd C = S * inv + m * model.c.transpose() + model.c * m.transpose() + model.c * model.c.transpose();
    C = 0.5 * (C + C.transpose()).eval();
    return {std::move(C), CovarianceMethod::monte_carlo, n, seed};
}

// ---------------------------------------------------------------------------
// Active subspace
// ---------------------------------------------------------------------------

/// Eigenpairs of the gradient covariance, descending. `m == 0` means the
/// dimension has not been chosen yet.
struct ActiveSubspace {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd W;
    Eigen::Index m = 0;
    bool degenerate = false;

    Eigen::Index dim() const { return W.rows(); }

    Eigen::MatrixXd W1() const {
        require_m();
        return W.leftCols(m);
    }
    Eigen::MatrixXd W2() const {
        require_m();
        return W.rightCols(W.cols() - m);
    }

    void require_m() const {
        if (m < 1 || m >= W.cols()) fail(ErrorKind::usage, "active subspace: dimension m is not set");
    }
};

inline double max_abs(const Eigen::MatrixXd& M) { return M.size() ? M.cwiseAbs().maxCoeff() : 0.0; }

inline ActiveSubspace eigendecompose(const CovarianceEstimate& cov) {
    const auto& C = cov.C;
    if (C.rows() != C.cols() || C.rows() == 0) fail(ErrorKind::usage, "eigendecompose: matrix must be square");
    if (!C.allFinite()) fail(ErrorKind::numerical, "eigendecompose: non-finite entries");
    const double scale = max_abs(C);
    if (max_abs(C - C.transpose()) > 1e-12 * std::max(scale, 1e-300))
        fail(ErrorKind::numerical, "eigendecompose: matrix is not symmetric");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
    if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "eigendecompose: solver did not converge");
    const Eigen::Index d = C.rows();
    ActiveSubspace s;
    s.eigenvalues = es.eigenvalues().reverse();
    s.W = es.eigenvectors().rowwise().reverse();
    for (Eigen::Index j = 0; j < d; ++j) {
        Eigen::Index k = 0;
        s.W.col(j).cwiseAbs().maxCoeff(&k);
        if (s.W(k, j) < 0.0) s.W.col(j) *= -1.0;
    }
    return s;
}

struct DimensionChoice {
    Eigen::Index m = 1;
    bool degenerate = false;
};

/// Largest eigenvalue ratio λ_k / λ_{k+1} (ε-regularized) over k <= max_m.
/// Below `gap_threshold` there is no clear gap: m = max_m, flagged degenerate.
inline DimensionChoice select_dimension(const Eigen::VectorXd& eigenvalues, Eigen::Index max_m,
                                        double gap_threshold = 10.0) {
    const Eigen::Index d = eigenvalues.size();
    if (d < 2) fail(ErrorKind::usage, "select_dimension: need at least two eigenvalues");
    if (max_m < 1 || max_m >= d)
        fail(ErrorKind::usage, "select_dimension: max_m must satisfy 1 <= max_m < d");
    for (Eigen::Index k = 0; k + 1 < d; ++k)
        if (eigenvalues[k] < eigenvalues[k + 1])
            fail(ErrorKind::usage, "select_dimension: eigenvalues are not sorted in descending order");

    const double lead = std::max(eigenvalues[0], 0.0);
    if (lead == 0.0) return {max_m, true};
    const double eps = 1e-15 * lead;
    DimensionChoice best{1, false};
    double best_ratio = -1.0;
    for (Eigen::Index k = 1; k <= max_m; ++k) {
        const double ratio = (std::max(eigenvalues[k - 1], 0.0) + eps) / (std::max(eigenvalues[k], 0.0) + eps);
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best.m = k;
        }
    }
    if (best_ratio < gap_threshold) return {max_m, true};
    return best;
}

inline ActiveSubspace with_dimension(ActiveSubspace s, DimensionChoice choice) {
    if (choice.m < 1 || choice.m >= s.W.cols()) fail(ErrorKind::usage, "active subspace: m out of range");
    s.m = choice.m;
    s.degenerate = choice.degenerate;
    return s;
}

/// W1ᵀ x.
inline Eigen::VectorXd project(const ActiveSubspace& subspace, const Eigen::VectorXd& x) {
    subspace.require_m();
    if (x.size() != subspace.dim())
        fail(ErrorKind::usage, "project: expected vector of length " + std::to_string(subspace.dim()));
    return subspace.W.leftCols(subspace.m).transpose() * x;
}

/// Largest principal angle between span(A) and span(B); both need
/// orthonormal columns and equal column counts. Computed from the sine so
/// tiny angles keep full relative accuracy.
inline double principal_angle(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    if (A.rows() != B.rows() || A.cols() != B.cols())
        fail(ErrorKind::usage, "principal_angle: subspaces must have the same shape");
    const Eigen::MatrixXd residual = B - A * (A.transpose() * B);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(residual);
    const double s = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    return std::asin(std::min(1.0, s));
}

// ---------------------------------------------------------------------------
// Sufficient summary plots
// ---------------------------------------------------------------------------

struct SummaryPoint {
    std::size_t design_index = 0;
    Eigen::VectorXd y;
    double f = 0.0;
};

struct SummaryPlot {
    std::string qoi_name;
    Eigen::Index m = 1;
    std::vector<SummaryPoint> points;
};

inline SummaryPlot build_summary_plot(const DesignTable& table, const ActiveSubspace& subspace,
                                      const std::string& qoi_name) {
    subspace.require_m();
    if (subspace.m > 2)
        fail(ErrorKind::usage, "build_summary_plot: m = " + std::to_string(subspace.m) + " (only 1 or 2 supported)");
    if (!table.has_qoi(qoi_name)) fail(ErrorKind::not_found, "build_summary_plot: unknown qoi '" + qoi_name + "'");
    if (static_cast<Eigen::Index>(table.dim()) != subspace.dim())
        fail(ErrorKind::usage, "build_summary_plot: subspace dimension does not match table");
    SummaryPlot plot{qoi_name, subspace.m, {}};
    plot.points.reserve(table.size());
    const Eigen::MatrixXd W1t = subspace.W.leftCols(subspace.m).transpose();
    for (std::size_t i = 0; i < table.size(); ++i)
        plot.points.push_back({i, W1t * table.samples[i].x, table.samples[i].qoi.at(qoi_name)});
    return plot;
}

// ---------------------------------------------------------------------------
// Ridge profile g(W1ᵀx), U held fixed
// ---------------------------------------------------------------------------

/// Exponent tuples of the total-degree basis, graded, then lexicographic
/// with the first variable's power descending: 1, y1, y2, y1², y1y2, y2², ...
inline std::vector<std::vector<int>> total_degree_exponents(int m, int degree) {
    std::vector<std::vector<int>> out;
    std::vector<int> e(static_cast<std::size_t>(m), 0);
    for (int t = 0; t <= degree; ++t) {
        // Recursive fill of exponents summing to t.
        auto rec = [&](auto&& self, int var, int remaining) -> void {
            if (var == m - 1) {
                e[static_cast<std::size_t>(var)] = remaining;
                out.push_back(e);
                return;
            }
            for (int p = remaining; p >= 0; --p) {
                e[static_cast<std::size_t>(var)] = p;
                self(self, var + 1, remaining - p);
            }
        };
        rec(rec, 0, t);
    }
    return out;
}

inline std::size_t binomial(std::size_t n, std::size_t k) {
    std::size_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

inline Eigen::RowVectorXd monomial_row(const std::vector<std::vector<int>>& basis, const Eigen::VectorXd& y) {
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(basis.size()));
    for (std::size_t b = 0; b < basis.size(); ++b) {
        double v = 1.0;
        for (std::size_t k = 0; k < basis[b].size(); ++k)
            for (int p = 0; p < basis[b][k]; ++p) v *= y[static_cast<Eigen::Index>(k)];
        row[static_cast<Eigen::Index>(b)] = v;
    }
    return row;
}

struct RidgeProfile {
    std::string qoi_name;
    Eigen::Index m = 1;
    int degree = 2;
    Eigen::VectorXd coefficients;
    double training_rmse = 0.0;

    double evaluate(const Eigen::VectorXd& y) const {
        if (y.size() != m) fail(ErrorKind::usage, "ridge profile: expected " + std::to_string(m) + " coordinates");
        const auto basis = total_degree_exponents(static_cast<int>(m), degree);
        return monomial_row(basis, y).dot(coefficients);
    }
};

inline RidgeProfile fit_ridge_profile(const SummaryPlot& plot, int degree = 2) {
    if (degree < 0) fail(ErrorKind::usage, "fit_ridge_profile: degree must be >= 0");
    const auto basis = total_degree_exponents(static_cast<int>(plot.m), degree);
    const auto n = static_cast<Eigen::Index>(plot.points.size());
    const auto p = static_cast<Eigen::Index>(basis.size());
    const auto what = "fit_ridge_profile(" + plot.qoi_name + ")";
    if (n < p)
        fail(ErrorKind::numerical, what + ": underdetermined, " + std::to_string(n) + " points for " +
                                       std::to_string(p) + " coefficients");
    if (degree > 0) {
        const bool all_same = std::all_of(plot.points.begin(), plot.points.end(),
                                          [&](const SummaryPoint& q) { return q.y == plot.points.front().y; });
        if (all_same) fail(ErrorKind::numerical, what + ": degenerate projected coordinates (all identical)");
    }
    Eigen::MatrixXd V(n, p);
    Eigen::VectorXd f(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        V.row(i) = monomial_row(basis, plot.points[static_cast<std::size_t>(i)].y);
        f[i] = plot.points[static_cast<std::size_t>(i)].f;
    }
    RidgeProfile prof{plot.qoi_name, plot.m, degree, solve_least_squares(V, f, what).coefficients, 0.0};
    prof.training_rmse = std::sqrt((V * prof.coefficients - f).squaredNorm() / static_cast<double>(n));
    return prof;
}

/// g(W1ᵀx).
inline double predict_ridge(const RidgeProfile& profile, const ActiveSubspace& subspace, const Eigen::VectorXd& x) {
    if (profile.m != subspace.m)
        fail(ErrorKind::usage, "predict_ridge: profile has m = " + std::to_string(profile.m) +
                                   " but subspace has m = " + std::to_string(subspace.m));
    return profile.evaluate(project(subspace, x));
}

// ---------------------------------------------------------------------------
// Whole pipeline per quantity of interest
// ---------------------------------------------------------------------------

struct PipelineOptions {
    Eigen::Index max_m = 2;
    int degree = 2;
    double gap_threshold = 10.0;
    QuadraticFitOptions fit;
};

struct QoiAnalysis {
    QuadraticModel model;
    CovarianceEstimate covariance;
    ActiveSubspace subspace;
    SummaryPlot plot;
    RidgeProfile profile;
};

/// fit_quadratic → covariance_analytic → eigendecompose → select_dimension
/// → build_summary_plot → fit_ridge_profile.
inline QoiAnalysis analyze_qoi(const DesignTable& table, const std::string& qoi_name,
                               const PipelineOptions& opts = {}) {
    try {
        QoiAnalysis a;
        a.model = fit_quadratic(table, qoi_name, opts.fit);
        a.covariance = covariance_analytic(a.model);
        auto full = eigendecompose(a.covariance);
        const auto max_m = std::min<Eigen::Index>(opts.max_m, full.dim() - 1);
        const auto choice = select_dimension(full.eigenvalues, max_m, opts.gap_threshold);
        a.subspace = with_dimension(std::move(full), choice);
        a.plot = build_summary_plot(table, a.subspace, qoi_name);
        a.profile = fit_ridge_profile(a.plot, opts.degree);
        return a;
    } catch (const Error& e) {
        const std::string msg = e.what();
        if (msg.find(qoi_name) != std::string::npos) throw;
        fail(e.kind(), "qoi '" + qoi_name + "': " + msg);
    }
}

// ---------------------------------------------------------------------------
// Export formats
// ---------------------------------------------------------------------------

inline json subspace_to_json(const std::string& qoi, const ActiveSubspace& s) {
    return json{{"qoi", qoi},
                {"eigenvalues", to_json_array(s.eigenvalues)},
                {"W", to_json_rows(s.W)},
                {"m", s.m},
                {"degenerate", s.degenerate}};
}

inline ActiveSubspace subspace_from_json(const json& j) {
    try {
        ActiveSubspace s;
        s.eigenvalues = vector_from_json(j.at("eigenvalues"));
        s.W = matrix_from_json(j.at("W"));
        s.m = j.at("m").get<Eigen::Index>();
        s.degenerate = j.at("degenerate").get<bool>();
        if (s.W.rows() != s.W.cols() || s.W.rows() != s.eigenvalues.size())
            fail(ErrorKind::data, "subspace JSON: W must be d x d with d eigenvalues");
        s.require_m();
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::data, std::string("subspace JSON: ") + e.what());
    } catch (const std::invalid_argument& e) {
        fail(ErrorKind::data, std::string("subspace JSON: ") + e.what());
    }
}

inline json plot_to_json(const SummaryPlot& plot) {
    json pts = json::array();
    for (const auto& p : plot.points) pts.push_back(json{{"i", p.design_index}, {"y", to_json_array(p.y)}, {"f", p.f}});
    return json{{"qoi", plot.qoi_name}, {"m", plot.m}, {"points", std::move(pts)}};
}

inline json profile_to_json(const RidgeProfile& p) {
    return json{{"qoi", p.qoi_name},
                {"m", p.m},
                {"degree", p.degree},
                {"coefficients", to_json_array(p.coefficients)},
                {"training_rmse", p.training_rmse}};
}

} // namespace ridgeview
