#pragma once

// Synthetic recovery check: planted ridge directions in the 25-parameter,
// 548-sample regime, run through the full pipeline and compared against the
// truth.

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "ridgeview/dataset.hpp"
#include "ridgeview/surrogate.hpp"

namespace ridgeview {

struct RecoveryCase {
    std::string name;
    OracleKind kind = OracleKind::exact_ridge_1d;
    double noise_sd = 0.0;
    double angle_tolerance = 1e-6;
    double rmse_tolerance = 1e-6;   // held-out, against the noise-free truth
    double time_limit_s = 10.0;
};

struct RecoveryResult {
    RecoveryCase spec;
    Eigen::Index expected_m = 1;
    Eigen::Index found_m = 0;
    double angle = 0.0;
    double gap_ratio = 0.0;     // lambda_{m+1} / lambda_m
    double heldout_rmse = 0.0;
    double seconds = 0.0;

    bool passed() const {
        return found_m == expected_m && angle <= spec.angle_tolerance && heldout_rmse <= spec.rmse_tolerance &&
               seconds <= spec.time_limit_s;
    }
};

struct SyntheticRegime {
    Eigen::Index d = 25;
    std::size_t n = 548;
    std::size_t heldout = 1000;
};

inline std::vector<RecoveryCase> default_recovery_cases() {
    return {
        {"ridge1d_exact", OracleKind::exact_ridge_1d, 0.0, 1e-6, 1e-6, 10.0},
        {"ridge2d_exact", OracleKind::exact_ridge_2d, 0.0, 1e-6, 1e-6, 10.0},
        {"ridge1d_noisy", OracleKind::exact_ridge_1d, 0.01, 0.05, 0.05, 10.0},
        {"ridge2d_noisy", OracleKind::exact_ridge_2d, 0.01, 0.05, 0.05, 10.0},
    };
}

inline RecoveryResult run_recovery_case(const RecoveryCase& c, std::uint64_t seed, const SyntheticRegime& regime = {},
                                        const PipelineOptions& options = {}) {
    RecoveryResult r;
    r.spec = c;
    r.expected_m = c.kind == OracleKind::exact_ridge_2d ? 2 : 1;
    const auto start = std::chrono::steady_clock::now();

    const Eigen::MatrixXd U = random_orthonormal(regime.d, r.expected_m, seed + 1);
    const auto oracle = c.kind == OracleKind::exact_ridge_2d ? SyntheticOracle::ridge_2d(U, c.noise_sd, seed + 2)
                                                             : SyntheticOracle::ridge_1d(U.col(0), c.noise_sd, seed + 2);
    const auto table = evaluate_oracle(oracle, sample_uniform_doe(DomainSpec::unit(regime.d), regime.n, seed), "f");
    const auto a = analyze_qoi(table, "f", options);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    r.found_m = a.subspace.m;
    r.angle = r.found_m == r.expected_m ? principal_angle(a.subspace.W1(), U) : std::numbers::pi / 2;
    const auto k = r.expected_m;
    r.gap_ratio = a.subspace.eigenvalues[k] / a.subspace.eigenvalues[k - 1];

    const auto held = sample_uniform_doe(DomainSpec::unit(regime.d), regime.heldout, seed + 3);
    double sq = 0.0;
    for (const auto& s : held.samples) {
        const double e = predict_ridge(a.profile, a.subspace, s.x) - oracle.evaluate(s.x);
        sq += e * e;
    }
    r.heldout_rmse = std::sqrt(sq / static_cast<double>(held.size()));
    return r;
}

} // namespace ridgeview
