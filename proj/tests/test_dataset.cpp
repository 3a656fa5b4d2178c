#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "ridgeview/dataset.hpp"

using namespace ridgeview;
namespace fs = std::filesystem;

namespace {

std::string error_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

DomainSpec two_dim() { return DomainSpec{{{0.0, 10.0}, {-2.0, 2.0}}}; }

} // namespace

TEST(Normalize, AffineMap) {
    const DomainSpec dom{{{0.0, 10.0}, {0.0, 10.0}, {-2.0, 2.0}}};
    const Eigen::Vector3d raw(5.0, 0.0, 1.0);
    const auto x = normalize_design(raw, dom);
    EXPECT_EQ(x[0], 0.0);
    EXPECT_EQ(x[1], -1.0);
    EXPECT_EQ(x[2], 0.5);
}

TEST(Normalize, OutOfBoundsReportsIndexAndValue) {
    const auto msg = error_of([] { normalize_design(Eigen::Vector2d(5.0, 2.5), two_dim()); });
    EXPECT_NE(msg.find("component 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2.5"), std::string::npos) << msg;
}

TEST(Normalize, InverseRoundTripProperty) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        DomainSpec dom;
        Eigen::VectorXd raw(6);
        for (int k = 0; k < 6; ++k) {
            const double lo = -100.0 * u(rng), hi = lo + 1e-3 + 200.0 * u(rng);
            dom.bounds.emplace_back(lo, hi);
            raw[k] = lo + u(rng) * (hi - lo);
        }
        const auto back = denormalize_design(normalize_design(raw, dom), dom);
        for (int k = 0; k < 6; ++k) ASSERT_NEAR(back[k], raw[k], 1e-12 * std::max(1.0, std::abs(raw[k])));
    }
}

TEST(DomainJson, ParsesAndRejects) {
    const auto dom = domain_from_json(json::parse(R"({"d": 2, "bounds": [[0, 10], [-2, 2]]})"));
    EXPECT_EQ(dom, two_dim());
    EXPECT_THROW(domain_from_json(json::parse(R"({"d": 3, "bounds": [[0, 10], [-2, 2]]})")), Error);
    EXPECT_THROW(domain_from_json(json::parse(R"({"d": 1, "bounds": [[1, 1]]})")), Error);
    EXPECT_THROW(domain_from_json(json::parse(R"({"d": 1, "bounds": [[0, 1]], "density": "normal"})")), Error);
    EXPECT_NO_THROW(domain_from_json(json::parse(R"({"d": 1, "bounds": [[0, 1]], "density": "uniform-hypercube"})")));
}

TEST(DesignCsv, ThreeRowTable) {
    const auto t = parse_design_csv("x1,x2,efficiency\n5,0,0.9\n0,2,0.8\n10,-2,0.85\n", two_dim());
    EXPECT_EQ(t.size(), 3u);
    EXPECT_EQ(t.qoi_names, std::vector<std::string>{"efficiency"});
    EXPECT_EQ(t.samples[0].x, Eigen::Vector2d(0.0, 0.0));
    EXPECT_EQ(t.samples[1].x, Eigen::Vector2d(-1.0, 1.0));
    EXPECT_EQ(t.samples[2].qoi.at("efficiency"), 0.85);
    EXPECT_EQ(t.geometry_key(2), "design_0002.stl");
}

TEST(DesignCsv, GeometryKeyColumnAndCrlf) {
    const auto t = parse_design_csv("x1,x2,pr,geometry_key\r\n1,1,2.0,blade_a.stl\r\n2,1,2.1,\r\n", two_dim());
    EXPECT_EQ(t.geometry_key(0), "blade_a.stl");
    EXPECT_EQ(t.geometry_key(1), "design_0001.stl");
}

TEST(DesignCsv, NaNNamesRow) {
    const auto msg = error_of([] { parse_design_csv("x1,x2,eff\n1,1,0.5\n2,1,NaN\n", two_dim(), "d.csv"); });
    EXPECT_NE(msg.find("non-finite"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("design 1"), std::string::npos) << msg;
}

TEST(DesignCsv, Errors) {
    EXPECT_NE(error_of([] { parse_design_csv("x1,x2,eff\n1,1\n", two_dim()); }).find("dimension mismatch"),
              std::string::npos);
    EXPECT_NE(error_of([] { parse_design_csv("x1,x1,eff\n1,1,1\n", two_dim()); }).find("duplicate header"),
              std::string::npos);
    EXPECT_NE(error_of([] { parse_design_csv("x1,x2,eff\n11,1,1\n", two_dim()); }).find("outside"),
              std::string::npos);
    EXPECT_NE(error_of([] { parse_design_csv("x1\n1\n", two_dim()); }).find("d = 2"), std::string::npos);
    EXPECT_NE(error_of([] { parse_design_csv("x1,x2,eff\n1,abc,1\n", two_dim()); }).find("malformed"),
              std::string::npos);
    EXPECT_NE(error_of([] { parse_design_csv("x1,x2,eff\n", two_dim()); }).find("no data rows"), std::string::npos);
}

TEST(DesignCsv, MissingFileNamesPath) {
    const auto msg = error_of([] { load_design_table("/nonexistent/missing.csv", two_dim()); });
    EXPECT_NE(msg.find("missing.csv"), std::string::npos);
}

TEST(DesignCsv, PaperSizedTableRoundTripsThroughFile) {
    const auto dom = DomainSpec::unit(25);
    auto t = sample_uniform_doe(dom, 548, 42);
    t = evaluate_oracle(SyntheticOracle::ridge_1d(random_orthonormal(25, 1, 1)), t, "pressure_ratio");
    const auto path = fs::temp_directory_path() / "ridgeview_test_548.csv";
    std::ofstream(path) << design_table_to_csv(t);
    const auto back = load_design_table(path, dom);
    fs::remove(path);
    ASSERT_EQ(back.size(), 548u);
    EXPECT_EQ(back.dim(), 25u);
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back.samples[i].qoi.at("pressure_ratio"), t.samples[i].qoi.at("pressure_ratio"));
        EXPECT_LE((back.samples[i].x - t.samples[i].x).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(Doe, DeterministicForSeed) {
    const auto a = sample_uniform_doe(DomainSpec::unit(3), 10, 7);
    const auto b = sample_uniform_doe(DomainSpec::unit(3), 10, 7);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(a.samples[i].x, b.samples[i].x);
    EXPECT_TRUE(a.qoi_names.empty());
}

TEST(Doe, UniformMoments) {
    const auto t = sample_uniform_doe(DomainSpec::unit(1), 100000, 1);
    double mean = 0.0, sq = 0.0;
    for (const auto& s : t.samples) {
        mean += s.x[0];
        sq += s.x[0] * s.x[0];
    }
    mean /= 1e5;
    const double var = sq / 1e5 - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(var, 1.0 / 3.0, 0.02);
}

TEST(Doe, PaperRegimeAndRange) {
    const auto t = sample_uniform_doe(DomainSpec::unit(25), 548, 42);
    EXPECT_EQ(t.size(), 548u);
    for (const auto& s : t.samples) {
        ASSERT_EQ(s.x.size(), 25);
        EXPECT_LE(s.x.cwiseAbs().maxCoeff(), 1.0);
    }
    EXPECT_THROW(sample_uniform_doe(DomainSpec::unit(2), 0, 1), Error);
}

TEST(Oracle, Ridge1dValue) {
    auto t = sample_uniform_doe(DomainSpec::unit(3), 1, 0);
    t.samples[0].x = Eigen::Vector3d(0.8, -0.4, 0.9);
    const auto out = evaluate_oracle(SyntheticOracle::ridge_1d(Eigen::Vector3d::UnitX()), t, "f");
    EXPECT_NEAR(out.samples[0].qoi.at("f"), 1.0, 1e-15);
}

TEST(Oracle, Ridge2dValue) {
    auto t = sample_uniform_doe(DomainSpec::unit(4), 1, 0);
    t.samples[0].x = Eigen::Vector4d(1, 1, 0, 0);
    Eigen::MatrixXd u = Eigen::MatrixXd::Identity(4, 2);
    EXPECT_EQ(evaluate_oracle(SyntheticOracle::ridge_2d(u), t, "f").samples[0].qoi.at("f"), 1.5);
}

TEST(Oracle, NoiseIsSeeded) {
    const auto t = sample_uniform_doe(DomainSpec::unit(5), 50, 3);
    const auto o = SyntheticOracle::ridge_1d(random_orthonormal(5, 1, 9), 0.1, 77);
    const auto a = evaluate_oracle(o, t, "f"), b = evaluate_oracle(o, t, "f");
    EXPECT_EQ(a.qoi_column("f"), b.qoi_column("f"));
    const auto clean = evaluate_oracle(SyntheticOracle::ridge_1d(o.directions), t, "f");
    EXPECT_GT((a.qoi_column("f") - clean.qoi_column("f")).norm(), 0.0);
}

TEST(Oracle, NoiselessIsPureFunctionOfX) {
    const auto o = SyntheticOracle::ridge_2d(random_orthonormal(6, 2, 4));
    auto t1 = sample_uniform_doe(DomainSpec::unit(6), 20, 1);
    auto t2 = sample_uniform_doe(DomainSpec::unit(6), 20, 2);
    t2.samples[7].x = t1.samples[3].x;
    const auto a = evaluate_oracle(o, t1, "f"), b = evaluate_oracle(o, t2, "f");
    EXPECT_EQ(a.samples[3].qoi.at("f"), b.samples[7].qoi.at("f"));
}

TEST(Oracle, DimensionMismatch) {
    const auto t = sample_uniform_doe(DomainSpec::unit(3), 4, 1);
    EXPECT_THROW(evaluate_oracle(SyntheticOracle::ridge_1d(Eigen::Vector2d::UnitX()), t, "f"), Error);
    Eigen::MatrixXd skew(3, 1);
    skew << 1.0, 1.0, 0.0;
    EXPECT_THROW(SyntheticOracle::ridge_1d(skew), Error);
}

TEST(Oracle, RidgePropertyOrthogonalMoves) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    for (int kind = 0; kind < 2; ++kind) {
        const Eigen::MatrixXd U = random_orthonormal(8, kind + 1, 100 + static_cast<std::uint64_t>(kind));
        const auto o = kind == 0 ? SyntheticOracle::ridge_1d(U) : SyntheticOracle::ridge_2d(U);
        for (int trial = 0; trial < 200; ++trial) {
            Eigen::VectorXd x(8), h(8);
            for (int k = 0; k < 8; ++k) {
                x[k] = g(rng) * 0.3;
                h[k] = g(rng);
            }
            h -= U * (U.transpose() * h);
            EXPECT_NEAR(o.evaluate(x + h), o.evaluate(x), 1e-10);
        }
    }
}
