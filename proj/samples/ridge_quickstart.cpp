// Fits a planted 2D ridge and prints the recovered subspace.
//
//   ./ridge_quickstart [d] [n]

#include <cstdio>
#include <cstdlib>

#include "ridgeview/surrogate.hpp"

int main(int argc, char** argv) {
    using namespace ridgeview;
    const Eigen::Index d = argc > 1 ? std::atoi(argv[1]) : 6;
    const std::size_t n = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 200;

    const Eigen::MatrixXd truth = random_orthonormal(d, 2, 1);
    auto table = sample_uniform_doe(DomainSpec::unit(static_cast<std::size_t>(d)), n, 2);
    table = evaluate_oracle(SyntheticOracle::ridge_2d(truth, 0.001, 3), table, "efficiency");

    try {
        const auto a = analyze_qoi(table, "efficiency");
        std::printf("m = %ld%s\n", static_cast<long>(a.subspace.m), a.subspace.degenerate ? " (degenerate)" : "");
        for (Eigen::Index k = 0; k < std::min<Eigen::Index>(4, d); ++k)
            std::printf("lambda_%ld = %.6e\n", static_cast<long>(k + 1), a.subspace.eigenvalues[k]);
        std::printf("angle to planted span = %.3e rad\n", principal_angle(a.subspace.W1(), truth));
        std::printf("profile rmse = %.3e\n", a.profile.training_rmse);
        std::printf("%s\n", dump_json(plot_to_json(a.plot)).substr(0, 200).c_str());
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
