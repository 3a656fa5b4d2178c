#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "ridgeview/error.hpp"

namespace ridgeview {

/// Global quadratic surrogate  f(x) ≈ ½ xᵀA x + cᵀx + d0.
///
/// `A` is stored symmetric; the gradient is therefore exactly `A x + c`.
struct QuadraticModel {
    Eigen::MatrixXd A;
    Eigen::VectorXd c;
    double d0 = 0.0;

    Eigen::Index dim() const { return c.size(); }

    /// Builds a model from an arbitrary square matrix, symmetrizing it.
    static QuadraticModel from_parts(const Eigen::MatrixXd& A, Eigen::VectorXd c, double d0) {
        if (A.rows() != A.cols() || A.rows() != c.size())
            fail(ErrorKind::usage, "quadratic model: A must be d x d with d = len(c)");
        QuadraticModel m;
        m.A = 0.5 * (A + A.transpose());
        m.c = std::move(c);
        m.d0 = d0;
        m.validate();
        return m;
    }

    void validate() const {
        if (A.rows() != c.size() || A.cols() != c.size())
            fail(ErrorKind::usage, "quadratic model: shape mismatch");
        if (!A.allFinite() || !c.allFinite() || !std::isfinite(d0))
            fail(ErrorKind::numerical, "quadratic model: non-finite coefficient");
        if (A != A.transpose())
            fail(ErrorKind::numerical, "quadratic model: A is not symmetric");
    }

    double evaluate(const Eigen::VectorXd& x) const {
        check_length(x);
        return 0.5 * x.dot(A * x) + c.dot(x) + d0;
    }

    /// ∇f(x) = A x + c.
    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
        check_length(x);
        return A * x + c;
    }

private:
    void check_length(const Eigen::VectorXd& x) const {
        if (x.size() != c.size())
            fail(ErrorKind::usage, "quadratic model: expected vector of length " +
                                       std::to_string(c.size()) + ", got " + std::to_string(x.size()));
    }
};

inline Eigen::VectorXd gradient(const QuadraticModel& model, const Eigen::VectorXd& x) {
    return model.gradient(x);
}

} // namespace ridgeview
