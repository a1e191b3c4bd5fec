#pragma once

#include "prodinv/error.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <string>

namespace prodinv {

/// Direct sparse LU solve of a x = b; SolveFailed when the factorization breaks down.
inline Eigen::VectorXd sparse_solve(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b,
                                    const std::string& what) {
    Eigen::SparseMatrix<double> m = a;
    m.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.analyzePattern(m);
    lu.factorize(m);
    if (lu.info() != Eigen::Success)
        throw Error(ErrorKind::SolveFailed, what + ": factorization failed (" + lu.lastErrorMessage() + ")");
    Eigen::VectorXd x = lu.solve(b);
    if (lu.info() != Eigen::Success || !x.allFinite())
        throw Error(ErrorKind::SolveFailed, what + ": back-substitution failed");
    return x;
}

inline double sup_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

} // namespace prodinv
