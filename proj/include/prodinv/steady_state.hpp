#pragma once

// Stationary behaviour of the production-inventory chain: the closed-form
// product-form law for a constant production rate and a numeric invariant
// measure for arbitrary policies.

#include "prodinv/linalg.hpp"
#include "prodinv/model.hpp"

#include <cmath>
#include <vector>

namespace prodinv {

struct StabilityReport {
    double rho = 0.0;
    bool stable = false;
    std::vector<double> phi;     ///< stationary law of the inventory-level generator A, truncated
    double arrival_drift = 0.0;  ///< phi A0 e
    double service_drift = 0.0;  ///< phi A2 e
};

/// Queue stability for a constant production rate beta. The drift terms use
/// the closed form phi_k = (1 - beta/mu)(beta/mu)^k over the infinite lattice:
/// phi A0 e = lambda (1 - phi_0) and phi A2 e = mu (1 - phi_0).
inline StabilityReport stability_check(const ModelParams& p, double beta) {
    if (!(beta > 0.0)) throw Error(ErrorKind::BadArgument, "production rate must be positive");
    if (beta >= p.mu) throw Error(ErrorKind::PhiUndefined, "phi requires beta < mu");
    StabilityReport rep;
    rep.rho = p.lambda / p.mu;
    rep.stable = rep.rho < 1.0;
    const double ratio = beta / p.mu;
    rep.phi.resize(static_cast<std::size_t>(p.i_max) + 1);
    double term = 1.0 - ratio;
    for (auto& x : rep.phi) {
        x = term;
        term *= ratio;
    }
    rep.arrival_drift = p.lambda * ratio;
    rep.service_drift = p.mu * ratio;
    return rep;
}

struct InventoryDist {
    std::vector<double> raw;   ///< untruncated geometric terms (1 - b/l)(b/l)^i
    std::vector<double> probs; ///< raw renormalized over 0..i_max
    double tail_mass = 0.0;    ///< mass of the infinite law beyond i_max
};

inline InventoryDist inventory_dist_analytic(double lambda, double beta, int i_max) {
    if (i_max < 0) throw Error(ErrorKind::BadTruncation, "i_max must be >= 0");
    if (!(lambda > 0.0) || !(beta > 0.0))
        throw Error(ErrorKind::BadArgument, "rates must be positive");
    if (std::abs(beta - lambda) <= kGridTolerance * lambda)
        throw Error(ErrorKind::DegenerateRatio, "beta equals lambda; geometric law undefined");
    if (beta > lambda)
        throw Error(ErrorKind::UnstableInventory, "beta > lambda; inventory has no stationary law");
    const double ratio = beta / lambda;
    InventoryDist d;
    d.raw.resize(static_cast<std::size_t>(i_max) + 1);
    double term = 1.0 - ratio;
    double total = 0.0;
    for (auto& x : d.raw) {
        x = term;
        total += term;
        term *= ratio;
    }
    d.tail_mass = std::pow(ratio, i_max + 1);
    d.probs.resize(d.raw.size());
    for (std::size_t k = 0; k < d.raw.size(); ++k) d.probs[k] = d.raw[k] / total;
    return d;
}

/// xi = 1 - lambda/mu, the level-0 normalization of the product form.
inline double normalization_constant(const ModelParams& p) { return 1.0 - p.lambda / p.mu; }

struct JointDist {
    Eigen::VectorXd probs; ///< state-indexed (row-major n, i)
    Eigen::VectorXd raw;   ///< product form before truncation renormalization (analytic only)
    double residual = 0.0; ///< ||theta Q||_inf for numeric solves
};

inline JointDist joint_dist_analytic(const ModelParams& p, double beta) {
    if (p.lambda >= p.mu) throw Error(ErrorKind::Unstable, "lambda must be below mu");
    const InventoryDist inv = inventory_dist_analytic(p.lambda, beta, p.i_max);
    const double rho = p.lambda / p.mu;
    const double xi = normalization_constant(p);
    const auto ns = static_cast<Eigen::Index>(num_states(p));
    JointDist d;
    d.raw.resize(ns);
    double level = xi;
    for (int n = 0; n <= p.n_max; ++n) {
        for (int i = 0; i <= p.i_max; ++i)
            d.raw[static_cast<Eigen::Index>(state_index({n, i}, p))] = level * inv.raw[static_cast<std::size_t>(i)];
        level *= rho;
    }
    d.probs = d.raw / d.raw.sum();
    return d;
}

/// Stationary law of an arbitrary generator with one recurrent class: solves
/// theta Q = 0 with the last balance equation replaced by sum(theta) = 1.
inline Eigen::VectorXd stationary_distribution(const SparseMatrix& q) {
    const Eigen::Index ns = q.rows();
    if (ns == 0) throw Error(ErrorKind::BadArgument, "empty generator");
    SparseMatrix a = q.transpose();
    a.makeCompressed();
    // Replace the last row of Q^T with ones.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(a.nonZeros() + ns));
    for (Eigen::Index col = 0; col < a.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(a, col); it; ++it)
            if (it.row() != ns - 1) trips.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index col = 0; col < ns; ++col) trips.emplace_back(ns - 1, col, 1.0);
    SparseMatrix system(ns, ns);
    system.setFromTriplets(trips.begin(), trips.end());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ns);
    rhs[ns - 1] = 1.0;
    Eigen::VectorXd theta = sparse_solve(system, rhs, "invariant measure");
    for (Eigen::Index k = 0; k < ns; ++k) {
        if (theta[k] < -1e-12)
            throw Error(ErrorKind::SolveFailed, "invariant measure has a negative entry");
        if (theta[k] < 0.0) theta[k] = 0.0;
    }
    return theta / theta.sum();
}

inline JointDist invariant_measure_numeric(const ModelParams& p, const Policy& pol) {
    require_unichain(p, pol);
    const SparseMatrix q = generator_matrix(p, pol);
    JointDist d;
    d.probs = stationary_distribution(q);
    d.residual = sup_norm(q.transpose() * d.probs);
    if (d.residual > 1e-8)
        throw Error(ErrorKind::SolveFailed, "balance residual " + std::to_string(d.residual));
    return d;
}

inline double total_variation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return 0.5 * (a - b).cwiseAbs().sum();
}

/// Probability mass of each queue level n (sum over inventory).
inline std::vector<double> level_masses(const Eigen::VectorXd& probs, const ModelParams& p) {
    std::vector<double> out(static_cast<std::size_t>(p.n_max) + 1, 0.0);
    for (std::size_t k = 0; k < num_states(p); ++k)
        out[static_cast<std::size_t>(state_at(k, p).n)] += probs[static_cast<Eigen::Index>(k)];
    return out;
}

} // namespace prodinv
