#pragma once

// Expected average cost: gain and bias from the Poisson equation and the
// average-cost policy iteration.

#include "prodinv/discounted.hpp"
#include "prodinv/steady_state.hpp"

#include <cmath>
#include <vector>

namespace prodinv {

struct GainBias {
    double gain = 0.0;
    Eigen::VectorXd bias;
    Eigen::VectorXd theta;            ///< invariant measure used for the normalization
    double poisson_residual = 0.0;    ///< ||Q h - (g 1 - r)||_inf
    double normalization_residual = 0.0; ///< |theta^T h|
};

/// Solves Q h = g 1 - r jointly with theta^T h = 0 for (g, h), given a
/// generator with a single recurrent class and its stationary law theta.
inline GainBias solve_poisson(const SparseMatrix& q, const Eigen::VectorXd& r, const Eigen::VectorXd& theta) {
    const Eigen::Index ns = q.rows();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(q.nonZeros() + 2 * ns));
    for (Eigen::Index col = 0; col < q.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(q, col); it; ++it) trips.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index k = 0; k < ns; ++k) {
        trips.emplace_back(k, ns, -1.0);
        if (theta[k] != 0.0) trips.emplace_back(ns, k, theta[k]);
    }
    SparseMatrix system(ns + 1, ns + 1);
    system.setFromTriplets(trips.begin(), trips.end());
    Eigen::VectorXd rhs(ns + 1);
    rhs.head(ns) = -r;
    rhs[ns] = 0.0;
    const Eigen::VectorXd x = sparse_solve(system, rhs, "Poisson equation");

    GainBias gb;
    gb.gain = x[ns];
    gb.bias = x.head(ns);
    gb.theta = theta;
    gb.poisson_residual = sup_norm(q * gb.bias - (Eigen::VectorXd::Constant(ns, gb.gain) - r));
    gb.normalization_residual = std::abs(theta.dot(gb.bias));
    return gb;
}

inline GainBias poisson_solve(const Policy& pol, const ModelParams& p) {
    const JointDist inv = invariant_measure_numeric(p, pol);
    const SparseMatrix q = generator_matrix(p, pol);
    const Eigen::VectorXd r = cost_vector(p, pol);
    GainBias gb = solve_poisson(q, r, inv.probs);
    const double scale = std::max(1.0, sup_norm(r));
    if (gb.poisson_residual > 1e-9 * scale || gb.normalization_residual > 1e-9 * scale)
        throw Error(ErrorKind::SolveFailed, "Poisson residual too large");
    return gb;
}

/// Long-run expected cost rate: theta . r under the policy.
inline double gain(const Policy& pol, const ModelParams& p) {
    const JointDist inv = invariant_measure_numeric(p, pol);
    return inv.probs.dot(cost_vector(p, pol));
}

/// sup_s | g - min_beta [ r(s,beta) + (Pi^beta h)(s) ] |
inline double acoe_residual(const GainBias& gb, const ModelParams& p, const ActionGrid& grid) {
    double worst = 0.0;
    for (std::size_t k = 0; k < num_states(p); ++k) {
        const State s = state_at(k, p);
        const GridMin m = argmin_over_grid(grid, [&](double b) { return lookahead(s, b, p, gb.bias); });
        worst = std::max(worst, std::abs(gb.gain - m.value));
    }
    return worst;
}

inline double acoe_residual(const GainBias& gb, const ModelParams& p) {
    return acoe_residual(gb, p, build_action_grid(p));
}

/// Keeps the incumbent rate wherever it already attains the grid minimum of
/// r + Pi h; elsewhere moves to the grid minimizer (smallest rate on ties).
inline Policy policy_improvement_average(const Policy& pol, const GainBias& gb, const ModelParams& p,
                                         const ActionGrid& grid) {
    Policy next = pol;
    for (std::size_t k = 0; k < num_states(p); ++k) {
        const State s = state_at(k, p);
        const double incumbent = lookahead(s, pol[k], p, gb.bias);
        const GridMin m = argmin_over_grid(grid, [&](double b) { return lookahead(s, b, p, gb.bias); });
        if (strictly_better(m.value, incumbent)) next[k] = grid[m.index];
    }
    return next;
}

inline Policy policy_improvement_average(const Policy& pol, const GainBias& gb, const ModelParams& p) {
    return policy_improvement_average(pol, gb, p, build_action_grid(p));
}

/// Per-state improvement g(prev) - [r(s, next) + Pi^{next} h_prev](s);
/// zero where the policy is kept, positive where it switched.
inline Eigen::VectorXd improvement_term(const Policy& next, const GainBias& prev, const ModelParams& p) {
    Eigen::VectorXd eps(static_cast<Eigen::Index>(num_states(p)));
    for (std::size_t k = 0; k < num_states(p); ++k)
        eps[static_cast<Eigen::Index>(k)] = prev.gain - lookahead(state_at(k, p), next[k], p, prev.bias);
    return eps;
}

struct AverageSolveReport {
    int iterations = 0;
    std::vector<double> gains; ///< g(beta_k) for every evaluated policy
    std::vector<int> changed_states; ///< states switched by each improvement step
    Policy policy;
    GainBias gain_bias;
    double acoe_residual = 0.0;
};

inline AverageSolveReport policy_iteration_average(const ModelParams& params, const Policy& pol0,
                                                   int max_iterations = 10'000) {
    const ModelParams p = validate_params(params);
    const ActionGrid grid = build_action_grid(p);
    if (pol0.size() != num_states(p) || !policy_on_grid(pol0, grid))
        throw Error(ErrorKind::BadArgument, "initial policy must assign grid rates to every state");

    AverageSolveReport rep;
    Policy pol = pol0;
    for (int k = 1; k <= max_iterations; ++k) {
        GainBias gb = poisson_solve(pol, p);
        rep.gains.push_back(gb.gain);
        rep.iterations = k;
        Policy next = policy_improvement_average(pol, gb, p, grid);
        int changed = 0;
        for (std::size_t s = 0; s < next.size(); ++s) changed += next[s] != pol[s] ? 1 : 0;
        if (changed == 0) {
            rep.policy = std::move(pol);
            rep.gain_bias = std::move(gb);
            rep.acoe_residual = acoe_residual(rep.gain_bias, p, grid);
            return rep;
        }
        rep.changed_states.push_back(changed);
        pol = std::move(next);
    }
    throw Error(ErrorKind::NonConvergence, "average-cost policy iteration hit the iteration cap");
}

inline AverageSolveReport policy_iteration_average(const ModelParams& params) {
    return policy_iteration_average(params, Policy(params, params.gamma_lo));
}

} // namespace prodinv
