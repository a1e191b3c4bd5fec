#pragma once

// Discounted-cost control: value iteration on the uniformized Bellman
// operator and policy iteration with exact linear-solve evaluation.

#include "prodinv/linalg.hpp"
#include "prodinv/model.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace prodinv {

using ValueFunction = Eigen::VectorXd;

/// Result of minimizing a score over the action grid. Ties go to the
/// smallest rate because the scan is ascending with a strict comparison.
struct GridMin {
    std::size_t index = 0;
    double value = std::numeric_limits<double>::infinity();
};

template <class Score>
inline GridMin argmin_over_grid(const ActionGrid& grid, Score&& score) {
    GridMin best;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double v = score(grid[k]);
        if (v < best.value) best = {k, v};
    }
    return best;
}

/// r(s, beta) + (Pi^beta f)(s): the continuous-time one-step lookahead.
template <class Vec>
inline double lookahead(const State& s, double beta, const ModelParams& p, const Vec& f) {
    return stage_cost(s, beta, p) + generator_apply(s, beta, p, f);
}

inline double contraction_modulus(const ModelParams& p) {
    const double big = uniformization_rate(p);
    return big / (big + p.alpha);
}

/// Uniformized discounted backup of u at s under beta with stage cost c:
/// c/(R+alpha+lambda+mu) + (R+lambda+mu)/(R+alpha+lambda+mu) * sum_j p(s,j) u(j).
template <class Vec>
inline double discounted_backup(const State& s, double beta, double c, const ModelParams& p, const Vec& u) {
    const double big = uniformization_rate(p);
    const double denom = big + p.alpha;
    double expected = 0.0;
    double exit = 0.0;
    for_each_transition(s, beta, p, [&](const State& to, double r) {
        expected += (r / big) * u[state_index(to, p)];
        exit += r;
    });
    expected += (1.0 - exit / big) * u[state_index(s, p)];
    return c / denom + (big / denom) * expected;
}

template <class Vec>
inline double discounted_backup(const State& s, double beta, const ModelParams& p, const Vec& u) {
    return discounted_backup(s, beta, stage_cost(s, beta, p), p, u);
}

struct BackupResult {
    ValueFunction values;
    Policy policy;
};

struct ModelCost {
    double operator()(const State& s, double beta, const ModelParams& p) const { return stage_cost(s, beta, p); }
};

/// One sweep of the uniformized Bellman operator over every state. `cost`
/// defaults to the model's stage cost.
template <class CostFn = ModelCost>
inline BackupResult bellman_backup(const ValueFunction& u, const ModelParams& p, const ActionGrid& grid,
                                   CostFn cost = {}) {
    const std::size_t ns = num_states(p);
    if (static_cast<std::size_t>(u.size()) != ns)
        throw Error(ErrorKind::BadArgument, "value function size does not match the state space");
    BackupResult out{ValueFunction(u.size()), Policy(p, grid.front())};
    for (std::size_t k = 0; k < ns; ++k) {
        const State s = state_at(k, p);
        const GridMin m =
            argmin_over_grid(grid, [&](double b) { return discounted_backup(s, b, cost(s, b, p), p, u); });
        out.values[static_cast<Eigen::Index>(k)] = m.value;
        out.policy[k] = grid[m.index];
    }
    return out;
}

struct DiscountedSolveReport {
    int iterations = 0;
    double final_sup_diff = 0.0;
    double contraction_modulus = 0.0;
    double hjb_residual = 0.0;
    Policy policy;
    ValueFunction values;
    std::vector<double> sup_diffs; ///< VI: ||v_k - v_{k-1}||; PI: empty
};

/// sup_s | alpha V(s) - min_beta [ r(s,beta) + (Pi^beta V)(s) ] |
inline double hjb_residual_discounted(const ValueFunction& v, const ModelParams& p, const ActionGrid& grid) {
    double worst = 0.0;
    for (std::size_t k = 0; k < num_states(p); ++k) {
        const State s = state_at(k, p);
        const GridMin m = argmin_over_grid(grid, [&](double b) { return lookahead(s, b, p, v); });
        worst = std::max(worst, std::abs(p.alpha * v[static_cast<Eigen::Index>(k)] - m.value));
    }
    return worst;
}

/// Upper bound on VI iterations for sup-norm tolerance tol.
inline int vi_iteration_bound(double kappa, double tol, double first_norm) {
    const double bound = std::log(tol * (1.0 - kappa) / std::max(1.0, first_norm)) / std::log(kappa);
    return static_cast<int>(std::ceil(std::max(bound, 0.0))) + 1;
}

using IterateObserver = std::function<void(int, const ValueFunction&)>;

inline DiscountedSolveReport value_iteration(const ModelParams& params, double tol,
                                             const IterateObserver& observe = {},
                                             int max_iterations = 1'000'000) {
    const ModelParams p = validate_params(params, true);
    if (!(tol > 0.0)) throw Error(ErrorKind::BadArgument, "tolerance must be positive");
    const ActionGrid grid = build_action_grid(p);

    DiscountedSolveReport rep;
    rep.contraction_modulus = contraction_modulus(p);
    ValueFunction v = ValueFunction::Zero(static_cast<Eigen::Index>(num_states(p)));
    if (observe) observe(0, v);
    for (int k = 1; k <= max_iterations; ++k) {
        BackupResult next = bellman_backup(v, p, grid);
        const double diff = sup_norm(next.values - v);
        rep.sup_diffs.push_back(diff);
        v = std::move(next.values);
        rep.policy = std::move(next.policy);
        rep.iterations = k;
        if (observe) observe(k, v);
        if (diff <= tol) {
            rep.final_sup_diff = diff;
            rep.values = v;
            rep.hjb_residual = hjb_residual_discounted(v, p, grid);
            return rep;
        }
    }
    throw Error(ErrorKind::NonConvergence, "value iteration hit the iteration cap");
}

/// Solves (alpha I - Q) V = r for a generator Q and cost-rate vector r.
inline ValueFunction solve_discounted(const SparseMatrix& q, const Eigen::VectorXd& r, double alpha) {
    SparseMatrix id(q.rows(), q.cols());
    id.setIdentity();
    const SparseMatrix a = alpha * id - q;
    ValueFunction v = sparse_solve(a, r, "discounted policy evaluation");
    const double residual = sup_norm(a * v - r);
    if (residual > 1e-10 * std::max(1.0, sup_norm(r)))
        throw Error(ErrorKind::SolveFailed, "discounted evaluation residual " + std::to_string(residual));
    return v;
}

/// Exact value of a stationary policy: (alpha I - Q) V = r.
inline ValueFunction policy_evaluation_discounted(const Policy& pol, const ModelParams& params) {
    const ModelParams p = validate_params(params, true);
    if (pol.size() != num_states(p))
        throw Error(ErrorKind::BadArgument, "policy size does not match the state space");
    return solve_discounted(generator_matrix(p, pol), cost_vector(p, pol), p.alpha);
}

/// Relative slack under which a candidate action is not a strict improvement;
/// absorbs round-off in the exactly solved value.
inline constexpr double kImprovementRelTol = 1e-11;

inline bool strictly_better(double candidate, double incumbent) {
    return candidate < incumbent - kImprovementRelTol * (1.0 + std::abs(incumbent));
}

/// Switches a state only when some grid rate strictly lowers
/// D(beta~) = r + Pi^{beta~} V below D(pol(s)) = alpha V(s); the switch goes to
/// the grid minimizer.
inline Policy policy_improvement_discounted(const Policy& pol, const ValueFunction& v, const ModelParams& p,
                                            const ActionGrid& grid) {
    Policy next = pol;
    for (std::size_t k = 0; k < num_states(p); ++k) {
        const State s = state_at(k, p);
        const double incumbent = lookahead(s, pol[k], p, v);
        const GridMin m = argmin_over_grid(grid, [&](double b) { return lookahead(s, b, p, v); });
        if (strictly_better(m.value, incumbent)) next[k] = grid[m.index];
    }
    return next;
}

inline Policy policy_improvement_discounted(const Policy& pol, const ValueFunction& v, const ModelParams& p) {
    return policy_improvement_discounted(pol, v, p, build_action_grid(p));
}

inline DiscountedSolveReport policy_iteration_discounted(const ModelParams& params, const Policy& pol0,
                                                         const IterateObserver& observe = {},
                                                         int max_iterations = 10'000) {
    const ModelParams p = validate_params(params, true);
    const ActionGrid grid = build_action_grid(p);
    if (pol0.size() != num_states(p) || !policy_on_grid(pol0, grid))
        throw Error(ErrorKind::BadArgument, "initial policy must assign grid rates to every state");

    DiscountedSolveReport rep;
    rep.contraction_modulus = contraction_modulus(p);
    Policy pol = pol0;
    for (int k = 1; k <= max_iterations; ++k) {
        ValueFunction v = policy_evaluation_discounted(pol, p);
        if (observe) observe(k, v);
        Policy next = policy_improvement_discounted(pol, v, p, grid);
        rep.iterations = k;
        if (next == pol) {
            rep.policy = std::move(pol);
            rep.values = std::move(v);
            rep.hjb_residual = hjb_residual_discounted(rep.values, p, grid);
            return rep;
        }
        pol = std::move(next);
    }
    throw Error(ErrorKind::NonConvergence, "discounted policy iteration hit the iteration cap");
}

inline DiscountedSolveReport policy_iteration_discounted(const ModelParams& params) {
    return policy_iteration_discounted(params, Policy(params, params.gamma_lo));
}

} // namespace prodinv
