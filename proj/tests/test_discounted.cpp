#include "oracles.hpp"
#include "prodinv/discounted.hpp"
#include "prodinv/pac_sim.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace prodinv;

namespace {

ModelParams zero_costs() {
    ModelParams p;
    p.h = p.c1 = p.c2 = p.c3 = 0.0;
    return p;
}

/// Entrywise minimum of exactly evaluated values over all 2^9 policies.
Eigen::VectorXd brute_force_discounted_optimum(const ModelParams& p) {
    const int ns = static_cast<int>(num_states(p));
    Eigen::VectorXd best = Eigen::VectorXd::Constant(ns, std::numeric_limits<double>::infinity());
    for (const auto& pol : oracle::all_policies(ns, {0.5, 1.0}))
        best = best.cwiseMin(oracle::discounted_value(p, pol));
    return best;
}

} // namespace

TEST(BellmanBackup, ZeroCostFixedPoint) {
    const ModelParams p = zero_costs();
    const ActionGrid grid = build_action_grid(p);
    const BackupResult out = bellman_backup(ValueFunction::Zero(25), p, grid);
    EXPECT_EQ(out.values.cwiseAbs().maxCoeff(), 0.0);
    for (double b : out.policy.rates()) EXPECT_EQ(b, p.gamma_lo);
}

TEST(BellmanBackup, FirstStepIsScaledMyopicCost) {
    const ModelParams p;
    const ActionGrid grid = build_action_grid(p);
    const BackupResult out = bellman_backup(ValueFunction::Zero(25), p, grid);
    const double denom = uniformization_rate(p) + p.alpha;
    EXPECT_EQ(out.values[0], 0.0);
    for (std::size_t k = 0; k < 25; ++k) {
        const State s = state_at(k, p);
        double best = std::numeric_limits<double>::infinity();
        for (double b : grid.rates()) best = std::min(best, stage_cost(s, b, p) / denom);
        EXPECT_NEAR(out.values[static_cast<Eigen::Index>(k)], best, 1e-12);
    }
}

TEST(BellmanBackup, MatchesExhaustiveTwoActionEvaluation) {
    const ModelParams p = oracle::small_params();
    const ActionGrid grid = build_action_grid(p);
    ASSERT_EQ(grid.size(), 2u);
    std::mt19937_64 gen(23);
    std::uniform_real_distribution<double> u(0.0, 500.0);
    const double big = uniformization_rate(p);
    for (int trial = 0; trial < 20; ++trial) {
        ValueFunction v(9);
        for (int k = 0; k < 9; ++k) v[k] = u(gen);
        const BackupResult out = bellman_backup(v, p, grid);
        Eigen::VectorXd best = Eigen::VectorXd::Constant(9, 1e300);
        Eigen::VectorXd arg(9);
        for (double beta : {0.5, 1.0}) {
            const std::vector<double> pol(9, beta);
            const Eigen::MatrixXd prob = oracle::generator(p, pol) / big + Eigen::MatrixXd::Identity(9, 9);
            const Eigen::VectorXd val = (oracle::costs(p, pol) + big * prob * v) / (big + p.alpha);
            for (int k = 0; k < 9; ++k)
                if (val[k] < best[k] - 1e-12) {
                    best[k] = val[k];
                    arg[k] = beta;
                }
        }
        EXPECT_LE((out.values - best).cwiseAbs().maxCoeff(), 1e-10);
        for (int k = 0; k < 9; ++k) EXPECT_EQ(out.policy[static_cast<std::size_t>(k)], arg[k]);
    }
}

TEST(ValueIteration, ReferenceConfigurationConvergesWithinBound) {
    const ModelParams p;
    const ActionGrid grid = build_action_grid(p);
    const DiscountedSolveReport rep = value_iteration(p, 0.001);
    EXPECT_LE(rep.final_sup_diff, 0.001);
    EXPECT_DOUBLE_EQ(rep.contraction_modulus, 10.0 / 10.7);
    const double first = bellman_backup(ValueFunction::Zero(25), p, grid).values.lpNorm<Eigen::Infinity>();
    EXPECT_LE(rep.iterations, vi_iteration_bound(rep.contraction_modulus, 0.001, first));
    EXPECT_LE(rep.hjb_residual, 0.001 * (p.alpha + uniformization_rate(p)));
}

TEST(ValueIteration, ZeroCostsConvergeImmediately) {
    const DiscountedSolveReport rep = value_iteration(zero_costs(), 0.001);
    EXPECT_EQ(rep.iterations, 1);
    EXPECT_EQ(rep.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ValueIteration, WithinToleranceOfBruteForceOptimum) {
    const ModelParams p = oracle::small_params();
    const double tol = 1e-6;
    const DiscountedSolveReport rep = value_iteration(p, tol);
    const Eigen::VectorXd best = brute_force_discounted_optimum(p);
    EXPECT_LE((rep.values - best).cwiseAbs().maxCoeff(), tol / (1.0 - rep.contraction_modulus));
}

TEST(ValueIteration, IteratesAreMonotoneNondecreasing) {
    ValueFunction prev;
    bool ok = true;
    value_iteration(ModelParams{}, 0.001, [&](int k, const ValueFunction& v) {
        if (k > 0 && (v - prev).minCoeff() < 0.0) ok = false;
        prev = v;
    });
    EXPECT_TRUE(ok);
}

TEST(BellmanBackup, ContractionOnRandomPairs) {
    const ModelParams p;
    const ActionGrid grid = build_action_grid(p);
    const double kappa = contraction_modulus(p);
    std::mt19937_64 gen(29);
    std::uniform_real_distribution<double> u(-2000.0, 2000.0);
    for (int trial = 0; trial < 20; ++trial) {
        ValueFunction a(25), b(25);
        for (int k = 0; k < 25; ++k) {
            a[k] = u(gen);
            b[k] = u(gen);
        }
        const double lhs = (bellman_backup(a, p, grid).values - bellman_backup(b, p, grid).values).lpNorm<Eigen::Infinity>();
        EXPECT_LE(lhs, kappa * (a - b).lpNorm<Eigen::Infinity>() * (1 + 1e-12));
    }
}

TEST(BellmanBackup, ConstantCostShiftMovesValuesByShiftOverAlpha) {
    const ModelParams p;
    const ActionGrid grid = build_action_grid(p);
    const double shift = 37.5;
    auto shifted = [&](const State& s, double b, const ModelParams& q) { return stage_cost(s, b, q) + shift; };
    ValueFunction v = ValueFunction::Zero(25), w = ValueFunction::Zero(25);
    Policy pv, pw;
    for (int k = 0; k < 2000; ++k) {
        BackupResult a = bellman_backup(v, p, grid);
        BackupResult b = bellman_backup(w, p, grid, shifted);
        v = a.values;
        w = b.values;
        pv = a.policy;
        pw = b.policy;
    }
    EXPECT_LE((w - v - ValueFunction::Constant(25, shift / p.alpha)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_EQ(pv, pw);
}

TEST(PolicyEvaluation, ZeroAndConstantCosts) {
    const ModelParams p0 = zero_costs();
    EXPECT_EQ(policy_evaluation_discounted(Policy(p0, 1.0), p0).cwiseAbs().maxCoeff(), 0.0);

    const ModelParams p;
    const Policy pol(p, 1.3);
    const double c = 12.0;
    const ValueFunction v = solve_discounted(generator_matrix(p, pol), Eigen::VectorXd::Constant(25, c), p.alpha);
    EXPECT_LE((v - ValueFunction::Constant(25, c / p.alpha)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PolicyEvaluation, MatchesDenseOracle) {
    const ModelParams p;
    std::mt19937_64 gen(31);
    const ActionGrid grid = build_action_grid(p);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> rates(25);
        for (auto& r : rates) r = grid[gen() % grid.size()];
        const ValueFunction v = policy_evaluation_discounted(Policy(p, rates), p);
        EXPECT_LE((v - oracle::discounted_value(p, rates)).cwiseAbs().maxCoeff(), 1e-9);
    }
}

// Monte Carlo estimate of E int_0^inf e^{-alpha t} r dt from (2,2) under beta = 1.
TEST(PolicyEvaluation, AgreesWithMonteCarloDiscountedCost) {
    const ModelParams p;
    const Policy pol(p, 1.0);
    const ValueFunction v = policy_evaluation_discounted(pol, p);
    const State start{2, 2};
    const int paths = 100000;
    const double horizon = 40.0; // e^{-0.7 * 40} ~ 7e-13 of the remaining mass
    double sum = 0.0, sumsq = 0.0;
    for (int k = 0; k < paths; ++k) {
        double acc = 0.0;
        simulate_path(pol, start, Horizon::of_time(horizon), static_cast<std::uint64_t>(k) + 1000, p,
                      [&](const State& s, double beta, double a, double d) {
                          acc += stage_cost(s, beta, p) * (std::exp(-p.alpha * a) - std::exp(-p.alpha * (a + d))) / p.alpha;
                      });
        sum += acc;
        sumsq += acc * acc;
    }
    const double mean = sum / paths;
    const double se = std::sqrt((sumsq / paths - mean * mean) / paths);
    EXPECT_NEAR(mean, v[static_cast<Eigen::Index>(state_index(start, p))], 4.0 * se);
}

TEST(PolicyImprovement, OptimalPolicyIsKept) {
    const ModelParams p;
    const DiscountedSolveReport rep = policy_iteration_discounted(p);
    EXPECT_EQ(policy_improvement_discounted(rep.policy, rep.values, p), rep.policy);
}

TEST(PolicyImprovement, ImprovedPolicyCostsNoMore) {
    const ModelParams p;
    const ActionGrid grid = build_action_grid(p);
    std::mt19937_64 gen(37);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> rates(25);
        for (auto& r : rates) r = grid[gen() % grid.size()];
        const Policy pol(p, rates);
        const ValueFunction v = policy_evaluation_discounted(pol, p);
        const Policy next = policy_improvement_discounted(pol, v, p, grid);
        const ValueFunction w = policy_evaluation_discounted(next, p);
        EXPECT_LE((w - v).maxCoeff(), 1e-9);
    }
}

TEST(PolicyImprovement, TwoActionToySwitchesImprovableState) {
    const ModelParams p = oracle::small_params();
    const ActionGrid grid = build_action_grid(p);
    const Policy pol(p, 0.5);
    const ValueFunction v = policy_evaluation_discounted(pol, p);
    const Policy next = policy_improvement_discounted(pol, v, p, grid);
    for (std::size_t k = 0; k < 9; ++k) {
        const State s = state_at(k, p);
        const double keep = lookahead(s, 0.5, p, v);
        const double other = lookahead(s, 1.0, p, v);
        EXPECT_EQ(next[k], other < keep - 1e-9 ? 1.0 : 0.5) << "state " << s.n << "," << s.i;
    }
    EXPECT_NE(next, pol);
}

TEST(PolicyIteration, AgreesWithValueIterationOnReferenceConfig) {
    const ModelParams p;
    const DiscountedSolveReport vi = value_iteration(p, 0.001);
    const DiscountedSolveReport pi = policy_iteration_discounted(p);
    EXPECT_EQ(vi.policy, pi.policy);
    EXPECT_LE((vi.values - pi.values).lpNorm<Eigen::Infinity>(), 0.001 / (1.0 - vi.contraction_modulus));
    EXPECT_LE(pi.hjb_residual, 1e-8);
}

TEST(PolicyIteration, ZeroCostsStopAtInitialPolicy) {
    const ModelParams p = zero_costs();
    const DiscountedSolveReport rep = policy_iteration_discounted(p);
    EXPECT_EQ(rep.iterations, 1);
    EXPECT_EQ(rep.policy, Policy(p, p.gamma_lo));
}

TEST(PolicyIteration, MatchesBruteForceOptimum) {
    const ModelParams p = oracle::small_params();
    const DiscountedSolveReport rep = policy_iteration_discounted(p);
    EXPECT_LE((rep.values - brute_force_discounted_optimum(p)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(PolicyIteration, ValuesDecreaseAcrossIterations) {
    const ModelParams p;
    const ActionGrid grid = build_action_grid(p);
    std::mt19937_64 gen(41);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> rates(25);
        for (auto& r : rates) r = grid[gen() % grid.size()];
        ValueFunction prev;
        bool ok = true;
        policy_iteration_discounted(p, Policy(p, rates), [&](int k, const ValueFunction& v) {
            if (k > 1 && (v - prev).maxCoeff() > 1e-9) ok = false;
            prev = v;
        });
        EXPECT_TRUE(ok);
    }
}

TEST(HjbResidual, DetectsNonSolutions) {
    const ModelParams p;
    const ActionGrid grid = build_action_grid(p);
    double expected = 0.0;
    for (std::size_t k = 0; k < 25; ++k) {
        double best = std::numeric_limits<double>::infinity();
        for (double b : grid.rates()) best = std::min(best, stage_cost(state_at(k, p), b, p));
        expected = std::max(expected, best);
    }
    const double res = hjb_residual_discounted(ValueFunction::Zero(25), p, grid);
    EXPECT_GT(res, 0.0);
    EXPECT_DOUBLE_EQ(res, expected);
}
