#pragma once

// Controlled M/M/1 production-inventory chain: states (n customers, i items),
// production rate as the action, lost sales when the shelf is empty.

#include "prodinv/error.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace prodinv {

struct ModelParams {
    double lambda = 3.0;      ///< customer arrival rate
    double mu = 5.0;          ///< service rate
    double gamma_lo = 0.001;  ///< smallest admissible production rate
    double rate_hi = 2.0;     ///< largest admissible production rate R
    double grid_step = 0.001; ///< action discretization step
    double h = 100.0;         ///< holding cost per item per unit time
    double c1 = 20.0;         ///< service cost per customer per unit time
    double c2 = 30.0;         ///< production penalty above the threshold
    double c3 = 40.0;         ///< lost-sales cost per waiting customer per unit time
    int s_thresh = 2;         ///< inventory threshold S
    double alpha = 0.7;       ///< discount rate
    int n_max = 4;            ///< queue truncation
    int i_max = 4;            ///< inventory truncation
};

struct State {
    int n = 0;
    int i = 0;
    friend bool operator==(const State&, const State&) = default;
};

inline constexpr double kGridTolerance = 1e-12;

inline ModelParams validate_params(const ModelParams& p, bool discounted = false) {
    auto finite = [](double x) { return std::isfinite(x); };
    if (!finite(p.lambda) || !finite(p.mu) || p.lambda <= 0.0 || p.mu <= 0.0)
        throw Error(ErrorKind::Unstable, "arrival and service rates must be positive and finite");
    if (p.lambda >= p.mu)
        throw Error(ErrorKind::Unstable, "lambda must be strictly below mu (rho = " +
                                             std::to_string(p.lambda / p.mu) + ")");
    if (!finite(p.gamma_lo) || !finite(p.rate_hi) || !(p.gamma_lo > 0.0) || p.gamma_lo > p.rate_hi)
        throw Error(ErrorKind::BadActionBounds, "require 0 < gamma_lo <= rate_hi");
    if (!(p.grid_step > 0.0) || !finite(p.grid_step))
        throw Error(ErrorKind::BadActionBounds, "grid_step must be positive");
    const double span = p.rate_hi - p.gamma_lo;
    const double steps = std::round(span / p.grid_step);
    if (std::abs(steps * p.grid_step - span) > kGridTolerance)
        throw Error(ErrorKind::BadActionBounds, "grid_step does not tile [gamma_lo, rate_hi]");
    for (double c : {p.h, p.c1, p.c2, p.c3})
        if (!(c >= 0.0) || !finite(c))
            throw Error(ErrorKind::NegativeCost, "cost coefficients must be nonnegative");
    if (p.s_thresh < 0) throw Error(ErrorKind::BadTruncation, "threshold S must be >= 0");
    if (p.n_max < 1 || p.i_max < 1) throw Error(ErrorKind::BadTruncation, "n_max and i_max must be >= 1");
    if (discounted && !(p.alpha > 0.0 && finite(p.alpha)))
        throw Error(ErrorKind::BadDiscount, "alpha must be positive for discounted criteria");
    return p;
}

// ---------------------------------------------------------------------------
// State indexing: row-major, n-major then i.

inline std::size_t num_states(const ModelParams& p) {
    return static_cast<std::size_t>(p.n_max + 1) * static_cast<std::size_t>(p.i_max + 1);
}

inline bool in_range(const State& s, const ModelParams& p) {
    return s.n >= 0 && s.n <= p.n_max && s.i >= 0 && s.i <= p.i_max;
}

inline std::size_t state_index(const State& s, const ModelParams& p) {
    return static_cast<std::size_t>(s.n) * static_cast<std::size_t>(p.i_max + 1) +
           static_cast<std::size_t>(s.i);
}

inline State state_at(std::size_t k, const ModelParams& p) {
    const auto width = static_cast<std::size_t>(p.i_max + 1);
    return State{static_cast<int>(k / width), static_cast<int>(k % width)};
}

// ---------------------------------------------------------------------------
// Actions

class ActionGrid {
public:
    ActionGrid() = default;
    explicit ActionGrid(std::vector<double> rates) : rates_(std::move(rates)) {}

    const std::vector<double>& rates() const noexcept { return rates_; }
    std::size_t size() const noexcept { return rates_.size(); }
    double operator[](std::size_t k) const { return rates_[k]; }
    double front() const { return rates_.front(); }
    double back() const { return rates_.back(); }

    /// Index of the grid point within kGridTolerance of beta, if any.
    std::optional<std::size_t> find(double beta, double tol = kGridTolerance) const {
        auto it = std::lower_bound(rates_.begin(), rates_.end(), beta - tol);
        if (it != rates_.end() && std::abs(*it - beta) <= tol)
            return static_cast<std::size_t>(it - rates_.begin());
        return std::nullopt;
    }
    bool contains(double beta) const { return find(beta).has_value(); }

private:
    std::vector<double> rates_;
};

inline ActionGrid build_action_grid(const ModelParams& p) {
    if (!(p.gamma_lo > 0.0) || p.gamma_lo > p.rate_hi || !(p.grid_step > 0.0))
        throw Error(ErrorKind::BadActionBounds, "require 0 < gamma_lo <= rate_hi and grid_step > 0");
    const double span = p.rate_hi - p.gamma_lo;
    const double steps = std::round(span / p.grid_step);
    if (std::abs(steps * p.grid_step - span) > kGridTolerance)
        throw Error(ErrorKind::BadActionBounds, "grid_step does not tile [gamma_lo, rate_hi]");
    const auto count = static_cast<std::size_t>(steps) + 1;
    std::vector<double> rates(count);
    for (std::size_t k = 0; k < count; ++k)
        rates[k] = p.gamma_lo + static_cast<double>(k) * p.grid_step;
    rates.back() = p.rate_hi;
    return ActionGrid(std::move(rates));
}

/// Deterministic stationary policy: one production rate per state.
class Policy {
public:
    Policy() = default;
    Policy(const ModelParams& p, double beta)
        : n_max_(p.n_max), i_max_(p.i_max), rates_(num_states(p), beta) {}
    Policy(const ModelParams& p, std::vector<double> rates)
        : n_max_(p.n_max), i_max_(p.i_max), rates_(std::move(rates)) {
        if (rates_.size() != num_states(p))
            throw Error(ErrorKind::BadArgument, "policy size does not match the state space");
    }

    int n_max() const noexcept { return n_max_; }
    int i_max() const noexcept { return i_max_; }
    std::size_t size() const noexcept { return rates_.size(); }
    const std::vector<double>& rates() const noexcept { return rates_; }

    double operator[](std::size_t k) const { return rates_[k]; }
    double& operator[](std::size_t k) { return rates_[k]; }
    double at(const State& s) const {
        return rates_[static_cast<std::size_t>(s.n) * static_cast<std::size_t>(i_max_ + 1) +
                      static_cast<std::size_t>(s.i)];
    }

    friend bool operator==(const Policy&, const Policy&) = default;

private:
    int n_max_ = 0;
    int i_max_ = 0;
    std::vector<double> rates_;
};

inline bool policy_on_grid(const Policy& pol, const ActionGrid& grid) {
    return std::all_of(pol.rates().begin(), pol.rates().end(),
                       [&](double b) { return grid.contains(b); });
}

// ---------------------------------------------------------------------------
// Transition rates

struct Transition {
    State to;
    double rate = 0.0;
};

struct RateRow {
    State from;
    std::vector<Transition> entries; ///< off-diagonal, positive rates only
    double diagonal = 0.0;

    double exit_rate() const noexcept { return -diagonal; }
};

struct UniformizedRow {
    State from;
    std::vector<Transition> probs; ///< includes the self-loop as its last entry
};

/// Invokes f(target, rate) for each enabled off-diagonal transition in the
/// order arrival, service, production. Transitions leaving the truncated grid
/// are suppressed.
template <class F>
inline void for_each_transition(const State& s, double beta, const ModelParams& p, F&& f) {
    if (s.i >= 1 && s.n < p.n_max) f(State{s.n + 1, s.i}, p.lambda);
    if (s.n >= 1 && s.i >= 1) f(State{s.n - 1, s.i - 1}, p.mu);
    if (s.i < p.i_max) f(State{s.n, s.i + 1}, beta);
}

inline double exit_rate(const State& s, double beta, const ModelParams& p) {
    double total = 0.0;
    for_each_transition(s, beta, p, [&](const State&, double r) { total += r; });
    return total;
}

inline void check_state_action(const State& s, double beta, const ModelParams& p) {
    if (!in_range(s, p))
        throw Error(ErrorKind::OutOfRange, "state (" + std::to_string(s.n) + "," +
                                               std::to_string(s.i) + ") outside truncation");
    if (!(beta >= p.gamma_lo - kGridTolerance && beta <= p.rate_hi + kGridTolerance))
        throw Error(ErrorKind::OutOfRange, "production rate " + std::to_string(beta) +
                                               " outside [gamma_lo, rate_hi]");
}

inline RateRow transition_rates(const State& s, double beta, const ModelParams& p) {
    check_state_action(s, beta, p);
    RateRow row{s, {}, 0.0};
    double total = 0.0;
    for_each_transition(s, beta, p, [&](const State& to, double r) {
        row.entries.push_back({to, r});
        total += r;
    });
    row.diagonal = -total;
    return row;
}

/// Uniform bound on exit rates, R + lambda + mu.
inline double uniformization_rate(const ModelParams& p) { return p.rate_hi + p.lambda + p.mu; }

inline UniformizedRow uniformized_row(const State& s, double beta, const ModelParams& p) {
    const RateRow rates = transition_rates(s, beta, p);
    const double big = uniformization_rate(p);
    UniformizedRow row{s, {}};
    for (const auto& t : rates.entries) row.probs.push_back({t.to, t.rate / big});
    row.probs.push_back({s, 1.0 + rates.diagonal / big});
    return row;
}

inline double stage_cost(const State& s, double beta, const ModelParams& p) {
    double cost = p.h * s.i + p.c1 * s.n;
    if (s.i > p.s_thresh) cost += beta * p.c2;
    if (s.i == 0) cost += p.c3 * s.n;
    return cost;
}

/// (Pi f)(s) = sum_j q(s,j) f(j), the generator applied to f at s.
template <class Vec>
inline double generator_apply(const State& s, double beta, const ModelParams& p, const Vec& f) {
    const double self = f[state_index(s, p)];
    double acc = 0.0;
    for_each_transition(s, beta, p, [&](const State& to, double r) {
        acc += r * (f[state_index(to, p)] - self);
    });
    return acc;
}

// ---------------------------------------------------------------------------
// Whole-policy matrices

using SparseMatrix = Eigen::SparseMatrix<double>;

inline SparseMatrix generator_matrix(const ModelParams& p, const Policy& pol) {
    const std::size_t ns = num_states(p);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(ns * 4);
    for (std::size_t k = 0; k < ns; ++k) {
        const State s = state_at(k, p);
        double total = 0.0;
        for_each_transition(s, pol[k], p, [&](const State& to, double r) {
            trips.emplace_back(static_cast<int>(k), static_cast<int>(state_index(to, p)), r);
            total += r;
        });
        trips.emplace_back(static_cast<int>(k), static_cast<int>(k), -total);
    }
    SparseMatrix q(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(ns));
    q.setFromTriplets(trips.begin(), trips.end());
    return q;
}

inline Eigen::VectorXd cost_vector(const ModelParams& p, const Policy& pol) {
    const std::size_t ns = num_states(p);
    Eigen::VectorXd r(static_cast<Eigen::Index>(ns));
    for (std::size_t k = 0; k < ns; ++k) r[static_cast<Eigen::Index>(k)] = stage_cost(state_at(k, p), pol[k], p);
    return r;
}

// ---------------------------------------------------------------------------
// Communication structure

using Adjacency = std::vector<std::vector<std::size_t>>;

/// Strongly connected components (Kosaraju, iterative). Returns the component
/// id of every vertex.
inline std::vector<std::size_t> strongly_connected_components(const Adjacency& adj,
                                                              std::size_t* count = nullptr) {
    const std::size_t nv = adj.size();
    Adjacency rev(nv);
    for (std::size_t u = 0; u < nv; ++u)
        for (std::size_t v : adj[u]) rev[v].push_back(u);

    std::vector<std::size_t> order;
    order.reserve(nv);
    std::vector<char> seen(nv, 0);
    for (std::size_t root = 0; root < nv; ++root) {
        if (seen[root]) continue;
        std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
        seen[root] = 1;
        while (!stack.empty()) {
            auto& [u, next] = stack.back();
            if (next < adj[u].size()) {
                const std::size_t v = adj[u][next++];
                if (!seen[v]) {
                    seen[v] = 1;
                    stack.emplace_back(v, 0);
                }
            } else {
                order.push_back(u);
                stack.pop_back();
            }
        }
    }

    constexpr auto unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> comp(nv, unset);
    std::size_t ncomp = 0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (comp[*it] != unset) continue;
        std::vector<std::size_t> stack{*it};
        comp[*it] = ncomp;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v : rev[u])
                if (comp[v] == unset) {
                    comp[v] = ncomp;
                    stack.push_back(v);
                }
        }
        ++ncomp;
    }
    if (count) *count = ncomp;
    return comp;
}

inline bool is_strongly_connected(const Adjacency& adj) {
    std::size_t count = 0;
    strongly_connected_components(adj, &count);
    return count <= 1;
}

/// True iff exactly one closed communicating class exists; on a finite chain
/// every state then reaches it.
inline bool has_single_closed_class(const Adjacency& adj) {
    std::size_t count = 0;
    const auto comp = strongly_connected_components(adj, &count);
    std::vector<char> leaks(count, 0);
    for (std::size_t u = 0; u < adj.size(); ++u)
        for (std::size_t v : adj[u])
            if (comp[u] != comp[v]) leaks[comp[u]] = 1;
    return std::count(leaks.begin(), leaks.end(), 0) == 1;
}

inline Adjacency transition_graph(const ModelParams& p, const Policy& pol) {
    const std::size_t ns = num_states(p);
    Adjacency adj(ns);
    for (std::size_t k = 0; k < ns; ++k)
        for_each_transition(state_at(k, p), pol[k], p, [&](const State& to, double r) {
            if (r > 0.0) adj[k].push_back(state_index(to, p));
        });
    return adj;
}

/// Strong connectivity of the positive-rate graph. On a truncated grid the
/// corner (n_max, 0) is never entered, so this is false for every policy.
inline bool check_irreducibility(const ModelParams& p, const Policy& pol) {
    return is_strongly_connected(transition_graph(p, pol));
}

/// Single recurrent class (possibly with transient states); the condition the
/// solvers actually need for a unique invariant measure and gain.
inline bool check_unichain(const ModelParams& p, const Policy& pol) {
    return has_single_closed_class(transition_graph(p, pol));
}

inline void require_unichain(const ModelParams& p, const Policy& pol) {
    if (!check_unichain(p, pol))
        throw Error(ErrorKind::Reducible, "policy induces more than one recurrent class");
}

} // namespace prodinv
