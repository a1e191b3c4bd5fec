#pragma once

// Seeded continuous-time simulation of the controlled chain and empirical
// pathwise-average-cost certification.

#include "prodinv/model.hpp"
#include "prodinv/rng.hpp"
#include "prodinv/steady_state.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace prodinv {

/// Stop either at a fixed time or after a fixed number of jumps.
struct Horizon {
    enum class Kind { Time, Events };
    Kind kind = Kind::Time;
    double time = 0.0;
    std::uint64_t events = 0;

    static Horizon of_time(double t) { return {Kind::Time, t, 0}; }
    static Horizon of_events(std::uint64_t n) { return {Kind::Events, 0.0, n}; }
};

struct TrajectorySample {
    std::vector<double> jump_times; ///< start of each holding interval; jump_times[0] = 0
    std::vector<State> states;      ///< state held over each interval
    std::vector<double> actions;    ///< production rate used over each interval
    std::vector<double> running_cost; ///< cost accumulated up to the end of each interval
    double accumulated_cost = 0.0;
    double horizon = 0.0;
    std::string rng_id;

    std::size_t intervals() const noexcept { return states.size(); }
    double duration(std::size_t k) const {
        return (k + 1 < jump_times.size() ? jump_times[k + 1] : horizon) - jump_times[k];
    }
};

/// Core event loop. Calls sink(state, beta, start, duration) once per holding
/// interval; the final interval of a time horizon is truncated at the horizon.
/// Returns the simulated horizon.
template <class Sink>
inline double simulate_path(const Policy& pol, const State& init, const Horizon& horizon, std::uint64_t seed,
                            const ModelParams& p, Sink&& sink) {
    if (!in_range(init, p)) throw Error(ErrorKind::OutOfRange, "initial state outside truncation");
    if (pol.size() != num_states(p)) throw Error(ErrorKind::BadArgument, "policy size mismatch");
    if (horizon.kind == Horizon::Kind::Time && !(horizon.time > 0.0))
        throw Error(ErrorKind::BadArgument, "horizon must be positive");
    if (horizon.kind == Horizon::Kind::Events && horizon.events == 0)
        throw Error(ErrorKind::BadArgument, "event horizon must be positive");

    CounterRng rng(seed);
    State s = init;
    double t = 0.0;
    std::uint64_t jumps = 0;
    for (;;) {
        const double beta = pol.at(s);
        const double exit = exit_rate(s, beta, p);
        const double dt = exit > 0.0 ? rng.exponential(exit) : std::numeric_limits<double>::infinity();
        const double t_next = t + dt;
        if (horizon.kind == Horizon::Kind::Time && t_next >= horizon.time) {
            sink(s, beta, t, horizon.time - t);
            return horizon.time;
        }
        if (!std::isfinite(t_next)) throw Error(ErrorKind::BadArgument, "absorbing state under an event horizon");
        sink(s, beta, t, t_next - t);
        // Next state by the normalized off-diagonal rates.
        const double pick = rng.uniform() * exit;
        double cum = 0.0;
        State chosen = s;
        bool found = false;
        for_each_transition(s, beta, p, [&](const State& to, double r) {
            if (found) return;
            cum += r;
            chosen = to;
            if (pick < cum) found = true;
        });
        s = chosen;
        t = t_next;
        if (horizon.kind == Horizon::Kind::Events && ++jumps >= horizon.events) return t;
    }
}

inline TrajectorySample simulate_trajectory(const Policy& pol, const State& init, const Horizon& horizon,
                                            std::uint64_t seed, const ModelParams& p) {
    TrajectorySample out;
    out.rng_id = std::string(CounterRng::algorithm_id);
    double acc = 0.0;
    out.horizon = simulate_path(pol, init, horizon, seed, p, [&](const State& s, double beta, double start, double d) {
        out.jump_times.push_back(start);
        out.states.push_back(s);
        out.actions.push_back(beta);
        acc += stage_cost(s, beta, p) * d;
        out.running_cost.push_back(acc);
    });
    out.accumulated_cost = acc;
    return out;
}

inline TrajectorySample simulate_trajectory(const Policy& pol, const State& init, double horizon,
                                            std::uint64_t seed, const ModelParams& p) {
    return simulate_trajectory(pol, init, Horizon::of_time(horizon), seed, p);
}

inline double pathwise_average_cost(const TrajectorySample& t) {
    if (!(t.horizon > 0.0)) throw Error(ErrorKind::BadArgument, "horizon must be positive");
    return t.accumulated_cost / t.horizon;
}

/// Streaming finite-horizon average with a batch-means spread estimate.
struct PathAverage {
    double average = 0.0;
    double horizon = 0.0;
    std::uint64_t intervals = 0;
    std::vector<double> batch_means;
    double ci_half_width = 0.0; ///< 95% batch-means half-width
};

inline constexpr std::size_t kBatches = 20;
inline constexpr double kStudentT19 = 2.093; // 0.975 quantile, 19 degrees of freedom

inline PathAverage summarize_batches(double total_cost, double horizon, std::uint64_t intervals,
                                     std::vector<double> batch_means) {
    PathAverage out{total_cost / horizon, horizon, intervals, std::move(batch_means), 0.0};
    const auto nb = static_cast<double>(out.batch_means.size());
    if (nb > 1) {
        double mean = 0.0;
        for (double b : out.batch_means) mean += b;
        mean /= nb;
        double ss = 0.0;
        for (double b : out.batch_means) ss += (b - mean) * (b - mean);
        out.ci_half_width = kStudentT19 * std::sqrt(ss / (nb - 1.0) / nb);
    }
    return out;
}

/// Time-horizon path average; batches are equal slices of [0, horizon].
inline PathAverage simulate_average(const Policy& pol, const State& init, double horizon, std::uint64_t seed,
                                    const ModelParams& p) {
    const double width = horizon / static_cast<double>(kBatches);
    std::vector<double> batch_cost(kBatches, 0.0);
    double total = 0.0;
    std::uint64_t count = 0;
    simulate_path(pol, init, Horizon::of_time(horizon), seed, p, [&](const State& s, double beta, double start, double d) {
        const double rate = stage_cost(s, beta, p);
        total += rate * d;
        ++count;
        double a = start;
        const double end = start + d;
        std::size_t b = std::min(kBatches - 1, static_cast<std::size_t>(a / width));
        while (a < end) {
            const double bound = b + 1 == kBatches ? end : std::min(end, width * static_cast<double>(b + 1));
            if (bound > a) {
                batch_cost[b] += rate * (bound - a);
                a = bound;
            }
            if (b + 1 < kBatches) ++b;
        }
    });
    std::vector<double> means(kBatches);
    for (std::size_t b = 0; b < kBatches; ++b) means[b] = batch_cost[b] / width;
    return summarize_batches(total, horizon, count, std::move(means));
}

/// Event-horizon path average; batches hold equal numbers of intervals.
inline PathAverage simulate_average(const Policy& pol, const State& init, std::uint64_t events, std::uint64_t seed,
                                    const ModelParams& p) {
    const std::uint64_t per_batch = std::max<std::uint64_t>(1, events / kBatches);
    std::vector<double> means;
    double total = 0.0, batch_cost = 0.0, batch_time = 0.0;
    std::uint64_t count = 0, in_batch = 0;
    const double horizon =
        simulate_path(pol, init, Horizon::of_events(events), seed, p, [&](const State& s, double beta, double, double d) {
            const double c = stage_cost(s, beta, p) * d;
            total += c;
            batch_cost += c;
            batch_time += d;
            ++count;
            if (++in_batch == per_batch && means.size() + 1 < kBatches) {
                means.push_back(batch_cost / batch_time);
                batch_cost = batch_time = 0.0;
                in_batch = 0;
            }
        });
    if (batch_time > 0.0) means.push_back(batch_cost / batch_time);
    return summarize_batches(total, horizon, count, std::move(means));
}

/// Long-run jump rate sum_s theta(s) * exit(s); converts event budgets to time.
inline double expected_event_rate(const Policy& pol, const ModelParams& p) {
    const JointDist inv = invariant_measure_numeric(p, pol);
    double rate = 0.0;
    for (std::size_t k = 0; k < num_states(p); ++k)
        rate += inv.probs[static_cast<Eigen::Index>(k)] * exit_rate(state_at(k, p), pol[k], p);
    return rate;
}

struct PacOptions {
    std::uint64_t base_seed = 1;
    double quorum = 0.95;
    State init{0, 0};
};

struct PacReport {
    std::vector<std::uint64_t> seeds;
    std::vector<double> per_seed_averages;
    double mean = 0.0;
    double target_gain = 0.0;
    double epsilon = 0.0;
    double quorum = 0.0;
    std::size_t within = 0; ///< seeds with |J_c - target| <= epsilon
    bool pass = false;
    std::string rng_id;
};

/// Trajectory k uses seed base_seed + k.
inline PacReport pac_certify(const Policy& pol, double target_gain, double epsilon, std::size_t seeds,
                             double horizon, const ModelParams& p, const PacOptions& opt = {}) {
    if (!(epsilon > 0.0)) throw Error(ErrorKind::BadArgument, "epsilon must be positive");
    if (seeds < 1) throw Error(ErrorKind::BadArgument, "need at least one seed");
    PacReport rep;
    rep.target_gain = target_gain;
    rep.epsilon = epsilon;
    rep.quorum = opt.quorum;
    rep.rng_id = std::string(CounterRng::algorithm_id);
    double sum = 0.0;
    for (std::size_t k = 0; k < seeds; ++k) {
        const std::uint64_t seed = opt.base_seed + k;
        const PathAverage avg = simulate_average(pol, opt.init, horizon, seed, p);
        rep.seeds.push_back(seed);
        rep.per_seed_averages.push_back(avg.average);
        sum += avg.average;
        if (std::abs(avg.average - target_gain) <= epsilon) ++rep.within;
    }
    rep.mean = sum / static_cast<double>(seeds);
    rep.pass = static_cast<double>(rep.within) >= opt.quorum * static_cast<double>(seeds);
    return rep;
}

} // namespace prodinv
