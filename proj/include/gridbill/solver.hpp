#pragma once

// QUBO solvers: ballistic and adiabatic Simulated Bifurcation, simulated
// annealing with random-search tuning, a greedy heuristic and an exhaustive
// oracle for small instances.

#include "gridbill/error.hpp"
#include "gridbill/qubo.hpp"
#include "gridbill/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace gridbill {

enum class SbVariant { Ballistic, Adiabatic };

struct SbParams {
    double detuning = 1.0; // K
    double coupling = 0.5; // c
    double dt = 0.25;
    int i_max = 100;
    SbVariant variant = SbVariant::Ballistic;
    int restarts = 8;
    std::uint64_t seed = 1;
    bool auto_scale_c = false;

    void validate() const
    {
        if (!(detuning > 0.0) || !(dt > 0.0) || i_max < 1 || restarts < 1) {
            throw ConfigError("SB parameters require K > 0, dt > 0, i_max >= 1, restarts >= 1");
        }
    }
};

struct SaParams {
    double t0 = 10.0;
    double cooling = 0.95;
    int sweeps = 100;
    std::uint64_t seed = 1;

    void validate() const
    {
        if (!(t0 > 0.0) || !(cooling > 0.0 && cooling < 1.0) || sweeps < 1) {
            throw ConfigError("SA parameters require t0 > 0, cooling in (0, 1), sweeps >= 1");
        }
    }
};

using SolverTrace = std::vector<double>;

struct SolveResult {
    Bits assignment;
    double energy = 0.0;
    SolverTrace trace;
    int iterations_to_converge = 0;
    double wall_time = 0.0; // seconds, not part of any determinism contract
};

/// First iteration from which every later trace value stays within
/// tol * |final| above the final value.
inline int convergence_iteration(std::span<const double> trace, double tol = 0.01)
{
    if (trace.empty()) {
        throw DomainError("convergence_iteration: empty trace");
    }
    const double final_value = trace.back();
    const double bound = final_value + tol * std::abs(final_value);
    int t = static_cast<int>(trace.size()) - 1;
    while (t > 0 && trace[static_cast<std::size_t>(t - 1)] <= bound) {
        --t;
    }
    return t;
}

/// Bifurcation ramp a(t): 0 at step 0, 1 at step i_max - 1.
inline double bifurcation_ramp(int step, int i_max)
{
    if (i_max <= 1) {
        return 1.0;
    }
    return static_cast<double>(step) / static_cast<double>(i_max - 1);
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

inline Bits positions_to_bits(const Eigen::VectorXd& x)
{
    Bits b(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        b[static_cast<std::size_t>(i)] = x(i) > 0.0 ? 1 : 0;
    }
    return b;
}

/// Scale for c so that the problem force is O(1) relative to K.
inline double auto_coupling(const IsingModel& m, double c)
{
    const auto n = static_cast<double>(m.size());
    if (n < 2.0) {
        return c;
    }
    const double rms = std::sqrt(m.couplings.squaredNorm() / (n * (n - 1.0)));
    return rms > 0.0 ? c / (rms * std::sqrt(n)) : c;
}

struct SbRun {
    Bits assignment;
    double energy = 0.0;
    SolverTrace trace;
};

inline SbRun sb_restart(const QuboInstance& inst, const IsingModel& ising, const SbParams& p, double c, std::uint64_t seed,
                        const std::function<void(int, const Eigen::VectorXd&)>& on_step)
{
    const auto n = static_cast<Eigen::Index>(inst.size());
    Rng rng(seed);
    Eigen::VectorXd x(n);
    Eigen::VectorXd mom(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i) = rng.uniform(-0.1, 0.1);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        mom(i) = rng.uniform(-0.1, 0.1);
    }

    SbRun run;
    run.trace.reserve(static_cast<std::size_t>(p.i_max));
    const double k = p.detuning;
    for (int step = 0; step < p.i_max; ++step) {
        const double a = bifurcation_ramp(step, p.i_max);
        const Eigen::VectorXd grad = ising_gradient(ising, x);
        if (p.variant == SbVariant::Ballistic) {
            mom -= p.dt * ((k - a) * x + c * grad);
            x += p.dt * k * mom;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (std::abs(x(i)) > 1.0) {
                    x(i) = x(i) > 0.0 ? 1.0 : -1.0;
                    mom(i) = 0.0;
                }
            }
        } else {
            mom -= p.dt * ((k - a) * x + k * x.cwiseProduct(x).cwiseProduct(x) + c * grad);
            x += p.dt * k * mom;
        }
        if (on_step) {
            on_step(step, x);
        }
        run.assignment = positions_to_bits(x);
        run.trace.push_back(qubo_energy(inst, run.assignment));
    }
    run.energy = run.trace.back();
    return run;
}

} // namespace detail

/// Simulated Bifurcation with `params.restarts` independent starts. The
/// result is the lowest final sign-rounded energy; ties go to the lowest
/// restart index and the trace is that restart's.
inline SolveResult solve_sb(const QuboInstance& inst, const SbParams& params,
                            const std::function<void(int, const Eigen::VectorXd&)>& on_step = {})
{
    params.validate();
    if (inst.size() == 0) {
        throw DomainError("solve_sb: empty instance");
    }
    const auto start = detail::Clock::now();
    const IsingModel ising = qubo_to_ising(inst);
    const double c = params.auto_scale_c ? detail::auto_coupling(ising, params.coupling) : params.coupling;

    SolveResult best;
    best.energy = std::numeric_limits<double>::infinity();
    for (int r = 0; r < params.restarts; ++r) {
        detail::SbRun run = detail::sb_restart(inst, ising, params, c, derive_seed(params.seed, static_cast<std::uint64_t>(r)), on_step);
        if (run.energy < best.energy) {
            best.assignment = std::move(run.assignment);
            best.energy = run.energy;
            best.trace = std::move(run.trace);
        }
    }
    best.iterations_to_converge = convergence_iteration(best.trace);
    best.wall_time = detail::seconds_since(start);
    return best;
}

inline SolveResult solve_bsb(const QuboInstance& inst, SbParams params)
{
    params.variant = SbVariant::Ballistic;
    return solve_sb(inst, params);
}

inline SolveResult solve_asb(const QuboInstance& inst, SbParams params)
{
    params.variant = SbVariant::Adiabatic;
    return solve_sb(inst, params);
}

/// Energy change of flipping bit i, given local fields f_i = sum_{j != i} Q_ij x_j.
inline double flip_delta(const QuboInstance& inst, std::span<const std::uint8_t> x, std::span<const double> local, std::size_t i)
{
    const auto ii = static_cast<Eigen::Index>(i);
    const double sign = x[i] ? -1.0 : 1.0;
    return sign * (inst.q(ii, ii) + 2.0 * local[i]);
}

using SaObserver = std::function<void(const Bits& state, double tracked_energy)>;

/// Single-flip Metropolis with geometric cooling, one temperature per sweep.
/// The trace holds the best-so-far energy after each sweep.
inline SolveResult solve_sa(const QuboInstance& inst, const SaParams& params, const SaObserver& on_accept = {})
{
    params.validate();
    const auto start = detail::Clock::now();
    const std::size_t n = inst.size();
    Rng rng(params.seed);

    Bits x(n);
    for (auto& b : x) {
        b = static_cast<std::uint8_t>(rng() >> 63);
    }
    std::vector<double> local(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && x[j]) {
                local[i] += inst.q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
        }
    }
    double energy = qubo_energy(inst, x);

    SolveResult res;
    res.assignment = x;
    res.energy = energy;
    res.trace.reserve(static_cast<std::size_t>(params.sweeps));
    double temperature = params.t0;
    for (int sweep = 0; sweep < params.sweeps; ++sweep) {
        for (std::size_t i = 0; i < n; ++i) {
            const double delta = flip_delta(inst, x, local, i);
            const bool accept = delta <= 0.0 || rng.uniform() < std::exp(-delta / temperature);
            if (!accept) {
                continue;
            }
            const double dir = x[i] ? -1.0 : 1.0;
            x[i] ^= 1U;
            energy += delta;
            const auto ii = static_cast<Eigen::Index>(i);
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    local[j] += dir * inst.q(static_cast<Eigen::Index>(j), ii);
                }
            }
            if (on_accept) {
                on_accept(x, energy);
            }
            if (energy < res.energy) {
                res.energy = energy;
                res.assignment = x;
            }
        }
        res.trace.push_back(res.energy);
        temperature *= params.cooling;
    }
    // Replace the incrementally tracked value by an exact evaluation; entries
    // that drifted below it by rounding are lifted so the trace stays monotone.
    res.energy = qubo_energy(inst, res.assignment);
    for (double& e : res.trace) {
        e = std::max(e, res.energy);
    }
    res.iterations_to_converge = convergence_iteration(res.trace);
    res.wall_time = detail::seconds_since(start);
    return res;
}

struct SaTuning {
    SaParams best;
    double best_energy = 0.0;
    int trials = 0;
};

/// Random search over log-uniform t0 in [0.1, 100], cooling in [0.90, 0.999]
/// and sweeps in {50, 100, 200}. Lowest final energy wins; ties go to fewer
/// sweeps, then to the earlier trial.
inline SaTuning tune_sa(const QuboInstance& inst, int trials = 100, std::uint64_t seed = 1)
{
    if (trials < 1) {
        throw ConfigError("tune_sa: trials must be at least 1");
    }
    constexpr std::array<int, 3> kSweepChoices{50, 100, 200};
    Rng rng(derive_seed(seed, 0x7E57ULL));
    SaTuning tuning;
    tuning.trials = trials;
    bool have = false;
    for (int t = 0; t < trials; ++t) {
        SaParams p;
        p.t0 = std::exp(rng.uniform(std::log(0.1), std::log(100.0)));
        p.cooling = rng.uniform(0.90, 0.999);
        p.sweeps = kSweepChoices[rng.below(kSweepChoices.size())];
        p.seed = derive_seed(seed, static_cast<std::uint64_t>(t) + 1);
        const double e = solve_sa(inst, p).energy;
        if (!have || e < tuning.best_energy || (e == tuning.best_energy && p.sweeps < tuning.best.sweeps)) {
            tuning.best = p;
            tuning.best_energy = e;
            have = true;
        }
    }
    return tuning;
}

/// Switches variables on in descending diagonal benefit (-Q_ii) order when
/// doing so strictly lowers the energy given the choices already made.
inline SolveResult solve_greedy(const QuboInstance& inst)
{
    const auto start = detail::Clock::now();
    const std::size_t n = inst.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return -inst.q(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) >
               -inst.q(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b));
    });
    Bits x(n, 0);
    std::vector<double> local(n, 0.0);
    double energy = 0.0;
    SolveResult res;
    for (std::size_t i : order) {
        const double delta = flip_delta(inst, x, local, i);
        if (delta < 0.0) {
            x[i] = 1;
            energy += delta;
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    local[j] += inst.q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
                }
            }
        }
        res.trace.push_back(energy);
    }
    res.assignment = std::move(x);
    res.energy = qubo_energy(inst, res.assignment);
    if (res.trace.empty()) {
        res.trace.push_back(res.energy);
    } else {
        res.trace.back() = res.energy;
    }
    res.iterations_to_converge = convergence_iteration(res.trace);
    res.wall_time = detail::seconds_since(start);
    return res;
}

inline constexpr std::size_t kBruteForceMaxVariables = 24;

/// Exhaustive minimum over all 2^n assignments (Gray-code walk). Ties are
/// resolved towards the lexicographically smallest assignment.
inline SolveResult brute_force(const QuboInstance& inst)
{
    const std::size_t n = inst.size();
    if (n > kBruteForceMaxVariables) {
        throw DomainError("brute_force: refusing instances with more than 24 variables");
    }
    const auto start = detail::Clock::now();
    double scale = 1.0;
    for (Eigen::Index i = 0; i < inst.q.rows(); ++i) {
        for (Eigen::Index j = 0; j < inst.q.cols(); ++j) {
            scale += std::abs(inst.q(i, j));
        }
    }
    const double tie_eps = 1e-12 * scale;

    Bits x(n, 0);
    std::vector<double> local(n, 0.0);
    double energy = 0.0;
    Bits best = x;
    double best_energy = 0.0;
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t k = 1; k < total; ++k) {
        const auto i = static_cast<std::size_t>(std::countr_zero(k));
        const double delta = flip_delta(inst, x, local, i);
        const double dir = x[i] ? -1.0 : 1.0;
        x[i] ^= 1U;
        energy += delta;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                local[j] += dir * inst.q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
            }
        }
        if (energy < best_energy - tie_eps || (energy <= best_energy + tie_eps && x < best)) {
            best = x;
            best_energy = energy;
        }
    }
    SolveResult res;
    res.assignment = std::move(best);
    res.energy = qubo_energy(inst, res.assignment);
    res.trace.push_back(res.energy);
    res.wall_time = detail::seconds_since(start);
    return res;
}

} // namespace gridbill
