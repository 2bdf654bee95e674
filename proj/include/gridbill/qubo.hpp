#pragma once

// Demand-response invitation QUBO and its exact Ising restatement.

#include "gridbill/corpus.hpp"
#include "gridbill/error.hpp"
#include "gridbill/forecast.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace gridbill {

using Bits = std::vector<std::uint8_t>;
using Spins = std::vector<int>;

struct ShiftCandidate {
    CustomerId customer;
    Archetype archetype = Archetype::Low;
    int from_hour = 0;
    int to_hour = 0;
    double expected_kwh = 0.0;   // q50 at from_hour
    double worst_case_kwh = 0.0; // q90 at from_hour
    double co2_saved_kg = 0.0;
    double discomfort = 0.0;
};

struct QuboInstance {
    Eigen::MatrixXd q;
    std::vector<ShiftCandidate> candidates; // may be empty for hand-built instances

    std::size_t size() const noexcept { return static_cast<std::size_t>(q.rows()); }

    static QuboInstance from_matrix(Eigen::MatrixXd matrix)
    {
        QuboInstance inst;
        inst.q = std::move(matrix);
        inst.validate();
        return inst;
    }

    void validate() const
    {
        if (q.rows() != q.cols()) {
            throw DomainError("QUBO matrix must be square");
        }
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < q.cols(); ++j) {
                if (std::abs(q(i, j) - q(j, i)) > 1e-12) {
                    throw DomainError("QUBO matrix must be symmetric");
                }
            }
        }
        if (!candidates.empty() && candidates.size() != size()) {
            throw DomainError("QUBO candidate list does not match the variable count");
        }
    }
};

struct IsingModel {
    Eigen::MatrixXd couplings; // symmetric, zero diagonal
    Eigen::VectorXd fields;
    double offset = 0.0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(fields.size()); }
};

struct DrConfig {
    double shadow_price = 50.0; // currency per kg CO2
    std::array<double, 3> discomfort{0.5, 1.0, 2.0};
    double headroom_fraction = 0.30;          // of the aggregate q50 at the to_hour
    std::optional<double> headroom_kwh;       // overrides headroom_fraction
    double penalty_factor = 1.0;              // times mean |diagonal|
    std::optional<double> penalty_weight;     // overrides penalty_factor

    void validate() const
    {
        if (headroom_kwh && !(*headroom_kwh > 0.0)) {
            throw ConfigError("DR headroom cap must be positive");
        }
        if (!headroom_kwh && !(headroom_fraction > 0.0)) {
            throw ConfigError("DR headroom fraction must be positive");
        }
        for (double d : discomfort) {
            if (d < 0.0) {
                throw ConfigError("DR discomfort weights must be non-negative");
            }
        }
        if (penalty_weight && *penalty_weight < 0.0) {
            throw ConfigError("DR penalty weight must be non-negative");
        }
    }
};

struct DrCustomer {
    CustomerId customer;
    Archetype archetype = Archetype::Low;
    QuantileForecast forecast;
};

/// Best (from, to) pair for one customer: maximal q50[from] * (CI[from] - CI[to]).
/// Returns nothing when no pair saves CO2.
inline std::optional<ShiftCandidate> best_shift(const DrCustomer& c, const DayProfile& ci_day, double discomfort)
{
    std::optional<ShiftCandidate> best;
    for (int from = 0; from < kHoursPerDay; ++from) {
        for (int to = 0; to < kHoursPerDay; ++to) {
            if (!(ci_day[from] > ci_day[to])) {
                continue;
            }
            const double saved = c.forecast.q50[from] * (ci_day[from] - ci_day[to]) / 1000.0;
            if (saved > 0.0 && (!best || saved > best->co2_saved_kg)) {
                best = ShiftCandidate{c.customer, c.archetype, from, to, c.forecast.q50[from], c.forecast.q90[from], saved, discomfort};
            }
        }
    }
    return best;
}

struct DrInstance {
    QuboInstance qubo;
    double penalty_weight = 0.0;
    std::array<double, kHoursPerDay> headroom_kwh{}; // per to_hour
};

inline DrInstance build_dr_qubo(std::span<const DrCustomer> customers, const DayProfile& ci_day, const DrConfig& config = {})
{
    config.validate();
    DayProfile aggregate_q50{};
    for (const auto& c : customers) {
        for (int h = 0; h < kHoursPerDay; ++h) {
            aggregate_q50[h] += c.forecast.q50[h];
        }
    }

    std::vector<ShiftCandidate> cands;
    for (const auto& c : customers) {
        const double discomfort = config.discomfort[static_cast<std::size_t>(c.archetype)];
        if (auto s = best_shift(c, ci_day, discomfort)) {
            cands.push_back(*s);
        }
    }
    if (cands.empty()) {
        throw DomainError("build_dr_qubo: no customer has a CO2-saving shift");
    }

    DrInstance out;
    for (int h = 0; h < kHoursPerDay; ++h) {
        out.headroom_kwh[h] = config.headroom_kwh ? *config.headroom_kwh : config.headroom_fraction * aggregate_q50[h];
    }

    const auto n = static_cast<Eigen::Index>(cands.size());
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
    double diag_abs = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& c = cands[static_cast<std::size_t>(i)];
        q(i, i) = -(config.shadow_price * c.co2_saved_kg - c.discomfort);
        diag_abs += std::abs(q(i, i));
    }
    out.penalty_weight = config.penalty_weight ? *config.penalty_weight : config.penalty_factor * diag_abs / static_cast<double>(n);

    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const auto& a = cands[static_cast<std::size_t>(i)];
            const auto& b = cands[static_cast<std::size_t>(j)];
            if (a.to_hour != b.to_hour) {
                continue;
            }
            const double cap = out.headroom_kwh[a.to_hour];
            if (!(cap > 0.0)) {
                throw ConfigError("build_dr_qubo: headroom cap at a to_hour is not positive");
            }
            const double coupling = out.penalty_weight * a.worst_case_kwh * b.worst_case_kwh / (cap * cap);
            q(i, j) = 0.5 * coupling;
            q(j, i) = 0.5 * coupling;
        }
    }
    out.qubo.q = std::move(q);
    out.qubo.candidates = std::move(cands);
    return out;
}

inline double qubo_energy(const QuboInstance& inst, std::span<const std::uint8_t> x)
{
    const auto n = inst.size();
    if (x.size() != n) {
        throw DomainError("qubo_energy: assignment length mismatch");
    }
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!x[i]) {
            continue;
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (x[j]) {
                e += inst.q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
        }
    }
    return e;
}

/// Substitutes x = (s + 1) / 2. With E_ising(s) = sum_{i != j} J_ij s_i s_j
/// + sum_i h_i s_i + offset the two energies agree on every assignment.
inline IsingModel qubo_to_ising(const QuboInstance& inst)
{
    const auto n = static_cast<Eigen::Index>(inst.size());
    IsingModel m;
    m.couplings = inst.q / 4.0;
    m.couplings.diagonal().setZero();
    m.fields = inst.q.rowwise().sum() / 2.0;
    m.offset = inst.q.sum() / 4.0 + inst.q.trace() / 4.0;
    if (n == 0) {
        m.offset = 0.0;
    }
    return m;
}

inline double ising_energy(const IsingModel& m, std::span<const double> s)
{
    const auto n = m.size();
    if (s.size() != n) {
        throw DomainError("ising_energy: spin vector length mismatch");
    }
    const Eigen::Map<const Eigen::VectorXd> v(s.data(), static_cast<Eigen::Index>(n));
    return v.dot(m.couplings * v) + m.fields.dot(v) + m.offset;
}

inline double ising_energy(const IsingModel& m, std::span<const int> s)
{
    std::vector<double> v(s.begin(), s.end());
    return ising_energy(m, std::span<const double>(v));
}

/// dE/ds_i = 2 sum_j J_ij s_j + h_i at continuous positions.
inline Eigen::VectorXd ising_gradient(const IsingModel& m, const Eigen::VectorXd& x)
{
    return 2.0 * (m.couplings * x) + m.fields;
}

inline Bits spins_to_bits(std::span<const double> s)
{
    Bits x(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        x[i] = s[i] > 0.0 ? 1 : 0;
    }
    return x;
}

inline Spins bits_to_spins(std::span<const std::uint8_t> x)
{
    Spins s(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        s[i] = x[i] ? 1 : -1;
    }
    return s;
}

} // namespace gridbill
