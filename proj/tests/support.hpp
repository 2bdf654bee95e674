#pragma once

#include "gridbill/corpus.hpp"
#include "gridbill/qubo.hpp"
#include "gridbill/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace testing {

inline const gridbill::Corpus& default_corpus()
{
    static const gridbill::Corpus corpus = gridbill::generate_corpus(gridbill::CorpusConfig{});
    return corpus;
}

/// Dense symmetric matrix with entries Uniform(-1, 1).
inline gridbill::QuboInstance random_qubo(int n, std::uint64_t seed)
{
    gridbill::Rng rng(seed);
    Eigen::MatrixXd q(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            q(i, j) = q(j, i) = rng.uniform(-1.0, 1.0);
        }
    }
    return gridbill::QuboInstance::from_matrix(q);
}

/// Plain double loop over every (i, j), independent of the library's evaluator.
inline double naive_energy(const Eigen::MatrixXd& q, const std::vector<std::uint8_t>& x)
{
    double e = 0.0;
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        for (Eigen::Index j = 0; j < q.cols(); ++j) {
            e += q(i, j) * x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)];
        }
    }
    return e;
}

inline std::vector<std::uint8_t> bits_of(std::uint64_t mask, int n)
{
    std::vector<std::uint8_t> x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        x[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((mask >> i) & 1U);
    }
    return x;
}

} // namespace testing
