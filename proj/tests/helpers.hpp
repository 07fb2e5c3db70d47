// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures and oracle utilities for the cfmimo test suite.

#pragma once

#include "cfmimo/context.hpp"

#include <catch2/catch_amalgamated.hpp>

namespace cfmimo_test
{

using namespace cfmimo;

inline double rel_fro(const cx_mat &value, const cx_mat &reference)
{
    double den = arma::norm(reference, "fro");
    if (den == 0.0)
        return arma::norm(value, "fro");
    return arma::norm(cx_mat(value - reference), "fro") / den;
}

inline double rel_fro(const arma::mat &value, const arma::mat &reference)
{
    double den = arma::norm(reference, "fro");
    if (den == 0.0)
        return arma::norm(value, "fro");
    return arma::norm(arma::mat(value - reference), "fro") / den;
}

// Deterministic O(1)-scale large-scale coefficients: keeps all estimator and
// SE terms within a few orders of magnitude, which is where 2% Monte-Carlo
// comparisons are sharpest.
inline arma::mat spread_betas(int M, int K)
{
    arma::mat beta(M, K);
    for (int m = 0; m < M; ++m)
        for (int k = 0; k < K; ++k)
        {
            double x = std::fmod(0.37 * (m * K + k) + 0.21, 1.0);
            beta(m, k) = 0.25 + 1.5 * x;
        }
    return beta;
}

struct ContextSpec
{
    int M = 4, K = 2, L = 2, N = 2;
    int tau_c = 200;
    int tau_p = 0; // 0 -> K*N (no contamination)
    double power = 1.0;
    double sigma2 = 0.5;
    CorrelationModel model = CorrelationModel::weichselberger;
    std::uint64_t seed = 1;
};

// Hand-assembled context with unit-scale betas, paper coupling matrices and
// Haar eigenbases; the workhorse fixture for oracle comparisons.
inline DropContext unit_context(const ContextSpec &spec)
{
    int tau_p = spec.tau_p > 0 ? spec.tau_p : spec.K * spec.N;
    auto sys = SystemConfig::equal_power(spec.M, spec.K, spec.L, spec.N, spec.tau_c, tau_p,
                                         spec.power, spec.sigma2);
    arma::mat beta = spread_betas(spec.M, spec.K);
    auto rng = make_rng(spec.seed, "test-basis");
    std::vector<ChannelStats> stats(static_cast<size_t>(spec.M) * spec.K);
    for (int m = 0; m < spec.M; ++m)
        for (int k = 0; k < spec.K; ++k)
        {
            arma::mat W = coupling_matrix_paper(spec.L, spec.N, beta(m, k));
            cx_mat Ur = random_unitary(spec.L, rng);
            cx_mat Ut = random_unitary(spec.N, rng);
            stats[static_cast<size_t>(m * spec.K + k)] = build_stats(spec.model, W, Ur, Ut);
        }
    PilotPlan plan = assign_pilots(spec.K, spec.N, tau_p);
    return make_drop_context(sys, plan, std::move(stats), stream_seed(spec.seed, "test-trials"));
}

// Full geometry pipeline with the paper's parameter set (powers in mW).
inline DropContext paper_context(int M, int K, int L, int N, int tau_p, std::uint64_t seed,
                                 CorrelationModel model = CorrelationModel::weichselberger,
                                 int tau_c = 200)
{
    auto sys = SystemConfig::equal_power(M, K, L, N, tau_c, tau_p, 200.0, std::pow(10.0, -9.4));
    GeometryParams geo;
    return build_drop_context(sys, model, geo, seed);
}

} // namespace cfmimo_test
