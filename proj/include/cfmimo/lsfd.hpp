// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink spectral-efficiency simulation for cell-free massive MIMO
// with multi-antenna users over jointly-correlated Rayleigh fading.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "cfmimo/combining.hpp"
#include "cfmimo/common.hpp"
#include "cfmimo/context.hpp"

namespace cfmimo
{

enum class LsfdMode
{
    optimal,
    uniform
};

inline const char *to_string(LsfdMode m) { return m == LsfdMode::optimal ? "optimal" : "uniform"; }

// First-layer combiners V_mk for every link of one trial.
inline std::vector<cx_mat> local_combiners(const DropContext &ctx, const TrialData &trial, Scheme scheme)
{
    const int M = ctx.sys.M, K = ctx.sys.K;
    std::vector<cx_mat> V(static_cast<size_t>(M) * K);
    if (scheme == Scheme::MR)
    {
        for (int i = 0; i < M * K; ++i)
            V[static_cast<size_t>(i)] = mr_combiner(trial.Hhat[static_cast<size_t>(i)]);
        return V;
    }
    std::vector<cx_mat> at_ap(static_cast<size_t>(K));
    for (int m = 0; m < M; ++m)
    {
        for (int k = 0; k < K; ++k)
            at_ap[static_cast<size_t>(k)] = trial.Hhat[static_cast<size_t>(ctx.idx(m, k))];
        auto Vm = lmmse_combiner_local(at_ap, ctx.err_prime_ap[static_cast<size_t>(m)],
                                       ctx.sys.data_power, ctx.sys.data_alloc, ctx.sys.sigma2);
        for (int k = 0; k < K; ++k)
            V[static_cast<size_t>(ctx.idx(m, k))] = std::move(Vm[static_cast<size_t>(k)]);
    }
    return V;
}

// G_kl = [V_1k^H H_1l; ...; V_Mk^H H_Ml], MN x N.
inline cx_mat stack_g(const std::vector<cx_mat> &combiners_k, const std::vector<cx_mat> &channels_l)
{
    const int M = static_cast<int>(combiners_k.size());
    const int N = static_cast<int>(combiners_k[0].n_cols);
    cx_mat G(static_cast<arma::uword>(M) * N, N);
    for (int m = 0; m < M; ++m)
        G.rows(static_cast<arma::uword>(m) * N, static_cast<arma::uword>(m) * N + N - 1) =
            combiners_k[static_cast<size_t>(m)].t() * channels_l[static_cast<size_t>(m)];
    return G;
}

// Sample moments of the second-layer quantities for one UE: E{G_kk},
// E{G_kl P_l G_kl^H} per co-UE, and the block-diagonal S_k. Stored as sums
// so that disjoint batches pool exactly.
struct GMoments
{
    int M = 0, N = 0, K = 0;
    long count = 0;
    cx_mat Egkk_sum;               // MN x N
    std::vector<cx_mat> Egg_sum;   // K, MN x MN
    std::vector<cx_mat> S_sum;     // M, N x N

    static GMoments zeros(int M, int N, int K)
    {
        GMoments g;
        g.M = M;
        g.N = N;
        g.K = K;
        g.Egkk_sum.zeros(static_cast<arma::uword>(M) * N, N);
        g.Egg_sum.assign(static_cast<size_t>(K),
                         cx_mat(static_cast<arma::uword>(M) * N, static_cast<arma::uword>(M) * N, arma::fill::zeros));
        g.S_sum.assign(static_cast<size_t>(M), cx_mat(N, N, arma::fill::zeros));
        return g;
    }

    void merge(const GMoments &other)
    {
        count += other.count;
        Egkk_sum += other.Egkk_sum;
        for (size_t l = 0; l < Egg_sum.size(); ++l)
            Egg_sum[l] += other.Egg_sum[l];
        for (size_t m = 0; m < S_sum.size(); ++m)
            S_sum[m] += other.S_sum[m];
    }

    cx_mat Egkk() const { return Egkk_sum / static_cast<double>(count); }

    // Symmetrized on read; each summand is Hermitian up to round-off.
    cx_mat Egg(int l) const { return make_hermitian(Egg_sum[static_cast<size_t>(l)] / static_cast<double>(count)); }

    cx_mat S_block(int m) const { return make_hermitian(S_sum[static_cast<size_t>(m)] / static_cast<double>(count)); }

    cx_mat S_full() const
    {
        std::vector<cx_mat> blocks(static_cast<size_t>(M));
        for (int m = 0; m < M; ++m)
            blocks[static_cast<size_t>(m)] = S_block(m);
        return blockdiag(blocks);
    }

    // sum_l p_l E{G_kl P_l G_kl^H}
    cx_mat weighted_interference(const arma::vec &data_power) const
    {
        cx_mat Q(Egg_sum[0].n_rows, Egg_sum[0].n_cols, arma::fill::zeros);
        for (int l = 0; l < K; ++l)
            Q += data_power(l) * Egg(l);
        return make_hermitian(Q);
    }
};

// Accumulates one trial into the sums for UE k. P_l enters through its
// square root so each summand G P G^H stays PSD.
inline void accumulate_g_moments(GMoments &g, const DropContext &ctx, const TrialData &trial,
                                 const std::vector<cx_mat> &combiners, int k)
{
    const int M = ctx.sys.M, K = ctx.sys.K, N = ctx.sys.N;
    std::vector<cx_mat> Vk(static_cast<size_t>(M)), Hl(static_cast<size_t>(M));
    for (int m = 0; m < M; ++m)
        Vk[static_cast<size_t>(m)] = combiners[static_cast<size_t>(ctx.idx(m, k))];

    for (int l = 0; l < K; ++l)
    {
        for (int m = 0; m < M; ++m)
            Hl[static_cast<size_t>(m)] = trial.H[static_cast<size_t>(ctx.idx(m, l))];
        cx_mat G = stack_g(Vk, Hl);
        if (l == k)
            g.Egkk_sum += G;
        cx_mat Gp = G;
        Gp.each_row() %= arma::conv_to<arma::cx_rowvec>::from(arma::sqrt(ctx.sys.data_alloc.col(l)).t());
        g.Egg_sum[static_cast<size_t>(l)] += Gp * Gp.t();
    }
    for (int m = 0; m < M; ++m)
    {
        const cx_mat &V = Vk[static_cast<size_t>(m)];
        g.S_sum[static_cast<size_t>(m)] += V.t() * V;
    }
    (void)N;
    g.count += 1;
}

namespace detail
{
// Fixed split-at-midpoint tree reduction; pooling the two halves of a batch
// range reproduces this result bit for bit.
inline GMoments tree_merge(std::vector<GMoments> &parts, size_t lo, size_t hi)
{
    if (hi - lo == 1)
        return std::move(parts[lo]);
    size_t mid = lo + (hi - lo + 1) / 2;
    GMoments left = tree_merge(parts, lo, mid);
    GMoments right = tree_merge(parts, mid, hi);
    left.merge(right);
    return left;
}
} // namespace detail

struct MomentOptions
{
    long trials = 10000;
    int batches = 10;
    int workers = 1;
};

// Monte-Carlo moments for UE k. Trials are drawn from the context's seeded
// per-trial streams, so the result is independent of the worker count.
inline GMoments estimate_moments(const DropContext &ctx, Scheme scheme, int k,
                                 const MomentOptions &opt)
{
    if (opt.trials < 1)
        throw InvalidInput("estimate_moments: at least one trial required");
    BatchPartition part(opt.trials, opt.batches);
    std::vector<GMoments> parts(static_cast<size_t>(part.batches));
    for_each_batch(part, opt.workers, [&](int b) {
        GMoments acc = GMoments::zeros(ctx.sys.M, ctx.sys.N, ctx.sys.K);
        for (long t = part.begin(b); t < part.end(b); ++t)
        {
            TrialData trial = sample_trial(ctx, t);
            auto combiners = local_combiners(ctx, trial, scheme);
            accumulate_g_moments(acc, ctx, trial, combiners, k);
        }
        parts[static_cast<size_t>(b)] = std::move(acc);
    });
    return detail::tree_merge(parts, 0, parts.size());
}

// A_k maximizing the second-layer SE:
//   A_k = p_k (sum_l p_l E{G_kl P_l G_kl^H} + sigma2 S_k)^{-1} E{G_kk} P_k.
inline cx_mat optimal_lsfd(const cx_mat &Egkk, const cx_mat &interference,
                           const cx_mat &S_full, double p_k, const arma::vec &Pk_diag,
                           double sigma2)
{
    cx_mat A = solve_hermitian(interference + sigma2 * S_full, Egkk, "optimal_lsfd");
    A *= p_k;
    A.each_row() %= arma::conv_to<arma::cx_rowvec>::from(Pk_diag.t());
    return A;
}

inline cx_mat uniform_lsfd(int M, int N)
{
    if (M < 1 || N < 1)
        throw InvalidInput("uniform_lsfd: M and N must be >= 1");
    cx_mat A(static_cast<arma::uword>(M) * N, N, arma::fill::zeros);
    for (int m = 0; m < M; ++m)
        A.rows(static_cast<arma::uword>(m) * N, static_cast<arma::uword>(m) * N + N - 1) =
            arma::eye<cx_mat>(N, N) / static_cast<double>(M);
    return A;
}

// Second-layer log-det SE for one UE from moments (or their closed forms).
inline double se_from_moments(const cx_mat &A, const cx_mat &Egkk, const cx_mat &interference,
                              const cx_mat &S_full, double p_k, const arma::vec &Pk_diag,
                              double sigma2, double prelog)
{
    cx_mat D = std::sqrt(p_k) * A.t() * Egkk;
    D.each_row() %= arma::conv_to<arma::cx_rowvec>::from(arma::sqrt(Pk_diag).t());
    cx_mat Sigma = A.t() * interference * A - D * D.t() + sigma2 * (A.t() * S_full * A);
    return prelog * logdet_sinr(D, make_hermitian(Sigma));
}

} // namespace cfmimo
