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

#include "cfmimo/common.hpp"
#include "cfmimo/context.hpp"
#include "cfmimo/lsfd.hpp"

namespace cfmimo
{

// tr(A B) without forming the product.
inline cx trace_prod(const cx_mat &A, const cx_mat &B)
{
    return arma::accu(A % B.st());
}

// [Z]_{nn'} = tr(Rhat^{n'n}); equals E{Hhat^H Hhat} under MR combining.
inline cx_mat z_matrix(const cx_mat &Rhat, int L, int N)
{
    cx_mat Z(N, N);
    for (int n = 0; n < N; ++n)
        for (int np = 0; np < N; ++np)
            Z(n, np) = arma::trace(block_of(Rhat, np, n, L));
    return Z;
}

// Cross-covariance of co-pilot estimates and its block-trace matrix:
//   Theta_mkl = E{h_hat_ml h_hat_mk^H}
//             = sqrt(p_k p_l) tau_p Omega_l^(1/2) R_ml Psi_mk^{-1} R_mk Omega_k^(1/2),
//   [Lambda_mkl]_{nn'} = tr(Theta_mkl^{n'n}) = [E{Hhat_mk^H Hhat_ml}]_{nn'}.
inline std::pair<cx_mat, cx_mat> theta_lambda(const DropContext &ctx, int m, int k, int l)
{
    if (ctx.plan.group_of(l) != ctx.plan.group_of(k))
        throw InvalidInput("theta_lambda: UEs do not share a pilot group");
    const int L = ctx.sys.L, N = ctx.sys.N;
    const auto &plan = ctx.plan;

    arma::vec dl = omega_tilde_sqrt(plan.omega.col(l), L);
    cx_mat Rl = ctx.stat(m, l).R;
    Rl.each_col() %= arma::conv_to<cx_vec>::from(dl);

    double scale = std::sqrt(plan.pilot_power(k) * plan.pilot_power(l)) * plan.tau_p;
    cx_mat Theta = scale * Rl * ctx.estimator(m, k).S.t();

    cx_mat Lambda(N, N);
    for (int n = 0; n < N; ++n)
        for (int np = 0; np < N; ++np)
            Lambda(n, np) = arma::trace(block_of(Theta, np, n, L));
    return {Theta, Lambda};
}

// Case 3 (independent links): [Gamma1]_{nn'} = sum_i eta_li tr(R_ml^{ii} Rhat_mk^{n'n}).
inline cx_mat gamma1(const DropContext &ctx, int m, int k, int l)
{
    const int L = ctx.sys.L, N = ctx.sys.N;
    const cx_mat &Rl = ctx.stat(m, l).R;
    const cx_mat &Rhat = ctx.estimator(m, k).Rhat;
    const arma::vec eta = ctx.sys.data_alloc.col(l);

    cx_mat G(N, N, arma::fill::zeros);
    for (int i = 0; i < N; ++i)
    {
        if (eta(i) == 0.0)
            continue;
        cx_mat Rii = block_of(Rl, i, i, L);
        for (int n = 0; n < N; ++n)
            for (int np = 0; np < N; ++np)
                G(n, np) += eta(i) * trace_prod(Rii, block_of(Rhat, np, n, L));
    }
    return G;
}

// Case 4 (co-pilot links): the estimate and the interfering channel are
// correlated through the shared pilot observation. Split along
//   h_hat = sqrt(p_k) S (x + sqrt(p_l) tau_p Omega_l^(1/2) h_ml)
// into the part independent of h_ml (covariance F1) and the fully dependent
// part (covariance F2), then expand the quartic moment over the Hermitian
// square-root blocks of F2 and R_ml.
inline cx_mat gamma2(const DropContext &ctx, int m, int k, int l)
{
    if (ctx.plan.group_of(l) != ctx.plan.group_of(k))
        throw InvalidInput("gamma2: UEs do not share a pilot group");
    const int L = ctx.sys.L, N = ctx.sys.N;
    const auto &plan = ctx.plan;
    const double tau_p = plan.tau_p;
    const double pk = plan.pilot_power(k), pl = plan.pilot_power(l);
    const arma::vec eta = ctx.sys.data_alloc.col(l);
    const EstimatorEntry &ek = ctx.estimator(m, k);
    const cx_mat &Rl = ctx.stat(m, l).R;

    arma::vec dl = omega_tilde_sqrt(plan.omega.col(l), L);
    cx_mat Rl_sc = Rl % arma::conv_to<cx_mat>::from(arma::mat(dl * dl.t()));

    cx_mat F1 = make_hermitian(tau_p * ek.S * (ek.Psi - pl * tau_p * Rl_sc) * ek.S.t());
    cx_mat F2 = make_hermitian(ek.S * Rl_sc * ek.S.t());

    cx_mat F2s, Rs;
    try
    {
        F2s = hermitian_sqrt(F2);
        Rs = hermitian_sqrt(Rl);
    }
    catch (const NumericalError &)
    {
        throw NumericalError("gamma2: Hermitian square root failed (cond(Psi) = " +
                             std::to_string(arma::cond(ek.Psi)) + ")");
    }

    // Block caches: FB[q][n] = (q,n) block of F2^(1/2), RB[i][q] of R^(1/2).
    auto FB = [&](int a, int b) { return block_of(F2s, a, b, L); };
    auto RB = [&](int a, int b) { return block_of(Rs, a, b, L); };

    std::vector<cx_mat> Rdiag(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i)
        Rdiag[static_cast<size_t>(i)] = block_of(Rl, i, i, L);

    cx_mat G(N, N, arma::fill::zeros);
    for (int n = 0; n < N; ++n)
        for (int np = 0; np < N; ++np)
        {
            cx acc = 0.0;
            for (int i = 0; i < N; ++i)
            {
                if (eta(i) == 0.0)
                    continue;
                cx t1 = trace_prod(Rdiag[static_cast<size_t>(i)], block_of(F1, np, n, L));
                cx t2 = 0.0, t3 = 0.0;
                for (int q1 = 0; q1 < N; ++q1)
                {
                    cx_mat Fq1n = FB(q1, n);
                    cx_mat Fnpq1 = FB(np, q1);
                    for (int q2 = 0; q2 < N; ++q2)
                    {
                        t2 += trace_prod(cx_mat(Fq1n * RB(i, q2)), cx_mat(RB(q2, i) * Fnpq1));
                        t3 += trace_prod(Fq1n, RB(i, q1)) * trace_prod(FB(np, q2), RB(q2, i));
                    }
                }
                acc += eta(i) * (pk * t1 + pk * pl * tau_p * tau_p * (t2 + t3));
            }
            G(n, np) = acc;
        }
    return G;
}

// All statistics-level terms of the Level 3 / Level 2 closed forms for one
// drop. Co-pilot-only terms are left empty for independent pairs.
struct ClosedFormTerms
{
    int M = 0, K = 0, N = 0;
    std::vector<cx_mat> Z;      // M*K, N x N
    std::vector<cx_mat> Gamma1; // M*K*K, N x N, index (m*K + k)*K + l
    std::vector<cx_mat> Lambda; // M*K*K, co-pilot pairs only
    std::vector<cx_mat> Gamma2; // M*K*K, co-pilot pairs only

    int tidx(int m, int k, int l) const { return (m * K + k) * K + l; }
    const cx_mat &lambda(int m, int k, int l) const { return Lambda[static_cast<size_t>(tidx(m, k, l))]; }
};

inline ClosedFormTerms build_closed_form_terms(const DropContext &ctx)
{
    const int M = ctx.sys.M, K = ctx.sys.K, L = ctx.sys.L, N = ctx.sys.N;
    ClosedFormTerms terms;
    terms.M = M;
    terms.K = K;
    terms.N = N;
    terms.Z.resize(static_cast<size_t>(M) * K);
    terms.Gamma1.resize(static_cast<size_t>(M) * K * K);
    terms.Lambda.resize(static_cast<size_t>(M) * K * K);
    terms.Gamma2.resize(static_cast<size_t>(M) * K * K);

    for (int m = 0; m < M; ++m)
        for (int k = 0; k < K; ++k)
        {
            terms.Z[static_cast<size_t>(m * K + k)] = z_matrix(ctx.estimator(m, k).Rhat, L, N);
            for (int l = 0; l < K; ++l)
            {
                terms.Gamma1[static_cast<size_t>(terms.tidx(m, k, l))] = gamma1(ctx, m, k, l);
                if (ctx.plan.group_of(l) == ctx.plan.group_of(k))
                {
                    terms.Lambda[static_cast<size_t>(terms.tidx(m, k, l))] = theta_lambda(ctx, m, k, l).second;
                    terms.Gamma2[static_cast<size_t>(terms.tidx(m, k, l))] = gamma2(ctx, m, k, l);
                }
            }
        }
    return terms;
}

enum class CooperationLevel
{
    L2,
    L3
};

// T matrices of the closed-form interference term E{G_kl P_l G_kl^H}:
// Level 3 keeps the MN x MN block structure, Level 2 sums the blocks.
// Returns {T1, T2}; T2 is empty when l is not a co-pilot of k.
inline std::pair<cx_mat, cx_mat> assemble_T(const ClosedFormTerms &terms, const DropContext &ctx,
                                            int k, int l, CooperationLevel level)
{
    const int M = terms.M, N = terms.N;
    const bool copilot = ctx.plan.group_of(l) == ctx.plan.group_of(k);
    const arma::vec Pl = ctx.sys.data_alloc.col(l);

    auto g1 = [&](int m) -> const cx_mat & { return terms.Gamma1[static_cast<size_t>(terms.tidx(m, k, l))]; };
    auto g2 = [&](int m) -> const cx_mat & { return terms.Gamma2[static_cast<size_t>(terms.tidx(m, k, l))]; };
    auto cross = [&](int m, int mp) {
        // Lambda_mkl P_l Lambda_m'lk
        cx_mat left = terms.lambda(m, k, l);
        left.each_row() %= arma::conv_to<arma::cx_rowvec>::from(Pl.t());
        return cx_mat(left * terms.lambda(mp, l, k));
    };

    if (level == CooperationLevel::L3)
    {
        cx_mat T1(static_cast<arma::uword>(M) * N, static_cast<arma::uword>(M) * N, arma::fill::zeros);
        for (int m = 0; m < M; ++m)
            T1.submat(static_cast<arma::uword>(m) * N, static_cast<arma::uword>(m) * N,
                      static_cast<arma::uword>(m) * N + N - 1, static_cast<arma::uword>(m) * N + N - 1) = g1(m);
        cx_mat T2;
        if (copilot)
        {
            T2.zeros(static_cast<arma::uword>(M) * N, static_cast<arma::uword>(M) * N);
            for (int m = 0; m < M; ++m)
                for (int mp = 0; mp < M; ++mp)
                {
                    cx_mat blockv = (m == mp) ? cx_mat(g2(m) - g1(m)) : cross(m, mp);
                    T2.submat(static_cast<arma::uword>(m) * N, static_cast<arma::uword>(mp) * N,
                              static_cast<arma::uword>(m) * N + N - 1, static_cast<arma::uword>(mp) * N + N - 1) = blockv;
                }
        }
        return {T1, T2};
    }

    cx_mat T1(N, N, arma::fill::zeros);
    for (int m = 0; m < M; ++m)
        T1 += g1(m);
    cx_mat T2;
    if (copilot)
    {
        T2.zeros(N, N);
        for (int m = 0; m < M; ++m)
            T2 += g2(m) - g1(m);
        for (int m = 0; m < M; ++m)
            for (int mp = 0; mp < M; ++mp)
                if (m != mp)
                    T2 += cross(m, mp);
    }
    return {T1, T2};
}

namespace detail
{
// sum_l p_l (T1 + T2) for one UE, the closed-form counterpart of the
// Monte-Carlo interference moment.
inline cx_mat closed_interference(const ClosedFormTerms &terms, const DropContext &ctx,
                                  int k, CooperationLevel level)
{
    const int K = ctx.sys.K;
    cx_mat Q;
    for (int l = 0; l < K; ++l)
    {
        auto [T1, T2] = assemble_T(terms, ctx, k, l, level);
        cx_mat contrib = T1;
        if (!T2.is_empty())
            contrib += T2;
        if (Q.is_empty())
            Q = ctx.sys.data_power(l) * contrib;
        else
            Q += ctx.sys.data_power(l) * contrib;
    }
    return make_hermitian(Q);
}
} // namespace detail

// Closed-form Level 3 SE under MR combining, with optimal or uniform LSFD.
inline arma::vec se_level3_closed(const DropContext &ctx, const ClosedFormTerms &terms,
                                  LsfdMode mode)
{
    const int M = ctx.sys.M, K = ctx.sys.K, N = ctx.sys.N;
    arma::vec se(K);
    for (int k = 0; k < K; ++k)
    {
        cx_mat Zk(static_cast<arma::uword>(M) * N, N);
        std::vector<cx_mat> Sblocks(static_cast<size_t>(M));
        for (int m = 0; m < M; ++m)
        {
            Zk.rows(static_cast<arma::uword>(m) * N, static_cast<arma::uword>(m) * N + N - 1) =
                terms.Z[static_cast<size_t>(m * K + k)];
            Sblocks[static_cast<size_t>(m)] = terms.Z[static_cast<size_t>(m * K + k)];
        }
        cx_mat Sfull = blockdiag(Sblocks);
        cx_mat Q = detail::closed_interference(terms, ctx, k, CooperationLevel::L3);
        cx_mat A = (mode == LsfdMode::optimal)
                       ? optimal_lsfd(Zk, Q, Sfull, ctx.sys.data_power(k), ctx.sys.data_alloc.col(k), ctx.sys.sigma2)
                       : uniform_lsfd(M, N);
        se(k) = se_from_moments(A, Zk, Q, Sfull, ctx.sys.data_power(k), ctx.sys.data_alloc.col(k),
                                ctx.sys.sigma2, ctx.prelog());
    }
    return se;
}

// Closed-form Level 2 SE under MR combining (uniform averaging of the local
// estimates; the summed T matrices collapse the block structure).
inline arma::vec se_level2_closed(const DropContext &ctx, const ClosedFormTerms &terms)
{
    const int M = ctx.sys.M, K = ctx.sys.K, N = ctx.sys.N;
    arma::vec se(K);
    cx_mat eyeN = arma::eye<cx_mat>(N, N);
    for (int k = 0; k < K; ++k)
    {
        cx_mat Zsum(N, N, arma::fill::zeros);
        for (int m = 0; m < M; ++m)
            Zsum += terms.Z[static_cast<size_t>(m * K + k)];
        cx_mat Q = detail::closed_interference(terms, ctx, k, CooperationLevel::L2);
        se(k) = se_from_moments(eyeN, Zsum, Q, Zsum, ctx.sys.data_power(k), ctx.sys.data_alloc.col(k),
                                ctx.sys.sigma2, ctx.prelog());
    }
    return se;
}

} // namespace cfmimo
