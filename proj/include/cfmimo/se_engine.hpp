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

#include "cfmimo/closed_form.hpp"
#include "cfmimo/combining.hpp"
#include "cfmimo/common.hpp"
#include "cfmimo/context.hpp"
#include "cfmimo/lsfd.hpp"

namespace cfmimo
{

struct McOptions
{
    long trials = 20000;
    int batches = 10;
    int workers = 1;
};

struct SEReport
{
    int level = 0;
    Scheme scheme = Scheme::MR;
    LsfdMode lsfd = LsfdMode::optimal; // meaningful for level 3 only
    arma::vec se;                      // K, bits/s/Hz
    arma::vec std_error;               // K, batch-means estimate
    long trials = 0;
    double prelog = 0.0;
};

// ---------------------------------------------------------------------------
// Per-realization evaluators
//
// Levels 4 and 1 place the expectation outside the log-det; these helpers
// return the per-trial log-det values that get averaged. Levels 3 and 2
// place the expectation inside the moments and are deterministic once the
// moments are fixed, so they are built from LeanMoments below.
// ---------------------------------------------------------------------------

inline std::vector<cx_mat> collective_estimates(const DropContext &ctx, const TrialData &trial)
{
    const int M = ctx.sys.M, K = ctx.sys.K, L = ctx.sys.L, N = ctx.sys.N;
    std::vector<cx_mat> Hc(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k)
    {
        cx_mat Hk(static_cast<arma::uword>(M) * L, N);
        for (int m = 0; m < M; ++m)
            Hk.rows(static_cast<arma::uword>(m) * L, static_cast<arma::uword>(m) * L + L - 1) =
                trial.Hhat[static_cast<size_t>(ctx.idx(m, k))];
        Hc[static_cast<size_t>(k)] = std::move(Hk);
    }
    return Hc;
}

// Corollary-form Level 4 values: log2|I + D^H Sigma^{-1} D| per UE for an
// arbitrary combiner set.
inline arma::vec level4_logdets(const DropContext &ctx, const std::vector<cx_mat> &Hhat_collective,
                                const std::vector<cx_mat> &V)
{
    const int K = ctx.sys.K;
    const arma::uword ML = Hhat_collective[0].n_rows;

    cx_mat base = ctx.err_prime_central + ctx.sys.sigma2 * arma::eye<cx_mat>(ML, ML);
    std::vector<cx_mat> Hp(static_cast<size_t>(K));
    for (int l = 0; l < K; ++l)
    {
        cx_mat X = Hhat_collective[static_cast<size_t>(l)];
        X.each_row() %= arma::conv_to<arma::cx_rowvec>::from(arma::sqrt(ctx.sys.data_alloc.col(l)).t());
        X *= std::sqrt(ctx.sys.data_power(l));
        Hp[static_cast<size_t>(l)] = std::move(X);
        base += Hp[static_cast<size_t>(l)] * Hp[static_cast<size_t>(l)].t();
    }

    arma::vec vals(K);
    for (int k = 0; k < K; ++k)
    {
        const cx_mat &Vk = V[static_cast<size_t>(k)];
        cx_mat Xi = base - Hp[static_cast<size_t>(k)] * Hp[static_cast<size_t>(k)].t();
        cx_mat Sigma = make_hermitian(Vk.t() * Xi * Vk);
        cx_mat D = std::sqrt(ctx.sys.data_power(k)) * Vk.t() * Hhat_collective[static_cast<size_t>(k)];
        D.each_row() %= arma::conv_to<arma::cx_rowvec>::from(arma::sqrt(ctx.sys.data_alloc.col(k)).t());
        vals(k) = logdet_sinr(D, Sigma);
    }
    return vals;
}

// Direct maximal form of the Level 4 value under MMSE combining; used to
// cross-check the corollary form (the two agree per realization up to the
// combiner's invariance to invertible right-multiplication).
inline arma::vec level4_logdets_direct(const DropContext &ctx, const std::vector<cx_mat> &Hhat_collective)
{
    const int K = ctx.sys.K;
    const arma::uword ML = Hhat_collective[0].n_rows;

    cx_mat base = ctx.err_prime_central + ctx.sys.sigma2 * arma::eye<cx_mat>(ML, ML);
    std::vector<cx_mat> Hp(static_cast<size_t>(K));
    for (int l = 0; l < K; ++l)
    {
        cx_mat X = Hhat_collective[static_cast<size_t>(l)];
        X.each_row() %= arma::conv_to<arma::cx_rowvec>::from(arma::sqrt(ctx.sys.data_alloc.col(l)).t());
        X *= std::sqrt(ctx.sys.data_power(l));
        Hp[static_cast<size_t>(l)] = std::move(X);
        base += Hp[static_cast<size_t>(l)] * Hp[static_cast<size_t>(l)].t();
    }

    arma::vec vals(K);
    for (int k = 0; k < K; ++k)
    {
        cx_mat Xi = base - Hp[static_cast<size_t>(k)] * Hp[static_cast<size_t>(k)].t();
        vals(k) = logdet_sinr(Hp[static_cast<size_t>(k)], Xi);
    }
    return vals;
}

// Level 1 values per (AP, UE) for one realization.
inline arma::mat level1_logdets(const DropContext &ctx, const TrialData &trial,
                                const std::vector<cx_mat> &local_comb)
{
    const int M = ctx.sys.M, K = ctx.sys.K, L = ctx.sys.L;
    arma::mat vals(M, K);
    for (int m = 0; m < M; ++m)
    {
        cx_mat base = ctx.err_prime_ap[static_cast<size_t>(m)] + ctx.sys.sigma2 * arma::eye<cx_mat>(L, L);
        std::vector<cx_mat> Hp(static_cast<size_t>(K));
        for (int l = 0; l < K; ++l)
        {
            cx_mat X = trial.Hhat[static_cast<size_t>(ctx.idx(m, l))];
            X.each_row() %= arma::conv_to<arma::cx_rowvec>::from(arma::sqrt(ctx.sys.data_alloc.col(l)).t());
            X *= std::sqrt(ctx.sys.data_power(l));
            Hp[static_cast<size_t>(l)] = std::move(X);
            base += Hp[static_cast<size_t>(l)] * Hp[static_cast<size_t>(l)].t();
        }
        for (int k = 0; k < K; ++k)
        {
            const cx_mat &Vmk = local_comb[static_cast<size_t>(ctx.idx(m, k))];
            cx_mat Xi = base - Hp[static_cast<size_t>(k)] * Hp[static_cast<size_t>(k)].t();
            cx_mat Sigma = make_hermitian(Vmk.t() * Xi * Vmk);
            cx_mat D = std::sqrt(ctx.sys.data_power(k)) * Vmk.t() * trial.Hhat[static_cast<size_t>(ctx.idx(m, k))];
            D.each_row() %= arma::conv_to<arma::cx_rowvec>::from(arma::sqrt(ctx.sys.data_alloc.col(k)).t());
            vals(m, k) = logdet_sinr(D, Sigma);
        }
    }
    return vals;
}

// ---------------------------------------------------------------------------
// Lean per-UE moment sums for the two-layer levels. Same content as the sum
// over l of GMoments, but only the power-weighted interference total is kept
// so the paper-scale configurations stay small in memory.
// ---------------------------------------------------------------------------

struct LeanMoments
{
    long count = 0;
    std::vector<cx_mat> Egkk_sum; // K, MN x N
    std::vector<cx_mat> Q_sum;    // K, MN x MN (sum_l p_l G P G^H accumulated per trial)
    std::vector<cx_mat> S_sum;    // M*K, N x N

    static LeanMoments zeros(int M, int N, int K)
    {
        LeanMoments lm;
        lm.Egkk_sum.assign(static_cast<size_t>(K), cx_mat(static_cast<arma::uword>(M) * N, N, arma::fill::zeros));
        lm.Q_sum.assign(static_cast<size_t>(K),
                        cx_mat(static_cast<arma::uword>(M) * N, static_cast<arma::uword>(M) * N, arma::fill::zeros));
        lm.S_sum.assign(static_cast<size_t>(M) * K, cx_mat(N, N, arma::fill::zeros));
        return lm;
    }

    void merge(const LeanMoments &o)
    {
        count += o.count;
        for (size_t i = 0; i < Egkk_sum.size(); ++i)
            Egkk_sum[i] += o.Egkk_sum[i];
        for (size_t i = 0; i < Q_sum.size(); ++i)
            Q_sum[i] += o.Q_sum[i];
        for (size_t i = 0; i < S_sum.size(); ++i)
            S_sum[i] += o.S_sum[i];
    }
};

inline void accumulate_lean_moments(LeanMoments &lm, const DropContext &ctx, const TrialData &trial,
                                    const std::vector<cx_mat> &combiners)
{
    const int M = ctx.sys.M, K = ctx.sys.K, L = ctx.sys.L, N = ctx.sys.N;

    // One (KN x KN) product per AP yields every V_mk^H H_ml block at once.
    std::vector<cx_mat> B(static_cast<size_t>(M));
    for (int m = 0; m < M; ++m)
    {
        cx_mat Vm(static_cast<arma::uword>(L), static_cast<arma::uword>(K) * N);
        cx_mat Hm(static_cast<arma::uword>(L), static_cast<arma::uword>(K) * N);
        for (int k = 0; k < K; ++k)
        {
            Vm.cols(static_cast<arma::uword>(k) * N, static_cast<arma::uword>(k) * N + N - 1) =
                combiners[static_cast<size_t>(ctx.idx(m, k))];
            Hm.cols(static_cast<arma::uword>(k) * N, static_cast<arma::uword>(k) * N + N - 1) =
                trial.H[static_cast<size_t>(ctx.idx(m, k))];
        }
        B[static_cast<size_t>(m)] = Vm.t() * Hm;
    }

    arma::vec sp = arma::sqrt(ctx.sys.data_power);
    for (int k = 0; k < K; ++k)
    {
        // Gall = [sqrt(p_1) G_k1 P_1^(1/2), ..., sqrt(p_K) G_kK P_K^(1/2)]
        cx_mat Gall(static_cast<arma::uword>(M) * N, static_cast<arma::uword>(K) * N);
        for (int m = 0; m < M; ++m)
            Gall.rows(static_cast<arma::uword>(m) * N, static_cast<arma::uword>(m) * N + N - 1) =
                B[static_cast<size_t>(m)].rows(static_cast<arma::uword>(k) * N, static_cast<arma::uword>(k) * N + N - 1);

        lm.Egkk_sum[static_cast<size_t>(k)] +=
            Gall.cols(static_cast<arma::uword>(k) * N, static_cast<arma::uword>(k) * N + N - 1);

        for (int l = 0; l < K; ++l)
        {
            arma::vec w = sp(l) * arma::sqrt(ctx.sys.data_alloc.col(l));
            Gall.cols(static_cast<arma::uword>(l) * N, static_cast<arma::uword>(l) * N + N - 1)
                .each_row() %= arma::conv_to<arma::cx_rowvec>::from(w.t());
        }
        lm.Q_sum[static_cast<size_t>(k)] += Gall * Gall.t();

        for (int m = 0; m < M; ++m)
        {
            const cx_mat &V = combiners[static_cast<size_t>(ctx.idx(m, k))];
            lm.S_sum[static_cast<size_t>(ctx.idx(m, k))] += V.t() * V;
        }
    }
}

namespace detail
{
inline LeanMoments tree_merge_lean(std::vector<LeanMoments> &parts, size_t lo, size_t hi)
{
    if (hi - lo == 1)
        return std::move(parts[lo]);
    size_t mid = lo + (hi - lo + 1) / 2;
    LeanMoments left = tree_merge_lean(parts, lo, mid);
    LeanMoments right = tree_merge_lean(parts, mid, hi);
    left.merge(right);
    return left;
}
} // namespace detail

// ---------------------------------------------------------------------------
// Fused Monte-Carlo runner
// ---------------------------------------------------------------------------

struct McNeeds
{
    bool l4 = false;    // per-trial collective log-dets
    bool l1 = false;    // per-trial local log-dets
    bool local = false; // lean moments for levels 3/2
};

struct McRunData
{
    long trials = 0;
    int batches = 0;
    arma::mat l4_batch_sums;            // batches x K
    std::vector<arma::mat> l1_batch;    // batches, each M x K sums
    std::vector<LeanMoments> mom_batch; // batches (moved out of after reduce)
    LeanMoments moments;                // reduced
    arma::vec batch_sizes;              // batches
};

// Runs the per-trial pipeline once for one combining scheme. Workers own
// whole batches; per-batch results are reduced in a fixed order so results
// do not depend on the worker count.
inline McRunData run_monte_carlo(const DropContext &ctx, Scheme scheme, const McNeeds &needs,
                                 const McOptions &opt)
{
    if (opt.trials < 1)
        throw InvalidInput("run_monte_carlo: at least one trial required");
    const int M = ctx.sys.M, K = ctx.sys.K, N = ctx.sys.N;

    BatchPartition part(opt.trials, opt.batches);
    McRunData run;
    run.trials = opt.trials;
    run.batches = part.batches;
    run.batch_sizes.set_size(part.batches);
    for (int b = 0; b < part.batches; ++b)
        run.batch_sizes(b) = static_cast<double>(part.size(b));
    if (needs.l4)
        run.l4_batch_sums.zeros(part.batches, K);
    if (needs.l1)
        run.l1_batch.assign(static_cast<size_t>(part.batches), arma::mat(M, K, arma::fill::zeros));
    if (needs.local)
        run.mom_batch.assign(static_cast<size_t>(part.batches), LeanMoments());

    for_each_batch(part, opt.workers, [&](int b) {
        arma::rowvec l4_sum(K, arma::fill::zeros);
        arma::mat l1_sum(M, K, arma::fill::zeros);
        LeanMoments mom = needs.local ? LeanMoments::zeros(M, N, K) : LeanMoments();

        for (long t = part.begin(b); t < part.end(b); ++t)
        {
            TrialData trial = sample_trial(ctx, t);

            if (needs.l1 || needs.local)
            {
                auto Vloc = local_combiners(ctx, trial, scheme);
                if (needs.local)
                    accumulate_lean_moments(mom, ctx, trial, Vloc);
                if (needs.l1)
                    l1_sum += level1_logdets(ctx, trial, Vloc);
            }
            if (needs.l4)
            {
                auto Hc = collective_estimates(ctx, trial);
                std::vector<cx_mat> V;
                if (scheme == Scheme::MR)
                {
                    V = Hc;
                }
                else
                {
                    V = mmse_combiner_central(Hc, ctx.err_prime_central, ctx.sys.data_power,
                                              ctx.sys.data_alloc, ctx.sys.sigma2);
                }
                l4_sum += level4_logdets(ctx, Hc, V).t();
            }
        }

        if (needs.l4)
            run.l4_batch_sums.row(b) = l4_sum;
        if (needs.l1)
            run.l1_batch[static_cast<size_t>(b)] = l1_sum;
        if (needs.local)
        {
            mom.count = part.size(b);
            run.mom_batch[static_cast<size_t>(b)] = std::move(mom);
        }
    });

    if (needs.local)
    {
        std::vector<LeanMoments> copy = run.mom_batch;
        run.moments = detail::tree_merge_lean(copy, 0, copy.size());
    }
    return run;
}

namespace detail
{
// Batch-means standard error of an overall mean.
inline double batch_std_error(const arma::vec &batch_means)
{
    const arma::uword B = batch_means.n_elem;
    if (B < 2)
        return 0.0;
    double mean = arma::mean(batch_means);
    double var = arma::accu(arma::square(batch_means - mean)) / static_cast<double>(B - 1);
    return std::sqrt(var / static_cast<double>(B));
}
} // namespace detail

inline SEReport se_level4_mc(const DropContext &ctx, Scheme scheme, const McOptions &opt)
{
    McNeeds needs;
    needs.l4 = true;
    McRunData run = run_monte_carlo(ctx, scheme, needs, opt);

    const int K = ctx.sys.K;
    const double prelog = ctx.prelog();
    SEReport rep;
    rep.level = 4;
    rep.scheme = scheme;
    rep.trials = opt.trials;
    rep.prelog = prelog;
    rep.se.set_size(K);
    rep.std_error.set_size(K);
    for (int k = 0; k < K; ++k)
    {
        double total = arma::accu(run.l4_batch_sums.col(k));
        rep.se(k) = prelog * total / static_cast<double>(run.trials);
        arma::vec means = run.l4_batch_sums.col(k) / run.batch_sizes;
        rep.std_error(k) = prelog * detail::batch_std_error(means);
    }
    return rep;
}

// Per-AP Level 1 SE values (before the best-AP selection); the expectation
// sits inside the max.
inline arma::mat se_level1_per_ap(const DropContext &ctx, Scheme scheme, const McOptions &opt)
{
    McNeeds needs;
    needs.l1 = true;
    McRunData run = run_monte_carlo(ctx, scheme, needs, opt);
    arma::mat total(ctx.sys.M, ctx.sys.K, arma::fill::zeros);
    for (const auto &b : run.l1_batch)
        total += b;
    return ctx.prelog() * total / static_cast<double>(run.trials);
}

inline SEReport se_level1_mc(const DropContext &ctx, Scheme scheme, const McOptions &opt)
{
    McNeeds needs;
    needs.l1 = true;
    McRunData run = run_monte_carlo(ctx, scheme, needs, opt);

    const int M = ctx.sys.M, K = ctx.sys.K;
    const double prelog = ctx.prelog();
    arma::mat total(M, K, arma::fill::zeros);
    for (const auto &b : run.l1_batch)
        total += b;

    SEReport rep;
    rep.level = 1;
    rep.scheme = scheme;
    rep.trials = opt.trials;
    rep.prelog = prelog;
    rep.se.set_size(K);
    rep.std_error.set_size(K);
    for (int k = 0; k < K; ++k)
    {
        arma::vec per_ap = prelog * total.col(k) / static_cast<double>(run.trials);
        arma::uword best = per_ap.index_max();
        rep.se(k) = per_ap(best);
        arma::vec means(run.batches);
        for (int b = 0; b < run.batches; ++b)
            means(b) = run.l1_batch[static_cast<size_t>(b)](best, k) / run.batch_sizes(b);
        rep.std_error(k) = prelog * detail::batch_std_error(means);
    }
    return rep;
}

// Level 3/2 SE from lean moments; deterministic given the moments.
inline arma::vec se_two_layer_from_moments(const DropContext &ctx, const LeanMoments &lm, LsfdMode mode)
{
    const int M = ctx.sys.M, K = ctx.sys.K, N = ctx.sys.N;
    const double n = static_cast<double>(lm.count);
    arma::vec se(K);
    for (int k = 0; k < K; ++k)
    {
        cx_mat Egkk = lm.Egkk_sum[static_cast<size_t>(k)] / n;
        cx_mat Q = make_hermitian(lm.Q_sum[static_cast<size_t>(k)] / n);
        std::vector<cx_mat> Sblocks(static_cast<size_t>(M));
        for (int m = 0; m < M; ++m)
            Sblocks[static_cast<size_t>(m)] = make_hermitian(lm.S_sum[static_cast<size_t>(ctx.idx(m, k))] / n);
        cx_mat Sfull = blockdiag(Sblocks);
        cx_mat A = (mode == LsfdMode::optimal)
                       ? optimal_lsfd(Egkk, Q, Sfull, ctx.sys.data_power(k), ctx.sys.data_alloc.col(k), ctx.sys.sigma2)
                       : uniform_lsfd(M, N);
        se(k) = se_from_moments(A, Egkk, Q, Sfull, ctx.sys.data_power(k), ctx.sys.data_alloc.col(k),
                                ctx.sys.sigma2, ctx.prelog());
    }
    return se;
}

enum class EvalMode
{
    monte_carlo,
    closed_form
};

inline SEReport se_level3_mc(const DropContext &ctx, Scheme scheme, LsfdMode mode,
                             const McOptions &opt, EvalMode eval = EvalMode::monte_carlo)
{
    SEReport rep;
    rep.level = 3;
    rep.scheme = scheme;
    rep.lsfd = mode;
    rep.prelog = ctx.prelog();

    if (eval == EvalMode::closed_form)
    {
        if (scheme != Scheme::MR)
            throw InvalidInput("se_level3_mc: closed form exists only for MR combining");
        auto terms = build_closed_form_terms(ctx);
        rep.se = se_level3_closed(ctx, terms, mode);
        rep.std_error.zeros(ctx.sys.K);
        rep.trials = 0;
        return rep;
    }

    McNeeds needs;
    needs.local = true;
    McRunData run = run_monte_carlo(ctx, scheme, needs, opt);
    rep.trials = opt.trials;
    rep.se = se_two_layer_from_moments(ctx, run.moments, mode);

    // Batch-means diagnostic: the SE a single batch's moments would give.
    arma::mat batch_se(run.batches, ctx.sys.K);
    bool have_batches = run.batches >= 2;
    if (have_batches)
    {
        for (int b = 0; b < run.batches; ++b)
        {
            try
            {
                batch_se.row(b) = se_two_layer_from_moments(ctx, run.mom_batch[static_cast<size_t>(b)], mode).t();
            }
            catch (const NumericalError &)
            {
                have_batches = false;
                break;
            }
        }
    }
    rep.std_error.zeros(ctx.sys.K);
    if (have_batches)
        for (int k = 0; k < ctx.sys.K; ++k)
            rep.std_error(k) = detail::batch_std_error(batch_se.col(k));
    return rep;
}

inline SEReport se_level2_mc(const DropContext &ctx, Scheme scheme, const McOptions &opt,
                             EvalMode eval = EvalMode::monte_carlo)
{
    SEReport rep;
    if (eval == EvalMode::closed_form)
    {
        if (scheme != Scheme::MR)
            throw InvalidInput("se_level2_mc: closed form exists only for MR combining");
        auto terms = build_closed_form_terms(ctx);
        rep.se = se_level2_closed(ctx, terms);
        rep.std_error.zeros(ctx.sys.K);
        rep.trials = 0;
    }
    else
    {
        rep = se_level3_mc(ctx, scheme, LsfdMode::uniform, opt);
    }
    rep.level = 2;
    rep.scheme = scheme;
    rep.lsfd = LsfdMode::uniform;
    rep.prelog = ctx.prelog();
    return rep;
}

} // namespace cfmimo
