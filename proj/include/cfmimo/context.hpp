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

#include "cfmimo/channel.hpp"
#include "cfmimo/combining.hpp"
#include "cfmimo/common.hpp"
#include "cfmimo/estimation.hpp"
#include "cfmimo/geometry.hpp"

namespace cfmimo
{

// Scalar system description shared by all modules. Powers are linear and
// only need to be expressed in the same unit as sigma2.
struct SystemConfig
{
    int M = 1; // APs
    int K = 1; // UEs
    int L = 1; // antennas per AP
    int N = 1; // antennas per UE
    int tau_c = 200;
    int tau_p = 1;
    double sigma2 = 1.0;
    arma::vec data_power;  // K, p_k
    arma::mat data_alloc;  // N x K, diag of P_k per column
    arma::vec pilot_power; // K, p_hat_k
    arma::mat pilot_alloc; // N x K, diag of Omega_k per column

    static SystemConfig equal_power(int M, int K, int L, int N, int tau_c, int tau_p,
                                    double power, double sigma2)
    {
        SystemConfig sys;
        sys.M = M;
        sys.K = K;
        sys.L = L;
        sys.N = N;
        sys.tau_c = tau_c;
        sys.tau_p = tau_p;
        sys.sigma2 = sigma2;
        sys.data_power = arma::vec(K, arma::fill::value(power));
        sys.pilot_power = arma::vec(K, arma::fill::value(power));
        sys.data_alloc = arma::mat(N, K, arma::fill::value(1.0 / N));
        sys.pilot_alloc = arma::mat(N, K, arma::fill::value(1.0 / N));
        return sys;
    }

    void validate() const
    {
        if (M < 1 || K < 1 || L < 1 || N < 1)
            throw ConfigError("system: all counts must be >= 1");
        if (tau_p < 1 || tau_p > tau_c)
            throw ConfigError("system: tau_p must lie in [1, tau_c]");
        if (tau_p % N != 0)
            throw ConfigError("system: tau_p must be a multiple of N");
        if (sigma2 < 0.0)
            throw ConfigError("system: noise power must be >= 0");
        if (data_power.min() < 0.0 || pilot_power.min() < 0.0)
            throw ConfigError("system: transmit powers must be >= 0");
        validate_power_allocation(data_alloc, "data allocation");
        validate_power_allocation(pilot_alloc, "pilot allocation");
    }

    double prelog() const { return 1.0 - static_cast<double>(tau_p) / tau_c; }
};

struct GeometryParams
{
    double area_side = 1000.0;
    double ap_height_offset = 11.0;
    ShadowingParams shadowing;
};

// Everything that is fixed for one network drop: channel statistics,
// estimator state and error-covariance aggregates. Immutable once built;
// trials only redraw the small-scale fading.
struct DropContext
{
    SystemConfig sys;
    PilotPlan plan;
    std::vector<ChannelStats> stats;  // M*K, index m*K + k
    std::vector<EstimatorEntry> est;  // M*K
    std::vector<cx_mat> err_prime;    // M*K, C'_ml (L x L)
    std::vector<cx_mat> err_prime_ap; // M, sum_l p_l C'_ml
    cx_mat err_prime_central;         // ML x ML, blockdiag of err_prime_ap
    std::uint64_t trial_stream = 0;   // base seed for per-trial streams

    int idx(int m, int k) const { return m * sys.K + k; }
    const ChannelStats &stat(int m, int k) const { return stats[static_cast<size_t>(idx(m, k))]; }
    const EstimatorEntry &estimator(int m, int k) const { return est[static_cast<size_t>(idx(m, k))]; }
    double prelog() const { return sys.prelog(); }
};

// Derived quantities below the statistics level; shared by the context
// builders after `stats` is filled in.
inline void finalize_drop_context(DropContext &ctx)
{
    const int M = ctx.sys.M, K = ctx.sys.K, L = ctx.sys.L;

    ctx.est.resize(static_cast<size_t>(M) * K);
    ctx.err_prime.resize(static_cast<size_t>(M) * K);
    ctx.err_prime_ap.assign(static_cast<size_t>(M), cx_mat(L, L, arma::fill::zeros));

    for (int m = 0; m < M; ++m)
    {
        std::vector<const ChannelStats *> row(static_cast<size_t>(K));
        for (int k = 0; k < K; ++k)
            row[static_cast<size_t>(k)] = &ctx.stat(m, k);
        for (int k = 0; k < K; ++k)
        {
            auto entry = estimator_state(row, ctx.plan, ctx.sys.sigma2, k);
            cx_mat cp = error_cov_prime(entry.C, ctx.sys.data_alloc.col(k), L);
            ctx.err_prime[static_cast<size_t>(ctx.idx(m, k))] = cp;
            ctx.err_prime_ap[static_cast<size_t>(m)] += ctx.sys.data_power(k) * cp;
            ctx.est[static_cast<size_t>(ctx.idx(m, k))] = std::move(entry);
        }
    }
    ctx.err_prime_central = blockdiag(ctx.err_prime_ap);
}

// Test/fixture entry point: statistics supplied directly.
inline DropContext make_drop_context(const SystemConfig &sys, const PilotPlan &plan,
                                     std::vector<ChannelStats> stats,
                                     std::uint64_t trial_stream)
{
    sys.validate();
    if (static_cast<int>(stats.size()) != sys.M * sys.K)
        throw InvalidInput("make_drop_context: expected M*K statistics entries");
    DropContext ctx;
    ctx.sys = sys;
    ctx.plan = plan;
    ctx.plan.pilot_power = sys.pilot_power;
    ctx.plan.omega = sys.pilot_alloc;
    ctx.stats = std::move(stats);
    ctx.trial_stream = trial_stream;
    finalize_drop_context(ctx);
    return ctx;
}

// Full pipeline: geometry drop, pathloss and shadowing, per-link coupling
// matrices with randomly drawn eigenbases (frozen for the drop's trials).
inline DropContext build_drop_context(const SystemConfig &sys, CorrelationModel model,
                                      const GeometryParams &geo, std::uint64_t master_seed,
                                      std::uint64_t drop_index = 0)
{
    sys.validate();
    const int M = sys.M, K = sys.K, L = sys.L, N = sys.N;

    NetworkDrop drop = drop_network(M, K, geo.area_side,
                                    stream_seed(master_seed, "geometry", drop_index),
                                    geo.ap_height_offset);
    LargeScaleMap ls = large_scale_map(drop, geo.shadowing,
                                       stream_seed(master_seed, "shadow", drop_index));

    auto rng_basis = make_rng(master_seed, "eigenbasis", drop_index);
    std::vector<ChannelStats> stats(static_cast<size_t>(M) * K);
    for (int m = 0; m < M; ++m)
        for (int k = 0; k < K; ++k)
        {
            arma::mat W = coupling_matrix_paper(L, N, ls.beta(m, k));
            cx_mat Ur = random_unitary(L, rng_basis);
            cx_mat Ut = random_unitary(N, rng_basis);
            stats[static_cast<size_t>(m * K + k)] = build_stats(model, W, Ur, Ut);
        }

    PilotPlan plan = assign_pilots(K, N, sys.tau_p, PilotPolicy::round_robin);
    return make_drop_context(sys, plan, std::move(stats),
                             stream_seed(master_seed, "trials", drop_index));
}

// One coherence block: true channels and their MMSE estimates for every
// (AP, UE) link. Co-pilot UEs share the same projected pilot observation.
struct TrialData
{
    std::vector<cx_mat> H;    // M*K, L x N
    std::vector<cx_mat> Hhat; // M*K, L x N
};

inline TrialData sample_trial(const DropContext &ctx, long trial_index)
{
    const int M = ctx.sys.M, K = ctx.sys.K;
    auto rng_chan = make_rng(ctx.trial_stream, "channel", static_cast<std::uint64_t>(trial_index));
    auto rng_noise = make_rng(ctx.trial_stream, "noise", static_cast<std::uint64_t>(trial_index));

    TrialData trial;
    trial.H.resize(static_cast<size_t>(M) * K);
    trial.Hhat.resize(static_cast<size_t>(M) * K);

    for (int m = 0; m < M; ++m)
        for (int k = 0; k < K; ++k)
            trial.H[static_cast<size_t>(ctx.idx(m, k))] = sample_channel(ctx.stat(m, k), rng_chan);

    std::vector<cx_mat> at_ap(static_cast<size_t>(K));
    for (int m = 0; m < M; ++m)
    {
        for (int k = 0; k < K; ++k)
            at_ap[static_cast<size_t>(k)] = trial.H[static_cast<size_t>(ctx.idx(m, k))];
        // One projected signal per pilot group; all members estimate from it.
        for (int g = 0; g < ctx.plan.n_groups; ++g)
        {
            const auto &members = ctx.plan.groups[static_cast<size_t>(g)];
            if (members.empty())
                continue;
            cx_vec y = projected_pilot_signal(ctx.plan, at_ap, members.front(), ctx.sys.sigma2, rng_noise);
            for (int k : members)
            {
                auto est = estimate_channels(ctx.estimator(m, k), y, ctx.plan.pilot_power(k),
                                             at_ap[static_cast<size_t>(k)]);
                trial.Hhat[static_cast<size_t>(ctx.idx(m, k))] = std::move(est.Hhat);
            }
        }
    }
    return trial;
}

} // namespace cfmimo
