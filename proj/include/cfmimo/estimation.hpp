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
#include "cfmimo/common.hpp"

#include <algorithm>

namespace cfmimo
{

enum class PilotPolicy
{
    round_robin,
    random
};

// Pilot-group assignment plus the per-UE pilot powers and pilot-phase power
// allocation. UEs in the same group transmit the same pilot matrix and
// contaminate each other's estimates.
struct PilotPlan
{
    int tau_p = 0;
    int n_groups = 0;
    arma::ivec group_of;                  // K
    std::vector<std::vector<int>> groups; // group -> UE indices
    arma::vec pilot_power;                // K, p_hat
    arma::mat omega;                      // N x K, diag of Omega_k per column

    const std::vector<int> &copilots(int k) const { return groups[static_cast<size_t>(group_of(k))]; }
};

inline PilotPlan assign_pilots(int k_count, int n_antennas, int tau_p,
                               PilotPolicy policy = PilotPolicy::round_robin,
                               std::uint64_t rng_seed = 0)
{
    if (k_count < 1 || n_antennas < 1)
        throw ConfigError("assign_pilots: counts must be >= 1");
    if (tau_p < n_antennas || tau_p % n_antennas != 0)
        throw ConfigError("assign_pilots: tau_p must be a positive multiple of N");

    PilotPlan plan;
    plan.tau_p = tau_p;
    plan.n_groups = tau_p / n_antennas;
    plan.group_of.set_size(k_count);
    plan.groups.assign(static_cast<size_t>(plan.n_groups), {});

    std::vector<int> order(static_cast<size_t>(k_count));
    for (int k = 0; k < k_count; ++k)
        order[static_cast<size_t>(k)] = k;
    if (policy == PilotPolicy::random)
    {
        auto rng = make_rng(rng_seed, "pilot-perm");
        std::shuffle(order.begin(), order.end(), rng);
    }
    for (int pos = 0; pos < k_count; ++pos)
    {
        int k = order[static_cast<size_t>(pos)];
        int g = pos % plan.n_groups;
        plan.group_of(k) = g;
        plan.groups[static_cast<size_t>(g)].push_back(k);
    }
    for (auto &g : plan.groups)
        std::sort(g.begin(), g.end());

    plan.pilot_power = arma::vec(k_count, arma::fill::ones);
    plan.omega = arma::mat(n_antennas, k_count, arma::fill::value(1.0 / n_antennas));
    return plan;
}

inline void validate_power_allocation(const arma::mat &alloc, const char *what)
{
    if (alloc.min() < 0.0)
        throw ConfigError(std::string(what) + ": allocation factors must be >= 0");
    arma::rowvec tr = arma::sum(alloc, 0);
    if (tr.max() > 1.0 + 1e-12)
        throw ConfigError(std::string(what) + ": per-UE allocation must satisfy trace <= 1");
}

// diag of Omega_tilde^(1/2) = (Omega^(1/2) kron I_L) as a length-LN vector.
inline arma::vec omega_tilde_sqrt(const arma::vec &omega_diag, int L)
{
    const int N = static_cast<int>(omega_diag.n_elem);
    arma::vec d(static_cast<arma::uword>(L) * N);
    for (int n = 0; n < N; ++n)
        d.subvec(static_cast<arma::uword>(n) * L, static_cast<arma::uword>(n) * L + L - 1)
            .fill(std::sqrt(omega_diag(n)));
    return d;
}

// Per-link MMSE estimation state. All matrices are LN x LN.
struct EstimatorEntry
{
    cx_mat Psi;  // projected-signal covariance / tau_p
    cx_mat Rhat; // estimate covariance
    cx_mat C;    // error covariance, R - Rhat
    cx_mat S;    // Omega_tilde^(1/2) R Psi^{-1}
};

// Pilot signal of UE k's group at one AP, synthesized directly in the
// projected domain: the pilot matrices are never materialized. Projecting
// white noise through an orthonormal pilot matrix leaves it white with
// covariance tau_p * sigma2 * I.
inline cx_vec projected_pilot_signal(const PilotPlan &plan,
                                     const std::vector<cx_mat> &channels_at_ap,
                                     int k, double sigma2, std::mt19937_64 &rng)
{
    if (k < 0 || k >= static_cast<int>(plan.group_of.n_elem))
        throw InvalidInput("projected_pilot_signal: UE index out of range");
    const cx_mat &Hk = channels_at_ap[static_cast<size_t>(k)];
    const int L = static_cast<int>(Hk.n_rows);
    const int LN = static_cast<int>(Hk.n_elem);

    cx_vec y(LN, arma::fill::zeros);
    for (int l : plan.copilots(k))
    {
        arma::vec d = omega_tilde_sqrt(plan.omega.col(l), L);
        cx_vec h = arma::vectorise(channels_at_ap[static_cast<size_t>(l)]);
        y += std::sqrt(plan.pilot_power(l)) * static_cast<double>(plan.tau_p) *
             (arma::conv_to<cx_vec>::from(d) % h);
    }
    y += std::sqrt(plan.tau_p * sigma2) * randn_cx_vec(LN, rng);
    return y;
}

// Builds Psi, Rhat, C and the estimation helper S for one (AP, UE) link from
// the statistics of every co-pilot UE at that AP.
inline EstimatorEntry estimator_state(const std::vector<const ChannelStats *> &stats_at_ap,
                                      const PilotPlan &plan, double sigma2, int k)
{
    const ChannelStats &sk = *stats_at_ap[static_cast<size_t>(k)];
    const int L = sk.L, LN = sk.dim();

    cx_mat Psi(LN, LN, arma::fill::zeros);
    for (int l : plan.copilots(k))
    {
        const ChannelStats &sl = *stats_at_ap[static_cast<size_t>(l)];
        arma::vec d = omega_tilde_sqrt(plan.omega.col(l), L);
        // Omega_tilde^(1/2) R Omega_tilde^(1/2) = R o (d d^T) for real diagonal d.
        arma::mat dd = d * d.t();
        Psi += plan.pilot_power(l) * static_cast<double>(plan.tau_p) *
               (sl.R % arma::conv_to<cx_mat>::from(dd));
    }
    Psi += sigma2 * arma::eye<cx_mat>(LN, LN);
    Psi = make_hermitian(Psi);

    // S = Omega_tilde^(1/2) R Psi^{-1}; the row-scaled correlation A appears
    // in both S and Rhat = p_hat tau_p S A^H.
    arma::vec dk = omega_tilde_sqrt(plan.omega.col(k), L);
    cx_mat A = sk.R;
    A.each_col() %= arma::conv_to<cx_vec>::from(dk);

    EstimatorEntry entry;
    entry.Psi = Psi;
    entry.S = solve_hermitian(Psi, cx_mat(A.t()), "estimator_state").t();
    entry.Rhat = make_hermitian(plan.pilot_power(k) * static_cast<double>(plan.tau_p) * entry.S * A.t());
    entry.C = sk.R - entry.Rhat;
    return entry;
}

struct EstimateRealization
{
    cx_mat Hhat;   // L x N
    cx_mat Htilde; // H - Hhat
};

inline EstimateRealization estimate_channels(const EstimatorEntry &entry, const cx_vec &y,
                                             double pilot_power, const cx_mat &H)
{
    cx_vec hhat = std::sqrt(pilot_power) * (entry.S * y);
    EstimateRealization out;
    out.Hhat = arma::reshape(hhat, H.n_rows, H.n_cols);
    out.Htilde = H - out.Hhat;
    return out;
}

} // namespace cfmimo
