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
#include "cfmimo/estimation.hpp"

namespace cfmimo
{

enum class Scheme
{
    MR,
    MMSE // global MMSE at the CPU, L-MMSE at a single AP
};

inline const char *to_string(Scheme s) { return s == Scheme::MR ? "mr" : "mmse"; }

// Data-power-weighted aggregate of the estimation-error covariance:
//   C'_ml = sum_n eta_ln C_ml^{nn}   (L x L).
inline cx_mat error_cov_prime(const cx_mat &C, const arma::vec &eta, int L)
{
    const int N = static_cast<int>(eta.n_elem);
    cx_mat out(L, L, arma::fill::zeros);
    for (int n = 0; n < N; ++n)
        out += eta(n) * block_of(C, n, n, L);
    return make_hermitian(out);
}

// MR combining is the estimate itself; kept as a named operation so the
// combiner choice reads the same at every call site.
inline cx_mat mr_combiner(const cx_mat &Hhat)
{
    return Hhat;
}

// Global MMSE combiners for all K UEs from the collective (ML x N) estimates.
// The inverted matrix does not depend on k, so one factorization is shared.
inline std::vector<cx_mat> mmse_combiner_central(const std::vector<cx_mat> &Hhat_collective,
                                                 const cx_mat &err_prime_sum,
                                                 const arma::vec &data_power,
                                                 const arma::mat &data_alloc,
                                                 double sigma2)
{
    const int K = static_cast<int>(Hhat_collective.size());
    const arma::uword ML = Hhat_collective[0].n_rows;

    cx_mat A = err_prime_sum + sigma2 * arma::eye<cx_mat>(ML, ML);
    for (int l = 0; l < K; ++l)
    {
        cx_mat Hp = Hhat_collective[static_cast<size_t>(l)];
        Hp.each_row() %= arma::conv_to<arma::cx_rowvec>::from(arma::sqrt(data_alloc.col(l)).t());
        A += data_power(l) * (Hp * Hp.t());
    }

    HermitianFactor factor(A, "mmse_combiner_central");
    std::vector<cx_mat> V(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k)
    {
        cx_mat HkP = Hhat_collective[static_cast<size_t>(k)];
        HkP.each_row() %= arma::conv_to<arma::cx_rowvec>::from(data_alloc.col(k).t());
        V[static_cast<size_t>(k)] = data_power(k) * factor.solve(HkP);
    }
    return V;
}

// L-MMSE combiners at one AP from that AP's local estimates, same shared
// factorization structure as the central version.
inline std::vector<cx_mat> lmmse_combiner_local(const std::vector<cx_mat> &Hhat_at_ap,
                                                const cx_mat &err_prime_sum_at_ap,
                                                const arma::vec &data_power,
                                                const arma::mat &data_alloc,
                                                double sigma2)
{
    const int K = static_cast<int>(Hhat_at_ap.size());
    const arma::uword L = Hhat_at_ap[0].n_rows;

    cx_mat A = err_prime_sum_at_ap + sigma2 * arma::eye<cx_mat>(L, L);
    for (int l = 0; l < K; ++l)
    {
        cx_mat Hp = Hhat_at_ap[static_cast<size_t>(l)];
        Hp.each_row() %= arma::conv_to<arma::cx_rowvec>::from(arma::sqrt(data_alloc.col(l)).t());
        A += data_power(l) * (Hp * Hp.t());
    }

    HermitianFactor factor(A, "lmmse_combiner_local");
    std::vector<cx_mat> V(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k)
    {
        cx_mat HkP = Hhat_at_ap[static_cast<size_t>(k)];
        HkP.each_row() %= arma::conv_to<arma::cx_rowvec>::from(data_alloc.col(k).t());
        V[static_cast<size_t>(k)] = data_power(k) * factor.solve(HkP);
    }
    return V;
}

} // namespace cfmimo
