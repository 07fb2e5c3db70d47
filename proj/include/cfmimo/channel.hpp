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

namespace cfmimo
{

enum class CorrelationModel
{
    weichselberger,
    kronecker,
    uncorrelated
};

inline const char *to_string(CorrelationModel m)
{
    switch (m)
    {
    case CorrelationModel::weichselberger:
        return "weichselberger";
    case CorrelationModel::kronecker:
        return "kronecker";
    default:
        return "uncorrelated";
    }
}

// Per-link second-order description of the jointly-correlated channel
//   H = U_r (sqrt(W) o H_iid) U_t^H.
// W is stored in linear power units with the large-scale coefficient folded
// in, so trace(R) = |W|_1 = L*N*beta.
struct ChannelStats
{
    int L = 0;
    int N = 0;
    arma::mat W;      // L x N coupling matrix, entrywise >= 0
    arma::mat sqrtW;  // entrywise square root, cached for sampling
    cx_mat Ur;        // L x L unitary
    cx_mat Ut;        // N x N unitary
    cx_mat R;         // LN x LN full correlation of vec(H)
    double beta = 0;  // trace(R) / (L*N)

    int dim() const { return L * N; }
};

// Receive/transmit eigenvalue vectors: row and column sums of W.
inline arma::vec coupling_row_sums(const arma::mat &W) { return arma::sum(W, 1); }
inline arma::vec coupling_col_sums(const arma::mat &W) { return arma::sum(W, 0).t(); }

// Coupling matrix with one dominant eigenpair carrying half of the channel
// power and the remainder spread equally over the other entries.
inline arma::mat coupling_matrix_paper(int L, int N, double beta)
{
    if (L < 1 || N < 1)
        throw InvalidInput("coupling_matrix_paper: L and N must be >= 1");
    if (!(beta > 0.0))
        throw InvalidInput("coupling_matrix_paper: beta must be positive");
    const int LN = L * N;
    if (LN == 1)
        return arma::mat(1, 1, arma::fill::value(beta));
    double a = static_cast<double>(LN) / (2.0 * (LN - 1));
    arma::mat W(L, N, arma::fill::value(beta * a));
    W(0, 0) = beta * LN / 2.0;
    return W;
}

// Haar-distributed unitary: QR of a complex Gaussian matrix with the phases
// of the triangular factor's diagonal absorbed into Q.
inline cx_mat random_unitary(int dim, std::mt19937_64 &rng)
{
    if (dim < 1)
        throw InvalidInput("random_unitary: dim must be >= 1");
    cx_mat A = randn_cx(dim, dim, rng);
    cx_mat Q, Rf;
    if (!arma::qr(Q, Rf, A))
        throw NumericalError("random_unitary: QR failed");
    for (int i = 0; i < dim; ++i)
    {
        cx d = Rf(i, i);
        double mag = std::abs(d);
        cx phase = mag > 0.0 ? d / mag : cx(1.0, 0.0);
        Q.col(i) *= phase;
    }
    return Q;
}

inline cx_mat full_correlation_from_coupling(const arma::mat &W, const cx_mat &Ur, const cx_mat &Ut)
{
    cx_mat B = arma::kron(arma::conj(Ut), Ur);
    cx_vec w = arma::conv_to<cx_vec>::from(arma::vectorise(W));
    return B * arma::diagmat(w) * B.t();
}

inline ChannelStats build_stats(CorrelationModel model, const arma::mat &W,
                                const cx_mat &Ur, const cx_mat &Ut)
{
    const int L = static_cast<int>(W.n_rows);
    const int N = static_cast<int>(W.n_cols);
    if (W.min() < 0.0)
        throw InvalidInput("build_stats: coupling matrix has negative entries");
    if (Ur.n_rows != Ur.n_cols || static_cast<int>(Ur.n_rows) != L ||
        Ut.n_rows != Ut.n_cols || static_cast<int>(Ut.n_rows) != N)
        throw InvalidInput("build_stats: eigenbasis dimensions do not match W");
    auto unitary_defect = [](const cx_mat &U) {
        return arma::norm(cx_mat(U.t() * U - arma::eye<cx_mat>(U.n_rows, U.n_rows)), "fro");
    };
    if (unitary_defect(Ur) > 1e-9 || unitary_defect(Ut) > 1e-9)
        throw InvalidInput("build_stats: eigenbases are not unitary");

    const double beta = arma::accu(W) / (L * N);

    ChannelStats st;
    st.L = L;
    st.N = N;
    st.Ur = Ur;
    st.Ut = Ut;
    st.beta = beta;

    switch (model)
    {
    case CorrelationModel::weichselberger:
        st.W = W;
        st.R = full_correlation_from_coupling(st.W, Ur, Ut);
        break;
    case CorrelationModel::kronecker:
    {
        // Rank-one reduction built from the row/column sums of the input W.
        arma::vec lr = coupling_row_sums(W);
        arma::vec lt = coupling_col_sums(W);
        st.W = lr * lt.t() / (L * N * beta);
        st.R = full_correlation_from_coupling(st.W, Ur, Ut);
        break;
    }
    case CorrelationModel::uncorrelated:
        st.W = arma::mat(L, N, arma::fill::value(beta));
        st.R = beta * arma::eye<cx_mat>(L * N, L * N);
        break;
    }
    st.sqrtW = arma::sqrt(st.W);
    return st;
}

inline cx_mat sample_channel(const ChannelStats &st, std::mt19937_64 &rng)
{
    cx_mat Hiid = randn_cx(st.L, st.N, rng);
    return st.Ur * (arma::conv_to<cx_mat>::from(st.sqrtW) % Hiid) * st.Ut.t();
}

// (n,i) L x L submatrix of an LN x LN matrix laid out in the column-stacking
// block order of vec(H). Indices are 0-based.
inline cx_mat block_of(const cx_mat &R, int n, int i, int L)
{
    const int N = static_cast<int>(R.n_rows) / L;
    if (n < 0 || i < 0 || n >= N || i >= N)
        throw InvalidInput("block_of: block index out of range");
    return R.submat(static_cast<arma::uword>(n) * L, static_cast<arma::uword>(i) * L,
                    static_cast<arma::uword>(n) * L + L - 1, static_cast<arma::uword>(i) * L + L - 1);
}

} // namespace cfmimo
