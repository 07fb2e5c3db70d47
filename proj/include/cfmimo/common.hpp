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

#include <armadillo>

#include <atomic>
#include <complex>
#include <cstdint>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace cfmimo
{

using cx = std::complex<double>;
using arma::cx_mat;
using arma::cx_vec;

// Invalid user-facing configuration (counts, powers, pilot lengths, ...).
struct ConfigError : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};

// A well-formed call with inputs outside the operation's domain.
struct InvalidInput : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};

// Factorization / conditioning failures.
struct NumericalError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Seeding
//
// Every random quantity in the library is drawn from an explicitly seeded
// stream. A master seed is combined with a purpose label ("drop", "channel",
// "noise", ...) and up to two indices, so any component can be re-generated
// in isolation and trials can run on any number of workers without changing
// the result.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t &state)
{
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::string_view label,
                                 std::uint64_t a = 0, std::uint64_t b = 0)
{
    // FNV-1a over the label keeps distinct purposes on distinct streams.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : label)
    {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    std::uint64_t s = master;
    std::uint64_t out = splitmix64(s);
    s ^= h;
    out ^= splitmix64(s);
    s ^= a + 0x9E3779B97F4A7C15ull;
    out ^= splitmix64(s);
    s ^= b + 0x7F4A7C159E3779B9ull;
    out ^= splitmix64(s);
    return out;
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view label,
                                std::uint64_t a = 0, std::uint64_t b = 0)
{
    return std::mt19937_64(stream_seed(master, label, a, b));
}

// L x N matrix of i.i.d. CN(0,1) entries. Column-major fill order is part of
// the determinism contract.
inline cx_mat randn_cx(arma::uword n_rows, arma::uword n_cols, std::mt19937_64 &rng)
{
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double s = 1.0 / std::sqrt(2.0);
    cx_mat out(n_rows, n_cols);
    for (arma::uword j = 0; j < n_cols; ++j)
        for (arma::uword i = 0; i < n_rows; ++i)
        {
            double re = gauss(rng);
            double im = gauss(rng);
            out(i, j) = cx(s * re, s * im);
        }
    return out;
}

inline cx_vec randn_cx_vec(arma::uword n, std::mt19937_64 &rng)
{
    return cx_vec(randn_cx(n, 1, rng));
}

// ---------------------------------------------------------------------------
// Hermitian helpers
// ---------------------------------------------------------------------------

inline cx_mat make_hermitian(const cx_mat &A)
{
    return 0.5 * (A + A.t());
}

inline double hermitian_defect(const cx_mat &A)
{
    double na = arma::norm(A, "fro");
    if (na == 0.0)
        return 0.0;
    return arma::norm(cx_mat(A - A.t()), "fro") / na;
}

inline void require_hermitian(const cx_mat &A, const char *what, double tol = 1e-10)
{
    if (hermitian_defect(A) > tol)
        throw NumericalError(std::string(what) + ": matrix is not Hermitian");
}

// Principal PSD square root via eigendecomposition. Eigenvalues below
// rel_clamp * lambda_max are treated as zero.
inline cx_mat hermitian_sqrt(const cx_mat &A, double rel_clamp = 1e-12)
{
    arma::vec ev;
    cx_mat V;
    if (!arma::eig_sym(ev, V, make_hermitian(A)))
        throw NumericalError("hermitian_sqrt: eigendecomposition failed");
    double lmax = ev.n_elem ? ev.max() : 0.0;
    double floor_val = rel_clamp * std::max(lmax, 0.0);
    arma::vec sq(ev.n_elem);
    for (arma::uword i = 0; i < ev.n_elem; ++i)
        sq(i) = ev(i) > floor_val ? std::sqrt(ev(i)) : 0.0;
    return V * arma::diagmat(sq) * V.t();
}

// Solves A X = B for Hermitian positive-definite A through a Cholesky
// factorization. Asserts the Hermitian property before symmetrizing away
// round-off asymmetry.
inline cx_mat solve_hermitian(const cx_mat &A, const cx_mat &B, const char *what = "solve_hermitian")
{
    require_hermitian(A, what);
    cx_mat Lw;
    if (!arma::chol(Lw, make_hermitian(A), "lower"))
        throw NumericalError(std::string(what) + ": matrix is not positive definite");
    cx_mat Y = arma::solve(arma::trimatl(Lw), B);
    return arma::solve(arma::trimatu(cx_mat(Lw.t())), Y);
}

// Reusable lower-Cholesky factor for solves repeated against one matrix.
struct HermitianFactor
{
    cx_mat L;

    explicit HermitianFactor(const cx_mat &A, const char *what = "HermitianFactor")
    {
        require_hermitian(A, what);
        if (!arma::chol(L, make_hermitian(A), "lower"))
            throw NumericalError(std::string(what) + ": matrix is not positive definite");
    }

    cx_mat solve(const cx_mat &B) const
    {
        cx_mat Y = arma::solve(arma::trimatl(L), B);
        return arma::solve(arma::trimatu(cx_mat(L.t())), Y);
    }

    // L^{-1} B, enough for quadratic forms B^H A^{-1} B = (L^-1 B)^H (L^-1 B).
    cx_mat half_solve(const cx_mat &B) const
    {
        return arma::solve(arma::trimatl(L), B);
    }
};

// log2 det(I_N + D^H Sigma^{-1} D) for Hermitian positive-definite Sigma.
// Evaluated through Cholesky so the argument of the determinant is Hermitian
// PSD by construction; the result is real and >= 0.
inline double logdet_sinr(const cx_mat &D, const cx_mat &Sigma)
{
    if (Sigma.n_rows != Sigma.n_cols || Sigma.n_rows != D.n_rows)
        throw InvalidInput("logdet_sinr: dimension mismatch");
    HermitianFactor f(Sigma, "logdet_sinr");
    cx_mat X = f.half_solve(D);
    cx_mat G = arma::eye<cx_mat>(D.n_cols, D.n_cols) + X.t() * X;
    double val = 0.0;
    if (!arma::log_det_sympd(val, make_hermitian(G)))
        throw NumericalError("logdet_sinr: inner determinant not positive definite");
    return val / std::log(2.0);
}

inline cx_mat blockdiag(const std::vector<cx_mat> &blocks)
{
    arma::uword rows = 0, cols = 0;
    for (const auto &b : blocks)
    {
        rows += b.n_rows;
        cols += b.n_cols;
    }
    cx_mat out(rows, cols, arma::fill::zeros);
    arma::uword r = 0, c = 0;
    for (const auto &b : blocks)
    {
        out.submat(r, c, r + b.n_rows - 1, c + b.n_cols - 1) = b;
        r += b.n_rows;
        c += b.n_cols;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Deterministic batched execution
//
// Trials are partitioned into a fixed number of contiguous batches. Workers
// pick whole batches; per-batch results are reduced in a fixed order, so the
// outcome does not depend on the worker count.
// ---------------------------------------------------------------------------

struct BatchPartition
{
    long trials = 0;
    int batches = 1;

    BatchPartition(long n_trials, int n_batches)
        : trials(n_trials),
          batches(static_cast<int>(std::max<long>(1, std::min<long>(n_batches, std::max<long>(n_trials, 1)))))
    {
    }

    long begin(int b) const
    {
        long q = trials / batches, r = trials % batches;
        return static_cast<long>(b) * q + std::min<long>(b, r);
    }

    long end(int b) const { return begin(b + 1); }
    long size(int b) const { return end(b) - begin(b); }
};

template <typename Fn>
void for_each_batch(const BatchPartition &part, int workers, Fn &&fn)
{
    int n_threads = std::max(1, std::min(workers, part.batches));
    if (n_threads == 1)
    {
        for (int b = 0; b < part.batches; ++b)
            fn(b);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&]() {
        for (;;)
        {
            int b = next.fetch_add(1);
            if (b >= part.batches)
                return;
            try
            {
                fn(b);
            }
            catch (...)
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error)
                    error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t)
        pool.emplace_back(body);
    for (auto &th : pool)
        th.join();
    if (error)
        std::rethrow_exception(error);
}

} // namespace cfmimo
