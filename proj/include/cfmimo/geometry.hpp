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

// AP/UE placement on a wrap-around square. Positions are 2-D; the vertical
// AP-UE separation enters only through wrapped_distance().
struct NetworkDrop
{
    arma::mat ap_xy;      // 2 x M
    arma::mat ue_xy;      // 2 x K
    double area_side = 0; // meters
    double ap_height_offset = 0;

    int aps() const { return static_cast<int>(ap_xy.n_cols); }
    int ues() const { return static_cast<int>(ue_xy.n_cols); }
};

struct LargeScaleMap
{
    arma::mat pathloss_db; // M x K
    arma::mat shadow_db;   // M x K
    arma::mat beta;        // M x K, linear
};

struct ShadowingParams
{
    double delta_f = 0.5;
    double sigma_sf_db = 8.0;
    double d_dc = 100.0; // decorrelation distance, meters
};

inline NetworkDrop drop_network(int m_count, int k_count, double area_side,
                                std::uint64_t rng_seed, double ap_height_offset = 11.0)
{
    if (m_count < 1 || k_count < 1)
        throw ConfigError("drop_network: AP and UE counts must be >= 1");
    if (!(area_side > 0.0))
        throw ConfigError("drop_network: area side must be positive");

    auto rng = make_rng(rng_seed, "drop");
    std::uniform_real_distribution<double> uni(0.0, area_side);

    NetworkDrop drop;
    drop.area_side = area_side;
    drop.ap_height_offset = ap_height_offset;
    drop.ap_xy.set_size(2, m_count);
    drop.ue_xy.set_size(2, k_count);
    for (int m = 0; m < m_count; ++m)
    {
        drop.ap_xy(0, m) = uni(rng);
        drop.ap_xy(1, m) = uni(rng);
    }
    for (int k = 0; k < k_count; ++k)
    {
        drop.ue_xy(0, k) = uni(rng);
        drop.ue_xy(1, k) = uni(rng);
    }
    return drop;
}

// Wrap-around distance: minimum horizontal distance over the 3x3 replica
// grid, combined with the fixed vertical offset.
inline double wrapped_distance(const arma::vec2 &p, const arma::vec2 &q,
                               double area_side, double height_offset = 0.0)
{
    double best = std::numeric_limits<double>::infinity();
    for (int sx = -1; sx <= 1; ++sx)
        for (int sy = -1; sy <= 1; ++sy)
        {
            double dx = p(0) - q(0) + sx * area_side;
            double dy = p(1) - q(1) + sy * area_side;
            double d2 = dx * dx + dy * dy;
            if (d2 < best)
                best = d2;
        }
    return std::sqrt(best + height_offset * height_offset);
}

// COST 321 Walfish-Ikegami pathloss, distance in meters.
inline double pathloss_db(double d)
{
    if (!(d > 0.0))
        throw std::domain_error("pathloss_db: distance must be positive");
    return -30.18 - 26.0 * std::log10(d);
}

// Draws a jointly Gaussian vector with covariance
//   sigma_db^2 * 2^(-d_ij / d_dc)
// over the wrapped distances of the given positions. The 2^(-d/d_dc) kernel
// is not guaranteed PSD for arbitrary layouts, so negative eigenvalues are
// clamped before taking the factor.
inline arma::vec correlated_shadow_vector(const arma::mat &xy, double area_side,
                                          double sigma_db, double d_dc,
                                          std::mt19937_64 &rng)
{
    if (!(d_dc > 0.0))
        throw ConfigError("shadowing: decorrelation distance must be positive");
    const int n = static_cast<int>(xy.n_cols);
    arma::mat cov(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j)
        {
            double d = wrapped_distance(xy.col(i), xy.col(j), area_side, 0.0);
            double c = sigma_db * sigma_db * std::pow(2.0, -d / d_dc);
            cov(i, j) = c;
            cov(j, i) = c;
        }

    arma::vec ev;
    arma::mat V;
    if (!arma::eig_sym(ev, V, cov))
        throw NumericalError("shadowing: covariance eigendecomposition failed");
    double lmax = ev.max();
    if (ev.min() < -1e-6 * std::max(lmax, 1.0))
        throw NumericalError("shadowing: covariance is badly indefinite");
    arma::vec scale(ev.n_elem);
    for (arma::uword i = 0; i < ev.n_elem; ++i)
        scale(i) = std::sqrt(std::max(ev(i), 1e-12));

    std::normal_distribution<double> gauss(0.0, 1.0);
    arma::vec z(n);
    for (int i = 0; i < n; ++i)
        z(i) = gauss(rng);
    return V * (scale % z);
}

// F_mk = sqrt(delta_f) a_m + sqrt(1-delta_f) b_k with the a- and b-processes
// drawn independently over AP-AP and UE-UE wrapped distances.
inline arma::mat sample_shadowing(const NetworkDrop &drop, double delta_f,
                                  double sigma_sf_db, double d_dc,
                                  std::uint64_t rng_seed)
{
    if (delta_f < 0.0 || delta_f > 1.0)
        throw ConfigError("shadowing: delta_f must lie in [0, 1]");
    auto rng = make_rng(rng_seed, "shadowing");
    arma::vec a = correlated_shadow_vector(drop.ap_xy, drop.area_side, sigma_sf_db, d_dc, rng);
    arma::vec b = correlated_shadow_vector(drop.ue_xy, drop.area_side, sigma_sf_db, d_dc, rng);

    const int M = drop.aps(), K = drop.ues();
    arma::mat F(M, K);
    double wa = std::sqrt(delta_f), wb = std::sqrt(1.0 - delta_f);
    for (int m = 0; m < M; ++m)
        for (int k = 0; k < K; ++k)
            F(m, k) = wa * a(m) + wb * b(k);
    return F;
}

inline LargeScaleMap large_scale_map(const NetworkDrop &drop, const ShadowingParams &sh,
                                     std::uint64_t rng_seed)
{
    const int M = drop.aps(), K = drop.ues();
    LargeScaleMap map;
    map.pathloss_db.set_size(M, K);
    for (int m = 0; m < M; ++m)
        for (int k = 0; k < K; ++k)
        {
            double d = wrapped_distance(drop.ap_xy.col(m), drop.ue_xy.col(k),
                                        drop.area_side, drop.ap_height_offset);
            map.pathloss_db(m, k) = pathloss_db(d);
        }
    map.shadow_db = sample_shadowing(drop, sh.delta_f, sh.sigma_sf_db, sh.d_dc, rng_seed);
    map.beta = arma::exp10((map.pathloss_db + map.shadow_db) / 10.0);
    return map;
}

} // namespace cfmimo
