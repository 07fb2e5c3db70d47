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

#include <json.hpp>

#include <fstream>

namespace cfmimo
{

// JSON fixture dump for ChannelStats. Doubles survive the text round trip
// exactly (shortest-round-trip formatting), so reload is lossless.

inline nlohmann::json to_json(const arma::mat &A)
{
    nlohmann::json j;
    j["rows"] = A.n_rows;
    j["cols"] = A.n_cols;
    j["re"] = std::vector<double>(A.begin(), A.end());
    return j;
}

inline nlohmann::json to_json(const cx_mat &A)
{
    nlohmann::json j;
    j["rows"] = A.n_rows;
    j["cols"] = A.n_cols;
    std::vector<double> re(A.n_elem), im(A.n_elem);
    for (arma::uword i = 0; i < A.n_elem; ++i)
    {
        re[i] = A(i).real();
        im[i] = A(i).imag();
    }
    j["re"] = std::move(re);
    j["im"] = std::move(im);
    return j;
}

inline arma::mat mat_from_json(const nlohmann::json &j)
{
    arma::mat A(j.at("rows").get<arma::uword>(), j.at("cols").get<arma::uword>());
    auto re = j.at("re").get<std::vector<double>>();
    if (re.size() != A.n_elem)
        throw InvalidInput("stats_io: matrix payload size mismatch");
    std::copy(re.begin(), re.end(), A.begin());
    return A;
}

inline cx_mat cx_mat_from_json(const nlohmann::json &j)
{
    cx_mat A(j.at("rows").get<arma::uword>(), j.at("cols").get<arma::uword>());
    auto re = j.at("re").get<std::vector<double>>();
    auto im = j.at("im").get<std::vector<double>>();
    if (re.size() != A.n_elem || im.size() != A.n_elem)
        throw InvalidInput("stats_io: matrix payload size mismatch");
    for (arma::uword i = 0; i < A.n_elem; ++i)
        A(i) = cx(re[i], im[i]);
    return A;
}

inline nlohmann::json stats_to_json(const ChannelStats &st)
{
    nlohmann::json j;
    j["L"] = st.L;
    j["N"] = st.N;
    j["beta"] = st.beta;
    j["W"] = to_json(st.W);
    j["Ur"] = to_json(st.Ur);
    j["Ut"] = to_json(st.Ut);
    j["R"] = to_json(st.R);
    return j;
}

inline ChannelStats stats_from_json(const nlohmann::json &j)
{
    ChannelStats st;
    st.L = j.at("L").get<int>();
    st.N = j.at("N").get<int>();
    st.beta = j.at("beta").get<double>();
    st.W = mat_from_json(j.at("W"));
    st.sqrtW = arma::sqrt(st.W);
    st.Ur = cx_mat_from_json(j.at("Ur"));
    st.Ut = cx_mat_from_json(j.at("Ut"));
    st.R = cx_mat_from_json(j.at("R"));
    return st;
}

inline void dump_stats(const ChannelStats &st, const std::string &path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("dump_stats: cannot open " + path);
    out << stats_to_json(st).dump(2) << "\n";
}

inline ChannelStats load_stats(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("load_stats: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return stats_from_json(j);
}

} // namespace cfmimo
