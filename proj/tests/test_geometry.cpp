// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

#include "cfmimo/geometry.hpp"

using namespace cfmimo;
using Catch::Approx;

TEST_CASE("drop_network places nodes inside the square", "[geometry]")
{
    auto drop = drop_network(40, 20, 1000.0, 1);
    REQUIRE(drop.aps() == 40);
    REQUIRE(drop.ues() == 20);
    CHECK(drop.ap_xy.min() >= 0.0);
    CHECK(drop.ap_xy.max() <= 1000.0);
    CHECK(drop.ue_xy.min() >= 0.0);
    CHECK(drop.ue_xy.max() <= 1000.0);

    auto one = drop_network(1, 1, 1000.0, 7);
    CHECK(one.aps() == 1);
    CHECK(one.ues() == 1);

    // Same seed, same drop.
    auto again = drop_network(40, 20, 1000.0, 1);
    CHECK(arma::approx_equal(drop.ap_xy, again.ap_xy, "absdiff", 0.0));
    CHECK(arma::approx_equal(drop.ue_xy, again.ue_xy, "absdiff", 0.0));

    CHECK_THROWS_AS(drop_network(0, 1, 1000.0, 1), ConfigError);
    CHECK_THROWS_AS(drop_network(1, 0, 1000.0, 1), ConfigError);
    CHECK_THROWS_AS(drop_network(1, 1, 0.0, 1), ConfigError);
}

TEST_CASE("wrapped_distance minimizes over replicas", "[geometry]")
{
    arma::vec2 p{0.0, 0.0};

    SECTION("coincident points leave only the height offset")
    {
        CHECK(wrapped_distance(p, p, 1000.0, 11.0) == Approx(11.0));
    }

    SECTION("wrap across the edge")
    {
        arma::vec2 q{999.0, 0.0};
        CHECK(wrapped_distance(p, q, 1000.0, 0.0) == Approx(1.0));
    }

    SECTION("center of the torus")
    {
        arma::vec2 q{500.0, 500.0};
        double expect = std::sqrt(500.0 * 500.0 + 500.0 * 500.0 + 11.0 * 11.0);
        CHECK(wrapped_distance(p, q, 1000.0, 11.0) == Approx(expect));
    }

    SECTION("symmetric and never exceeds the direct distance")
    {
        auto rng = make_rng(3, "geo");
        std::uniform_real_distribution<double> uni(0.0, 1000.0);
        for (int i = 0; i < 200; ++i)
        {
            arma::vec2 a{uni(rng), uni(rng)};
            arma::vec2 b{uni(rng), uni(rng)};
            double dab = wrapped_distance(a, b, 1000.0, 0.0);
            double dba = wrapped_distance(b, a, 1000.0, 0.0);
            double direct = std::hypot(a(0) - b(0), a(1) - b(1));
            CHECK(dab == Approx(dba));
            CHECK(dab <= direct + 1e-12);
            // Equality when both coordinates are within half a side.
            if (std::abs(a(0) - b(0)) <= 500.0 && std::abs(a(1) - b(1)) <= 500.0)
                CHECK(dab == Approx(direct));
        }
    }
}

TEST_CASE("pathloss model values", "[geometry]")
{
    CHECK(pathloss_db(1.0) == Approx(-30.18));
    CHECK(pathloss_db(10.0) == Approx(-56.18));
    CHECK(pathloss_db(11.0) == Approx(-30.18 - 26.0 * std::log10(11.0)));
    CHECK_THROWS_AS(pathloss_db(0.0), std::domain_error);
    CHECK_THROWS_AS(pathloss_db(-5.0), std::domain_error);
}

TEST_CASE("shadowing variance and marginals", "[geometry]")
{
    const double sigma = 8.0;

    SECTION("single link is N(0, sigma^2)")
    {
        auto drop = drop_network(1, 1, 1000.0, 5);
        const int n = 100000;
        arma::vec samples(n);
        for (int i = 0; i < n; ++i)
            samples(i) = sample_shadowing(drop, 0.5, sigma, 100.0, static_cast<std::uint64_t>(i))(0, 0);
        CHECK(arma::mean(samples) == Approx(0.0).margin(0.12));
        CHECK(arma::var(samples) == Approx(sigma * sigma).epsilon(0.03));
    }

    SECTION("co-located APs share the AP-process value")
    {
        NetworkDrop drop;
        drop.area_side = 1000.0;
        drop.ap_height_offset = 11.0;
        drop.ap_xy = arma::mat{{100.0, 100.0}, {200.0, 200.0}}; // two identical columns
        drop.ue_xy = arma::mat(2, 1, arma::fill::value(500.0));
        auto rng = make_rng(17, "colocated");
        arma::vec a = correlated_shadow_vector(drop.ap_xy, drop.area_side, sigma, 100.0, rng);
        CHECK(a(0) == Approx(a(1)).margin(1e-6));
    }

    SECTION("empirical AP covariance matches the 2^(-d/ddc) kernel")
    {
        auto drop = drop_network(4, 1, 1000.0, 9);
        const int n = 100000;
        arma::mat samples(4, n);
        for (int i = 0; i < n; ++i)
        {
            auto rng = make_rng(static_cast<std::uint64_t>(i), "cov-oracle");
            samples.col(i) = correlated_shadow_vector(drop.ap_xy, drop.area_side, sigma, 100.0, rng);
        }
        arma::mat emp = samples * samples.t() / n;
        arma::mat expect(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
            {
                double d = wrapped_distance(drop.ap_xy.col(i), drop.ap_xy.col(j), 1000.0, 0.0);
                expect(i, j) = sigma * sigma * std::pow(2.0, -d / 100.0);
            }
        CHECK(cfmimo_test::rel_fro(emp, expect) < 0.05);
    }

    SECTION("Var(F_mk) = sigma^2 for mixed weights")
    {
        auto drop = drop_network(3, 3, 1000.0, 11);
        const int n = 100000;
        arma::vec samples(n);
        for (int i = 0; i < n; ++i)
            samples(i) = sample_shadowing(drop, 0.5, sigma, 100.0, static_cast<std::uint64_t>(i))(1, 2);
        CHECK(arma::var(samples) == Approx(sigma * sigma).epsilon(0.03));
    }

    SECTION("parameter validation")
    {
        auto drop = drop_network(2, 2, 1000.0, 2);
        CHECK_THROWS_AS(sample_shadowing(drop, -0.1, sigma, 100.0, 1), ConfigError);
        CHECK_THROWS_AS(sample_shadowing(drop, 1.1, sigma, 100.0, 1), ConfigError);
        CHECK_THROWS_AS(sample_shadowing(drop, 0.5, sigma, 0.0, 1), ConfigError);
    }
}

TEST_CASE("large_scale_map combines pathloss and shadowing", "[geometry]")
{
    auto drop = drop_network(5, 4, 1000.0, 21);
    ShadowingParams sh;
    auto map = large_scale_map(drop, sh, 33);
    REQUIRE(map.beta.n_rows == 5);
    REQUIRE(map.beta.n_cols == 4);
    CHECK(map.beta.min() > 0.0);
    for (int m = 0; m < 5; ++m)
        for (int k = 0; k < 4; ++k)
        {
            double expect = std::pow(10.0, (map.pathloss_db(m, k) + map.shadow_db(m, k)) / 10.0);
            CHECK(map.beta(m, k) == Approx(expect).epsilon(1e-12));
        }
}
