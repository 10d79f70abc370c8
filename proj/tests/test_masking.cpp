#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "ibu/masking.hpp"

using namespace ibu;
using namespace ibu::masking;

TEST_CASE("accountant reproduces the published sampling table for n=784") {
    auto check_pair = [](const DpAccount& a, double eps, double delta) {
        CHECK(std::fabs(a.epsilon - eps) < 0.003);
        CHECK(std::fabs(a.delta - delta) < 0.003);
    };
    check_pair(account({784, 0.20, Strategy::with_replacement}), 0.199, 0.182);
    check_pair(account({784, 0.40, Strategy::with_replacement}), 0.398, 0.331);
    check_pair(account({784, 0.60, Strategy::with_replacement}), 0.597, 0.453);
    check_pair(account({784, 0.20, Strategy::without_replacement}), 0.221, 0.200);

    // closed forms, exactly
    DpAccount w = account({784, 0.20, Strategy::with_replacement});
    CHECK(w.k == 157);
    CHECK(w.epsilon == doctest::Approx(157.0 * std::log(785.0 / 784.0)).epsilon(1e-15));
    CHECK(w.delta == doctest::Approx(1.0 - std::pow(783.0 / 784.0, 157.0)).epsilon(1e-15));
    DpAccount wo = account({784, 0.20, Strategy::without_replacement});
    CHECK(wo.epsilon == doctest::Approx(std::log(785.0 / 628.0)).epsilon(1e-15));
    CHECK(wo.delta == doctest::Approx(157.0 / 784.0).epsilon(1e-15));
}

TEST_CASE("degenerate and boundary accounting") {
    DpAccount w = account_for_k(50, 0, Strategy::with_replacement);
    CHECK(w.epsilon == 0.0);
    CHECK(w.delta == 0.0);
    DpAccount wo = account_for_k(50, 0, Strategy::without_replacement);
    CHECK(wo.epsilon == 0.0);
    CHECK(wo.delta == 0.0);

    // full reveal without replacement: epsilon = ln(n+1), delta = 1
    DpAccount full = account({784, 1.0, Strategy::without_replacement});
    CHECK(full.epsilon == doctest::Approx(std::log(785.0)).epsilon(1e-12));
    CHECK(full.delta == 1.0);

    CHECK_THROWS(account_for_k(10, 11, Strategy::without_replacement));
    CHECK_THROWS(validate(MaskSpec{0, 0.5, Strategy::with_replacement}));
    CHECK_THROWS(validate(MaskSpec{10, 0.0, Strategy::with_replacement}));
    CHECK_THROWS(validate(MaskSpec{10, 1.5, Strategy::with_replacement}));
    CHECK_THROWS(validate(MaskSpec{10, 0.5, Strategy::with_replacement, 2.0}));
    CHECK_THROWS(validate(MaskSpec{1000, 0.0004, Strategy::with_replacement}));  // k rounds to 0
}

TEST_CASE("epsilon and delta are nondecreasing in k for both strategies") {
    for (std::size_t n : {10u, 100u, 784u}) {
        for (Strategy s : {Strategy::with_replacement, Strategy::without_replacement}) {
            DpAccount prev = account_for_k(n, 0, s);
            for (std::size_t k = 1; k <= n; ++k) {
                DpAccount cur = account_for_k(n, k, s);
                CHECK(cur.epsilon >= prev.epsilon);
                CHECK(cur.delta >= prev.delta);
                prev = cur;
            }
        }
    }
}

TEST_CASE("with-replacement never gives worse protection at equal (n,k)") {
    for (std::size_t n : {10u, 100u, 784u}) {
        for (std::size_t k = 1; k <= n; ++k) {
            DpAccount w = account_for_k(n, k, Strategy::with_replacement);
            DpAccount wo = account_for_k(n, k, Strategy::without_replacement);
            CHECK(w.epsilon <= wo.epsilon + 1e-15);
            CHECK(w.delta <= wo.delta + 1e-15);
        }
    }
}

TEST_CASE("accounting is a pure function of (n,k,strategy)") {
    DpAccount a = account_for_k(300, 120, Strategy::with_replacement);
    DpAccount b = account_for_k(300, 120, Strategy::with_replacement);
    CHECK(a.epsilon == b.epsilon);
    CHECK(a.delta == b.delta);
}

TEST_CASE("masking reveals exactly the sampled coordinates") {
    Rng rng(1);
    MaskSpec spec{10, 0.6, Strategy::without_replacement, 0.0};
    Tensor ones = Tensor::full({1, 10}, 1.0);
    MaskedSample ms = mask(ones, spec, rng);
    CHECK(ms.sampled_indices.size() == 6);
    double sum = 0.0;
    for (double v : ms.values.data) sum += v;
    CHECK(sum == 6.0);
    for (std::size_t j : ms.sampled_indices) CHECK(ms.values.data[j] == 1.0);

    SUBCASE("full rate without replacement is the identity") {
        MaskSpec full{10, 1.0, Strategy::without_replacement, 0.5};
        Rng r(2);
        Tensor x = Tensor::zeros({1, 10});
        for (std::size_t j = 0; j < 10; ++j) x.data[j] = 0.1 * static_cast<double>(j) / 10.0;
        MaskedSample id = mask(x, full, r);
        CHECK(id.values.data == x.data);
        CHECK(id.sampled_indices.size() == 10);
    }

    SUBCASE("mask value fills unsampled coordinates") {
        MaskSpec grey{10, 0.3, Strategy::without_replacement, 0.5};
        Rng r(3);
        MaskedSample g = mask(Tensor::full({1, 10}, 1.0), grey, r);
        std::set<std::size_t> revealed(g.sampled_indices.begin(), g.sampled_indices.end());
        for (std::size_t j = 0; j < 10; ++j)
            CHECK(g.values.data[j] == (revealed.count(j) ? 1.0 : 0.5));
    }

    SUBCASE("wrong width errors") {
        Rng r(4);
        CHECK_THROWS(mask(Tensor::zeros({1, 7}), spec, r));
    }
}

TEST_CASE("with-replacement distinct count matches the closed form") {
    // n=10, k=10: expected distinct count n(1-((n-1)/n)^k) = 6.5132...
    Rng rng(5);
    MaskSpec spec{10, 1.0, Strategy::with_replacement, 0.0};
    const int trials = 100000;
    double total = 0.0;
    Tensor ones = Tensor::full({1, 10}, 1.0);
    for (int t = 0; t < trials; ++t) total += static_cast<double>(mask(ones, spec, rng).sampled_indices.size());
    double mean = total / trials;
    CHECK(mean > 6.41);
    CHECK(mean < 6.61);

    double expected = 10.0 * (1.0 - std::pow(0.9, 10.0));
    CHECK(expected == doctest::Approx(6.5132).epsilon(1e-4));
    CHECK(std::fabs(mean - expected) < 0.05);
}

TEST_CASE("batch masking draws independently per row") {
    Rng a(6);
    MaskSpec spec{12, 0.5, Strategy::without_replacement, 0.0};
    Tensor batch = Tensor::full({2, 12}, 1.0);
    auto rows = mask_batch(batch, spec, a);
    REQUIRE(rows.size() == 2);

    // single-row batch behaves exactly like mask() on the same stream
    Rng b(6);
    Tensor first = Tensor::full({1, 12}, 1.0);
    MaskedSample lone = mask(first, spec, b);
    CHECK(rows[0].sampled_indices == lone.sampled_indices);

    // sequential stream: second row generally differs from the first
    CHECK(rows[0].sampled_indices != rows[1].sampled_indices);
}

TEST_CASE("per-feature inclusion frequency matches the analytic rate") {
    const std::size_t n = 16, m = 1000;
    Tensor batch = Tensor::full({m, n}, 1.0);

    auto run = [&](Strategy s, double p_include) {
        Rng rng(7);
        MaskSpec spec{n, 0.6, s, 0.0};
        auto rows = mask_batch(batch, spec, rng);
        double se = std::sqrt(p_include * (1.0 - p_include) / static_cast<double>(m));
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t hits = 0;
            for (const auto& r : rows) hits += r.values.data[j] == 1.0;
            double freq = static_cast<double>(hits) / static_cast<double>(m);
            INFO(strategy_name(s), " feature ", j, " freq ", freq, " expected ", p_include);
            CHECK(std::fabs(freq - p_include) <= 3.0 * se);
        }
    };

    std::size_t k = derived_k({n, 0.6, Strategy::without_replacement});
    REQUIRE(k == 10);
    run(Strategy::without_replacement, static_cast<double>(k) / n);
    run(Strategy::with_replacement, 1.0 - std::pow((n - 1.0) / n, static_cast<double>(k)));
}

TEST_CASE("strategy names round trip") {
    CHECK(parse_strategy("with_replacement") == Strategy::with_replacement);
    CHECK(parse_strategy("without_replacement") == Strategy::without_replacement);
    CHECK(parse_strategy(strategy_name(Strategy::with_replacement)) == Strategy::with_replacement);
    CHECK_THROWS_WITH(parse_strategy("sometimes"), doctest::Contains("unknown sampling strategy"));
}
