// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <set>
#include <vector>

#include "qkd/estimation.hpp"
#include "qkd/random.hpp"

using namespace qkd;

namespace {

// High-precision direct summation of the two-outcome leakage formula,
// frozen: p(a) = (.5,.5), p(a|b1) = (.6,.4), p(a|b2) = (.4,.6).
constexpr double kLeakExample = 0.029049405545331361;

BitString random_bits(SplitMix64& rng, std::size_t n) {
    BitString b;
    b.reserve(n);
    for (std::size_t i = 0; i < n; ++i) b.push_back(rng.next_bit());
    return b;
}

/// Key pair with exactly n_err mismatches planted at distinct positions
/// drawn from [lo, hi).
std::pair<BitString, BitString> planted_pair(SplitMix64& rng, std::size_t n,
                                             std::size_t n_err, std::size_t lo,
                                             std::size_t hi) {
    BitString a = random_bits(rng, n);
    BitString b = a;
    std::set<std::uint64_t> flips;
    while (flips.size() < n_err) flips.insert(lo + rng.next_below(hi - lo));
    for (auto i : flips) b.set(i, b.get(i) ^ 1);
    return {a, b};
}

}  // namespace

TEST_CASE("sample selection basics") {
    auto all = select_sample(10, 1.0, SampleMode::Random, 1);
    CHECK(all.indices.size() == 10);

    auto prefix = select_sample(100, 0.1, SampleMode::BlockPrefix, 1);
    REQUIRE(prefix.indices.size() == 10);
    for (std::uint64_t i = 0; i < 10; ++i) CHECK(prefix.indices[i] == i);

    CHECK_THROWS_AS(select_sample(100, 0.0, SampleMode::Random, 1), std::domain_error);
    CHECK_THROWS_AS(select_sample(100, 1.5, SampleMode::Random, 1), std::domain_error);
    CHECK_THROWS_AS(select_sample(0, 0.5, SampleMode::Random, 1), std::invalid_argument);

    // Tiny keys still disclose at least one bit.
    CHECK(select_sample(5, 0.01, SampleMode::Random, 1).indices.size() == 1);
}

TEST_CASE("random sample is distinct, ascending, uniform, reproducible") {
    const std::uint64_t n = 100'000;
    auto plan = select_sample(n, 0.1, SampleMode::Random, 42);
    REQUIRE(plan.indices.size() == 10'000);
    std::array<int, 10> decile_counts{};
    for (std::size_t i = 0; i < plan.indices.size(); ++i) {
        if (i) REQUIRE(plan.indices[i] > plan.indices[i - 1]);
        ++decile_counts[plan.indices[i] / (n / 10)];
    }
    double chi2 = 0;
    for (int c : decile_counts) {
        double diff = c - 1000.0;
        chi2 += diff * diff / 1000.0;
    }
    CHECK(chi2 < 27.88);  // chi-square 9 dof, p = 0.001

    auto again = select_sample(n, 0.1, SampleMode::Random, 42);
    CHECK(again.indices == plan.indices);
    auto other = select_sample(n, 0.1, SampleMode::Random, 43);
    CHECK(other.indices != plan.indices);
}

TEST_CASE("qber estimate on degenerate disclosures") {
    BitString a = BitString::from_string("101010");
    auto est = estimate_qber(a, a);
    CHECK(est.e_hat == 0.0);
    CHECK(est.ci_low == 0.0);
    CHECK(est.ci_high > 0.0);  // Wilson interval stays informative at k=0

    BitString b = a;
    b.set(0, 0);
    auto est2 = estimate_qber(a, b);
    CHECK_THAT(est2.e_hat, Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-12));
    CHECK(est2.ci_low <= est2.e_hat);
    CHECK(est2.ci_high >= est2.e_hat);

    CHECK_THROWS_AS(estimate_qber(BitString(), BitString()), std::invalid_argument);
    CHECK_THROWS_AS(estimate_qber(a, BitString::from_string("10")), std::length_error);
}

TEST_CASE("full disclosure reproduces the exact key qber") {
    SplitMix64 rng(5);
    auto [a, b] = planted_pair(rng, 10'000, 250, 0, 10'000);
    auto plan = select_sample(10'000, 1.0, SampleMode::Random, 9);
    BitString da, db;
    for (auto i : plan.indices) {
        da.push_back(a.get(i));
        db.push_back(b.get(i));
    }
    auto est = estimate_qber(da, db);
    CHECK(est.e_hat == 0.025);
}

TEST_CASE("random 10% samples stay within binomial bounds of the truth") {
    SplitMix64 rng(12);
    const std::size_t n = 20'000, k = 2'000, n_err = 500;
    const double truth = static_cast<double>(n_err) / n;
    const double sigma = std::sqrt(truth * (1 - truth) / k);
    int within = 0;
    const int trials = 300;
    for (int t = 0; t < trials; ++t) {
        auto [a, b] = planted_pair(rng, n, n_err, 0, n);
        auto plan = select_sample(n, 0.1, SampleMode::Random, 1000 + t);
        BitString da, db;
        for (auto i : plan.indices) {
            da.push_back(a.get(i));
            db.push_back(b.get(i));
        }
        within += std::abs(estimate_qber(da, db).e_hat - truth) <= 3 * sigma;
    }
    CHECK(within >= trials * 99 / 100);
}

TEST_CASE("random sampling is unbiased") {
    SplitMix64 rng(21);
    const std::size_t n = 10'000, n_err = 250;
    double sum = 0;
    const int trials = 400;
    for (int t = 0; t < trials; ++t) {
        auto [a, b] = planted_pair(rng, n, n_err, 0, n);
        auto plan = select_sample(n, 0.1, SampleMode::Random, 7'000 + t);
        BitString da, db;
        for (auto i : plan.indices) {
            da.push_back(a.get(i));
            db.push_back(b.get(i));
        }
        sum += estimate_qber(da, db).e_hat;
    }
    double mean = sum / trials;
    double mc_sigma = std::sqrt(0.025 * 0.975 / 1000.0) / std::sqrt(trials);
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.025, 3 * mc_sigma));
}

TEST_CASE("random sampling beats block-prefix sampling on burst errors") {
    SplitMix64 rng(33);
    const std::size_t n = 50'000, burst = 10'000, n_err = 1'250;
    const double truth = static_cast<double>(n_err) / n;
    double block_err = 0, random_err = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        std::size_t lo = rng.next_below(n - burst);
        auto [a, b] = planted_pair(rng, n, n_err, lo, lo + burst);
        for (SampleMode mode : {SampleMode::BlockPrefix, SampleMode::Random}) {
            auto plan = select_sample(n, 0.1, mode, 40'000 + t);
            BitString da, db;
            for (auto i : plan.indices) {
                da.push_back(a.get(i));
                db.push_back(b.get(i));
            }
            double err = std::abs(estimate_qber(da, db).e_hat - truth);
            (mode == SampleMode::BlockPrefix ? block_err : random_err) += err;
        }
    }
    CHECK(random_err / trials <= block_err / trials);
    CHECK(random_err < 0.3 * block_err);  // decisively better, not marginal
}

TEST_CASE("leakage of indistinguishable sources is exactly zero") {
    std::vector<double> p_a = {0.5, 0.5};
    std::vector<std::vector<double>> cond = {{0.5, 0.5}, {0.5, 0.5}};
    auto res = leakage_mutual_information(p_a, cond);
    CHECK(res.bits == 0.0);

    std::vector<double> p3 = {0.2, 0.3, 0.5};
    auto res3 = leakage_mutual_information(p3, {p3, p3});
    CHECK(res3.bits == 0.0);
}

TEST_CASE("leakage reference value and perfectly distinguishable limit") {
    auto res = leakage_mutual_information({0.5, 0.5}, {{0.6, 0.4}, {0.4, 0.6}});
    CHECK_THAT(res.bits, Catch::Matchers::WithinAbs(kLeakExample, 1e-12));
    CHECK_THAT(res.bits, Catch::Matchers::WithinAbs(0.0290, 0.0005));

    auto full = leakage_mutual_information({0.5, 0.5}, {{1.0, 0.0}, {0.0, 1.0}});
    CHECK(full.bits == 1.0);
}

TEST_CASE("leakage is continuous at the no-leak point") {
    SplitMix64 rng(55);
    for (int t = 0; t < 100; ++t) {
        double delta = 1e-3 * rng.next_double();
        auto res = leakage_mutual_information(
            {0.5, 0.5}, {{0.5 + delta, 0.5 - delta}, {0.5 - delta, 0.5 + delta}});
        CHECK(res.bits >= 0.0);
        CHECK(res.bits <= 10.0 * delta * delta + 1e-12);
    }
}

TEST_CASE("leakage validates normalisation") {
    CHECK_THROWS_AS(leakage_mutual_information({0.6, 0.6}, {{0.5, 0.5}, {0.5, 0.5}}),
                    std::domain_error);
    CHECK_THROWS_AS(leakage_mutual_information({0.5, 0.5}, {{0.7, 0.5}, {0.5, 0.5}}),
                    std::domain_error);
    CHECK_THROWS_AS(leakage_mutual_information({0.5, 0.5}, {{0.5, 0.5, 0.0}}),
                    std::invalid_argument);
}

TEST_CASE("security parameter reference points and monotonicity") {
    CHECK(security_parameter(0.001) == 10);
    constexpr double ln2 = 0.6931471805599453;
    CHECK(security_parameter(std::pow(2.0, -10) / ln2) == 10);  // boundary inclusive
    CHECK(security_parameter(1.0 / ln2) == 0);
    CHECK_THROWS_AS(security_parameter(0.0), std::domain_error);
    CHECK_THROWS_AS(security_parameter(1.5), std::domain_error);

    std::uint32_t prev = security_parameter(1e-6);
    for (double i = 2e-6; i < 1.0; i *= 1.37) {
        std::uint32_t s = security_parameter(i);
        CHECK(s <= prev);
        prev = s;
    }
}
