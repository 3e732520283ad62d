#include <catch_amalgamated.hpp>

#include <set>

#include "seedbank/core_model.hpp"
#include "test_support.hpp"

using namespace seedbank;
using Catch::Matchers::WithinAbs;

namespace {

ErrorCode code_of(const std::vector<double>& b) {
    try {
        (void)validate_distribution(b);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected a validation error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("mean germination time", "[core_model]") {
    CHECK(mean_germination_time(GerminationDistribution::from({1.0, 0.0})) == 0.0);
    CHECK(mean_germination_time(GerminationDistribution::from({0.5, 0.5})) == 0.5);
    CHECK_THAT(mean_germination_time(GerminationDistribution::from({0.6, 0.2, 0.2})), WithinAbs(0.6, 1e-15));
}

TEST_CASE("tail sums", "[core_model]") {
    const auto t1 = tail_sums(GerminationDistribution::from({0.5, 0.5}));
    REQUIRE(t1.tail.size() == 1);
    CHECK(t1.tail[0] == 0.5);

    const auto t2 = tail_sums(GerminationDistribution::from({0.6, 0.2, 0.2}));
    REQUIRE(t2.tail.size() == 2);
    CHECK_THAT(t2.tail[0], WithinAbs(0.4, 1e-15));
    CHECK_THAT(t2.tail[1], WithinAbs(0.2, 1e-15));
    // B_j = B - sum_{q >= j} b_q
    CHECK_THAT(t2.b_minus[0], WithinAbs(0.2, 1e-15));
    CHECK_THAT(t2.b_minus[1], WithinAbs(0.4, 1e-15));

    const auto t3 = tail_sums(GerminationDistribution::from({0.25, 0.25, 0.25, 0.25}));
    REQUIRE(t3.tail.size() == 3);
    CHECK(t3.tail[0] == 0.75);
    CHECK(t3.tail[1] == 0.5);
    CHECK(t3.tail[2] == 0.25);
}

TEST_CASE("validation rejects points off the simplex", "[core_model]") {
    CHECK_NOTHROW(validate_distribution({0.5, 0.5}));
    CHECK(code_of({0.0, 1.0}) == ErrorCode::ZeroB0);
    CHECK(code_of({0.7, 0.4}) == ErrorCode::NotOnSimplex);
    CHECK(code_of({1.1, -0.1}) == ErrorCode::NegativeEntry);
    CHECK(code_of({1.0}) == ErrorCode::InvalidArgument);
    CHECK(code_of({0.5, 0.5 + 2e-12}) == ErrorCode::NotOnSimplex);
    CHECK_NOTHROW(validate_distribution({0.5, 0.5 + 5e-13}));
}

TEST_CASE("parsing from CLI text and JSON", "[core_model]") {
    const auto d = parse_distribution("0.6,0.2,0.2");
    CHECK(d.k() == 2);
    CHECK(d.b(2) == 0.2);
    CHECK_THROWS_AS(parse_distribution("0.6,abc"), Error);
    CHECK_THROWS_AS(parse_distribution("0.6,0.4x"), Error);

    const auto j = distribution_from_json(nlohmann::json::parse(R"({"b": [0.5, 0.3, 0.2]})"));
    CHECK(j.k() == 2);
    CHECK_THAT(j.mean_time(), WithinAbs(0.7, 1e-15));
    CHECK_THROWS_AS(distribution_from_json(nlohmann::json::parse(R"({"c": [1]})")), Error);
    CHECK_THROWS_AS(distribution_from_json(nlohmann::json::parse(R"({"b": [0.5, "x"]})")), Error);
}

TEST_CASE("mean time and tails on random distributions", "[core_model][property]") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        const int k = 1 + trial % 8;
        const auto d = testing::random_distribution(k, rng, 1e-3);
        const double bm = d.mean_time();
        CHECK(bm >= 0.0);
        CHECK(bm <= k * (1.0 - d.b(0)) + 1e-12);
        const auto t = tail_sums(d);
        CHECK_THAT(t.tail[0] + d.b(0), WithinAbs(1.0, 1e-12));
        for (std::size_t i = 1; i < t.tail.size(); ++i) CHECK(t.tail[i] <= t.tail[i - 1]);
        // B is also the sum of the tails.
        double sum_tails = 0.0;
        for (double x : t.tail) sum_tails += x;
        CHECK_THAT(sum_tails, WithinAbs(bm, 1e-12));
    }
}

TEST_CASE("slow environment contract", "[core_model]") {
    SlowEnvSpec ok{0.5, 1.5, [](double x) { return 1.0 - x; }, [](double x) { return (x - 0.5) * (1.5 - x); }};
    CHECK_NOTHROW(ok.validate());

    SlowEnvSpec constant_eta = ok;
    constant_eta.eta = [](double) { return 0.3; };
    CHECK_THROWS_AS(constant_eta.validate(), Error);

    SlowEnvSpec outward = ok;
    outward.alpha = [](double x) { return x - 1.0; };
    CHECK_THROWS_AS(outward.validate(), Error);
}

TEST_CASE("fast environment amplitude", "[core_model]") {
    const FastEnvSpec f{0.25, 2.0};
    CHECK_NOTHROW(f.validate());
    CHECK_THAT(f.s_of_n(400), WithinAbs(0.1, 1e-15));
    CHECK(f.s_of_n(1) < 1.0);
    CHECK_THROWS_AS((FastEnvSpec{0.6, 1.0}.validate()), Error);
    CHECK_THROWS_AS((FastEnvSpec{0.2, 0.0}.validate()), Error);
}

TEST_CASE("stream seeds are distinct and reproducible", "[core_model]") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(stream_seed(42, i));
    CHECK(seen.size() == 10000);
    CHECK(stream_seed(42, 7) == stream_seed(42, 7));
    CHECK(stream_seed(42, 7) != stream_seed(43, 7));
}

TEST_CASE("fixation estimate excludes censored runs", "[core_model]") {
    FixationEstimate e;
    e.fixed = 30;
    e.lost = 70;
    e.censored = 5;
    CHECK(e.replicates() == 105);
    CHECK(e.p_hat() == 0.3);
    CHECK_THAT(e.std_err(), WithinAbs(std::sqrt(0.3 * 0.7 / 100.0), 1e-15));
    CHECK(FixationEstimate{}.p_hat() == 0.0);
}
