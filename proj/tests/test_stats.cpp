#include <cmath>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "biobj/stats.hpp"

using namespace biobj;

TEST_CASE("t quantile at the median is zero", "[stats]") {
    REQUIRE(t_quantile(0.5, 1) == 0.0);
    REQUIRE(t_quantile(0.5, 14) == 0.0);
    REQUIRE(t_quantile(0.5, 1000) == 0.0);
}

TEST_CASE("t quantile matches tabulated values", "[stats]") {
    REQUIRE(t_quantile(0.95, 14) == Catch::Approx(1.7613).margin(1e-4));
    REQUIRE(t_quantile(0.975, 1) == Catch::Approx(12.7062).margin(1e-3));
    REQUIRE(t_quantile(0.975, 30) == Catch::Approx(2.0423).margin(1e-4));
    // magnitude convention: lower-tail levels mirror the upper tail
    REQUIRE(t_quantile(0.05, 14) == Catch::Approx(t_quantile(0.95, 14)).epsilon(1e-12));
}

TEST_CASE("t quantile inverts the CDF to high accuracy", "[stats]") {
    for (int df : {1, 2, 5, 14, 60}) {
        for (double cl : {0.6, 0.9, 0.95, 0.975, 0.999}) {
            const double q = t_quantile(cl, df);
            REQUIRE(detail::student_t_cdf(q, df) == Catch::Approx(cl).margin(1e-10));
        }
    }
}

TEST_CASE("t quantile input validation", "[stats]") {
    REQUIRE_THROWS_AS(t_quantile(0.0, 5), InvalidInput);
    REQUIRE_THROWS_AS(t_quantile(1.0, 5), InvalidInput);
    REQUIRE_THROWS_AS(t_quantile(0.95, 0), InvalidInput);
}

TEST_CASE("constant observations converge right after min_reps", "[stats]") {
    Precision p;
    p.min_reps = 15;
    p.max_reps = 100;
    const auto r = mean_using_ttest([] { return 5.0; }, p);
    REQUIRE(r.converged);
    REQUIRE(r.reps_out == 16);
    REQUIRE(r.mean == 5.0);
    REQUIRE(r.sd == 0.0);
    REQUIRE(r.achieved_rel_error == 0.0);
    REQUIRE(r.achieved_half_width == 0.0);
}

TEST_CASE("deterministic observations always stop at min_reps + 1", "[stats]") {
    for (int min_reps : {1, 3, 7, 20}) {
        Precision p;
        p.min_reps = min_reps;
        p.max_reps = min_reps + 50;
        const auto r = mean_using_ttest([] { return 2.5; }, p);
        REQUIRE(r.reps_out == min_reps + 1);
        REQUIRE(r.converged);
    }
}

TEST_CASE("extreme variance hits the repetition cap", "[stats]") {
    Precision p;
    p.min_reps = 5;
    p.max_reps = 20;
    int i = 0;
    const auto r = mean_using_ttest([&i] { return (i++ % 2) ? 1e6 : 1.0; }, p);
    REQUIRE_FALSE(r.converged);
    REQUIRE(r.reps_out == 20);
}

TEST_CASE("zero time budget stops at the first check", "[stats]") {
    Precision p;
    p.min_reps = 4;
    p.max_reps = 1000;
    p.max_elapsed_s = 0.0;
    int i = 0;
    const auto r = mean_using_ttest([&i] { return (i++ % 2) ? 2.0 : 1.0; }, p);
    REQUIRE_FALSE(r.converged);
    REQUIRE(r.reps_out == p.min_reps + 1);
    REQUIRE(r.elapsed_s > 0.0);
}

TEST_CASE("observations must be positive", "[stats]") {
    Precision p;
    p.min_reps = 2;
    p.max_reps = 10;
    REQUIRE_THROWS_AS(mean_using_ttest([] { return 0.0; }, p), MeasurementError);
    REQUIRE_THROWS_AS(mean_using_ttest([] { return -1.0; }, p), MeasurementError);
}

TEST_CASE("an observation error aborts the loop", "[stats]") {
    Precision p;
    p.min_reps = 2;
    p.max_reps = 10;
    int i = 0;
    REQUIRE_THROWS_AS(mean_using_ttest(
                          [&i]() -> double {
                              if (++i == 3) throw std::runtime_error("meter gone");
                              return 1.0;
                          },
                          p),
                      MeasurementError);
}

TEST_CASE("converged intervals cover the true mean", "[stats]") {
    // i.i.d. normal observations, mean 10, sd 0.1
    Precision p;
    p.min_reps = 15;
    p.max_reps = 1000;
    int covered = 0;
    int converged = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::mt19937_64 rng(1000 + trial);
        std::normal_distribution<double> noise(10.0, 0.1);
        const auto r = mean_using_ttest([&] { return noise(rng); }, p);
        REQUIRE(r.reps_out <= p.max_reps);
        if (!r.converged) continue;
        ++converged;
        if (std::fabs(r.mean - 10.0) <= 3.0 * r.achieved_half_width) ++covered;
    }
    REQUIRE(converged > 900);
    REQUIRE(double(covered) >= 0.99 * double(converged));
}

TEST_CASE("mean and sd use the n-1 denominator", "[stats]") {
    Precision p;
    p.min_reps = 3;
    p.max_reps = 4;
    const double xs[] = {2.0, 4.0, 6.0, 8.0};
    int i = 0;
    const auto r = mean_using_ttest([&] { return xs[i++ % 4]; }, p);
    REQUIRE(r.reps_out == 4);
    REQUIRE(r.mean == Catch::Approx(5.0));
    REQUIRE(r.sd == Catch::Approx(std::sqrt((9.0 + 1.0 + 1.0 + 9.0) / 3.0)));
}

TEST_CASE("normality diagnostic behaves sanely", "[stats]") {
    std::vector<double> close;
    std::mt19937_64 rng(77);
    std::normal_distribution<double> noise(5.0, 0.5);
    for (int i = 0; i < 400; ++i) close.push_back(noise(rng));
    const auto normal_rep = pearson_chi_squared_normality(close);
    REQUIRE(normal_rep.applicable);
    REQUIRE(normal_rep.p_value > 1e-4);

    std::vector<double> bimodal;
    for (int i = 0; i < 400; ++i) bimodal.push_back(i % 2 ? 1.0 + 0.01 * (i % 7) : 100.0);
    const auto bad_rep = pearson_chi_squared_normality(bimodal);
    REQUIRE(bad_rep.applicable);
    REQUIRE(bad_rep.p_value < 0.01);

    std::vector<double> tiny{1.0, 2.0, 3.0};
    REQUIRE_FALSE(pearson_chi_squared_normality(tiny).applicable);
}
