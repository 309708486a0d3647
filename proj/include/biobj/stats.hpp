#pragma once

#include <chrono>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "biobj/core.hpp"

namespace biobj {

namespace detail {

// Continued fraction for the regularized incomplete beta, modified Lentz.
inline double beta_cf(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 3e-16;
    constexpr double fpmin = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
    return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

inline double student_t_cdf(double x, int df) {
    const double v = df;
    const double tail = 0.5 * incomplete_beta(0.5 * v, 0.5, v / (v + x * x));
    return x >= 0.0 ? 1.0 - tail : tail;
}

// Regularized lower incomplete gamma P(a, x), series for x < a+1 and
// continued fraction otherwise.
inline double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw InvalidInput("gamma_p domain");
    if (x == 0.0) return 0.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a;
        double sum = 1.0 / a;
        double del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
        }
        return sum * std::exp(-x + a * std::log(x) - lg);
    }
    constexpr double fpmin = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / fpmin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return 1.0 - std::exp(-x + a * std::log(x) - lg) * h;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

template <typename Cdf>
double invert_cdf(Cdf&& cdf, double p, double lo, double hi) {
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (cdf(mid) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-14 * std::max(1.0, std::fabs(hi))) break;
    }
    return 0.5 * (lo + hi);
}

inline double normal_quantile(double p) {
    if (p <= 0.0 || p >= 1.0) throw InvalidInput("quantile needs p in (0,1)");
    if (p == 0.5) return 0.0;
    const double q = p > 0.5 ? p : 1.0 - p;
    double hi = 1.0;
    while (normal_cdf(hi) < q) hi *= 2.0;
    const double x = invert_cdf([](double v) { return normal_cdf(v); }, q, 0.0, hi);
    return p > 0.5 ? x : -x;
}

}  // namespace detail

/// Magnitude of the Student-t quantile at confidence level cl with df degrees
/// of freedom.
inline double t_quantile(double cl, int df) {
    if (cl <= 0.0 || cl >= 1.0) throw InvalidInput("confidence level must lie in (0,1)");
    if (df < 1) throw InvalidInput("degrees of freedom must be >= 1");
    if (cl == 0.5) return 0.0;
    const double p = cl > 0.5 ? cl : 1.0 - cl;
    double hi = 1.0;
    while (detail::student_t_cdf(hi, df) < p) {
        hi *= 2.0;
        if (hi > 1e12) break;
    }
    return detail::invert_cdf([df](double x) { return detail::student_t_cdf(x, df); },
                              p, 0.0, hi);
}

/// Outcome of one adaptive repetition loop.
struct TtestResult {
    int reps_out = 0;
    double achieved_half_width = 0.0;  // confidence half-width at the last check
    double achieved_rel_error = 0.0;   // half-width * reps / sum
    double elapsed_s = 0.0;
    double mean = 0.0;
    double sd = 0.0;
    bool converged = false;            // precision reached before any cap
    std::vector<double> observations;  // kept for post-hoc diagnostics
};

/// Repeats `observe` until the sample mean lies within the requested relative
/// confidence interval, or a repetition/time cap fires. Invocations are
/// strictly sequential; each must return a positive finite value.
///
/// After each repetition beyond min_reps the half-width
///   t_quantile(cl, reps - 1) * sd / sqrt(reps)
/// is compared against target_rel_error * mean.
template <typename Observe>
TtestResult mean_using_ttest(Observe&& observe, const Precision& p) {
    validate(p);
    TtestResult r;
    double sum = 0.0;
    double mean = 0.0;
    double m2 = 0.0;  // Welford
    bool stop = false;
    while (r.reps_out < p.max_reps && !stop) {
        const auto t0 = std::chrono::steady_clock::now();
        double x = 0.0;
        try {
            x = observe();
        } catch (...) {
            std::throw_with_nested(MeasurementError(
                "observation failed at repetition " + std::to_string(r.reps_out + 1) +
                " (elapsed " + std::to_string(r.elapsed_s) + " s)"));
        }
        r.elapsed_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!std::isfinite(x) || x <= 0.0)
            throw MeasurementError("observation must be a positive real, got " +
                                   std::to_string(x));
        r.reps_out += 1;
        r.observations.push_back(x);
        sum += x;
        const double delta = x - mean;
        mean += delta / r.reps_out;
        m2 += delta * (x - mean);
        if (r.reps_out > p.min_reps) {
            const double sd = std::sqrt(m2 / (r.reps_out - 1));
            r.achieved_half_width =
                t_quantile(p.confidence_level, r.reps_out - 1) * sd / std::sqrt(double(r.reps_out));
            if (r.achieved_half_width * r.reps_out / sum < p.target_rel_error) {
                stop = true;
                r.converged = true;
            }
            if (r.elapsed_s > p.max_elapsed_s) stop = true;
        }
    }
    r.mean = sum / r.reps_out;
    r.sd = r.reps_out > 1 ? std::sqrt(m2 / (r.reps_out - 1)) : 0.0;
    r.achieved_rel_error = r.achieved_half_width * r.reps_out / sum;
    return r;
}

/// Pearson chi-squared goodness-of-fit against a fitted normal, reported as a
/// diagnostic only. Bins have equal probability under the fitted normal.
struct NormalityReport {
    bool applicable = false;
    int bins = 0;
    int dof = 0;
    double statistic = 0.0;
    double p_value = 1.0;
};

inline NormalityReport pearson_chi_squared_normality(std::span<const double> xs) {
    NormalityReport rep;
    const std::size_t n = xs.size();
    if (n < 20) return rep;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(n);
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / double(n - 1));
    if (sd <= 0.0) return rep;

    const int k = std::max(4, static_cast<int>(std::sqrt(double(n))));
    std::vector<double> edges(k - 1);
    for (int i = 1; i < k; ++i)
        edges[i - 1] = mean + sd * detail::normal_quantile(double(i) / k);
    std::vector<int> counts(k, 0);
    for (double x : xs) {
        int b = 0;
        while (b < k - 1 && x > edges[b]) ++b;
        counts[b] += 1;
    }
    const double expected = double(n) / k;
    double stat = 0.0;
    for (int c : counts) stat += (c - expected) * (c - expected) / expected;
    rep.applicable = true;
    rep.bins = k;
    rep.dof = std::max(1, k - 3);  // mean and sd estimated from the sample
    rep.statistic = stat;
    rep.p_value = 1.0 - detail::gamma_p(0.5 * rep.dof, 0.5 * stat);
    return rep;
}

}  // namespace biobj
