#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "biobj/core.hpp"
#include "biobj/csv.hpp"

namespace biobj {

/// One configuration's dynamic energy together with the execution time and
/// the dTLB page-walk durations that drive the regression.
struct PmcRecord {
    Configuration config;
    double dynamic_energy_j = 0.0;
    double time_s = 0.0;
    double dtlb_load_walk_cycles = 0.0;   // L
    double dtlb_store_walk_cycles = 0.0;  // S
};

inline void validate(const PmcRecord& r) {
    validate(r.config);
    if (!std::isfinite(r.dynamic_energy_j) || !std::isfinite(r.time_s) ||
        !std::isfinite(r.dtlb_load_walk_cycles) || !std::isfinite(r.dtlb_store_walk_cycles))
        throw InvalidInput("PMC record fields must be finite");
    if (r.time_s <= 0.0) throw InvalidInput("PMC record needs time_s > 0");
    if (r.dtlb_load_walk_cycles < 0.0 || r.dtlb_store_walk_cycles < 0.0)
        throw InvalidInput("cycle counts must be >= 0");
}

/// Schema: g,t,dynamic_energy_j,time_s,dtlb_load_walk_cycles,dtlb_store_walk_cycles
inline std::vector<PmcRecord> load_pmc_csv(const std::string& path) {
    const auto table = csv::read_file(path);
    const auto g = csv::column(table, "g");
    const auto t = csv::column(table, "t");
    const auto e = csv::column(table, "dynamic_energy_j");
    const auto s = csv::column(table, "time_s");
    const auto l = csv::column(table, "dtlb_load_walk_cycles");
    const auto w = csv::column(table, "dtlb_store_walk_cycles");
    std::vector<PmcRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const auto line = table.line_numbers[i];
        PmcRecord r{{csv::to_int(row[g], line), csv::to_int(row[t], line)},
                    csv::to_double(row[e], line),
                    csv::to_double(row[s], line),
                    csv::to_double(row[l], line),
                    csv::to_double(row[w], line)};
        try {
            validate(r);
        } catch (const std::exception& ex) {
            throw ParseError(ex.what(), line);
        }
        out.push_back(r);
    }
    return out;
}

/// Nonnegative coefficients of the dynamic-energy regression
/// E = beta_time * T + beta_load * L + beta_store * S.
struct EnergyModel {
    double beta_time = 0.0;
    double beta_load = 0.0;
    double beta_store = 0.0;
    double residual_norm = 0.0;

    std::array<double, 3> coefficients() const { return {beta_time, beta_load, beta_store}; }
};

inline double predict(const EnergyModel& m, const PmcRecord& r) {
    return m.beta_time * r.time_s + m.beta_load * r.dtlb_load_walk_cycles +
           m.beta_store * r.dtlb_store_walk_cycles;
}

namespace detail {

// Solves the k x k system G x = b by Gaussian elimination, partial pivoting.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> g,
                                       std::vector<double> b) {
    const std::size_t k = b.size();
    for (std::size_t col = 0; col < k; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < k; ++r)
            if (std::fabs(g[r][col]) > std::fabs(g[pivot][col])) pivot = r;
        if (std::fabs(g[pivot][col]) < 1e-30)
            throw InvalidInput("singular normal equations in least-squares solve");
        std::swap(g[col], g[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = col + 1; r < k; ++r) {
            const double f = g[r][col] / g[col][col];
            for (std::size_t c = col; c < k; ++c) g[r][c] -= f * g[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(k, 0.0);
    for (std::size_t r = k; r-- > 0;) {
        double acc = b[r];
        for (std::size_t c = r + 1; c < k; ++c) acc -= g[r][c] * x[c];
        x[r] = acc / g[r][r];
    }
    return x;
}

// Unconstrained least squares restricted to the passive column set, via
// normal equations (the design here is a handful of rows and columns).
inline std::vector<double> ls_on_subset(const std::vector<std::vector<double>>& x,
                                        const std::vector<double>& y,
                                        const std::vector<std::size_t>& passive) {
    const std::size_t k = passive.size();
    std::vector<std::vector<double>> g(k, std::vector<double>(k, 0.0));
    std::vector<double> b(k, 0.0);
    for (std::size_t r = 0; r < x.size(); ++r) {
        for (std::size_t i = 0; i < k; ++i) {
            b[i] += x[r][passive[i]] * y[r];
            for (std::size_t j = 0; j < k; ++j) g[i][j] += x[r][passive[i]] * x[r][passive[j]];
        }
    }
    return solve_dense(std::move(g), std::move(b));
}

/// Lawson-Hanson active-set NNLS: minimizes ||y - X beta|| subject to
/// beta >= 0. Terminates when every zero coefficient has a nonpositive dual
/// w_j = (X^T r)_j, which is the KKT condition.
inline std::vector<double> nnls(const std::vector<std::vector<double>>& x,
                                const std::vector<double>& y) {
    const std::size_t k = x.empty() ? 0 : x.front().size();
    std::vector<double> beta(k, 0.0);
    std::vector<bool> passive(k, false);

    double scale = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        double wj = 0.0;
        for (std::size_t r = 0; r < x.size(); ++r) wj += x[r][j] * y[r];
        scale = std::max(scale, std::fabs(wj));
    }
    const double tol = 1e-12 * std::max(1.0, scale);

    for (std::size_t outer = 0; outer < 3 * k + 10; ++outer) {
        // Dual of the current residual.
        std::vector<double> resid = y;
        for (std::size_t r = 0; r < x.size(); ++r)
            for (std::size_t j = 0; j < k; ++j) resid[r] -= x[r][j] * beta[j];
        std::size_t best = k;
        double best_w = tol;
        for (std::size_t j = 0; j < k; ++j) {
            if (passive[j]) continue;
            double wj = 0.0;
            for (std::size_t r = 0; r < x.size(); ++r) wj += x[r][j] * resid[r];
            if (wj > best_w) {
                best_w = wj;
                best = j;
            }
        }
        if (best == k) break;  // KKT satisfied
        passive[best] = true;

        for (;;) {
            std::vector<std::size_t> idx;
            for (std::size_t j = 0; j < k; ++j)
                if (passive[j]) idx.push_back(j);
            const auto z = ls_on_subset(x, y, idx);
            bool feasible = true;
            for (double v : z)
                if (v <= 0.0) feasible = false;
            if (feasible) {
                for (std::size_t i = 0; i < idx.size(); ++i) beta[idx[i]] = z[i];
                break;
            }
            // Step toward z until the first coefficient hits zero.
            double alpha = 1.0;
            for (std::size_t i = 0; i < idx.size(); ++i)
                if (z[i] <= 0.0)
                    alpha = std::min(alpha, beta[idx[i]] / (beta[idx[i]] - z[i]));
            for (std::size_t i = 0; i < idx.size(); ++i)
                beta[idx[i]] += alpha * (z[i] - beta[idx[i]]);
            for (std::size_t j = 0; j < k; ++j)
                if (passive[j] && beta[j] <= tol) {
                    beta[j] = 0.0;
                    passive[j] = false;
                }
        }
    }
    return beta;
}

}  // namespace detail

/// Fits the nonnegative regression over (T, L, S) by the classical active-set
/// method; exact termination on these few-row designs.
inline EnergyModel nnls_fit(std::span<const PmcRecord> records) {
    if (records.size() < 3)
        throw InsufficientData("need at least 3 PMC records, got " +
                               std::to_string(records.size()));
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    x.reserve(records.size());
    y.reserve(records.size());
    std::array<double, 3> col_norm{};
    for (const auto& r : records) {
        validate(r);
        x.push_back({r.time_s, r.dtlb_load_walk_cycles, r.dtlb_store_walk_cycles});
        y.push_back(r.dynamic_energy_j);
        for (int j = 0; j < 3; ++j) col_norm[j] += x.back()[j] * x.back()[j];
    }
    for (int j = 0; j < 3; ++j)
        if (col_norm[j] == 0.0)
            throw InvalidInput("design column " + std::to_string(j) + " is all zero");

    const auto beta = detail::nnls(x, y);
    EnergyModel m{beta[0], beta[1], beta[2], 0.0};
    double ss = 0.0;
    for (const auto& r : records) {
        const double d = r.dynamic_energy_j - predict(m, r);
        ss += d * d;
    }
    m.residual_norm = std::sqrt(ss);
    return m;
}

inline EnergyModel nnls_fit(const std::vector<PmcRecord>& records) {
    return nnls_fit(std::span<const PmcRecord>(records));
}

/// Spearman rank correlation with average ranks on ties.
inline double spearman_rank_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        throw InvalidInput("rank correlation needs two equal series of length >= 2");
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> rank(v.size(), 0.0);
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = 0.5 * (double(i) + double(j)) + 1.0;
            for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
            i = j + 1;
        }
        return rank;
    };
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= double(ra.size());
    mb /= double(rb.size());
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    if (da == 0.0 || db == 0.0) throw InvalidInput("rank correlation undefined for constant series");
    return num / std::sqrt(da * db);
}

}  // namespace biobj
