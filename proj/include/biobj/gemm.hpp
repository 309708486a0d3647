#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "biobj/core.hpp"
#include "biobj/threadgroup.hpp"

namespace biobj {

/// Dense square matrix, row-major doubles.
class Matrix {
  public:
    Matrix() = default;
    explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}
    Matrix(std::size_t n, std::vector<double> data) : n_(n), data_(std::move(data)) {
        if (data_.size() != n_ * n_) throw InvalidInput("matrix data length must be n*n");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix random(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
        Matrix m(n);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> dist(lo, hi);
        for (auto& v : m.data_) v = dist(rng);
        return m;
    }

    std::size_t dim() const { return n_; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

  private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

namespace detail {

inline void check_same_dim(const Matrix& a, const Matrix& b, const Matrix& c) {
    if (a.dim() != b.dim() || a.dim() != c.dim())
        throw InvalidInput("matrix dimensions must match");
    if (a.dim() == 0) throw InvalidInput("matrix dimension must be >= 1");
}

}  // namespace detail

/// Textbook triple loop, single execution stream. C <- alpha*A*B + beta*C.
/// Serves as the correctness oracle for the threadgroup kernels.
inline void gemm_naive(const Matrix& a, const Matrix& b, Matrix& c, double alpha, double beta) {
    detail::check_same_dim(a, b, c);
    const std::size_t n = a.dim();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += a(i, k) * b(k, j);
            c(i, j) = alpha * acc + beta * c(i, j);
        }
    }
}

struct GemmOptions {
    // The vertical variant normally walks its column band in place; with
    // copy_bands it stages B and C bands into contiguous per-group buffers.
    bool copy_bands = false;
};

namespace detail {

// One output row, full k range, same accumulation order as gemm_naive.
inline void gemm_row(const Matrix& a, const Matrix& b, Matrix& c, double alpha, double beta,
                     std::size_t i, std::size_t col_begin, std::size_t col_end) {
    const std::size_t n = a.dim();
    for (std::size_t j = col_begin; j < col_end; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += a(i, k) * b(k, j);
        c(i, j) = alpha * acc + beta * c(i, j);
    }
}

inline void gemm_horizontal(const Matrix& a, const Matrix& b, Matrix& c, double alpha,
                            double beta, const Configuration& cfg) {
    const auto bands = partition_bands(a.dim(), cfg.groups);
    run_threadgroups(cfg.groups, cfg.threads_per_group, [&](int g, int t) {
        const Band band = bands[static_cast<std::size_t>(g)];
        // Band rows round-robin across the group's threads.
        for (std::size_t r = band.begin + static_cast<std::size_t>(t); r < band.end;
             r += static_cast<std::size_t>(cfg.threads_per_group))
            gemm_row(a, b, c, alpha, beta, r, 0, a.dim());
    });
}

inline void gemm_vertical(const Matrix& a, const Matrix& b, Matrix& c, double alpha,
                          double beta, const Configuration& cfg) {
    const auto bands = partition_bands(a.dim(), cfg.groups);
    run_threadgroups(cfg.groups, cfg.threads_per_group, [&](int g, int t) {
        const Band band = bands[static_cast<std::size_t>(g)];
        for (std::size_t i = static_cast<std::size_t>(t); i < a.dim();
             i += static_cast<std::size_t>(cfg.threads_per_group))
            gemm_row(a, b, c, alpha, beta, i, band.begin, band.end);
    });
}

inline void gemm_vertical_copied(const Matrix& a, const Matrix& b, Matrix& c, double alpha,
                                 double beta, const Configuration& cfg) {
    const std::size_t n = a.dim();
    const auto bands = partition_bands(n, cfg.groups);
    std::vector<std::vector<double>> b_bands(bands.size());
    std::vector<std::vector<double>> c_bands(bands.size());
    for (std::size_t g = 0; g < bands.size(); ++g) {
        b_bands[g].resize(n * bands[g].size());
        c_bands[g].resize(n * bands[g].size());
    }
    // Stage in, compute, stage out; the joins between phases are the barriers.
    run_threadgroups(cfg.groups, cfg.threads_per_group, [&](int g, int t) {
        const Band band = bands[static_cast<std::size_t>(g)];
        const std::size_t w = band.size();
        for (std::size_t i = static_cast<std::size_t>(t); i < n;
             i += static_cast<std::size_t>(cfg.threads_per_group))
            for (std::size_t j = 0; j < w; ++j) {
                b_bands[g][i * w + j] = b(i, band.begin + j);
                c_bands[g][i * w + j] = c(i, band.begin + j);
            }
    });
    run_threadgroups(cfg.groups, cfg.threads_per_group, [&](int g, int t) {
        const Band band = bands[static_cast<std::size_t>(g)];
        const std::size_t w = band.size();
        for (std::size_t i = static_cast<std::size_t>(t); i < n;
             i += static_cast<std::size_t>(cfg.threads_per_group))
            for (std::size_t j = 0; j < w; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < n; ++k) acc += a(i, k) * b_bands[g][k * w + j];
                c_bands[g][i * w + j] = alpha * acc + beta * c_bands[g][i * w + j];
            }
    });
    run_threadgroups(cfg.groups, cfg.threads_per_group, [&](int g, int t) {
        const Band band = bands[static_cast<std::size_t>(g)];
        const std::size_t w = band.size();
        for (std::size_t i = static_cast<std::size_t>(t); i < n;
             i += static_cast<std::size_t>(cfg.threads_per_group))
            for (std::size_t j = 0; j < w; ++j) c(i, band.begin + j) = c_bands[g][i * w + j];
    });
}

inline void gemm_square(const Matrix& a, const Matrix& b, Matrix& c, double alpha, double beta,
                        const Configuration& cfg) {
    const std::size_t n = a.dim();
    int q = 1;
    while ((q + 1) * (q + 1) <= cfg.groups) ++q;
    const auto bands = partition_bands(n, q);  // shared by rows and columns
    run_threadgroups(cfg.groups, cfg.threads_per_group, [&](int g, int t) {
        const Band rows = bands[static_cast<std::size_t>(g / q)];
        const Band cols = bands[static_cast<std::size_t>(g % q)];
        for (std::size_t i = rows.begin + static_cast<std::size_t>(t); i < rows.end;
             i += static_cast<std::size_t>(cfg.threads_per_group))
            for (std::size_t j = cols.begin; j < cols.end; ++j) {
                double acc = 0.0;
                // Sum over the k blocks in order; contiguous bands keep the
                // accumulation order identical to gemm_naive.
                for (const Band& kb : bands)
                    for (std::size_t k = kb.begin; k < kb.end; ++k) acc += a(i, k) * b(k, j);
                c(i, j) = alpha * acc + beta * c(i, j);
            }
    });
}

}  // namespace detail

/// Threadgroup-parallel GEMM. The horizontal variant assigns each group a
/// contiguous band of rows of A and C, the vertical variant a band of columns
/// of B and C, and the square variant a block of C on a sqrt(g) x sqrt(g)
/// grid. Groups own disjoint output regions; each group splits its rows
/// round-robin across its threads.
inline void grouped_gemm(const Matrix& a, const Matrix& b, Matrix& c, double alpha, double beta,
                         Decomposition variant, const Configuration& cfg,
                         const GemmOptions& opts = {}) {
    detail::check_same_dim(a, b, c);
    validate(cfg);
    if (static_cast<std::size_t>(cfg.groups) > a.dim())
        throw InvalidInput("more threadgroups than matrix rows");
    switch (variant) {
        case Decomposition::horizontal:
            detail::gemm_horizontal(a, b, c, alpha, beta, cfg);
            return;
        case Decomposition::vertical:
            if (opts.copy_bands)
                detail::gemm_vertical_copied(a, b, c, alpha, beta, cfg);
            else
                detail::gemm_vertical(a, b, c, alpha, beta, cfg);
            return;
        case Decomposition::square:
            if (!is_perfect_square(cfg.groups))
                throw InvalidInput("square decomposition needs a perfect-square group count");
            detail::gemm_square(a, b, c, alpha, beta, cfg);
            return;
    }
    throw InvalidInput("unknown decomposition");
}

}  // namespace biobj
