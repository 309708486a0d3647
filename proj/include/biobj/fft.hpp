#pragma once

#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "biobj/core.hpp"
#include "biobj/threadgroup.hpp"

namespace biobj {

using Complex = std::complex<double>;

/// Square complex signal matrix, row-major.
class SignalMatrix {
  public:
    SignalMatrix() = default;
    explicit SignalMatrix(std::size_t n, Complex fill = {}) : n_(n), data_(n * n, fill) {}
    SignalMatrix(std::size_t n, std::vector<Complex> data) : n_(n), data_(std::move(data)) {
        if (data_.size() != n_ * n_) throw InvalidInput("signal data length must be n*n");
    }

    static SignalMatrix random(std::size_t n, std::uint64_t seed) {
        SignalMatrix m(n);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        for (auto& v : m.data_) v = Complex{dist(rng), dist(rng)};
        return m;
    }

    std::size_t dim() const { return n_; }
    Complex& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
    const Complex& operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
    std::span<Complex> row(std::size_t i) { return {data_.data() + i * n_, n_}; }
    std::vector<Complex>& data() { return data_; }
    const std::vector<Complex>& data() const { return data_; }

    friend bool operator==(const SignalMatrix&, const SignalMatrix&) = default;

  private:
    std::size_t n_ = 0;
    std::vector<Complex> data_;
};

/// Direct double-sum 2D DFT, any dimension. The inverse conjugates the
/// twiddles and divides by n^2. Quartic cost; reference oracle only.
inline SignalMatrix dft2d_naive(const SignalMatrix& m, FftDirection dir) {
    const std::size_t n = m.dim();
    if (n < 1) throw InvalidInput("signal dimension must be >= 1");
    const double sign = dir == FftDirection::forward ? -1.0 : 1.0;
    SignalMatrix out(n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) {
            Complex acc{};
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double angle =
                        sign * 2.0 * std::numbers::pi * (double(k * i) + double(l * j)) / double(n);
                    acc += m(i, j) * std::polar(1.0, angle);
                }
            out(k, l) = dir == FftDirection::inverse ? acc / double(n * n) : acc;
        }
    return out;
}

namespace detail {

/// Iterative radix-2 transform of one row: bit-reversal permutation first,
/// then the butterfly stages. Unnormalized in both directions.
inline void fft1d(std::span<Complex> x, FftDirection dir) {
    const std::size_t n = x.size();
    if (!is_power_of_two(n))
        throw InvalidInput("FFT length must be a power of two, got " + std::to_string(n));
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    const double sign = dir == FftDirection::forward ? -1.0 : 1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = sign * 2.0 * std::numbers::pi / double(len);
        const Complex w_len = std::polar(1.0, angle);
        for (std::size_t k = 0; k < n; k += len) {
            Complex w{1.0, 0.0};
            for (std::size_t j = 0; j < len / 2; ++j) {
                const Complex u = x[k + j];
                const Complex v = x[k + j + len / 2] * w;
                x[k + j] = u + v;
                x[k + j + len / 2] = u - v;
                w *= w_len;
            }
        }
    }
}

}  // namespace detail

/// In-place 1D FFTs on rows [row_begin, row_end).
inline void fft1d_rows(SignalMatrix& m, std::size_t row_begin, std::size_t row_end,
                       FftDirection dir) {
    if (row_end > m.dim() || row_begin > row_end) throw InvalidInput("row range out of bounds");
    for (std::size_t r = row_begin; r < row_end; ++r) detail::fft1d(m.row(r), dir);
}

namespace detail {

inline void transpose_tile(SignalMatrix& m, std::size_t i, std::size_t j, std::size_t block) {
    const std::size_t n = m.dim();
    auto& x = m.data();
    for (std::size_t p = 0; p < std::min(n - i, block); ++p)
        for (std::size_t q = 0; q < std::min(n - j, block); ++q) {
            const std::size_t index1 = (i + p) * n + (j + q);
            const std::size_t index2 = (j + q) * n + (i + p);
            // Each symmetric pair is visited twice across tiles; the guard
            // keeps exactly one swap.
            if (index1 >= index2) continue;
            std::swap(x[index1], x[index2]);
        }
}

}  // namespace detail

/// In-place transpose using block tiles, parallel over tile rows.
inline void transpose_block(SignalMatrix& m, std::size_t block, int nthreads = 1) {
    if (block < 1) throw InvalidInput("transpose block must be >= 1");
    if (nthreads < 1) throw InvalidInput("transpose thread count must be >= 1");
    const std::size_t n = m.dim();
    if (n < 2) return;
    const std::size_t tile_rows = (n + block - 1) / block;
    const int pool = static_cast<int>(std::min<std::size_t>(nthreads, tile_rows));
    run_flat_pool(pool, [&](int worker) {
        for (std::size_t bi = static_cast<std::size_t>(worker); bi < tile_rows;
             bi += static_cast<std::size_t>(pool))
            for (std::size_t j = 0; j < n; j += block)
                detail::transpose_tile(m, bi * block, j, block);
    });
}

/// Threadgroup-parallel in-place 2D FFT by row-column decomposition.
///
/// horizontal: row FFTs on each group's row band, transpose, row FFTs,
/// transpose. vertical starts from the columns, realized as transpose, row
/// FFTs, transpose, row FFTs so accesses stay row-contiguous. Transposes run
/// on the flat g*t pool; each row is transformed by exactly one thread.
inline void grouped_fft2d(SignalMatrix& m, FftDirection dir, Decomposition variant,
                          const Configuration& cfg, std::size_t block = 64) {
    const std::size_t n = m.dim();
    if (!is_power_of_two(n))
        throw InvalidInput("grouped FFT needs a power-of-two dimension, got " +
                           std::to_string(n));
    validate(cfg);
    if (static_cast<std::size_t>(cfg.groups) > n)
        throw InvalidInput("more threadgroups than signal rows");
    if (variant == Decomposition::square)
        throw InvalidInput("FFT supports horizontal and vertical decompositions only");

    const auto bands = partition_bands(n, cfg.groups);
    const int flat = cfg.groups * cfg.threads_per_group;
    auto fft_phase = [&] {
        run_threadgroups(cfg.groups, cfg.threads_per_group, [&](int g, int t) {
            const Band band = bands[static_cast<std::size_t>(g)];
            for (std::size_t r = band.begin + static_cast<std::size_t>(t); r < band.end;
                 r += static_cast<std::size_t>(cfg.threads_per_group))
                detail::fft1d(m.row(r), dir);
        });
    };

    if (variant == Decomposition::horizontal) {
        fft_phase();
        transpose_block(m, block, flat);
        fft_phase();
        transpose_block(m, block, flat);
    } else {
        transpose_block(m, block, flat);
        fft_phase();
        transpose_block(m, block, flat);
        fft_phase();
    }

    if (dir == FftDirection::inverse) {
        const double scale = 1.0 / double(n * n);
        for (auto& v : m.data()) v *= scale;
    }
}

}  // namespace biobj
