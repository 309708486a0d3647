#pragma once

#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace biobj {

// ---------------------------------------------------------------------------
// Error taxonomy shared by all modules.
// ---------------------------------------------------------------------------

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InsufficientData : InvalidInput {
    using InvalidInput::InvalidInput;
};

struct OutOfRange : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t line_no)
        : std::runtime_error(what + " (line " + std::to_string(line_no) + ")"),
          line(line_no) {}
    std::size_t line;
};

struct MeasurementError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dynamic energy came out negative: the configured static power exceeds the
// observed draw. Carries the value so the caller can decide to retry or abort.
struct AnomalousMeasurement : MeasurementError {
    explicit AnomalousMeasurement(double e)
        : MeasurementError("anomalous measurement: dynamic energy " +
                           std::to_string(e) + " J is negative"),
          dynamic_energy_j(e) {}
    double dynamic_energy_j;
};

// ---------------------------------------------------------------------------
// Domain types.
// ---------------------------------------------------------------------------

/// A runtime configuration: g threadgroups of t threads each.
struct Configuration {
    int groups = 1;
    int threads_per_group = 1;

    friend bool operator==(const Configuration&, const Configuration&) = default;
    friend auto operator<=>(const Configuration&, const Configuration&) = default;
};

inline std::string to_string(const Configuration& c) {
    return "(" + std::to_string(c.groups) + "," + std::to_string(c.threads_per_group) + ")";
}

inline void validate(const Configuration& c) {
    if (c.groups < 1 || c.threads_per_group < 1)
        throw InvalidInput("configuration " + to_string(c) + ": counts must be >= 1");
}

/// Converged (time, dynamic energy) pair measured for one configuration.
struct ObjectiveSample {
    double time_s = 0.0;
    double dynamic_energy_j = 0.0;
    Configuration config;
};

/// Stopping thresholds for the repetition loop of stats::mean_using_ttest.
struct Precision {
    int min_reps = 15;
    int max_reps = 100000;
    double max_elapsed_s = 3600.0;
    double confidence_level = 0.95;
    double target_rel_error = 0.025;

    // Default preset; drives each measurement until the sample mean lies in
    // the 95% confidence interval with 2.5% precision.
    static Precision methodology() { return Precision{}; }

    // Lighter preset capped at 1000 repetitions.
    static Precision api() { return Precision{15, 1000, 3600.0, 0.95, 0.025}; }
};

inline void validate(const Precision& p) {
    if (p.confidence_level <= 0.0 || p.confidence_level >= 1.0)
        throw InvalidInput("confidence_level must lie in (0,1)");
    if (p.target_rel_error <= 0.0 || p.target_rel_error >= 1.0)
        throw InvalidInput("target_rel_error must lie in (0,1)");
    if (p.min_reps < 1 || p.min_reps >= p.max_reps)
        throw InvalidInput("need 1 <= min_reps < max_reps");
    if (p.max_elapsed_s < 0.0)
        throw InvalidInput("max_elapsed_s must be >= 0");
}

enum class KernelId { gemm_h, gemm_v, gemm_s, fft_h, fft_v };

enum class Decomposition { horizontal, vertical, square };

enum class FftDirection { forward, inverse };

inline const char* to_string(KernelId k) {
    switch (k) {
        case KernelId::gemm_h: return "gemm_h";
        case KernelId::gemm_v: return "gemm_v";
        case KernelId::gemm_s: return "gemm_s";
        case KernelId::fft_h: return "fft_h";
        case KernelId::fft_v: return "fft_v";
    }
    return "?";
}

inline KernelId parse_kernel_id(const std::string& s) {
    if (s == "gemm_h") return KernelId::gemm_h;
    if (s == "gemm_v") return KernelId::gemm_v;
    if (s == "gemm_s") return KernelId::gemm_s;
    if (s == "fft_h") return KernelId::fft_h;
    if (s == "fft_v") return KernelId::fft_v;
    throw InvalidInput("unknown kernel id: " + s);
}

inline bool is_gemm(KernelId k) {
    return k == KernelId::gemm_h || k == KernelId::gemm_v || k == KernelId::gemm_s;
}

inline Decomposition decomposition_of(KernelId k) {
    switch (k) {
        case KernelId::gemm_h:
        case KernelId::fft_h: return Decomposition::horizontal;
        case KernelId::gemm_v:
        case KernelId::fft_v: return Decomposition::vertical;
        case KernelId::gemm_s: return Decomposition::square;
    }
    return Decomposition::horizontal;
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline bool is_perfect_square(int n) {
    if (n < 1) return false;
    int r = static_cast<int>(std::sqrt(static_cast<double>(n)));
    while (r * r > n) --r;
    while ((r + 1) * (r + 1) <= n) ++r;
    return r * r == n;
}

/// Problem description handed to the kernel factory.
struct Workload {
    KernelId kernel = KernelId::gemm_h;
    std::size_t n = 0;                   // square problem dimension
    double scalar_alpha = 1.0;           // GEMM only
    double scalar_beta = 0.0;            // GEMM only
    FftDirection fft_sign = FftDirection::forward;  // FFT only
    std::size_t transpose_block = 64;
};

inline void validate(const Workload& w) {
    if (w.n < 1) throw InvalidInput("workload dimension n must be >= 1");
    if (w.transpose_block < 1) throw InvalidInput("transpose_block must be >= 1");
    if (!is_gemm(w.kernel) && !is_power_of_two(w.n))
        throw InvalidInput("FFT kernels require n to be a power of two, got " +
                           std::to_string(w.n));
}

// ---------------------------------------------------------------------------
// Configuration enumeration.
// ---------------------------------------------------------------------------

/// All (g, t) with g*t <= l, lexicographic in (g, t). The count is
/// sum over g of floor(l/g).
inline std::vector<Configuration> enumerate_configurations(int cores_l) {
    if (cores_l < 1) throw InvalidInput("core count must be >= 1");
    std::vector<Configuration> out;
    for (int g = 1; g <= cores_l; ++g)
        for (int t = 1; g * t <= cores_l; ++t)
            out.push_back(Configuration{g, t});
    return out;
}

}  // namespace biobj
