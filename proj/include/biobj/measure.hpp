#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <csignal>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "biobj/core.hpp"
#include "biobj/csv.hpp"

namespace biobj {

// ---------------------------------------------------------------------------
// Power traces and dynamic energy.
// ---------------------------------------------------------------------------

struct PowerSample {
    double timestamp_s = 0.0;
    double power_w = 0.0;
};

/// Timestamped instantaneous-power samples, strictly increasing in time.
struct PowerTrace {
    std::vector<PowerSample> samples;
    double meter_rate_hz = 0.0;  // nominal; 0 when unknown

    double span_begin() const { return samples.front().timestamp_s; }
    double span_end() const { return samples.back().timestamp_s; }
};

inline void validate(const PowerTrace& trace) {
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        if (trace.samples[i].power_w < 0.0)
            throw InvalidInput("negative power sample at index " + std::to_string(i));
        if (i > 0 && trace.samples[i].timestamp_s <= trace.samples[i - 1].timestamp_s)
            throw InvalidInput("timestamps must be strictly increasing at index " +
                               std::to_string(i));
    }
}

/// Reads a `timestamp_s,power_w` CSV trace.
inline PowerTrace load_power_trace_csv(const std::string& path) {
    const auto table = csv::read_file(path);
    const auto ts_col = csv::column(table, "timestamp_s");
    const auto w_col = csv::column(table, "power_w");
    PowerTrace trace;
    trace.samples.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto line = table.line_numbers[i];
        trace.samples.push_back({csv::to_double(table.rows[i][ts_col], line),
                                 csv::to_double(table.rows[i][w_col], line)});
    }
    validate(trace);
    if (trace.samples.size() > 1) {
        const double span = trace.span_end() - trace.span_begin();
        trace.meter_rate_hz = (trace.samples.size() - 1) / span;
    }
    return trace;
}

struct Integration {
    double energy_j = 0.0;
    std::size_t trapezoids = 0;
};

namespace detail {

inline double power_at(const PowerTrace& trace, double t) {
    const auto& s = trace.samples;
    auto it = std::upper_bound(s.begin(), s.end(), t,
                               [](double v, const PowerSample& p) { return v < p.timestamp_s; });
    if (it == s.end()) return s.back().power_w;
    if (it == s.begin()) return s.front().power_w;
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double f = (t - lo.timestamp_s) / (hi.timestamp_s - lo.timestamp_s);
    return lo.power_w + f * (hi.power_w - lo.power_w);
}

}  // namespace detail

/// Trapezoidal integral of power over [t_start, t_end], in joules. The window
/// must lie within the trace span; endpoints are interpolated.
inline Integration integrate_power_detail(const PowerTrace& trace, double t_start,
                                          double t_end) {
    if (trace.samples.empty()) throw InvalidInput("empty power trace");
    validate(trace);
    if (!(t_start < t_end)) throw InvalidInput("integration window needs t_start < t_end");
    if (t_start < trace.span_begin() || t_end > trace.span_end()) {
        std::ostringstream msg;
        msg << "window [" << t_start << ", " << t_end << "] outside trace span ["
            << trace.span_begin() << ", " << trace.span_end() << "]";
        throw OutOfRange(msg.str());
    }
    Integration out;
    const auto& s = trace.samples;
    auto it = std::upper_bound(s.begin(), s.end(), t_start,
                               [](double v, const PowerSample& p) { return v < p.timestamp_s; });
    PowerSample prev{t_start, detail::power_at(trace, t_start)};
    for (; it != s.end() && it->timestamp_s < t_end; ++it) {
        out.energy_j += 0.5 * (prev.power_w + it->power_w) * (it->timestamp_s - prev.timestamp_s);
        out.trapezoids += 1;
        prev = *it;
    }
    const double w_end = detail::power_at(trace, t_end);
    out.energy_j += 0.5 * (prev.power_w + w_end) * (t_end - prev.timestamp_s);
    out.trapezoids += 1;
    return out;
}

inline double integrate_power(const PowerTrace& trace, double t_start, double t_end) {
    return integrate_power_detail(trace, t_start, t_end).energy_j;
}

/// Time-weighted mean power of a trace; the helper for estimating static
/// power from an idle recording.
inline double mean_power(const PowerTrace& trace) {
    if (trace.samples.empty()) throw InvalidInput("empty power trace");
    if (trace.samples.size() == 1) return trace.samples.front().power_w;
    const double span = trace.span_end() - trace.span_begin();
    return integrate_power(trace, trace.span_begin(), trace.span_end()) / span;
}

enum class MeasureKind { time, dpower, tenergy, denergy };

inline const char* to_string(MeasureKind k) {
    switch (k) {
        case MeasureKind::time: return "TIME";
        case MeasureKind::dpower: return "DPOWER";
        case MeasureKind::tenergy: return "TENERGY";
        case MeasureKind::denergy: return "DENERGY";
    }
    return "?";
}

/// Total energy, elapsed time and the derived dynamic energy of one window.
struct EnergyReading {
    double total_energy_j = 0.0;   // E_T
    double elapsed_s = 0.0;        // T_E
    double static_power_w = 0.0;   // P_S
    double dynamic_energy_j = 0.0; // E_T - P_S * T_E
};

/// Dynamic energy of the window: total energy minus the static share.
/// Negative results are anomalous (static power above the observed draw) and
/// raise AnomalousMeasurement.
inline EnergyReading dynamic_energy(const PowerTrace& trace, double t_start, double t_end,
                                    double static_power_w) {
    if (static_power_w < 0.0) throw InvalidInput("static power must be >= 0");
    EnergyReading r;
    r.total_energy_j = integrate_power(trace, t_start, t_end);
    r.elapsed_s = t_end - t_start;
    r.static_power_w = static_power_w;
    r.dynamic_energy_j = r.total_energy_j - static_power_w * r.elapsed_s;
    if (r.dynamic_energy_j < 0.0) throw AnomalousMeasurement(r.dynamic_energy_j);
    return r;
}

// ---------------------------------------------------------------------------
// Synthetic objective expressions, shared by the synthetic energy source and
// the stub kernel. Deterministic given the seed.
// ---------------------------------------------------------------------------

inline double synthetic_expr(const std::string& id, const Workload& w,
                             const Configuration& c, std::mt19937_64& rng) {
    const double g = c.groups;
    const double t = c.threads_per_group;
    if (id == "unit") return 1.0;
    if (id == "g_plus_t") return g + t;
    if (id == "g_plus_t_tenth") return g + t / 10.0;
    if (id == "inv_gt") return 1.0 / (g * t);
    if (id == "n_over_gt") return double(w.n) / (g * t);
    if (id == "seeded_noise")
        return g + t + 0.01 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    throw InvalidInput("unknown synthetic expression id: " + id);
}

// ---------------------------------------------------------------------------
// Energy sources.
// ---------------------------------------------------------------------------

struct EnergySourceConfig {
    enum class Kind { replay, command, synthetic };
    Kind kind = Kind::synthetic;
    std::string replay_path;
    std::vector<std::string> command_argv;
    std::string synthetic_expr_id = "unit";
    double static_power_w = 0.0;
    double command_grace_s = 2.0;  // wait for one covering sample after the run
    std::uint64_t seed = 0;
};

inline const char* to_string(EnergySourceConfig::Kind k) {
    switch (k) {
        case EnergySourceConfig::Kind::replay: return "replay";
        case EnergySourceConfig::Kind::command: return "command";
        case EnergySourceConfig::Kind::synthetic: return "synthetic";
    }
    return "?";
}

inline EnergySourceConfig::Kind parse_energy_kind(const std::string& s) {
    if (s == "replay") return EnergySourceConfig::Kind::replay;
    if (s == "command") return EnergySourceConfig::Kind::command;
    if (s == "synthetic") return EnergySourceConfig::Kind::synthetic;
    throw InvalidInput("unknown energy source kind: " + s);
}

/// One measured run: wall-clock time of the workload plus its dynamic energy.
/// overhead_s is the source bookkeeping outside the workload itself.
struct Measurement {
    double time_s = 0.0;
    double dynamic_energy_j = 0.0;
    double overhead_s = 0.0;
};

/// Serializes measurements: a meter is machine-global, so at most one
/// measurement is in flight per source.
class EnergySource {
  public:
    virtual ~EnergySource() = default;
    virtual std::string describe() const = 0;

    Measurement measure(const Workload& w, const Configuration& c,
                        const std::function<void()>& run) {
        std::lock_guard lock(gate_);
        return do_measure(w, c, run);
    }

  protected:
    virtual Measurement do_measure(const Workload& w, const Configuration& c,
                                   const std::function<void()>& run) = 0;

  private:
    std::mutex gate_;
};

/// Replays a prerecorded power log. Run windows are placed on the trace's
/// relative time axis, anchored at source construction.
class ReplaySource final : public EnergySource {
  public:
    ReplaySource(PowerTrace trace, double static_power_w)
        : trace_(std::move(trace)),
          static_power_w_(static_power_w),
          anchor_(std::chrono::steady_clock::now()) {
        validate(trace_);
        if (trace_.samples.empty()) throw InvalidInput("replay trace is empty");
    }

    std::string describe() const override { return "replay"; }

  protected:
    Measurement do_measure(const Workload&, const Configuration&,
                           const std::function<void()>& run) override {
        const auto m0 = std::chrono::steady_clock::now();
        const double t_start = since_anchor();
        run();
        const double t_end = since_anchor();
        double dyn = 0.0;
        try {
            dyn = dynamic_energy(trace_, t_start, t_end, static_power_w_).dynamic_energy_j;
        } catch (const AnomalousMeasurement&) {
            throw;
        } catch (const std::exception& e) {
            throw MeasurementError(std::string("replay: ") + e.what());
        }
        const double total =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - m0).count();
        return {t_end - t_start, dyn, total - (t_end - t_start)};
    }

  private:
    double since_anchor() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - anchor_).count();
    }

    PowerTrace trace_;
    double static_power_w_;
    std::chrono::steady_clock::time_point anchor_;
};

namespace detail {

/// Child process writing `timestamp_s,power_w` lines to a pipe. Timestamps
/// are relative to command start.
class SamplerProcess {
  public:
    explicit SamplerProcess(const std::vector<std::string>& argv) {
        if (argv.empty()) throw InvalidInput("empty sampling command");
        int fds[2];
        if (::pipe(fds) != 0) throw MeasurementError("pipe() failed");
        pid_ = ::fork();
        if (pid_ < 0) {
            ::close(fds[0]);
            ::close(fds[1]);
            throw MeasurementError("fork() failed");
        }
        if (pid_ == 0) {
            ::setpgid(0, 0);  // own group so termination reaches any children
            ::dup2(fds[1], STDOUT_FILENO);
            ::close(fds[0]);
            ::close(fds[1]);
            std::vector<char*> cargv;
            cargv.reserve(argv.size() + 1);
            for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
            cargv.push_back(nullptr);
            ::execvp(cargv[0], cargv.data());
            ::_exit(127);
        }
        ::setpgid(pid_, pid_);  // also from the parent, so the group exists before any signal
        ::close(fds[1]);
        read_fd_ = fds[0];
        reader_ = std::thread([this] { read_loop(); });
    }

    ~SamplerProcess() {
        terminate();
        if (reader_.joinable()) reader_.join();
        if (read_fd_ >= 0) ::close(read_fd_);
    }

    double last_timestamp() const {
        std::lock_guard lock(m_);
        return samples_.empty() ? -1.0 : samples_.back().timestamp_s;
    }

    bool exited() const { return eof_.load(); }

    /// SIGTERM to the whole sampler group, then SIGKILL if it lingers.
    void terminate() {
        if (pid_ <= 0) return;
        ::kill(-pid_, SIGTERM);
        for (int i = 0; i < 100; ++i) {
            if (::waitpid(pid_, nullptr, WNOHANG) != 0) {
                ::kill(-pid_, SIGKILL);  // reap any stragglers holding the pipe
                pid_ = -1;
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        ::kill(-pid_, SIGKILL);
        ::waitpid(pid_, nullptr, 0);
        pid_ = -1;
    }

    PowerTrace take_trace() {
        if (reader_.joinable()) reader_.join();
        std::lock_guard lock(m_);
        if (!parse_error_.empty()) throw MeasurementError(parse_error_);
        PowerTrace t;
        t.samples = samples_;
        return t;
    }

  private:
    void read_loop() {
        std::string pending;
        char buf[512];
        for (;;) {
            const ssize_t k = ::read(read_fd_, buf, sizeof buf);
            if (k <= 0) break;
            pending.append(buf, static_cast<std::size_t>(k));
            std::size_t nl;
            while ((nl = pending.find('\n')) != std::string::npos) {
                handle_line(pending.substr(0, nl));
                pending.erase(0, nl + 1);
            }
        }
        if (!pending.empty()) handle_line(pending);
        eof_.store(true);
    }

    void handle_line(const std::string& raw) {
        const std::string line = csv::detail::trim(raw);
        if (line.empty() || line == "timestamp_s,power_w") return;
        const auto comma = line.find(',');
        std::lock_guard lock(m_);
        if (!parse_error_.empty()) return;
        try {
            if (comma == std::string::npos) throw InvalidInput("missing comma");
            const double ts = csv::to_double(csv::detail::trim(line.substr(0, comma)), 0);
            const double w = csv::to_double(csv::detail::trim(line.substr(comma + 1)), 0);
            if (w < 0.0) throw InvalidInput("negative power");
            if (!samples_.empty() && ts <= samples_.back().timestamp_s)
                throw InvalidInput("non-increasing timestamp");
            samples_.push_back({ts, w});
        } catch (const std::exception& e) {
            parse_error_ = "unparsable sample line '" + line + "': " + e.what();
        }
    }

    pid_t pid_ = -1;
    int read_fd_ = -1;
    std::thread reader_;
    mutable std::mutex m_;
    std::vector<PowerSample> samples_;
    std::string parse_error_;
    std::atomic<bool> eof_{false};
};

}  // namespace detail

/// Launches a sampling command around each run, terminates it politely after
/// the run window is covered, and integrates its output.
class CommandSource final : public EnergySource {
  public:
    CommandSource(std::vector<std::string> argv, double static_power_w, double grace_s = 2.0)
        : argv_(std::move(argv)), static_power_w_(static_power_w), grace_s_(grace_s) {
        if (argv_.empty()) throw InvalidInput("sampling command argv is empty");
    }

    std::string describe() const override { return "command:" + argv_.front(); }

  protected:
    Measurement do_measure(const Workload&, const Configuration&,
                           const std::function<void()>& run) override {
        const auto m0 = std::chrono::steady_clock::now();
        detail::SamplerProcess sampler(argv_);
        const auto launch = std::chrono::steady_clock::now();
        auto since_launch = [&launch] {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - launch)
                .count();
        };
        const double t_start = since_launch();
        run();
        const double t_end = since_launch();
        // Wait for one sample past the window so the trapezoid has support.
        while (sampler.last_timestamp() < t_end && !sampler.exited() &&
               since_launch() < t_end + grace_s_)
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        sampler.terminate();
        PowerTrace trace = sampler.take_trace();
        if (trace.samples.empty())
            throw MeasurementError("sampling command emitted no samples");
        double dyn = 0.0;
        try {
            dyn = dynamic_energy(trace, t_start, t_end, static_power_w_).dynamic_energy_j;
        } catch (const AnomalousMeasurement&) {
            throw;
        } catch (const std::exception& e) {
            throw MeasurementError(std::string("command source: run window not covered: ") +
                                   e.what());
        }
        const double total =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - m0).count();
        return {t_end - t_start, dyn, total - (t_end - t_start)};
    }

  private:
    std::vector<std::string> argv_;
    double static_power_w_;
    double grace_s_;
};

/// Deterministic energy from a configured expression of (workload,
/// configuration). Meant for CI and demos.
class SyntheticSource final : public EnergySource {
  public:
    explicit SyntheticSource(std::string expr_id, std::uint64_t seed = 0)
        : expr_id_(std::move(expr_id)), rng_(seed) {}

    std::string describe() const override { return "synthetic:" + expr_id_; }

  protected:
    Measurement do_measure(const Workload& w, const Configuration& c,
                           const std::function<void()>& run) override {
        const auto t0 = std::chrono::steady_clock::now();
        run();
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return {wall, synthetic_expr(expr_id_, w, c, rng_), 0.0};
    }

  private:
    std::string expr_id_;
    std::mt19937_64 rng_;
};

inline std::unique_ptr<EnergySource> make_energy_source(const EnergySourceConfig& cfg) {
    if (cfg.static_power_w < 0.0) throw InvalidInput("static power must be >= 0");
    switch (cfg.kind) {
        case EnergySourceConfig::Kind::replay:
            return std::make_unique<ReplaySource>(load_power_trace_csv(cfg.replay_path),
                                                  cfg.static_power_w);
        case EnergySourceConfig::Kind::command:
            return std::make_unique<CommandSource>(cfg.command_argv, cfg.static_power_w,
                                                   cfg.command_grace_s);
        case EnergySourceConfig::Kind::synthetic:
            return std::make_unique<SyntheticSource>(cfg.synthetic_expr_id, cfg.seed);
    }
    throw InvalidInput("unknown energy source kind");
}

}  // namespace biobj
