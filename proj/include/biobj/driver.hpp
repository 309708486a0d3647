#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <sys/utsname.h>

#include <json.hpp>

#include "biobj/core.hpp"
#include "biobj/csv.hpp"
#include "biobj/fft.hpp"
#include "biobj/gemm.hpp"
#include "biobj/measure.hpp"
#include "biobj/pareto.hpp"
#include "biobj/stats.hpp"

namespace biobj {

// ---------------------------------------------------------------------------
// Sweep specification and report.
// ---------------------------------------------------------------------------

/// Deterministic stand-in for a real kernel: the time observation is a
/// synthetic expression of (g, t) and the body optionally sleeps a scaled
/// amount of it. Used by CI runs and demos.
struct StubKernel {
    std::string time_expr_id = "inv_gt";
    double sleep_scale_s = 0.0;

    friend bool operator==(const StubKernel&, const StubKernel&) = default;
};

struct SweepSpec {
    Workload workload;
    int cores_l = 0;
    Precision precision = Precision::methodology();
    EnergySourceConfig energy;
    std::string output_path = "sweep_report";
    std::optional<StubKernel> stub;
    int failure_budget = 3;       // anomalies or non-converged loops before aborting
    std::string pre_exec_hook;    // optional command run once before the sweep
    std::uint64_t kernel_seed = 42;
};

inline void validate(const SweepSpec& spec) {
    if (spec.cores_l < 1) throw InvalidInput("cores_l must be >= 1");
    if (spec.energy.static_power_w < 0.0) throw InvalidInput("static power must be >= 0");
    if (spec.failure_budget < 0) throw InvalidInput("failure budget must be >= 0");
    validate(spec.precision);
    if (!spec.stub) validate(spec.workload);
}

struct ConfigOutcome {
    Configuration config;
    TtestResult time_loop;
    TtestResult energy_loop;
    NormalityReport time_normality;
    NormalityReport energy_normality;

    ObjectiveSample sample() const {
        return {time_loop.mean, energy_loop.mean, config};
    }
};

struct SkippedConfig {
    Configuration config;
    std::string reason;
};

struct HostInfo {
    std::string sysname;
    std::string release;
    std::string machine;
    unsigned hardware_threads = 0;
    int physical_cores = 0;
};

struct Provenance {
    std::string created_utc;
    HostInfo host;
    std::string tool = "biobj-tune";
};

struct SweepReport {
    int schema_version = 1;
    SweepSpec spec;
    Provenance provenance;
    bool complete = true;
    std::vector<std::string> failures;
    std::vector<SkippedConfig> skipped;
    std::vector<ConfigOutcome> outcomes;
    ParetoFront front;

    std::vector<ObjectiveSample> samples() const {
        std::vector<ObjectiveSample> out;
        out.reserve(outcomes.size());
        for (const auto& o : outcomes) out.push_back(o.sample());
        return out;
    }
};

// ---------------------------------------------------------------------------
// Host introspection.
// ---------------------------------------------------------------------------

/// Physical core count from /proc/cpuinfo topology; logical count as the
/// fallback. Hyperthreads do not count.
inline int detect_physical_cores() {
    std::ifstream in("/proc/cpuinfo");
    std::set<std::pair<int, int>> cores;
    int physical_id = -1;
    std::string line;
    while (std::getline(in, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = csv::detail::trim(line.substr(0, colon));
        const std::string value = csv::detail::trim(line.substr(colon + 1));
        if (key == "physical id")
            physical_id = std::atoi(value.c_str());
        else if (key == "core id")
            cores.emplace(physical_id, std::atoi(value.c_str()));
    }
    if (!cores.empty()) return static_cast<int>(cores.size());
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

inline HostInfo detect_host() {
    HostInfo h;
    utsname u{};
    if (::uname(&u) == 0) {
        h.sysname = u.sysname;
        h.release = u.release;
        h.machine = u.machine;
    }
    h.hardware_threads = std::thread::hardware_concurrency();
    h.physical_cores = detect_physical_cores();
    return h;
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Flattens nested exception messages into one diagnostic line.
inline std::string error_chain(const std::exception& e) {
    std::string msg = e.what();
    try {
        std::rethrow_if_nested(e);
    } catch (const std::exception& inner) {
        msg += ": " + error_chain(inner);
    } catch (...) {
        msg += ": unknown error";
    }
    return msg;
}

// ---------------------------------------------------------------------------
// Kernel thunks.
// ---------------------------------------------------------------------------

namespace detail {

struct GemmState {
    Matrix a, b, c;
};

struct FftState {
    SignalMatrix m;
};

inline std::function<void()> make_kernel(const SweepSpec& spec, const Configuration& cfg) {
    if (spec.stub) {
        const StubKernel stub = *spec.stub;
        const Workload w = spec.workload;
        return [stub, w, cfg] {
            if (stub.sleep_scale_s > 0.0) {
                std::mt19937_64 rng(0);
                const double s = stub.sleep_scale_s * synthetic_expr(stub.time_expr_id, w, cfg, rng);
                std::this_thread::sleep_for(std::chrono::duration<double>(s));
            }
        };
    }
    const Workload& w = spec.workload;
    if (is_gemm(w.kernel)) {
        auto st = std::make_shared<GemmState>(GemmState{
            Matrix::random(w.n, spec.kernel_seed),
            Matrix::random(w.n, spec.kernel_seed + 1),
            Matrix(w.n),
        });
        const Decomposition variant = decomposition_of(w.kernel);
        return [st, w, cfg, variant] {
            grouped_gemm(st->a, st->b, st->c, w.scalar_alpha, w.scalar_beta, variant, cfg);
        };
    }
    auto st = std::make_shared<FftState>(FftState{SignalMatrix::random(w.n, spec.kernel_seed)});
    const Decomposition variant = decomposition_of(w.kernel);
    return [st, w, cfg, variant] {
        grouped_fft2d(st->m, w.fft_sign, variant, cfg, w.transpose_block);
    };
}

inline std::optional<std::string> skip_reason(const SweepSpec& spec, const Configuration& cfg) {
    if (spec.stub) return std::nullopt;
    if (static_cast<std::size_t>(cfg.groups) > spec.workload.n)
        return "groups exceed workload rows";
    if (spec.workload.kernel == KernelId::gemm_s && !is_perfect_square(cfg.groups))
        return "square decomposition needs a perfect-square group count";
    return std::nullopt;
}

inline ConfigOutcome measure_config(const SweepSpec& spec, const Configuration& cfg,
                                    EnergySource& source) {
    ConfigOutcome out;
    out.config = cfg;
    auto kernel = make_kernel(spec, cfg);

    // Time and energy come from separate repetition loops; the objective
    // vector pairs the two converged means.
    if (spec.stub) {
        auto rng = std::make_shared<std::mt19937_64>(spec.energy.seed);
        const StubKernel stub = *spec.stub;
        out.time_loop = mean_using_ttest(
            [&, rng] {
                kernel();
                return synthetic_expr(stub.time_expr_id, spec.workload, cfg, *rng);
            },
            spec.precision);
    } else {
        out.time_loop = mean_using_ttest(
            [&] {
                const auto t0 = std::chrono::steady_clock::now();
                kernel();
                return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
            },
            spec.precision);
    }
    out.energy_loop = mean_using_ttest(
        [&] { return source.measure(spec.workload, cfg, kernel).dynamic_energy_j; },
        spec.precision);
    out.time_normality = pearson_chi_squared_normality(out.time_loop.observations);
    out.energy_normality = pearson_chi_squared_normality(out.energy_loop.observations);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sweep orchestration.
// ---------------------------------------------------------------------------

/// Measures every feasible (g, t) configuration to statistical confidence and
/// folds the converged samples into the Pareto front. Measurement anomalies
/// retry the configuration; anomalies and non-converged loops beyond the
/// failure budget abort with the report flagged incomplete.
inline SweepReport run_sweep(const SweepSpec& spec) {
    validate(spec);
    SweepReport report;
    report.spec = spec;
    report.provenance.created_utc = utc_timestamp();
    report.provenance.host = detect_host();

    if (!spec.pre_exec_hook.empty()) {
        const int rc = std::system(spec.pre_exec_hook.c_str());
        if (rc != 0)
            throw MeasurementError("pre-exec hook failed with status " + std::to_string(rc));
    }

    auto source = make_energy_source(spec.energy);
    int failures = 0;
    for (const auto& cfg : enumerate_configurations(spec.cores_l)) {
        if (auto reason = detail::skip_reason(spec, cfg)) {
            report.skipped.push_back({cfg, *reason});
            continue;
        }
        for (;;) {
            try {
                auto outcome = detail::measure_config(spec, cfg, *source);
                const bool converged =
                    outcome.time_loop.converged && outcome.energy_loop.converged;
                report.front.insert(outcome.sample());
                report.outcomes.push_back(std::move(outcome));
                if (!converged) {
                    ++failures;
                    report.failures.push_back(to_string(cfg) + ": loop did not converge");
                }
                break;
            } catch (const MeasurementError& e) {
                ++failures;
                report.failures.push_back(to_string(cfg) + ": " + error_chain(e));
                if (failures > spec.failure_budget) {
                    report.complete = false;
                    return report;
                }
                // retry the same configuration
            }
        }
        if (failures > spec.failure_budget) {
            report.complete = false;
            return report;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// JSON serialization (schema_version 1).
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const Configuration& c) {
    j = {{"g", c.groups}, {"t", c.threads_per_group}};
}
inline void from_json(const nlohmann::json& j, Configuration& c) {
    j.at("g").get_to(c.groups);
    j.at("t").get_to(c.threads_per_group);
}

inline void to_json(nlohmann::json& j, const Precision& p) {
    j = {{"min_reps", p.min_reps},
         {"max_reps", p.max_reps},
         {"max_elapsed_s", p.max_elapsed_s},
         {"confidence_level", p.confidence_level},
         {"target_rel_error", p.target_rel_error}};
}
inline void from_json(const nlohmann::json& j, Precision& p) {
    j.at("min_reps").get_to(p.min_reps);
    j.at("max_reps").get_to(p.max_reps);
    j.at("max_elapsed_s").get_to(p.max_elapsed_s);
    j.at("confidence_level").get_to(p.confidence_level);
    j.at("target_rel_error").get_to(p.target_rel_error);
}

inline void to_json(nlohmann::json& j, const Workload& w) {
    j = {{"kernel", to_string(w.kernel)},
         {"n", w.n},
         {"scalar_alpha", w.scalar_alpha},
         {"scalar_beta", w.scalar_beta},
         {"fft_sign", w.fft_sign == FftDirection::forward ? "forward" : "inverse"},
         {"transpose_block", w.transpose_block}};
}
inline void from_json(const nlohmann::json& j, Workload& w) {
    w.kernel = parse_kernel_id(j.at("kernel").get<std::string>());
    j.at("n").get_to(w.n);
    j.at("scalar_alpha").get_to(w.scalar_alpha);
    j.at("scalar_beta").get_to(w.scalar_beta);
    w.fft_sign = j.at("fft_sign").get<std::string>() == "inverse" ? FftDirection::inverse
                                                                  : FftDirection::forward;
    j.at("transpose_block").get_to(w.transpose_block);
}

inline void to_json(nlohmann::json& j, const EnergySourceConfig& c) {
    j = {{"energy_source", to_string(c.kind)},
         {"replay_path", c.replay_path},
         {"command_argv", c.command_argv},
         {"synthetic_expr_id", c.synthetic_expr_id},
         {"static_power_w", c.static_power_w},
         {"command_grace_s", c.command_grace_s},
         {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, EnergySourceConfig& c) {
    c.kind = parse_energy_kind(j.at("energy_source").get<std::string>());
    if (j.contains("replay_path")) j.at("replay_path").get_to(c.replay_path);
    if (j.contains("command_argv")) j.at("command_argv").get_to(c.command_argv);
    if (j.contains("synthetic_expr_id")) j.at("synthetic_expr_id").get_to(c.synthetic_expr_id);
    if (j.contains("static_power_w")) j.at("static_power_w").get_to(c.static_power_w);
    if (j.contains("command_grace_s")) j.at("command_grace_s").get_to(c.command_grace_s);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
}

inline void to_json(nlohmann::json& j, const StubKernel& s) {
    j = {{"time_expr_id", s.time_expr_id}, {"sleep_scale_s", s.sleep_scale_s}};
}
inline void from_json(const nlohmann::json& j, StubKernel& s) {
    j.at("time_expr_id").get_to(s.time_expr_id);
    j.at("sleep_scale_s").get_to(s.sleep_scale_s);
}

inline void to_json(nlohmann::json& j, const SweepSpec& s) {
    j = {{"workload", s.workload},
         {"cores_l", s.cores_l},
         {"precision", s.precision},
         {"energy", s.energy},
         {"output_path", s.output_path},
         {"failure_budget", s.failure_budget},
         {"pre_exec_hook", s.pre_exec_hook},
         {"kernel_seed", s.kernel_seed}};
    if (s.stub) j["stub"] = *s.stub;
}
inline void from_json(const nlohmann::json& j, SweepSpec& s) {
    j.at("workload").get_to(s.workload);
    j.at("cores_l").get_to(s.cores_l);
    j.at("precision").get_to(s.precision);
    j.at("energy").get_to(s.energy);
    j.at("output_path").get_to(s.output_path);
    j.at("failure_budget").get_to(s.failure_budget);
    j.at("pre_exec_hook").get_to(s.pre_exec_hook);
    j.at("kernel_seed").get_to(s.kernel_seed);
    if (j.contains("stub")) s.stub = j.at("stub").get<StubKernel>();
}

inline void to_json(nlohmann::json& j, const TtestResult& r) {
    j = {{"reps_out", r.reps_out},
         {"achieved_half_width", r.achieved_half_width},
         {"achieved_rel_error", r.achieved_rel_error},
         {"elapsed_s", r.elapsed_s},
         {"mean", r.mean},
         {"sd", r.sd},
         {"converged", r.converged}};
}
inline void from_json(const nlohmann::json& j, TtestResult& r) {
    j.at("reps_out").get_to(r.reps_out);
    j.at("achieved_half_width").get_to(r.achieved_half_width);
    j.at("achieved_rel_error").get_to(r.achieved_rel_error);
    j.at("elapsed_s").get_to(r.elapsed_s);
    j.at("mean").get_to(r.mean);
    j.at("sd").get_to(r.sd);
    j.at("converged").get_to(r.converged);
}

inline void to_json(nlohmann::json& j, const NormalityReport& r) {
    j = {{"applicable", r.applicable},
         {"bins", r.bins},
         {"dof", r.dof},
         {"statistic", r.statistic},
         {"p_value", r.p_value}};
}
inline void from_json(const nlohmann::json& j, NormalityReport& r) {
    j.at("applicable").get_to(r.applicable);
    j.at("bins").get_to(r.bins);
    j.at("dof").get_to(r.dof);
    j.at("statistic").get_to(r.statistic);
    j.at("p_value").get_to(r.p_value);
}

inline void to_json(nlohmann::json& j, const ConfigOutcome& o) {
    j = {{"config", o.config},
         {"time_s", o.time_loop.mean},
         {"dynamic_energy_j", o.energy_loop.mean},
         {"time_loop", o.time_loop},
         {"energy_loop", o.energy_loop},
         {"time_normality", o.time_normality},
         {"energy_normality", o.energy_normality}};
}
inline void from_json(const nlohmann::json& j, ConfigOutcome& o) {
    j.at("config").get_to(o.config);
    j.at("time_loop").get_to(o.time_loop);
    j.at("energy_loop").get_to(o.energy_loop);
    j.at("time_normality").get_to(o.time_normality);
    j.at("energy_normality").get_to(o.energy_normality);
}

inline void to_json(nlohmann::json& j, const SkippedConfig& s) {
    j = {{"config", s.config}, {"reason", s.reason}};
}
inline void from_json(const nlohmann::json& j, SkippedConfig& s) {
    j.at("config").get_to(s.config);
    j.at("reason").get_to(s.reason);
}

inline void to_json(nlohmann::json& j, const HostInfo& h) {
    j = {{"sysname", h.sysname},
         {"release", h.release},
         {"machine", h.machine},
         {"hardware_threads", h.hardware_threads},
         {"physical_cores", h.physical_cores}};
}
inline void from_json(const nlohmann::json& j, HostInfo& h) {
    j.at("sysname").get_to(h.sysname);
    j.at("release").get_to(h.release);
    j.at("machine").get_to(h.machine);
    j.at("hardware_threads").get_to(h.hardware_threads);
    j.at("physical_cores").get_to(h.physical_cores);
}

inline void to_json(nlohmann::json& j, const Provenance& p) {
    j = {{"created_utc", p.created_utc}, {"host", p.host}, {"tool", p.tool}};
}
inline void from_json(const nlohmann::json& j, Provenance& p) {
    j.at("created_utc").get_to(p.created_utc);
    j.at("host").get_to(p.host);
    j.at("tool").get_to(p.tool);
}

inline void to_json(nlohmann::json& j, const FrontEntry& e) {
    j = {{"time_s", e.time_s},
         {"dynamic_energy_j", e.dynamic_energy_j},
         {"configs", e.configs}};
}

inline void to_json(nlohmann::json& j, const ParetoFront& f) { j = f.entries(); }
inline void from_json(const nlohmann::json& j, ParetoFront& f) {
    f = ParetoFront{};
    for (const auto& entry : j) {
        const double time_s = entry.at("time_s").get<double>();
        const double energy = entry.at("dynamic_energy_j").get<double>();
        for (const auto& cfg : entry.at("configs"))
            f.insert({time_s, energy, cfg.get<Configuration>()});
    }
}

inline void to_json(nlohmann::json& j, const SweepReport& r) {
    j = {{"schema_version", r.schema_version},
         {"spec", r.spec},
         {"provenance", r.provenance},
         {"complete", r.complete},
         {"failures", r.failures},
         {"skipped", r.skipped},
         {"samples", r.outcomes},
         {"front", r.front}};
}
inline void from_json(const nlohmann::json& j, SweepReport& r) {
    j.at("schema_version").get_to(r.schema_version);
    j.at("spec").get_to(r.spec);
    j.at("provenance").get_to(r.provenance);
    j.at("complete").get_to(r.complete);
    j.at("failures").get_to(r.failures);
    j.at("skipped").get_to(r.skipped);
    j.at("samples").get_to(r.outcomes);
    j.at("front").get_to(r.front);
}

// ---------------------------------------------------------------------------
// Report emission.
// ---------------------------------------------------------------------------

enum class ReportFormat { json, csv, plotdata };

inline ReportFormat parse_report_format(const std::string& s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    if (s == "plotdata") return ReportFormat::plotdata;
    throw InvalidInput("unknown report format: " + s);
}

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

inline void write_pairs(const std::string& path,
                        const std::vector<std::pair<double, double>>& rows) {
    auto out = open_out(path);
    for (const auto& [t, e] : rows) out << fmt_double(t) << ' ' << fmt_double(e) << '\n';
}

}  // namespace detail

/// Two-column (time_s, dynamic_energy_j) files: one for the front, one for
/// all samples. Returns the written paths.
inline std::vector<std::string> write_plotdata(const std::vector<ObjectiveSample>& samples,
                                               const ParetoFront& front,
                                               const std::string& prefix) {
    std::vector<std::pair<double, double>> front_rows;
    for (const auto& e : front.entries()) front_rows.emplace_back(e.time_s, e.dynamic_energy_j);
    std::vector<std::pair<double, double>> sample_rows;
    for (const auto& s : samples) sample_rows.emplace_back(s.time_s, s.dynamic_energy_j);
    const std::string front_path = prefix + ".front.dat";
    const std::string samples_path = prefix + ".samples.dat";
    detail::write_pairs(front_path, front_rows);
    detail::write_pairs(samples_path, sample_rows);
    return {front_path, samples_path};
}

/// Serializes the report. json writes the full document, csv one row per
/// configuration, plotdata the two-column files.
inline std::vector<std::string> emit_report(const SweepReport& report, ReportFormat format,
                                            const std::string& prefix) {
    if (report.outcomes.empty()) throw InvalidInput("report has no measured configurations");
    switch (format) {
        case ReportFormat::json: {
            const std::string path = prefix + ".json";
            auto out = detail::open_out(path);
            out << nlohmann::json(report).dump(2) << '\n';
            return {path};
        }
        case ReportFormat::csv: {
            const std::string path = prefix + ".csv";
            auto out = detail::open_out(path);
            out << "g,t,time_s,dynamic_energy_j,time_reps,time_rel_error,time_converged,"
                   "energy_reps,energy_rel_error,energy_converged\n";
            for (const auto& o : report.outcomes)
                out << o.config.groups << ',' << o.config.threads_per_group << ','
                    << detail::fmt_double(o.time_loop.mean) << ','
                    << detail::fmt_double(o.energy_loop.mean) << ',' << o.time_loop.reps_out
                    << ',' << detail::fmt_double(o.time_loop.achieved_rel_error) << ','
                    << (o.time_loop.converged ? 1 : 0) << ',' << o.energy_loop.reps_out << ','
                    << detail::fmt_double(o.energy_loop.achieved_rel_error) << ','
                    << (o.energy_loop.converged ? 1 : 0) << '\n';
            return {path};
        }
        case ReportFormat::plotdata:
            return write_plotdata(report.samples(), report.front, prefix);
    }
    throw InvalidInput("unknown report format");
}

/// Reads objective samples from any CSV carrying g,t,time_s,dynamic_energy_j
/// columns (the sample schema and the PMC schema both qualify).
inline std::vector<ObjectiveSample> load_samples_csv(const std::string& path) {
    const auto table = csv::read_file(path);
    const auto g = csv::column(table, "g");
    const auto t = csv::column(table, "t");
    const auto time_col = csv::column(table, "time_s");
    const auto energy_col = csv::column(table, "dynamic_energy_j");
    std::vector<ObjectiveSample> out;
    out.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const auto line = table.line_numbers[i];
        ObjectiveSample s{csv::to_double(row[time_col], line),
                          csv::to_double(row[energy_col], line),
                          {csv::to_int(row[g], line), csv::to_int(row[t], line)}};
        validate(s.config);
        out.push_back(s);
    }
    return out;
}

}  // namespace biobj
