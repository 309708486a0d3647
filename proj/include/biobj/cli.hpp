#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "biobj/driver.hpp"
#include "biobj/energy_model.hpp"

namespace biobj {

namespace detail {

inline std::uint64_t seed_from_env() {
    if (const char* s = std::getenv("BIOBJ_TUNE_SEED"))
        return std::strtoull(s, nullptr, 10);
    return 0;
}

/// `replay:<path>`, `command:<cmdline>` (run via sh -c) or
/// `synthetic:<expr-id>`.
inline void apply_energy_flag(EnergySourceConfig& cfg, const std::string& flag) {
    const auto colon = flag.find(':');
    const std::string kind = colon == std::string::npos ? flag : flag.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : flag.substr(colon + 1);
    cfg.kind = parse_energy_kind(kind);
    switch (cfg.kind) {
        case EnergySourceConfig::Kind::replay:
            if (arg.empty()) throw InvalidInput("--energy replay:<path> needs a path");
            cfg.replay_path = arg;
            break;
        case EnergySourceConfig::Kind::command:
            if (arg.empty()) throw InvalidInput("--energy command:<cmdline> needs a command");
            cfg.command_argv = {"/bin/sh", "-c", arg};
            break;
        case EnergySourceConfig::Kind::synthetic:
            if (!arg.empty()) cfg.synthetic_expr_id = arg;
            break;
    }
}

inline std::string fmt_objective(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void print_front(const ParetoFront& front, std::ostream& out) {
    for (const auto& e : front.entries()) {
        out << fmt_objective(e.time_s) << ' ' << fmt_objective(e.dynamic_energy_j);
        for (const auto& c : e.configs) out << ' ' << to_string(c);
        out << '\n';
    }
}

inline int run_pareto(const std::string& input, const std::string& out_prefix,
                      const std::vector<std::string>& formats, std::ostream& out) {
    const auto samples = load_samples_csv(input);
    if (samples.empty()) throw InvalidInput("no samples in " + input);
    const auto front = front_build(samples);
    print_front(front, out);
    if (!out_prefix.empty()) {
        for (const auto& f : formats) {
            switch (parse_report_format(f)) {
                case ReportFormat::plotdata:
                    for (const auto& p : write_plotdata(samples, front, out_prefix))
                        out << "wrote " << p << '\n';
                    break;
                case ReportFormat::json: {
                    nlohmann::json j{{"schema_version", 1},
                                     {"front", front},
                                     {"samples", nlohmann::json::array()}};
                    for (const auto& s : samples)
                        j["samples"].push_back({{"g", s.config.groups},
                                                {"t", s.config.threads_per_group},
                                                {"time_s", s.time_s},
                                                {"dynamic_energy_j", s.dynamic_energy_j}});
                    const std::string path = out_prefix + ".json";
                    auto os = detail::open_out(path);
                    os << j.dump(2) << '\n';
                    out << "wrote " << path << '\n';
                    break;
                }
                case ReportFormat::csv: {
                    const std::string path = out_prefix + ".csv";
                    auto os = detail::open_out(path);
                    os << "g,t,time_s,dynamic_energy_j\n";
                    for (const auto& s : samples)
                        os << s.config.groups << ',' << s.config.threads_per_group << ','
                           << fmt_double(s.time_s) << ',' << fmt_double(s.dynamic_energy_j)
                           << '\n';
                    out << "wrote " << path << '\n';
                    break;
                }
            }
        }
    }
    return 0;
}

inline int run_fit_energy(const std::string& input, const std::string& report_path,
                          std::ostream& out) {
    const auto records = load_pmc_csv(input);
    const auto model = nnls_fit(records);
    std::vector<double> measured, predicted;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : records) {
        const double p = predict(model, r);
        measured.push_back(r.dynamic_energy_j);
        predicted.push_back(p);
        rows.push_back({{"g", r.config.groups},
                        {"t", r.config.threads_per_group},
                        {"measured_j", r.dynamic_energy_j},
                        {"predicted_j", p}});
    }
    const double rho = spearman_rank_correlation(measured, predicted);
    nlohmann::json j{{"schema_version", 1},
                     {"beta_time", model.beta_time},
                     {"beta_load", model.beta_load},
                     {"beta_store", model.beta_store},
                     {"residual_norm_j", model.residual_norm},
                     {"spearman_rank_correlation", rho},
                     {"rows", rows}};
    out << "beta_time=" << fmt_objective(model.beta_time)
        << " beta_load=" << fmt_objective(model.beta_load)
        << " beta_store=" << fmt_objective(model.beta_store)
        << " residual_norm_j=" << fmt_objective(model.residual_norm)
        << " spearman=" << fmt_objective(rho) << '\n';
    if (!report_path.empty()) {
        auto os = detail::open_out(report_path);
        os << j.dump(2) << '\n';
        out << "wrote " << report_path << '\n';
    } else {
        out << j.dump(2) << '\n';
    }
    return 0;
}

inline int run_selftest(std::size_t gemm_n, std::ostream& out) {
    int failed = 0;
    auto check = [&](const std::string& name, bool ok) {
        out << (ok ? "[ok]   " : "[FAIL] ") << name << '\n';
        if (!ok) ++failed;
    };

    const auto a = Matrix::random(gemm_n, 7);
    const auto b = Matrix::random(gemm_n, 8);
    auto expected = Matrix(gemm_n);
    gemm_naive(a, b, expected, 1.0, 0.0);
    for (auto variant : {Decomposition::horizontal, Decomposition::vertical,
                         Decomposition::square}) {
        Matrix c(gemm_n);
        grouped_gemm(a, b, c, 1.0, 0.0, variant, {4, 2});
        double err = 0.0;
        for (std::size_t i = 0; i < c.data().size(); ++i)
            err = std::max(err, std::fabs(c.data()[i] - expected.data()[i]));
        check(std::string("gemm ") + (variant == Decomposition::horizontal  ? "horizontal"
                                      : variant == Decomposition::vertical ? "vertical"
                                                                           : "square") +
                  " vs naive",
              err <= 1e-9 * std::max(1.0, std::fabs(expected.data()[0])));
    }

    const auto m0 = SignalMatrix::random(8, 9);
    const auto want = dft2d_naive(m0, FftDirection::forward);
    for (auto variant : {Decomposition::horizontal, Decomposition::vertical}) {
        auto m = m0;
        grouped_fft2d(m, FftDirection::forward, variant, {2, 2});
        double err = 0.0;
        for (std::size_t i = 0; i < m.data().size(); ++i)
            err = std::max(err, std::abs(m.data()[i] - want.data()[i]));
        check(std::string("fft2d ") +
                  (variant == Decomposition::horizontal ? "horizontal" : "vertical") +
                  " vs direct sum",
              err <= 1e-9);
    }

    auto sig = SignalMatrix::random(33, 10);
    const auto orig = sig;
    transpose_block(sig, 8, 4);
    transpose_block(sig, 8, 4);
    check("transpose involution", sig == orig);

    auto rt = SignalMatrix::random(16, 11);
    const auto before = rt;
    grouped_fft2d(rt, FftDirection::forward, Decomposition::horizontal, {2, 2});
    grouped_fft2d(rt, FftDirection::inverse, Decomposition::horizontal, {2, 2});
    double rt_err = 0.0;
    for (std::size_t i = 0; i < rt.data().size(); ++i)
        rt_err = std::max(rt_err, std::abs(rt.data()[i] - before.data()[i]));
    check("fft2d round trip", rt_err <= 1e-10);

    return failed == 0 ? 0 : 2;
}

}  // namespace detail

/// Runs one CLI invocation; args exclude the program name. Returns 0 on
/// success, 1 on usage errors, 2 on runtime errors.
inline int cli_run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bi-objective (time, dynamic energy) autotuner for threadgroup kernels"};
    app.require_subcommand(1);

    // configs
    auto* cmd_configs = app.add_subcommand("configs", "List (g,t) configurations for l cores");
    int cores = 0;
    cmd_configs->add_option("--cores", cores, "Core count (default: physical cores)");

    // pareto
    auto* cmd_pareto =
        app.add_subcommand("pareto", "Build the Pareto front from a samples CSV");
    std::string pareto_input;
    std::string pareto_out;
    std::vector<std::string> pareto_formats{"plotdata"};
    cmd_pareto->add_option("--input", pareto_input, "CSV with g,t,time_s,dynamic_energy_j")
        ->required();
    cmd_pareto->add_option("--out", pareto_out, "Output path prefix");
    cmd_pareto->add_option("--format", pareto_formats, "json, csv and/or plotdata")
        ->delimiter(',');

    // fit-energy
    auto* cmd_fit = app.add_subcommand("fit-energy",
                                       "Fit the nonnegative dTLB dynamic-energy regression");
    std::string fit_input;
    std::string fit_report;
    cmd_fit->add_option("--input", fit_input, "PMC CSV")->required();
    cmd_fit->add_option("--report", fit_report, "Write the JSON report here");

    // kernels selftest
    auto* cmd_kernels = app.add_subcommand("kernels", "Kernel utilities");
    cmd_kernels->require_subcommand(1);
    auto* cmd_selftest =
        cmd_kernels->add_subcommand("selftest", "Compare kernels against their oracles");
    std::size_t selftest_n = 32;
    cmd_selftest->add_option("--n", selftest_n, "GEMM dimension for the selftest");

    // sweep
    auto* cmd_sweep = app.add_subcommand("sweep", "Measure every configuration and report");
    std::string kernel = "gemm_h";
    SweepSpec spec;
    spec.energy.seed = detail::seed_from_env();
    std::string energy_flag = "synthetic:unit";
    std::string preset = "methodology";
    std::string fft_sign = "forward";
    std::string config_path;
    std::vector<std::string> sweep_formats{"json"};
    std::string stub_time_expr = "inv_gt";
    double stub_sleep_scale = 0.0;
    Precision flags;  // explicit flags win over --preset
    double static_power_flag = 0.0;
    double grace_flag = 2.0;
    cmd_sweep->add_option("--kernel", kernel,
                          "gemm_h|gemm_v|gemm_s|fft_h|fft_v|stub");
    cmd_sweep->add_option("--n", spec.workload.n, "Problem dimension");
    cmd_sweep->add_option("--cores", spec.cores_l, "Core count l (default: physical cores)");
    cmd_sweep->add_option("--cl", flags.confidence_level, "Confidence level");
    cmd_sweep->add_option("--eps", flags.target_rel_error, "Target relative error");
    cmd_sweep->add_option("--min-reps", flags.min_reps, "Minimum repetitions");
    cmd_sweep->add_option("--max-reps", flags.max_reps, "Maximum repetitions");
    cmd_sweep->add_option("--max-elapsed-s", flags.max_elapsed_s,
                          "Repetition time cap per loop");
    cmd_sweep->add_option("--preset", preset, "Precision preset: methodology|api");
    cmd_sweep->add_option("--energy", energy_flag,
                          "replay:<path> | command:<cmdline> | synthetic:<expr-id>");
    cmd_sweep->add_option("--static-power-w", static_power_flag, "Static power P_S");
    cmd_sweep->add_option("--command-grace-s", grace_flag,
                          "Wait for a covering sample after each run");
    cmd_sweep->add_option("--config", config_path,
                          "JSON energy-source config (energy_source, replay_path, "
                          "command_argv, synthetic_expr_id, static_power_w)");
    cmd_sweep->add_option("--out", spec.output_path, "Output path prefix");
    cmd_sweep->add_option("--format", sweep_formats, "json, csv and/or plotdata")
        ->delimiter(',');
    cmd_sweep->add_option("--alpha", spec.workload.scalar_alpha, "GEMM alpha");
    cmd_sweep->add_option("--beta", spec.workload.scalar_beta, "GEMM beta");
    cmd_sweep->add_option("--fft-sign", fft_sign, "forward|inverse");
    cmd_sweep->add_option("--transpose-block", spec.workload.transpose_block,
                          "Transpose block size");
    cmd_sweep->add_option("--failure-budget", spec.failure_budget,
                          "Failures tolerated before aborting");
    cmd_sweep->add_option("--pre-exec-hook", spec.pre_exec_hook,
                          "Command run once before the sweep (e.g. core pinning)");
    cmd_sweep->add_option("--kernel-seed", spec.kernel_seed, "Seed for kernel input data");
    cmd_sweep->add_option("--stub-time-expr", stub_time_expr,
                          "Synthetic time expression for --kernel stub");
    cmd_sweep->add_option("--stub-sleep-scale-s", stub_sleep_scale,
                          "Stub kernel sleeps scale*expr(g,t) seconds");

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return 1;
    }

    try {
        if (*cmd_configs) {
            if (cores == 0) cores = detect_physical_cores();
            for (const auto& c : enumerate_configurations(cores))
                out << c.groups << ',' << c.threads_per_group << '\n';
            return 0;
        }
        if (*cmd_pareto) return detail::run_pareto(pareto_input, pareto_out, pareto_formats, out);
        if (*cmd_fit) return detail::run_fit_energy(fit_input, fit_report, out);
        if (*cmd_selftest) return detail::run_selftest(selftest_n, out);
        if (*cmd_sweep) {
            if (preset == "api")
                spec.precision = Precision::api();
            else if (preset != "methodology")
                throw InvalidInput("unknown precision preset: " + preset);
            if (cmd_sweep->count("--cl")) spec.precision.confidence_level = flags.confidence_level;
            if (cmd_sweep->count("--eps")) spec.precision.target_rel_error = flags.target_rel_error;
            if (cmd_sweep->count("--min-reps")) spec.precision.min_reps = flags.min_reps;
            if (cmd_sweep->count("--max-reps")) spec.precision.max_reps = flags.max_reps;
            if (cmd_sweep->count("--max-elapsed-s"))
                spec.precision.max_elapsed_s = flags.max_elapsed_s;

            if (!config_path.empty()) {
                std::ifstream in(config_path);
                if (!in) throw IoError("cannot open " + config_path);
                nlohmann::json j;
                in >> j;
                from_json(j, spec.energy);
            }
            if (cmd_sweep->count("--energy") || config_path.empty())
                detail::apply_energy_flag(spec.energy, energy_flag);
            if (cmd_sweep->count("--static-power-w"))
                spec.energy.static_power_w = static_power_flag;
            if (cmd_sweep->count("--command-grace-s"))
                spec.energy.command_grace_s = grace_flag;

            if (kernel == "stub") {
                spec.stub = StubKernel{stub_time_expr, stub_sleep_scale};
                if (spec.workload.n == 0) spec.workload.n = 1;
            } else {
                spec.workload.kernel = parse_kernel_id(kernel);
                if (spec.workload.n == 0)
                    throw InvalidInput("--n is required for kernel " + kernel);
            }
            spec.workload.fft_sign =
                fft_sign == "inverse" ? FftDirection::inverse : FftDirection::forward;
            if (spec.cores_l == 0) spec.cores_l = detect_physical_cores();

            const auto report = run_sweep(spec);
            for (const auto& f : sweep_formats)
                for (const auto& path : emit_report(report, parse_report_format(f),
                                                    spec.output_path))
                    out << "wrote " << path << '\n';
            out << "configurations measured: " << report.outcomes.size()
                << ", skipped: " << report.skipped.size()
                << ", front size: " << report.front.size() << '\n';
            detail::print_front(report.front, out);
            if (!report.complete) {
                err << "sweep incomplete: failure budget exhausted\n";
                return 2;
            }
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    err << "usage error: no subcommand\n";
    return 1;
}

inline int cli_main(int argc, char** argv) {
    std::vector<std::string> args;
    args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return cli_run(std::move(args), std::cout, std::cerr);
}

}  // namespace biobj
