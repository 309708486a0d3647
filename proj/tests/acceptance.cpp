// Acceptance suite: runs each release criterion at its stated tolerance and
// prints one pass/fail line per criterion. Exits nonzero if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "biobj/cli.hpp"
#include "biobj/driver.hpp"
#include "biobj/energy_model.hpp"

using namespace biobj;

namespace {

std::string g_data_dir = BIOBJ_DATA_DIR;
int g_failures = 0;
int g_index = 0;

void criterion(const std::string& name, double budget_s,
               const std::function<bool(std::string&)>& body) {
    ++g_index;
    std::string detail;
    bool ok = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (elapsed > budget_s) {
        ok = false;
        detail += (detail.empty() ? "" : "; ") + std::string("over time budget");
    }
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << "criterion " << g_index << ": " << name
              << "  (" << elapsed << " s" << (detail.empty() ? "" : "; " + detail) << ")\n";
    if (!ok) ++g_failures;
}

std::vector<Configuration> parse_configs(const std::string& text) {
    std::vector<Configuration> out;
    const std::regex re(R"(\((\d+),(\d+)\))");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re);
         it != std::sregex_iterator(); ++it)
        out.push_back({std::stoi((*it)[1]), std::stoi((*it)[2])});
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Configuration> front_via_cli(const std::string& csv_name) {
    std::ostringstream out, err;
    const int rc = cli_run({"pareto", "--input", g_data_dir + "/" + csv_name}, out, err);
    if (rc != 0) throw std::runtime_error("pareto subcommand failed: " + err.str());
    return parse_configs(out.str());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool table2_front(std::string& detail) {
    const std::vector<Configuration> want{{1, 48}, {3, 16}, {4, 12}, {8, 6}, {12, 4}};
    const auto got = front_via_cli("table_16384.csv");
    if (got != want) {
        detail = "front configuration set mismatch";
        return false;
    }
    return true;
}

bool table3_front(std::string& detail) {
    const std::vector<Configuration> want{{1, 48}, {3, 16}, {4, 12}, {6, 8}, {8, 6}, {16, 3}};
    const auto got = front_via_cli("table_17408.csv");
    if (got != want) {
        detail = "front configuration set mismatch";
        return false;
    }
    return true;
}

bool front_oracle_equivalence(std::string& detail) {
    for (int trial = 0; trial < 500; ++trial) {
        std::mt19937_64 rng(90000 + trial);
        std::uniform_real_distribution<double> u(0.0, 100.0);
        std::vector<ObjectiveSample> xs;
        for (int i = 0; i < 50; ++i) xs.push_back({u(rng), u(rng), {i + 1, 1}});

        std::vector<std::array<double, 2>> oracle;
        for (const auto& s : xs) {
            bool dominated = false;
            for (const auto& o : xs)
                if (dominates(std::array{o.time_s, o.dynamic_energy_j},
                              std::array{s.time_s, s.dynamic_energy_j}))
                    dominated = true;
            if (!dominated) oracle.push_back({s.time_s, s.dynamic_energy_j});
        }
        std::sort(oracle.begin(), oracle.end());
        oracle.erase(std::unique(oracle.begin(), oracle.end()), oracle.end());

        const auto front = front_build(xs);
        std::vector<std::array<double, 2>> got;
        for (const auto& e : front.entries()) got.push_back(e.objective());
        if (got != oracle) {
            detail = "mismatch at trial " + std::to_string(trial);
            return false;
        }
    }
    return true;
}

bool gemm_matches_oracle(std::string& detail) {
    for (std::size_t n : {6u, 64u, 65u}) {
        const auto a = Matrix::random(n, 100 + n);
        const auto b = Matrix::random(n, 200 + n);
        const auto c0 = Matrix::random(n, 300 + n);
        Matrix want = c0;
        gemm_naive(a, b, want, 1.25, -0.5);
        double scale = 0.0;
        for (double v : want.data()) scale = std::max(scale, std::fabs(v));
        for (int g : {1, 2, 4})
            for (int t : {1, 2})
                for (auto variant : {Decomposition::horizontal, Decomposition::vertical,
                                     Decomposition::square}) {
                    if (variant == Decomposition::square && !is_perfect_square(g)) continue;
                    Matrix c = c0;
                    grouped_gemm(a, b, c, 1.25, -0.5, variant, {g, t});
                    double err = 0.0;
                    for (std::size_t i = 0; i < c.data().size(); ++i)
                        err = std::max(err, std::fabs(c.data()[i] - want.data()[i]));
                    if (err > 1e-9 * scale) {
                        detail = "n=" + std::to_string(n) + " g=" + std::to_string(g) +
                                 " t=" + std::to_string(t) + " err=" + std::to_string(err);
                        return false;
                    }
                }
    }
    return true;
}

bool fft_matches_oracle(std::string& detail) {
    const auto m8 = SignalMatrix::random(8, 400);
    const auto want = dft2d_naive(m8, FftDirection::forward);
    for (int g : {1, 2, 4})
        for (int t : {1, 2})
            for (auto variant : {Decomposition::horizontal, Decomposition::vertical}) {
                auto m = m8;
                grouped_fft2d(m, FftDirection::forward, variant, {g, t});
                double err = 0.0;
                for (std::size_t i = 0; i < m.data().size(); ++i)
                    err = std::max(err, std::abs(m.data()[i] - want.data()[i]));
                if (err > 1e-9) {
                    detail = "direct-sum mismatch at g=" + std::to_string(g) +
                             " t=" + std::to_string(t);
                    return false;
                }
            }

    const auto m16 = SignalMatrix::random(16, 500);
    auto rt = m16;
    grouped_fft2d(rt, FftDirection::forward, Decomposition::horizontal, {4, 2});
    grouped_fft2d(rt, FftDirection::inverse, Decomposition::horizontal, {4, 2});
    double rt_err = 0.0;
    for (std::size_t i = 0; i < rt.data().size(); ++i)
        rt_err = std::max(rt_err, std::abs(rt.data()[i] - m16.data()[i]));
    if (rt_err > 1e-10) {
        detail = "round trip err=" + std::to_string(rt_err);
        return false;
    }

    const std::size_t n = 32;
    auto m32 = SignalMatrix::random(n, 600);
    double in_energy = 0.0;
    for (const auto& v : m32.data()) in_energy += std::norm(v);
    grouped_fft2d(m32, FftDirection::forward, Decomposition::vertical, {4, 2});
    double out_energy = 0.0;
    for (const auto& v : m32.data()) out_energy += std::norm(v);
    if (std::fabs(out_energy - in_energy * double(n * n)) > 1e-9 * out_energy) {
        detail = "Parseval violated";
        return false;
    }
    return true;
}

bool transpose_bit_exact(std::string& detail) {
    for (std::size_t n : {1u, 2u, 64u, 129u}) {
        for (std::size_t block : {1u, 64u}) {
            auto m = SignalMatrix::random(n, 700 + n + block);
            SignalMatrix want(n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) want(j, i) = m(i, j);
            auto work = m;
            transpose_block(work, block, 4);
            if (!(work == want)) {
                detail = "reference mismatch at n=" + std::to_string(n);
                return false;
            }
            transpose_block(work, block, 4);
            if (!(work == m)) {
                detail = "involution mismatch at n=" + std::to_string(n);
                return false;
            }
        }
    }
    return true;
}

bool nnls_criteria(std::string& detail) {
    // planted recovery
    std::vector<PmcRecord> rows;
    std::mt19937_64 rng(800);
    std::uniform_real_distribution<double> u(0.5, 10.0);
    for (int i = 0; i < 8; ++i) {
        PmcRecord r{{1, i + 1}, 0.0, u(rng), u(rng), u(rng)};
        r.dynamic_energy_j =
            2.0 * r.time_s + 3.0 * r.dtlb_load_walk_cycles + 1.0 * r.dtlb_store_walk_cycles;
        rows.push_back(r);
    }
    const auto planted = nnls_fit(rows);
    if (std::fabs(planted.beta_time - 2.0) > 1e-6 || std::fabs(planted.beta_load - 3.0) > 1e-6 ||
        std::fabs(planted.beta_store - 1.0) > 1e-6) {
        detail = "planted coefficients not recovered";
        return false;
    }

    // KKT on random instances
    std::uniform_real_distribution<double> e(-10.0, 10.0);
    std::uniform_int_distribution<int> rows_of(4, 10);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<PmcRecord> inst;
        const int nrows = rows_of(rng);
        for (int i = 0; i < nrows; ++i) inst.push_back({{1, i + 1}, e(rng), u(rng), u(rng), u(rng)});
        const auto m = nnls_fit(inst);
        std::array<double, 3> grad{};
        for (const auto& r : inst) {
            const double resid = r.dynamic_energy_j - predict(m, r);
            grad[0] -= r.time_s * resid;
            grad[1] -= r.dtlb_load_walk_cycles * resid;
            grad[2] -= r.dtlb_store_walk_cycles * resid;
        }
        const auto beta = m.coefficients();
        for (int j = 0; j < 3; ++j) {
            const bool ok = beta[j] > 0.0 ? std::fabs(grad[j]) <= 1e-6 : grad[j] >= -1e-6;
            if (!ok) {
                detail = "KKT violated at trial " + std::to_string(trial);
                return false;
            }
        }
    }

    // measured fixture: nonnegative and trend-consistent
    const auto fixture = load_pmc_csv(g_data_dir + "/table_16384.csv");
    const auto m16 = nnls_fit(fixture);
    if (m16.beta_time < 0.0 || m16.beta_load < 0.0 || m16.beta_store < 0.0) {
        detail = "negative coefficient on the fixture";
        return false;
    }
    std::vector<double> measured, predicted;
    for (const auto& r : fixture) {
        measured.push_back(r.dynamic_energy_j);
        predicted.push_back(predict(m16, r));
    }
    if (spearman_rank_correlation(predicted, measured) < 0.0) {
        detail = "negative rank correlation on the fixture";
        return false;
    }
    return true;
}

bool ttest_criteria(std::string& detail) {
    Precision p;
    p.min_reps = 15;
    p.max_reps = 100;
    const auto constant = mean_using_ttest([] { return 5.0; }, p);
    if (!constant.converged || constant.reps_out != p.min_reps + 1 ||
        constant.achieved_rel_error != 0.0) {
        detail = "constant generator did not stop at min_reps + 1 with zero error";
        return false;
    }

    Precision cap;
    cap.min_reps = 5;
    cap.max_reps = 20;
    int i = 0;
    const auto capped = mean_using_ttest([&i] { return (i++ % 2) ? 1e6 : 1.0; }, cap);
    if (capped.converged || capped.reps_out != 20) {
        detail = "max_reps cap not honored";
        return false;
    }

    Precision timed;
    timed.min_reps = 4;
    timed.max_reps = 100000;
    timed.max_elapsed_s = 0.0;
    int j = 0;
    const auto stopped = mean_using_ttest([&j] { return (j++ % 2) ? 2.0 : 1.0; }, timed);
    if (stopped.converged || stopped.reps_out != timed.min_reps + 1) {
        detail = "max_elapsed cap not honored";
        return false;
    }

    if (std::fabs(t_quantile(0.95, 14) - 1.7613) > 1e-4) {
        detail = "t quantile out of tolerance";
        return false;
    }
    return true;
}

bool dynamic_energy_criteria(std::string& detail) {
    PowerTrace constant;
    for (int s = 0; s <= 10; ++s) constant.samples.push_back({double(s), 300.0});
    const auto flat = dynamic_energy(constant, 0.0, 10.0, 100.0);
    if (std::fabs(flat.total_energy_j - 3000.0) > 1e-12 * 3000.0 ||
        std::fabs(flat.dynamic_energy_j - 2000.0) > 1e-12 * 2000.0) {
        detail = "constant trace totals off";
        return false;
    }

    PowerTrace ramp;
    for (int s = 0; s <= 10; ++s) ramp.samples.push_back({double(s), 10.0 * s});
    const auto ramped = dynamic_energy(ramp, 0.0, 10.0, 25.0);
    if (std::fabs(ramped.total_energy_j - 500.0) > 1e-12 * 500.0 ||
        std::fabs(ramped.dynamic_energy_j - 250.0) > 1e-12 * 250.0) {
        detail = "ramp trace totals off";
        return false;
    }

    try {
        dynamic_energy(constant, 0.0, 10.0, 400.0);
        detail = "static power above draw did not raise";
        return false;
    } catch (const AnomalousMeasurement&) {
    }
    return true;
}

bool end_to_end_determinism(std::string& detail) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("biobj_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    auto run_once = [&](const std::string& tag) {
        const std::string prefix = (dir / tag).string();
        std::ostringstream out, err;
        const int rc =
            cli_run({"sweep", "--kernel", "stub", "--stub-time-expr", "inv_gt", "--cores",
                     "4", "--energy", "synthetic:g_plus_t", "--min-reps", "3", "--max-reps",
                     "10", "--out", prefix, "--format", "json,plotdata"},
                    out, err);
        if (rc != 0) throw std::runtime_error("sweep failed: " + err.str());
        return prefix;
    };
    const auto a = run_once("run_a");
    const auto b = run_once("run_b");

    if (slurp(a + ".front.dat") != slurp(b + ".front.dat") ||
        slurp(a + ".samples.dat") != slurp(b + ".samples.dat")) {
        detail = "plotdata differs between runs";
        return false;
    }

    nlohmann::json j;
    {
        std::ifstream in(a + ".json");
        in >> j;
    }
    const auto report = j.get<SweepReport>();
    if (report.outcomes.size() != 8) {
        detail = "expected 8 measured configurations for l=4";
        return false;
    }
    const auto rebuilt = front_build(report.samples());
    if (rebuilt.size() != report.front.size()) {
        detail = "front size differs from brute-force recomputation";
        return false;
    }
    for (std::size_t i = 0; i < rebuilt.size(); ++i)
        if (rebuilt.entries()[i].objective() != report.front.entries()[i].objective()) {
            detail = "front differs from brute-force recomputation";
            return false;
        }
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_data_dir = argv[1];
    std::cout << "acceptance suite (data: " << g_data_dir << ")\n";

    criterion("measured table A front via pareto subcommand", 1.0, table2_front);
    criterion("measured table B front via pareto subcommand", 1.0, table3_front);
    criterion("front equals the all-pairs filter on 500 random sets", 5.0,
              front_oracle_equivalence);
    criterion("grouped GEMM matches the naive oracle", 10.0, gemm_matches_oracle);
    criterion("grouped FFT matches the direct sum, round trip and Parseval", 10.0,
              fft_matches_oracle);
    criterion("blocked transpose is bit-exact", 1.0, transpose_bit_exact);
    criterion("NNLS recovery, KKT and fixture trend", 5.0, nnls_criteria);
    criterion("t-test loop stopping rules and quantile", 1.0, ttest_criteria);
    criterion("dynamic energy identities and anomaly", 1.0, dynamic_energy_criteria);
    criterion("deterministic end-to-end sweep", 30.0, end_to_end_determinism);

    std::cout << (g_failures == 0 ? "all criteria passed\n"
                                  : std::to_string(g_failures) + " criteria failed\n");
    return g_failures == 0 ? 0 : 1;
}
