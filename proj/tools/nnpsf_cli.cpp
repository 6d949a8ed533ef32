#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/spdlog.h>

#include "nnpsf/bench.hpp"
#include "nnpsf/checks.hpp"
#include "nnpsf/config.hpp"

namespace fs = std::filesystem;
using namespace nnpsf;

namespace {

struct Common {
    std::string weights = std::string(NNPSF_DATA_DIR) + "/pendulum_residual.json";
    std::string config;
};

BenchConfig loadBenchConfig(const Common& c) { return c.config.empty() ? BenchConfig{} : loadConfig(c.config); }

LearnedModel loadModel(const Common& c) { return {linearizedPlant(), loadNetwork(c.weights)}; }

std::ofstream openOut(const fs::path& path)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    return out;
}

int runBench(const Common& common, const std::string& outDir, const std::vector<std::uint64_t>& seeds,
             const std::vector<std::string>& schemes, bool diagnostics)
{
    const BenchConfig cfg = loadBenchConfig(common);
    const LearnedModel model = loadModel(common);
    BenchPlan plan;
    plan.seeds = seeds;
    if (!schemes.empty()) {
        plan.schemes.clear();
        for (const auto& s : schemes) {
            plan.schemes.push_back(parseScheme(s));
        }
    }
    fs::create_directories(outDir);
    openOut(fs::path(outDir) / "config.json") << toJson(cfg).dump(2) << '\n';
    auto runsCsv = openOut(fs::path(outDir) / "runs.csv");
    writeRunsHeader(runsCsv);
    std::ofstream diagCsv;
    if (diagnostics) {
        diagCsv = openOut(fs::path(outDir) / "diagnostics.csv");
        diagCsv << "scheme,sigma_w,case,seed,";
        writeDiagnosticsCsvHeader(diagCsv);
    }

    const auto start = std::chrono::steady_clock::now();
    const auto runs = runBenchmark(model, cfg, plan, [&](const TrajectoryLog& log, const RunSummary& r) {
        spdlog::info("{:>13} sigma={} case={} seed={}: violation {:.2f}%, certified {:.0f}%, filter {:.0f} ms/step",
                     toString(r.scheme), r.sigmaW, r.caseId, r.seed, r.violationPct, 100.0 * r.certRate,
                     r.meanFilterMs);
        writeRun(runsCsv, r);
        runsCsv.flush();
        if (diagnostics) {
            for (std::size_t k = 0; k < log.steps.size(); ++k) {
                for (const auto& d : log.steps[k].diagnostics) {
                    diagCsv << toString(log.scheme) << ',' << log.sigmaW << ',' << log.caseId << ',' << log.seed << ','
                            << k << ',' << d.iteration << ',' << d.radius << ',' << d.maxSlack << ',' << d.objective
                            << ',' << d.solveMs << ',' << toString(d.status) << ',' << (d.certified ? 1 : 0) << '\n';
                }
            }
        }
    });
    auto table = openOut(fs::path(outDir) / "table2.csv");
    writeViolationTable(table, violationTable(runs));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto verdict = checks::violationTableCheck(runs, seconds);
    spdlog::info("{} in {:.0f} s: {}", verdict.passed ? "PASS" : "FAIL", seconds, verdict.detail);
    std::cout << (fs::path(outDir) / "table2.csv").string() << '\n';
    return 0;
}

int runSimulate(const Common& common, int caseId, const std::string& scheme, double sigma, std::uint64_t seed,
                const std::string& out, const std::string& diagPath)
{
    const BenchConfig cfg = loadBenchConfig(common);
    const TrajectoryLog log = runCase(loadModel(common), testCase(caseId), parseScheme(scheme), sigma, seed, cfg);
    spdlog::info("case {} {} sigma={} seed={}: violation {:.3f}%", caseId, scheme, sigma, seed,
                 violationPct(log, cfg.stateSet));
    if (out.empty() || out == "-") {
        writeTrajectoryCsv(std::cout, log);
    } else {
        auto f = openOut(out);
        writeTrajectoryCsv(f, log);
    }
    if (!diagPath.empty()) {
        auto f = openOut(diagPath);
        writeDiagnosticsCsvHeader(f);
        for (std::size_t k = 0; k < log.steps.size(); ++k) {
            FilterResult view;
            view.iterations = log.steps[k].diagnostics;
            writeDiagnosticsCsv(f, static_cast<int>(k), view);
        }
    }
    return 0;
}

int runDumpQp(const Common& common, int caseId, double sigma, double radius, const std::string& out,
              const std::string& boundsPath)
{
    const BenchConfig cfg = loadBenchConfig(common);
    const LearnedModel model = loadModel(common);
    const TestCase& tc = testCase(caseId);
    IlqrSpec spec = cfg.ilqr;
    spec.rho = 0.0;
    PrimaryController primary(model, spec, caseReference(tc, cfg.pendulum, cfg.switchTime));
    const Vector x0 = tc.x0();
    const PrimaryOutput pout = primary(0, x0);
    const int T = cfg.filter.horizon;
    std::vector<Vector> controls(pout.plan.begin(), pout.plan.begin() + T);
    const auto states = rolloutNominal(model, x0, controls);
    std::vector<TrustRegion> regions;
    for (int t = 0; t < T; ++t) {
        regions.push_back({stack(states[static_cast<std::size_t>(t)], controls[static_cast<std::size_t>(t)]), radius});
    }
    const auto bounds = boundsAlongTrajectory(model.net, regions);
    if (!boundsPath.empty()) {
        auto f = openOut(boundsPath);
        writeBoundsCsv(f, bounds);
    }
    SlsProblem problem{extractUncertainty(model.plant, bounds, sigma), cfg.stateSet, cfg.inputSet, regions, x0,
                       pout.uRef, cfg.filter.penaltyEps, cfg.filter.penaltySigma, cfg.filter.psiMin};
    const SlsProgram program = assemble(problem);
    auto f = openOut(out);
    writeQpTriplets(f, program.qp);
    spdlog::info("wrote {} variables, {} equalities, {} inequalities to {}", program.qp.q.size(), program.qp.A.rows(),
                 program.qp.G.rows(), out);
    return 0;
}

int runExport(const std::string& out, double duration, std::uint64_t seed)
{
    DatasetOptions opt;
    opt.duration = duration;
    const auto data = generateDataset(PendulumParams{}, seed, opt);
    writeDataset(out, data);
    spdlog::info("wrote {} rows to {}", data.size(), out);
    return 0;
}

int runCheck(const Common& common, bool quick, bool withBench)
{
    const BenchConfig cfg = loadBenchConfig(common);
    const LearnedModel model = loadModel(common);
    std::vector<checks::CheckResult> results;
    std::vector<UncertaintyModel> models;
    results.push_back(checks::crownSoundness(1, quick ? 5 : 20, quick ? 5 : 20, quick ? 1000 : 10000, &models));
    const int instances = quick ? 20 : 200;
    const auto st = checks::certifiedInstances(model, cfg, 2, instances, quick ? 100 : 1000, 20 * instances);
    results.push_back(checks::envelopeSymmetry(models, st.attempts, st.symmetric));
    results.push_back(checks::slsResidualCheck(st.maxResidual, st.attempts));
    results.push_back(checks::containmentCheck(st, instances));
    results.push_back(checks::certificateCheck(st, instances));
    if (withBench) {
        const auto start = std::chrono::steady_clock::now();
        const auto runs = runBenchmark(model, cfg, BenchPlan{});
        results.push_back(checks::violationTableCheck(
            runs, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()));
    }
    results.push_back(checks::scalarQpOracle());
    results.push_back(checks::ilqrVsRiccati());
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.detail << ")\n";
        ok = ok && r.passed;
    }
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    if (const char* level = std::getenv("NNPSF_LOG")) {
        spdlog::cfg::helpers::load_levels(level);
    }
    spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

    CLI::App app{"Convex predictive safety filter for neural-network dynamics: pendulum benchmark"};
    app.require_subcommand(1);
    Common common;
    app.add_option("-w,--weights", common.weights, "Residual network weight file (JSON)");
    app.add_option("-c,--config", common.config, "Benchmark configuration (JSON); defaults are built in");

    auto* bench = app.add_subcommand("bench", "Run the full benchmark and write table2.csv");
    std::string benchOut = "bench_out";
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::vector<std::string> schemes;
    bool diagnostics = false;
    bench->add_option("-o,--out", benchOut, "Output directory");
    bench->add_option("--seeds", seeds, "Noise seeds");
    bench->add_option("--schemes", schemes, "Subset of schemes (ilqr, sc-ilqr, safe-ilqr, safe-sc-ilqr)");
    bench->add_flag("--diagnostics", diagnostics, "Also write per-iteration filter diagnostics");

    auto* sim = app.add_subcommand("simulate", "Simulate one test case and write the trajectory CSV");
    int caseId = 1;
    std::string scheme = "safe-ilqr";
    double sigma = 0.05;
    std::uint64_t seed = 0;
    std::string simOut = "-";
    std::string simDiag;
    sim->add_option("--case", caseId, "Test case 1-4")->check(CLI::Range(1, 4));
    sim->add_option("--scheme", scheme, "ilqr | sc-ilqr | safe-ilqr | safe-sc-ilqr");
    sim->add_option("--sigma", sigma, "Disturbance bound sigma_w")->check(CLI::NonNegativeNumber);
    sim->add_option("--seed", seed, "Noise seed");
    sim->add_option("-o,--out", simOut, "Trajectory CSV path ('-' for stdout)");
    sim->add_option("--diagnostics", simDiag, "Per-iteration filter diagnostics CSV path");

    auto* exp = app.add_subcommand("export-dataset", "Write residual training data from the true pendulum");
    std::string expOut = "pendulum_dataset.csv";
    double duration = 15.0;
    std::uint64_t expSeed = 0;
    exp->add_option("-o,--out", expOut, "Dataset CSV path");
    exp->add_option("--duration", duration, "Simulated seconds")->check(CLI::PositiveNumber);
    exp->add_option("--seed", expSeed, "Excitation seed");

    auto* chk = app.add_subcommand("check", "Run the property suites and print PASS/FAIL per property");
    bool quick = false;
    bool withBench = false;
    chk->add_flag("--quick", quick, "Smaller sample counts");
    chk->add_flag("--bench", withBench, "Include the full benchmark property");

    auto* dump = app.add_subcommand("dump-qp", "Export the first filter program of a test case as sparse triplets");
    int dumpCase = 1;
    double dumpSigma = 0.05;
    double dumpRadius = 0.1;
    std::string dumpOut = "filter_qp.txt";
    std::string boundsOut;
    dump->add_option("--case", dumpCase, "Test case 1-4")->check(CLI::Range(1, 4));
    dump->add_option("--sigma", dumpSigma, "Disturbance bound sigma_w")->check(CLI::NonNegativeNumber);
    dump->add_option("--radius", dumpRadius, "Trust-region radius")->check(CLI::PositiveNumber);
    dump->add_option("-o,--out", dumpOut, "Program output path");
    dump->add_option("--bounds", boundsOut, "Also write the per-step network bounds CSV");

    CLI11_PARSE(app, argc, argv);
    try {
        if (bench->parsed()) return runBench(common, benchOut, seeds, schemes, diagnostics);
        if (sim->parsed()) return runSimulate(common, caseId, scheme, sigma, seed, simOut, simDiag);
        if (exp->parsed()) return runExport(expOut, duration, expSeed);
        if (chk->parsed()) return runCheck(common, quick, withBench);
        if (dump->parsed()) return runDumpQp(common, dumpCase, dumpSigma, dumpRadius, dumpOut, boundsOut);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    return 0;
}
