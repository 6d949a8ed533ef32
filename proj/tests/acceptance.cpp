#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <string_view>

#include "nnpsf/bench.hpp"
#include "nnpsf/checks.hpp"

using namespace nnpsf;

namespace {

std::ofstream reportFile;

void emit(const std::string& line)
{
    std::cout << line << std::endl;
    if (reportFile) {
        reportFile << line << std::endl;
    }
}

void report(const checks::CheckResult& r, bool& ok)
{
    std::ostringstream os;
    os << (r.passed ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.detail;
    if (r.seconds > 0.0) {
        os << ", " << r.seconds << " s";
    }
    os << ")";
    emit(os.str());
    ok = ok && r.passed;
}

} // namespace

// Usage: acceptance [--quick] [output-dir]; the directory receives table2.csv and acceptance_report.txt
int main(int argc, char** argv)
{
    bool quick = false;
    std::string outDir;
    for (int i = 1; i < argc; ++i) {
        if (std::string_view(argv[i]) == "--quick") {
            quick = true;
        } else {
            outDir = argv[i];
        }
    }
    if (!outDir.empty()) {
        reportFile.open(outDir + "/acceptance_report.txt");
    }

    try {
        const BenchConfig cfg;
        const LearnedModel model{linearizedPlant(), loadNetwork(std::string(NNPSF_DATA_DIR) + "/pendulum_residual.json")};
        bool ok = true;

        std::vector<UncertaintyModel> models;
        auto crown = checks::crownSoundness(1, quick ? 5 : 20, quick ? 5 : 20, quick ? 1000 : 10000, &models);
        crown.passed = crown.passed && crown.seconds < 120.0;
        report(crown, ok);

        const int instances = quick ? 20 : 200;
        const auto st = checks::certifiedInstances(model, cfg, 2, instances, quick ? 100 : 1000, 20 * instances);
        report(checks::envelopeSymmetry(models, st.attempts, st.symmetric), ok);
        report(checks::slsResidualCheck(st.maxResidual, st.attempts), ok);
        report(checks::containmentCheck(st, instances), ok);
        report(checks::certificateCheck(st, instances), ok);

        if (!quick) {
            const auto start = std::chrono::steady_clock::now();
            const auto runs = runBenchmark(model, cfg, BenchPlan{});
            const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            if (!outDir.empty()) {
                std::ofstream out(outDir + "/table2.csv");
                writeViolationTable(out, violationTable(runs));
            }
            auto table = checks::violationTableCheck(runs, seconds);
            table.passed = table.passed && seconds < 1800.0;
            report(table, ok);
        }

        report(checks::scalarQpOracle(), ok);
        report(checks::ilqrVsRiccati(), ok);
        return ok ? 0 : 1;
    } catch (const std::exception& e) {
        emit(std::string("FAIL  acceptance harness  (") + e.what() + ")");
        return 1;
    }
}
