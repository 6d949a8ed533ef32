#pragma once

#include <functional>
#include <map>
#include <ostream>
#include <vector>

#include "nnpsf/pendulum.hpp"

namespace nnpsf {

struct RunSummary {
    Scheme scheme = Scheme::Ilqr;
    double sigmaW = 0.0;
    int caseId = 0;
    std::uint64_t seed = 0;
    double violationPct = 0.0;
    double certRate = 0.0;       ///< fraction of filtered steps with a certificate
    double meanFilterMs = 0.0;
    double maxFilterMs = 0.0;
    double meanPrimaryMs = 0.0;
    double maxSlsResidual = 0.0;
    bool symmetricEnvelopes = true;
};

inline RunSummary summarize(const TrajectoryLog& log, const SoftPolytope& X)
{
    RunSummary s;
    s.scheme = log.scheme;
    s.sigmaW = log.sigmaW;
    s.caseId = log.caseId;
    s.seed = log.seed;
    s.violationPct = violationPct(log, X);
    int certified = 0;
    for (const auto& step : log.steps) {
        certified += step.cert ? 1 : 0;
        s.meanFilterMs += step.filterMs;
        s.maxFilterMs = std::max(s.maxFilterMs, step.filterMs);
        s.meanPrimaryMs += step.primaryMs;
        s.maxSlsResidual = std::max(s.maxSlsResidual, step.slsResidual);
        s.symmetricEnvelopes = s.symmetricEnvelopes && step.symmetricEnvelope;
    }
    const double n = std::max<double>(1.0, static_cast<double>(log.steps.size()));
    s.certRate = isSafe(log.scheme) ? certified / n : 0.0;
    s.meanFilterMs /= n;
    s.meanPrimaryMs /= n;
    return s;
}

struct BenchPlan {
    std::vector<Scheme> schemes{kAllSchemes.begin(), kAllSchemes.end()};
    std::vector<double> sigmas{0.05, 0.1};
    std::vector<int> cases{1, 2, 3, 4};
    std::vector<std::uint64_t> seeds{0, 1, 2};
};

/// Runs every (scheme, sigma, case, seed) combination in a fixed order; `onRun` sees each log as it finishes.
inline std::vector<RunSummary> runBenchmark(const LearnedModel& model, const BenchConfig& config, const BenchPlan& plan,
                                            const std::function<void(const TrajectoryLog&, const RunSummary&)>& onRun = {})
{
    std::vector<RunSummary> out;
    for (Scheme scheme : plan.schemes) {
        for (double sigma : plan.sigmas) {
            for (int id : plan.cases) {
                for (std::uint64_t seed : plan.seeds) {
                    const TrajectoryLog log = runCase(model, testCase(id), scheme, sigma, seed, config);
                    out.push_back(summarize(log, config.stateSet));
                    if (onRun) {
                        onRun(log, out.back());
                    }
                }
            }
        }
    }
    return out;
}

struct TableEntry {
    Scheme scheme;
    double sigmaW;
    int caseId;
    double violationPct; ///< mean over seeds
};

/// Seed-averaged violation percentages, ordered by (scheme, sigma, case).
inline std::vector<TableEntry> violationTable(const std::vector<RunSummary>& runs)
{
    std::map<std::tuple<int, double, int>, std::pair<double, int>> acc;
    for (const auto& r : runs) {
        auto& a = acc[{static_cast<int>(r.scheme), r.sigmaW, r.caseId}];
        a.first += r.violationPct;
        a.second += 1;
    }
    std::vector<TableEntry> out;
    for (const auto& [key, a] : acc) {
        out.push_back({static_cast<Scheme>(std::get<0>(key)), std::get<1>(key), std::get<2>(key), a.first / a.second});
    }
    return out;
}

inline void writeViolationTable(std::ostream& out, const std::vector<TableEntry>& table)
{
    out << "scheme,sigma_w,case,violation_pct\n";
    for (const auto& e : table) {
        out << toString(e.scheme) << ',' << e.sigmaW << ',' << e.caseId << ',' << e.violationPct << '\n';
    }
}

inline void writeRunsHeader(std::ostream& out)
{
    out << "scheme,sigma_w,case,seed,violation_pct,cert_rate,mean_filter_ms,max_filter_ms,mean_primary_ms,"
           "max_sls_residual\n";
}

inline void writeRun(std::ostream& out, const RunSummary& r)
{
    out << toString(r.scheme) << ',' << r.sigmaW << ',' << r.caseId << ',' << r.seed << ',' << r.violationPct << ','
        << r.certRate << ',' << r.meanFilterMs << ',' << r.maxFilterMs << ',' << r.meanPrimaryMs << ','
        << r.maxSlsResidual << '\n';
}

/// Outcome of the qualitative violation-table comparison.
struct ViolationVerdict {
    bool safeSchemesClean = true;         ///< every safe-filtered run at exactly 0 %
    bool ilqrViolatesOften = true;        ///< unfiltered iLQR > 0 % on >= 3 of 4 cases for every sigma
    bool softNoWorseThanPlain = true;     ///< mean SC-iLQR violation <= mean iLQR violation
    double ilqrMean = 0.0;
    double scIlqrMean = 0.0;
    std::map<double, int> ilqrViolatingCases;

    [[nodiscard]] bool passed() const { return safeSchemesClean && ilqrViolatesOften && softNoWorseThanPlain; }
};

inline ViolationVerdict judgeViolationTable(const std::vector<RunSummary>& runs)
{
    ViolationVerdict v;
    int nIlqr = 0, nSc = 0;
    for (const auto& r : runs) {
        if (isSafe(r.scheme) && r.violationPct != 0.0) {
            v.safeSchemesClean = false;
        }
        if (r.scheme == Scheme::Ilqr) {
            v.ilqrMean += r.violationPct;
            ++nIlqr;
        } else if (r.scheme == Scheme::ScIlqr) {
            v.scIlqrMean += r.violationPct;
            ++nSc;
        }
    }
    v.ilqrMean /= std::max(nIlqr, 1);
    v.scIlqrMean /= std::max(nSc, 1);
    for (const auto& e : violationTable(runs)) {
        if (e.scheme == Scheme::Ilqr) {
            v.ilqrViolatingCases[e.sigmaW] += e.violationPct > 0.0 ? 1 : 0;
        }
    }
    for (const auto& [sigma, count] : v.ilqrViolatingCases) {
        v.ilqrViolatesOften = v.ilqrViolatesOften && count >= 3;
    }
    v.ilqrViolatesOften = v.ilqrViolatesOften && !v.ilqrViolatingCases.empty();
    v.softNoWorseThanPlain = v.scIlqrMean <= v.ilqrMean;
    return v;
}

} // namespace nnpsf
