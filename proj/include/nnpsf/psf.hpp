#pragma once

#include <chrono>
#include <limits>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "nnpsf/crown.hpp"
#include "nnpsf/model.hpp"
#include "nnpsf/polytope.hpp"
#include "nnpsf/sls_filter.hpp"

namespace nnpsf {

struct FilterConfig {
    int horizon = 10;
    int iterations = 5;
    double initialRadius = 0.1;
    double growth = 2.0;
    double penaltyEps = 1e4;
    double penaltySigma = 1e3;
    double psiMin = 1e-6;
    double slackTolerance = 1e-7;
    /// Stop at the first certified iteration. When false every iteration is run.
    bool stopOnCertificate = true;
    QpSettings qp;

    void validate() const
    {
        if (horizon < 1 || iterations < 1 || !(growth > 1.0) || !(initialRadius > 0.0) || !(psiMin > 0.0)) {
            throw std::invalid_argument("FilterConfig: need horizon >= 1, iterations >= 1, growth > 1, "
                                        "initialRadius > 0, psiMin > 0");
        }
    }
};

struct IterationDiagnostics {
    int iteration = 0;
    double radius = 0.0;
    double maxSlack = std::numeric_limits<double>::infinity();
    double objective = 0.0;
    QpStatus status = QpStatus::NumericalFailure;
    double solveMs = 0.0;
    bool certified = false;
};

struct FilterResult {
    Vector u0;
    bool safeCert = false;
    double bestMaxSlack = std::numeric_limits<double>::infinity();
    int winningIteration = 0;
    std::vector<IterationDiagnostics> iterations;
    SlsSolution policy;                   ///< winning {Phi_x, Phi_u, Psi, h, v}
    UncertaintyModel model;               ///< model the winner was synthesized for
    std::vector<TrustRegion> trustRegions; ///< trust regions of the winner
};

/// Closed-loop nominal rollout under the realized SLS policy; returns (x_{0:T}, u_{0:T-1}).
inline std::pair<std::vector<Vector>, std::vector<Vector>> rolloutPolicy(const LearnedModel& model, const Vector& x0,
                                                                         FeedbackPolicy policy)
{
    policy.reset();
    std::vector<Vector> states{x0};
    std::vector<Vector> controls;
    for (int t = 0; t < policy.horizon(); ++t) {
        controls.push_back(policy.apply(t, states.back()));
        Vector next = model.step(states.back(), controls.back());
        if (!next.allFinite()) {
            throw NumericalError("rolloutPolicy: non-finite state at step " + std::to_string(t + 1));
        }
        states.push_back(std::move(next));
    }
    return {std::move(states), std::move(controls)};
}

/**
 * @brief One call of the predictive safety filter.
 *
 * Repeats: relax the network over trust regions around the current reference, solve the
 * robust program, certify on zero slack; otherwise move the reference to the closed-loop
 * rollout of the new policy and enlarge the radii. Keeps the smallest-slack incumbent.
 */
inline FilterResult filterStep(const LearnedModel& model, const Vector& xk, const Vector& uRef,
                               const std::vector<Vector>& initControls, const SoftPolytope& stateSet,
                               const SoftPolytope& inputSet, double sigmaW, const FilterConfig& config)
{
    config.validate();
    const int T = config.horizon;
    if (static_cast<int>(initControls.size()) < T) {
        throw DimensionError("filterStep: need at least " + std::to_string(T) + " initial controls");
    }
    std::vector<Vector> controls(initControls.begin(), initControls.begin() + T);
    std::vector<Vector> states = rolloutNominal(model, xk, controls);

    FilterResult result;
    double radius = config.initialRadius;
    bool haveWinner = false;

    for (int iter = 1; iter <= config.iterations; ++iter) {
        IterationDiagnostics diag;
        diag.iteration = iter;
        diag.radius = radius;
        const auto start = std::chrono::steady_clock::now();

        std::vector<TrustRegion> regions;
        regions.reserve(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            regions.push_back({stack(states[static_cast<std::size_t>(t)], controls[static_cast<std::size_t>(t)]), radius});
        }
        SlsProblem problem{extractUncertainty(model.plant, boundsAlongTrajectory(model.net, regions), sigmaW),
                           stateSet,
                           inputSet,
                           regions,
                           xk,
                           uRef,
                           config.penaltyEps,
                           config.penaltySigma,
                           config.psiMin};
        const SlsProgram program = assemble(problem);
        SlsSolution sol = solve(program, config.qp);
        diag.status = sol.status;
        diag.objective = sol.objective;
        diag.solveMs = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

        if (!sol.ok()) {
            result.iterations.push_back(diag);
            radius *= config.growth;
            continue;
        }
        const double slack = maxSlack(sol, config.slackTolerance);
        diag.maxSlack = slack;

        if (slack == 0.0) {
            diag.certified = true;
            result.iterations.push_back(diag);
            result.safeCert = true;
            result.bestMaxSlack = 0.0;
            result.winningIteration = iter;
            result.model = std::move(problem.model);
            result.trustRegions = std::move(regions);
            result.policy = std::move(sol);
            haveWinner = true;
            if (config.stopOnCertificate) {
                break;
            }
            continue;
        }

        auto [newStates, newControls] = rolloutPolicy(model, xk, FeedbackPolicy(sol, config.psiMin));
        states = std::move(newStates);
        controls = std::move(newControls);
        radius *= config.growth;
        if (slack <= result.bestMaxSlack) {
            result.bestMaxSlack = slack;
            result.safeCert = false;
            result.winningIteration = iter;
            result.model = std::move(problem.model);
            result.trustRegions = std::move(regions);
            result.policy = std::move(sol);
            haveWinner = true;
        }
        result.iterations.push_back(diag);
    }

    if (!haveWinner) {
        throw NumericalError("filterStep: the convex program failed in every iteration");
    }
    result.u0 = result.policy.v.front();
    return result;
}

/// Diagnostics rows: k, iteration, radius, max_slack, objective, solve_ms, status, certificate.
inline void writeDiagnosticsCsvHeader(std::ostream& out)
{
    out << "k,iteration,radius,max_slack,objective,solve_ms,status,cert\n";
}

inline void writeDiagnosticsCsv(std::ostream& out, int k, const FilterResult& result)
{
    for (const auto& d : result.iterations) {
        out << k << ',' << d.iteration << ',' << d.radius << ',' << d.maxSlack << ',' << d.objective << ','
            << d.solveMs << ',' << toString(d.status) << ',' << (d.certified ? 1 : 0) << '\n';
    }
}

} // namespace nnpsf
