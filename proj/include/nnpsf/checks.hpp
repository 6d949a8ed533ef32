#pragma once

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nnpsf/bench.hpp"
#include "nnpsf/crown.hpp"
#include "nnpsf/ilqr.hpp"
#include "nnpsf/pendulum.hpp"
#include "nnpsf/psf.hpp"

namespace nnpsf::checks {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

namespace detail {

class Stopwatch {
public:
    [[nodiscard]] double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline MlpNetwork randomNetwork(std::mt19937_64& rng, int in, int out, int depth, int width)
{
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<DenseLayer> layers;
    int prev = in;
    for (int l = 0; l <= depth; ++l) {
        const int rows = l == depth ? out : width;
        DenseLayer layer{Matrix(rows, prev), Vector(rows)};
        const double s = std::sqrt(2.0 / prev);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < prev; ++c) {
                layer.weight(r, c) = s * gauss(rng);
            }
            layer.bias[r] = 0.1 * gauss(rng);
        }
        layers.push_back(std::move(layer));
        prev = rows;
    }
    return MlpNetwork(std::move(layers));
}

template <typename... Args>
std::string format(Args&&... args)
{
    std::ostringstream os;
    os.precision(4);
    (os << ... << args);
    return os.str();
}

/// Finite-horizon LQR gains for x+ = A x + B u by the backward Riccati recursion.
inline std::vector<Matrix> riccatiGains(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                                        const Matrix& Qf, int T)
{
    std::vector<Matrix> K(static_cast<std::size_t>(T));
    Matrix P = Qf;
    for (int t = T - 1; t >= 0; --t) {
        const Matrix S = R + B.transpose() * P * B;
        K[static_cast<std::size_t>(t)] = S.ldlt().solve(B.transpose() * P * A);
        P = Q + A.transpose() * P * (A - B * K[static_cast<std::size_t>(t)]);
    }
    return K;
}

} // namespace detail

/**
 * @brief Sampling check of the linear relaxation on random ReLU networks (3 inputs, 2 outputs).
 *
 * Architectures cycle through 1-3 hidden layers of width 16-64; the last nets are 3 x 64.
 * Every region also gets its vertices sampled. Extracted models are appended to `models`.
 */
inline CheckResult crownSoundness(std::uint64_t seed, int nets, int regions, int samples,
                                  std::vector<UncertaintyModel>* models = nullptr)
{
    detail::Stopwatch sw;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> logRadius(-2.0, 0.0);
    const LinearPlant plant{Matrix::Identity(2, 2), Matrix::Ones(2, 1)};
    const int widths[3] = {16, 32, 64};
    long long violations = 0;
    long long evaluated = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (int n = 0; n < nets; ++n) {
        const int depth = n >= nets - 2 ? 3 : 1 + n % 3;
        const int width = n >= nets - 2 ? 64 : widths[(n / 3) % 3];
        const MlpNetwork net = detail::randomNetwork(rng, 3, 2, depth, width);
        for (int r = 0; r < regions; ++r) {
            TrustRegion region{Vector(3), std::pow(10.0, logRadius(rng))};
            for (int i = 0; i < 3; ++i) {
                region.center[i] = 2.0 * unit(rng);
            }
            const LinearBounds b = relax(net, region);
            if (models) {
                models->push_back(extractUncertainty(plant, {b}, 0.0));
            }
            Matrix Z(3, samples + 8);
            for (int v = 0; v < 8; ++v) {
                for (int i = 0; i < 3; ++i) {
                    Z(i, v) = region.center[i] + ((v >> i) & 1 ? region.radius : -region.radius);
                }
            }
            for (int s = 8; s < samples + 8; ++s) {
                for (int i = 0; i < 3; ++i) {
                    Z(i, s) = region.center[i] + region.radius * unit(rng);
                }
            }
            const Matrix F = net.forwardBatch(Z);
            Matrix lo = b.lowerA * Z;
            lo.colwise() += b.lowerB;
            Matrix hi = b.upperA * Z;
            hi.colwise() += b.upperB;
            const Matrix excess = (lo - F).cwiseMax(F - hi);
            worst = std::max(worst, excess.maxCoeff());
            violations += (excess.array() > 1e-9).count();
            evaluated += Z.cols();
        }
    }
    CheckResult res{"CROWN soundness", violations == 0, {}, sw.seconds()};
    res.detail = detail::format(nets, " nets x ", regions, " regions x ", evaluated / (nets * regions),
                                " points, violations = ", violations, ", worst excess = ", worst);
    return res;
}

inline CheckResult envelopeSymmetry(const std::vector<UncertaintyModel>& models, long long filteredSteps = 0,
                                    bool filteredSymmetric = true)
{
    long long bad = 0;
    for (const auto& m : models) {
        bad += envelopeIsSymmetric(m) ? 0 : 1;
    }
    CheckResult res{"Envelope symmetry", bad == 0 && filteredSymmetric, {}, 0.0};
    res.detail = detail::format(models.size(), " extracted models, ", bad, " asymmetric; ", filteredSteps,
                                " filter models ", filteredSymmetric ? "symmetric" : "NOT symmetric");
    return res;
}

/// Statistics of closed-loop rollouts under certified filter policies.
struct InstanceStats {
    int instances = 0;            ///< certified instances used
    int attempts = 0;             ///< filter calls made to find them
    long long rollouts = 0;
    double maxWTilde = 0.0;       ///< largest |reconstructed virtual disturbance|
    long long containmentFailures = 0;
    long long constraintFailures = 0;
    long long regionExits = 0;    ///< stacked state-input outside its trust region
    double maxResidual = 0.0;     ///< largest affine-constraint residual over all solutions
    bool symmetric = true;
    double seconds = 0.0;
};

/**
 * @brief Random certified filter instances on the learned pendulum model, stress-tested by rollouts.
 *
 * Each instance draws x0 inside 0.7 X, a sigma_w in {0.05, 0.1}, and a primary plan from a
 * stabilizing linear gain with a random perturbation on the first input. The filter is run;
 * certified results are rolled out `rollouts` times on x+ = A x + B u + f(x, u) + w with w
 * uniform, checking the reconstructed virtual disturbances, constraints and trust regions.
 */
inline InstanceStats certifiedInstances(const LearnedModel& model, const BenchConfig& config, std::uint64_t seed,
                                        int instances, int rollouts, int maxAttempts,
                                        const std::vector<double>& sigmas = {0.001, 0.005, 0.01})
{
    detail::Stopwatch sw;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::normal_distribution<double> kick(0.0, 4.0);
    const int T = config.filter.horizon;
    const auto gains = detail::riccatiGains(model.plant.A, model.plant.B, config.ilqr.Q, config.ilqr.R,
                                            config.ilqr.Q, T);
    const SoftPolytope& X = config.stateSet;
    const SoftPolytope& U = config.inputSet;
    const Vector shrunk = 0.7 * X.b;
    const double uMax = U.b[0];

    InstanceStats st;
    while (st.instances < instances && st.attempts < maxAttempts) {
        ++st.attempts;
        const double sigmaW = sigmas[static_cast<std::size_t>(st.attempts) % sigmas.size()];
        Vector x0(2);
        do {
            x0 << 3.5 * unit(rng), 3.5 * unit(rng);
        } while (((X.F * x0 - shrunk).array() > 0.0).any());
        std::vector<Vector> plan;
        Vector x = x0;
        for (int t = 0; t < T; ++t) {
            Vector u = (-gains[static_cast<std::size_t>(t)] * x).cwiseMax(-uMax).cwiseMin(uMax);
            plan.push_back(u);
            x = model.step(x, u);
        }
        plan[0][0] = std::clamp(plan[0][0] + kick(rng), -uMax, uMax);
        FilterResult fr;
        try {
            fr = filterStep(model, x0, plan[0], plan, X, U, sigmaW, config.filter);
        } catch (const Error&) {
            continue;
        }
        st.maxResidual = std::max(st.maxResidual, affineResidual(fr.model, fr.policy));
        st.symmetric = st.symmetric && envelopeIsSymmetric(fr.model);
        if (!fr.safeCert) {
            continue;
        }
        ++st.instances;

        FeedbackPolicy policy(fr.policy, config.filter.psiMin);
        for (int r = 0; r < rollouts; ++r) {
            policy.reset();
            Vector xt = x0;
            bool bad = !X.contains(xt, 1e-9);
            for (int t = 0; t < T; ++t) {
                const Vector u = policy.apply(t, xt);
                bad = bad || !U.contains(u, 1e-9);
                if (!fr.trustRegions[static_cast<std::size_t>(t)].contains(stack(xt, u), 1e-9)) {
                    ++st.regionExits;
                }
                xt = model.step(xt, u) + sampleDisturbance(sigmaW, rng);
                bad = bad || !X.contains(xt, 1e-9);
            }
            policy.observeTerminal(xt);
            for (const auto& w : policy.reconstructed()) {
                const double m = w.cwiseAbs().maxCoeff();
                st.maxWTilde = std::max(st.maxWTilde, m);
                st.containmentFailures += m > 1.0 + 1e-6 ? 1 : 0;
            }
            st.constraintFailures += bad ? 1 : 0;
            ++st.rollouts;
        }
    }
    st.seconds = sw.seconds();
    return st;
}

inline CheckResult slsResidualCheck(double maxResidual, long long solutions)
{
    return {"SLS parameterization", maxResidual <= 1e-6,
            detail::format(solutions, " solutions, max residual = ", maxResidual), 0.0};
}

inline CheckResult containmentCheck(const InstanceStats& st, int wanted)
{
    const bool ok = st.instances == wanted && st.containmentFailures == 0 && st.regionExits == 0;
    return {"Virtual-disturbance containment", ok,
            detail::format(st.instances, " instances (", st.attempts, " filter calls), ", st.rollouts,
                           " rollouts, max |w~| = ", st.maxWTilde, ", failures = ", st.containmentFailures,
                           ", trust-region exits = ", st.regionExits),
            st.seconds};
}

inline CheckResult certificateCheck(const InstanceStats& st, int wanted)
{
    return {"Certificate soundness", st.instances == wanted && st.constraintFailures == 0,
            detail::format(st.rollouts, " rollouts under ", st.instances,
                           " certified policies, constraint violations = ", st.constraintFailures),
            0.0};
}

inline CheckResult violationTableCheck(const std::vector<RunSummary>& runs, double seconds)
{
    const ViolationVerdict v = judgeViolationTable(runs);
    std::ostringstream os;
    os.precision(4);
    os << runs.size() << " runs; safe schemes all 0%: " << (v.safeSchemesClean ? "yes" : "NO")
       << "; iLQR violating cases per sigma:";
    for (const auto& [sigma, count] : v.ilqrViolatingCases) {
        os << ' ' << sigma << "->" << count << "/4";
    }
    os << "; mean iLQR " << v.ilqrMean << "% vs SC-iLQR " << v.scIlqrMean << '%';
    return {"Violation table property", v.passed(), os.str(), seconds};
}

/// Hand-derivable scalar programs: x+ = x + u, X = U = [-1, 1], T = 3.
inline CheckResult scalarQpOracle()
{
    detail::Stopwatch sw;
    auto problem = [](double uRef) {
        SlsProblem p;
        const int T = 3;
        for (int t = 0; t < T; ++t) {
            UncertaintyModel::Step s{Matrix::Ones(1, 1), Matrix::Ones(1, 1), Vector::Zero(1), Matrix::Zero(1, 2),
                                     Vector::Zero(1), Matrix::Zero(1, 2), Vector::Zero(1)};
            p.model.steps.push_back(s);
            p.trustRegions.push_back({Vector::Zero(2), 10.0});
        }
        p.stateSet = SoftPolytope::box(-Vector::Ones(1), Vector::Ones(1));
        p.inputSet = p.stateSet;
        p.x0 = Vector::Zero(1);
        p.uRef = Vector::Constant(1, uRef);
        p.psiMin = 1e-9;
        return p;
    };
    const SlsSolution a = solve(assemble(problem(0.5)));
    const SlsSolution b = solve(assemble(problem(5.0)));
    const double errA = std::max(std::abs(a.v[0][0] - 0.5), std::abs(a.objective));
    const double errB = std::max(std::abs(b.v[0][0] - 1.0), std::abs(b.objective - 16.0));
    return {"Scalar QP oracle", a.ok() && b.ok() && errA <= 1e-6 && errB <= 1e-6,
            detail::format("u_ref 0.5 -> v0 ", a.v[0][0], " obj ", a.objective, "; u_ref 5 -> v0 ", b.v[0][0],
                           " obj ", b.objective),
            sw.seconds()};
}

/// iLQR on the zero network must reproduce finite-horizon LQR on the linear pendulum plant.
inline CheckResult ilqrVsRiccati()
{
    detail::Stopwatch sw;
    const LearnedModel model(linearizedPlant(), MlpNetwork::zero(3, 2));
    IlqrSpec spec = BenchConfig::defaultIlqr();
    spec.rho = 0.0;
    spec.uMin = Vector::Constant(1, -1e9);
    spec.uMax = Vector::Constant(1, 1e9);
    spec.tolerance = 1e-12;
    spec.reference.assign(static_cast<std::size_t>(spec.horizon + 1), Vector::Zero(2));
    double worst = 0.0;
    bool converged = true;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Vector x0 = (Vector(2) << unit(rng), 2.0 * unit(rng)).finished();
        const IlqrResult res = ilqrPlan(model, spec, x0);
        converged = converged && res.converged;
        const auto K = detail::riccatiGains(model.plant.A, model.plant.B, spec.Q, spec.R, spec.Q, spec.horizon);
        Vector x = x0;
        for (int t = 0; t < spec.horizon; ++t) {
            const Vector u = -K[static_cast<std::size_t>(t)] * x;
            worst = std::max(worst, (u - res.controls[static_cast<std::size_t>(t)]).cwiseAbs().maxCoeff());
            x = model.plant.A * x + model.plant.B * u;
        }
    }
    return {"iLQR vs Riccati", converged && worst <= 1e-6,
            detail::format("10 initial states, max control deviation = ", worst), sw.seconds()};
}

} // namespace nnpsf::checks
