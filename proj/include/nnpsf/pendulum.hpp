#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "nnpsf/ilqr.hpp"
#include "nnpsf/psf.hpp"

namespace nnpsf {

struct PendulumParams {
    double m = 0.75;
    double l = 2.0;
    double g = 9.81;
    double dt = 0.05;
    double sigmaW = 0.0;

    void validate() const
    {
        if (!(m > 0.0) || !(l > 0.0) || !(g > 0.0) || !(dt > 0.0) || sigmaW < 0.0) {
            throw std::invalid_argument("PendulumParams: m, l, g, dt must be positive and sigma_w non-negative");
        }
    }
};

inline double degToRad(double deg) { return deg * std::numbers::pi / 180.0; }

/// theta_ddot = 3g/(2l) sin(theta) + 3/(m l^2) tau, state (theta, theta_dot), theta = 0 upright.
inline Vector pendulumDerivative(const Vector& x, double tau, const PendulumParams& p)
{
    Vector dx(2);
    dx << x[1], 3.0 * p.g / (2.0 * p.l) * std::sin(x[0]) + 3.0 / (p.m * p.l * p.l) * tau;
    return dx;
}

/// One RK4 step with zero-order-hold torque, no disturbance.
inline Vector stepNominal(const Vector& x, const Vector& u, const PendulumParams& p)
{
    const double tau = u[0];
    const double h = p.dt;
    const Vector k1 = pendulumDerivative(x, tau, p);
    const Vector k2 = pendulumDerivative(x + 0.5 * h * k1, tau, p);
    const Vector k3 = pendulumDerivative(x + 0.5 * h * k2, tau, p);
    const Vector k4 = pendulumDerivative(x + h * k3, tau, p);
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Uniform additive disturbance in [-sigma_w, sigma_w]^2.
inline Vector sampleDisturbance(double sigmaW, std::mt19937_64& rng)
{
    Vector w = Vector::Zero(2);
    if (sigmaW > 0.0) {
        std::uniform_real_distribution<double> dist(-sigmaW, sigmaW);
        w[0] = dist(rng);
        w[1] = dist(rng);
    }
    return w;
}

inline Vector stepTrue(const Vector& x, const Vector& u, const PendulumParams& p, std::mt19937_64& rng)
{
    return stepNominal(x, u, p) + sampleDisturbance(p.sigmaW, rng);
}

/// Discrete linear part of the learned model around the upright equilibrium.
inline LinearPlant linearizedPlant()
{
    Matrix A(2, 2), B(2, 1);
    A << 1.0092, 0.05015, 0.369, 1.0092;
    B << 0.00125, 0.05015;
    return {A, B};
}

/// Continuous-time Jacobians of the pendulum at the upright equilibrium.
inline std::pair<Matrix, Matrix> continuousLinearization(const PendulumParams& p)
{
    Matrix Ac(2, 2), Bc(2, 1);
    Ac << 0.0, 1.0, 3.0 * p.g / (2.0 * p.l), 0.0;
    Bc << 0.0, 3.0 / (p.m * p.l * p.l);
    return {Ac, Bc};
}

struct TestCase {
    int id = 0;
    double theta0Deg = 0.0;
    double thetaDot0Deg = 0.0;
    double thetaR1Deg = 0.0;
    double thetaR2Deg = 0.0;
    double duration = 2.0;

    [[nodiscard]] Vector x0() const
    {
        Vector x(2);
        x << degToRad(theta0Deg), degToRad(thetaDot0Deg);
        return x;
    }
};

inline const std::array<TestCase, 4>& testCases()
{
    static const std::array<TestCase, 4> cases{{
        {1, 57.3, -120.3, 120.0, -50.0, 2.0},
        {2, -85.9, -85.9, -150.0, 40.0, 2.0},
        {3, -85.9, -114.6, -100.0, -180.0, 2.0},
        {4, 85.9, 57.3, 100.0, 180.0, 2.0},
    }};
    return cases;
}

inline const TestCase& testCase(int id)
{
    if (id < 1 || id > 4) {
        throw std::out_of_range("testCase: id must be in 1..4");
    }
    return testCases()[static_cast<std::size_t>(id - 1)];
}

enum class Scheme { Ilqr, ScIlqr, SafeIlqr, SafeScIlqr };

inline constexpr std::array<Scheme, 4> kAllSchemes{Scheme::Ilqr, Scheme::ScIlqr, Scheme::SafeIlqr, Scheme::SafeScIlqr};

inline std::string_view toString(Scheme s)
{
    switch (s) {
    case Scheme::Ilqr: return "ilqr";
    case Scheme::ScIlqr: return "sc-ilqr";
    case Scheme::SafeIlqr: return "safe-ilqr";
    case Scheme::SafeScIlqr: return "safe-sc-ilqr";
    }
    return "?";
}

inline Scheme parseScheme(std::string_view name)
{
    for (Scheme s : kAllSchemes) {
        if (toString(s) == name) {
            return s;
        }
    }
    throw std::invalid_argument("unknown scheme '" + std::string(name) + "'");
}

inline bool isSafe(Scheme s) { return s == Scheme::SafeIlqr || s == Scheme::SafeScIlqr; }
inline bool isSoftConstrained(Scheme s) { return s == Scheme::ScIlqr || s == Scheme::SafeScIlqr; }

/// Default state set {|theta_dot| <= 2.5, |theta + 0.5 theta_dot| <= 3.45}.
inline SoftPolytope defaultStateSet()
{
    Matrix F(4, 2);
    F << 0.0, 1.0, 0.0, -1.0, 1.0, 0.5, -1.0, -0.5;
    return {F, (Vector(4) << 2.5, 2.5, 3.45, 3.45).finished()};
}

/// Everything a benchmark run depends on besides the network, case, scheme, sigma and seed.
struct BenchConfig {
    PendulumParams pendulum;
    SoftPolytope stateSet = defaultStateSet();
    SoftPolytope inputSet = SoftPolytope::symmetricBox((Vector(1) << 15.0).finished());
    FilterConfig filter;
    IlqrSpec ilqr = defaultIlqr();
    double switchTime = 1.0;

    static IlqrSpec defaultIlqr()
    {
        IlqrSpec s;
        s.horizon = 20;
        s.Q = Vector::Map(std::array<double, 2>{10.0, 1.0}.data(), 2).asDiagonal();
        s.R = Matrix::Constant(1, 1, 0.1);
        s.uMin = Vector::Constant(1, -15.0);
        s.uMax = Vector::Constant(1, 15.0);
        s.rho = 100.0;
        s.tolerance = 1e-6;
        s.maxIterations = 50;
        return s;
    }

    void validate() const
    {
        pendulum.validate();
        filter.validate();
        if (stateSet.dim() != 2 || inputSet.dim() != 1) {
            throw DimensionError("BenchConfig: state set must be 2-D and input set 1-D");
        }
        if (ilqr.horizon < filter.horizon) {
            throw std::invalid_argument("BenchConfig: iLQR horizon must cover the filter horizon");
        }
        if (switchTime < 0.0) {
            throw std::invalid_argument("BenchConfig: switch time must be non-negative");
        }
    }
};

struct StepRecord {
    Vector state;
    Vector uRef;
    Vector uApplied;
    bool cert = false;
    double maxSlack = std::numeric_limits<double>::quiet_NaN();
    double primaryMs = 0.0;
    double filterMs = 0.0;
    double slsResidual = 0.0;     ///< affine-constraint residual of the winning solution
    bool symmetricEnvelope = true; ///< lower envelope is the exact negation of the upper one
    std::vector<IterationDiagnostics> diagnostics;
};

struct TrajectoryLog {
    Scheme scheme = Scheme::Ilqr;
    int caseId = 0;
    double sigmaW = 0.0;
    std::uint64_t seed = 0;
    std::vector<Vector> states;    ///< x_0..x_N
    std::vector<StepRecord> steps; ///< one per applied input, steps[k].state == states[k]
};

inline int numSteps(const TestCase& c, const PendulumParams& p) { return static_cast<int>(std::lround(c.duration / p.dt)); }

/// Tracking reference (theta_r, 0) at absolute step k.
inline std::function<Vector(int)> caseReference(const TestCase& c, const PendulumParams& p, double switchTime)
{
    const int switchStep = static_cast<int>(std::lround(switchTime / p.dt));
    const double r1 = degToRad(c.thetaR1Deg);
    const double r2 = degToRad(c.thetaR2Deg);
    return [=](int k) {
        Vector r = Vector::Zero(2);
        r[0] = k < switchStep ? r1 : r2;
        return r;
    };
}

/// Noise stream shared by all schemes for a given (seed, case) so they face the same disturbances.
inline std::mt19937_64 caseRng(std::uint64_t seed, int caseId)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(caseId)};
    return std::mt19937_64(seq);
}

/// Closed-loop simulation of one test case under one scheme.
inline TrajectoryLog runCase(const LearnedModel& model, const TestCase& testCase, Scheme scheme, double sigmaW,
                             std::uint64_t seed, const BenchConfig& config)
{
    config.validate();
    PendulumParams params = config.pendulum;
    params.sigmaW = sigmaW;
    params.validate();

    IlqrSpec spec = config.ilqr;
    if (isSoftConstrained(scheme)) {
        spec.stateSet = config.stateSet;
    } else {
        spec.rho = 0.0;
        spec.stateSet.reset();
    }
    PrimaryController primary(model, spec, caseReference(testCase, params, config.switchTime));
    std::mt19937_64 rng = caseRng(seed, testCase.id);

    TrajectoryLog log;
    log.scheme = scheme;
    log.caseId = testCase.id;
    log.sigmaW = sigmaW;
    log.seed = seed;
    log.states.push_back(testCase.x0());

    const int N = numSteps(testCase, params);
    for (int k = 0; k < N; ++k) {
        StepRecord rec;
        rec.state = log.states.back();
        auto t0 = std::chrono::steady_clock::now();
        PrimaryOutput out = primary(k, rec.state);
        rec.primaryMs = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        rec.uRef = out.uRef;
        rec.uApplied = out.uRef;
        if (isSafe(scheme)) {
            t0 = std::chrono::steady_clock::now();
            FilterResult fr = filterStep(model, rec.state, out.uRef, out.plan, config.stateSet, config.inputSet,
                                         sigmaW, config.filter);
            rec.filterMs = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            rec.uApplied = fr.u0;
            rec.cert = fr.safeCert;
            rec.maxSlack = fr.bestMaxSlack;
            rec.slsResidual = affineResidual(fr.model, fr.policy);
            rec.symmetricEnvelope = envelopeIsSymmetric(fr.model);
            rec.diagnostics = std::move(fr.iterations);
        }
        log.states.push_back(stepTrue(rec.state, rec.uApplied, params, rng));
        log.steps.push_back(std::move(rec));
    }
    return log;
}

/// Percentage of logged states outside X (tolerance 1e-9).
inline double violationPct(const std::vector<Vector>& states, const SoftPolytope& X)
{
    if (states.empty()) {
        throw std::invalid_argument("violationPct: empty trajectory");
    }
    std::size_t outside = 0;
    for (const auto& x : states) {
        outside += X.contains(x, 1e-9) ? 0 : 1;
    }
    return 100.0 * static_cast<double>(outside) / static_cast<double>(states.size());
}

inline double violationPct(const TrajectoryLog& log, const SoftPolytope& X) { return violationPct(log.states, X); }

/// Trajectory CSV: k, theta, theta_dot, u_ref, u, cert, max_slack (last row carries the final state only).
inline void writeTrajectoryCsv(std::ostream& out, const TrajectoryLog& log)
{
    out << "k,theta,theta_dot,u_ref,u,cert,max_slack\n";
    out.precision(17);
    for (std::size_t k = 0; k < log.states.size(); ++k) {
        out << k << ',' << log.states[k][0] << ',' << log.states[k][1];
        if (k < log.steps.size()) {
            const auto& s = log.steps[k];
            out << ',' << s.uRef[0] << ',' << s.uApplied[0] << ',' << (s.cert ? 1 : 0) << ',' << s.maxSlack;
        } else {
            out << ",,,,";
        }
        out << '\n';
    }
}

struct DatasetOptions {
    double duration = 15.0;
    double torqueLimit = 15.0;
    double smoothing = 0.7;    ///< low-pass factor on the torque excitation
    double thetaLimit = 3.8;   ///< restart box, wider than X
    double thetaDotLimit = 7.0;
};

struct DatasetRow {
    Vector x;
    Vector u;
    Vector residual;
};

/**
 * @brief Random-excitation rollouts of the true pendulum, sigma_w = 0.
 *
 * Torque is a low-pass filtered uniform signal in [-limit, limit]; the state restarts at a
 * random point once it leaves the restart box. Targets are x+ - A x - B u.
 */
inline std::vector<DatasetRow> generateDataset(const PendulumParams& params, std::uint64_t seed,
                                               const DatasetOptions& opt = {})
{
    params.validate();
    PendulumParams p = params;
    p.sigmaW = 0.0;
    const LinearPlant lin = linearizedPlant();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> torque(-opt.torqueLimit, opt.torqueLimit);
    std::uniform_real_distribution<double> th(-opt.thetaLimit, opt.thetaLimit);
    std::uniform_real_distribution<double> thd(-opt.thetaDotLimit, opt.thetaDotLimit);

    const int rows = static_cast<int>(std::lround(opt.duration / p.dt));
    std::vector<DatasetRow> data;
    data.reserve(static_cast<std::size_t>(rows));
    Vector x(2);
    x << th(rng), thd(rng);
    double tau = torque(rng);
    for (int i = 0; i < rows; ++i) {
        tau = opt.smoothing * tau + (1.0 - opt.smoothing) * torque(rng);
        Vector u = Vector::Constant(1, tau);
        Vector next = stepNominal(x, u, p);
        data.push_back({x, u, next - lin.A * x - lin.B * u});
        if (std::abs(next[0]) > opt.thetaLimit || std::abs(next[1]) > opt.thetaDotLimit) {
            next << th(rng), thd(rng);
        }
        x = next;
    }
    return data;
}

inline void writeDataset(const std::string& path, const std::vector<DatasetRow>& data)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write dataset '" + path + "'");
    }
    out.precision(17);
    out << "theta,theta_dot,u,res_theta,res_theta_dot\n";
    for (const auto& r : data) {
        out << r.x[0] << ',' << r.x[1] << ',' << r.u[0] << ',' << r.residual[0] << ',' << r.residual[1] << '\n';
    }
    if (!out) {
        throw IoError("failed while writing dataset '" + path + "'");
    }
}

inline std::vector<DatasetRow> readDataset(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open dataset '" + path + "'");
    }
    std::string line;
    std::getline(in, line);
    std::vector<DatasetRow> data;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::array<double, 5> v{};
        std::size_t pos = 0;
        for (int i = 0; i < 5; ++i) {
            const std::size_t next = line.find(',', pos);
            v[static_cast<std::size_t>(i)] = std::stod(line.substr(pos, next - pos));
            pos = next + 1;
            if (next == std::string::npos && i < 4) {
                throw FormatError("dataset row has fewer than 5 columns");
            }
        }
        data.push_back({(Vector(2) << v[0], v[1]).finished(), Vector::Constant(1, v[2]),
                        (Vector(2) << v[3], v[4]).finished()});
    }
    return data;
}

} // namespace nnpsf
