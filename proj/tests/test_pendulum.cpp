#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "nnpsf/config.hpp"
#include "nnpsf/pendulum.hpp"

using namespace nnpsf;

namespace {

/// Zero-order-hold discretization through the augmented matrix exponential.
std::pair<Matrix, Matrix> discretize(const Matrix& Ac, const Matrix& Bc, double dt)
{
    const auto n = Ac.rows();
    const auto m = Bc.cols();
    Matrix M = Matrix::Zero(n + m, n + m);
    M.topLeftCorner(n, n) = Ac * dt;
    M.topRightCorner(n, m) = Bc * dt;
    const Matrix E = M.exp();
    return {E.topLeftCorner(n, n), E.topRightCorner(n, m)};
}

double energy(const Vector& x, const PendulumParams& p)
{
    return 0.5 * x[1] * x[1] + 3.0 * p.g / (2.0 * p.l) * std::cos(x[0]);
}

} // namespace

TEST(Pendulum, UprightEquilibrium)
{
    std::mt19937_64 rng(1);
    const Vector x = stepTrue(Vector::Zero(2), Vector::Zero(1), PendulumParams{}, rng);
    EXPECT_EQ(x, Vector::Zero(2));
}

TEST(Pendulum, SmallAngleStepMatchesExponentialMap)
{
    const PendulumParams p;
    const auto [Ac, Bc] = continuousLinearization(p);
    const auto [Ad, Bd] = discretize(Ac, Bc, p.dt);
    const Vector x = (Vector(2) << 1e-3, -2e-3).finished();
    const Vector u = Vector::Constant(1, 1e-3);
    const Vector diff = stepNominal(x, u, p) - (Ad * x + Bd * u);
    EXPECT_LE(diff.cwiseAbs().maxCoeff(), std::pow(p.dt, 3) * 1e-3);
}

TEST(Pendulum, LinearizedPlantConstants)
{
    const auto plant = linearizedPlant();
    EXPECT_EQ(plant.A(0, 0), 1.0092);
    EXPECT_EQ(plant.A(0, 1), 0.05015);
    EXPECT_EQ(plant.A(1, 0), 0.369);
    EXPECT_EQ(plant.A(1, 1), 1.0092);
    EXPECT_EQ(plant.B(0, 0), 0.00125);
    EXPECT_EQ(plant.B(1, 0), 0.05015);
    EXPECT_GT(plant.B.norm(), 0.0);
}

TEST(Pendulum, LinearizedPlantIsExactDiscretizationOfDefaults)
{
    const PendulumParams p;
    const auto [Ac, Bc] = continuousLinearization(p);
    EXPECT_DOUBLE_EQ(Ac(1, 0), 7.3575);
    EXPECT_DOUBLE_EQ(Bc(1, 0), 1.0);
    const auto [Ad, Bd] = discretize(Ac, Bc, p.dt);
    const auto plant = linearizedPlant();
    // printed entries carry four decimals
    EXPECT_LE((Ad - plant.A).cwiseAbs().maxCoeff(), 5e-5);
    EXPECT_LE((Bd - plant.B).cwiseAbs().maxCoeff(), 5e-5);
}

TEST(Pendulum, Rk4ConservesEnergy)
{
    // swing of amplitude 1 rad about the hanging position
    const PendulumParams p;
    Vector x = (Vector(2) << std::numbers::pi - 1.0, 0.0).finished();
    for (int k = 0; k < 400; ++k) {
        const Vector next = stepNominal(x, Vector::Zero(1), p);
        const double e0 = energy(x, p);
        EXPECT_LE(std::abs(energy(next, p) - e0) / std::abs(e0), 1e-6) << "step " << k;
        x = next;
    }
}

TEST(Pendulum, DisturbanceIsBoundedAndSeeded)
{
    PendulumParams p;
    p.sigmaW = 0.1;
    std::mt19937_64 a(42), b(42);
    const Vector x = (Vector(2) << 0.3, -0.2).finished();
    const Vector u = Vector::Constant(1, 1.0);
    for (int k = 0; k < 1000; ++k) {
        const Vector xa = stepTrue(x, u, p, a);
        const Vector xb = stepTrue(x, u, p, b);
        EXPECT_EQ(xa, xb);
        EXPECT_LE((xa - stepNominal(x, u, p)).cwiseAbs().maxCoeff(), 0.1);
    }
}

TEST(Pendulum, TestCaseTable)
{
    const auto& cases = testCases();
    EXPECT_EQ(cases[0].x0()[0], degToRad(57.3));
    EXPECT_EQ(cases[1].thetaR1Deg, -150.0);
    EXPECT_EQ(cases[2].thetaR2Deg, -180.0);
    EXPECT_EQ(cases[3].thetaDot0Deg, 57.3);
    EXPECT_EQ(numSteps(cases[0], PendulumParams{}), 40);
    EXPECT_THROW(testCase(5), std::out_of_range);
    const auto ref = caseReference(cases[0], PendulumParams{}, 1.0);
    EXPECT_DOUBLE_EQ(ref(19)[0], degToRad(120.0));
    EXPECT_DOUBLE_EQ(ref(20)[0], degToRad(-50.0));
}

TEST(Pendulum, DefaultSetsContainCaseStartsAndReferences)
{
    const BenchConfig cfg;
    for (const auto& c : testCases()) {
        EXPECT_TRUE(cfg.stateSet.contains(c.x0())) << "case " << c.id;
        for (double deg : {c.thetaR1Deg, c.thetaR2Deg}) {
            EXPECT_TRUE(cfg.stateSet.contains((Vector(2) << degToRad(deg), 0.0).finished(), -0.2)) << "case " << c.id;
        }
    }
}

TEST(Pendulum, SchemeNamesRoundTrip)
{
    for (Scheme s : kAllSchemes) {
        EXPECT_EQ(parseScheme(toString(s)), s);
    }
    EXPECT_THROW(parseScheme("lqr"), std::invalid_argument);
}

TEST(Pendulum, ViolationPercentArithmetic)
{
    const auto X = SoftPolytope::symmetricBox((Vector(2) << 1.0, 1.0).finished());
    std::vector<Vector> states(41, Vector::Zero(2));
    EXPECT_EQ(violationPct(states, X), 0.0);
    for (int i = 0; i < 5; ++i) {
        states[static_cast<std::size_t>(i)] << 1.5, 0.0;
    }
    EXPECT_NEAR(violationPct(states, X), 12.195121951219512, 1e-12);
    // within the membership tolerance
    states.assign(41, (Vector(2) << 1.0 + 5e-10, 0.0).finished());
    EXPECT_EQ(violationPct(states, X), 0.0);
}

TEST(Pendulum, RunCaseIsDeterministicAndHasFullLength)
{
    const LearnedModel model(linearizedPlant(), MlpNetwork::zero(3, 2));
    BenchConfig cfg;
    cfg.ilqr.maxIterations = 5;
    const auto a = runCase(model, testCase(1), Scheme::Ilqr, 0.05, 7, cfg);
    const auto b = runCase(model, testCase(1), Scheme::Ilqr, 0.05, 7, cfg);
    ASSERT_EQ(a.states.size(), 41u);
    ASSERT_EQ(a.steps.size(), 40u);
    for (std::size_t k = 0; k < a.states.size(); ++k) {
        EXPECT_EQ(a.states[k], b.states[k]);
    }
    for (const auto& s : a.steps) {
        EXPECT_LE(std::abs(s.uApplied[0]), 15.0);
        EXPECT_EQ(s.uApplied, s.uRef);
    }
    const auto c = runCase(model, testCase(1), Scheme::Ilqr, 0.05, 8, cfg);
    EXPECT_NE(a.states.back(), c.states.back());
}

TEST(Pendulum, DatasetRowsAndResiduals)
{
    DatasetOptions opt;
    const auto data = generateDataset(PendulumParams{}, 3, opt);
    EXPECT_EQ(data.size(), 300u);
    // residual of the true plant vanishes at the origin up to the rounding in the printed constants
    const auto plant = linearizedPlant();
    const Vector r0 = stepNominal(Vector::Zero(2), Vector::Zero(1), PendulumParams{});
    EXPECT_EQ(r0, Vector::Zero(2));
    const Vector z = (Vector(2) << 1e-3, 0.0).finished();
    const Vector res = stepNominal(z, Vector::Zero(1), PendulumParams{}) - plant.A * z;
    EXPECT_LE(res.cwiseAbs().maxCoeff(), 1e-6);
    for (const auto& row : data) {
        EXPECT_EQ(row.residual, stepNominal(row.x, row.u, PendulumParams{}) - plant.A * row.x - plant.B * row.u);
        EXPECT_LE(std::abs(row.u[0]), opt.torqueLimit);
    }
}

TEST(Pendulum, DatasetReloadsIdentically)
{
    const auto data = generateDataset(PendulumParams{}, 5, {2.0});
    const auto path = (std::filesystem::temp_directory_path() / "nnpsf_dataset.csv").string();
    writeDataset(path, data);
    const auto back = readDataset(path);
    ASSERT_EQ(back.size(), data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(back[i].x, data[i].x);
        EXPECT_EQ(back[i].u, data[i].u);
        EXPECT_EQ(back[i].residual, data[i].residual);
    }
    std::filesystem::remove(path);
}

TEST(Config, JsonRoundTripAndOverlay)
{
    const BenchConfig defaults;
    const BenchConfig back = configFromJson(toJson(defaults));
    EXPECT_EQ(back.stateSet.F, defaults.stateSet.F);
    EXPECT_EQ(back.stateSet.b, defaults.stateSet.b);
    EXPECT_EQ(back.ilqr.Q, defaults.ilqr.Q);
    EXPECT_EQ(back.filter.horizon, defaults.filter.horizon);
    EXPECT_EQ(back.switchTime, defaults.switchTime);

    const auto partial = nlohmann::json::parse(R"({"filter": {"horizon": 7}, "ilqr": {"rho": 3.5}})");
    const BenchConfig over = configFromJson(partial);
    EXPECT_EQ(over.filter.horizon, 7);
    EXPECT_EQ(over.ilqr.rho, 3.5);
    EXPECT_EQ(over.filter.iterations, defaults.filter.iterations);
    EXPECT_THROW(configFromJson(nlohmann::json::array()), FormatError);
}
