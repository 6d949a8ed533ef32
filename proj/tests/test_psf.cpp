#include <gtest/gtest.h>

#include "nnpsf/pendulum.hpp"
#include "nnpsf/psf.hpp"

using namespace nnpsf;

namespace {

LearnedModel linearModel() { return {linearizedPlant(), MlpNetwork::zero(3, 2)}; }

const SoftPolytope kX = SoftPolytope::symmetricBox((Vector(2) << 1.0, 2.0).finished());
const SoftPolytope kU = SoftPolytope::symmetricBox((Vector(1) << 5.0).finished());

/// Open-loop controls of a stabilizing gain, used as the primary's plan.
std::vector<Vector> lqrLikePlan(const LearnedModel& m, const Vector& x0, int T)
{
    Matrix K(1, 2);
    K << 20.0, 6.0;
    std::vector<Vector> u;
    Vector x = x0;
    for (int t = 0; t < T; ++t) {
        u.push_back(-K * x);
        x = m.step(x, u.back());
    }
    return u;
}

} // namespace

TEST(Psf, AdmissibleReferencePassesUnchanged)
{
    const auto model = linearModel();
    const Vector x0 = (Vector(2) << 0.2, -0.1).finished();
    const auto plan = lqrLikePlan(model, x0, 10);
    const auto res = filterStep(model, x0, plan[0], plan, kX, kU, 0.0, FilterConfig{});
    EXPECT_TRUE(res.safeCert);
    EXPECT_EQ(res.winningIteration, 1);
    EXPECT_EQ(res.iterations.size(), 1u);
    EXPECT_NEAR(res.u0[0], plan[0][0], 1e-6);
    EXPECT_NEAR(res.policy.objective, 0.0, 1e-6);
    EXPECT_LE(affineResidual(res.model, res.policy), 1e-6);
}

TEST(Psf, UnsafeReferenceIsModified)
{
    const auto model = linearModel();
    const Vector x0 = (Vector(2) << 0.3, 0.5).finished();
    // pushing further towards the boundary
    std::vector<Vector> plan(10, Vector::Constant(1, 5.0));
    const auto res = filterStep(model, x0, plan[0], plan, kX, kU, 0.01, FilterConfig{});
    EXPECT_TRUE(res.safeCert);
    EXPECT_LT(res.u0[0], 5.0 - 1e-3);
    EXPECT_TRUE(kU.contains(res.u0, 1e-6));
    EXPECT_GT(res.policy.objective, 1e-3);
}

TEST(Psf, InfeasibleCorridorReportsSlack)
{
    const auto model = linearModel();
    // far outside X with no way back inside the horizon
    const Vector x0 = (Vector(2) << 3.0, 4.0).finished();
    std::vector<Vector> plan(10, Vector::Zero(1));
    FilterConfig cfg;
    cfg.iterations = 3;
    const auto res = filterStep(model, x0, plan[0], plan, kX, kU, 0.05, cfg);
    EXPECT_FALSE(res.safeCert);
    EXPECT_GT(res.bestMaxSlack, 0.0);
    EXPECT_EQ(res.iterations.size(), 3u);
}

TEST(Psf, IncumbentHasSmallestSlack)
{
    const auto model = linearModel();
    const Vector x0 = (Vector(2) << 3.0, 4.0).finished();
    std::vector<Vector> plan(10, Vector::Zero(1));
    FilterConfig cfg;
    cfg.iterations = 4;
    const auto res = filterStep(model, x0, plan[0], plan, kX, kU, 0.05, cfg);
    double smallest = std::numeric_limits<double>::infinity();
    for (const auto& d : res.iterations) {
        smallest = std::min(smallest, d.maxSlack);
    }
    EXPECT_EQ(res.bestMaxSlack, smallest);
    EXPECT_EQ(res.iterations[static_cast<std::size_t>(res.winningIteration - 1)].maxSlack, smallest);
    // radii grow geometrically
    for (std::size_t i = 1; i < res.iterations.size(); ++i) {
        EXPECT_DOUBLE_EQ(res.iterations[i].radius, 2.0 * res.iterations[i - 1].radius);
    }
}

TEST(Psf, LiteralLoopKeepsSolvingAfterCertificate)
{
    const auto model = linearModel();
    const Vector x0 = (Vector(2) << 0.2, -0.1).finished();
    const auto plan = lqrLikePlan(model, x0, 10);
    FilterConfig cfg;
    cfg.stopOnCertificate = false;
    const auto res = filterStep(model, x0, plan[0], plan, kX, kU, 0.0, cfg);
    EXPECT_EQ(res.iterations.size(), 5u);
    EXPECT_TRUE(res.safeCert);
    EXPECT_EQ(res.bestMaxSlack, 0.0);
}

TEST(Psf, NeedsFullHorizonPlan)
{
    const auto model = linearModel();
    std::vector<Vector> plan(3, Vector::Zero(1));
    EXPECT_THROW(filterStep(model, Vector::Zero(2), plan[0], plan, kX, kU, 0.0, FilterConfig{}), DimensionError);
}

TEST(Psf, DiagnosticsCsv)
{
    const auto model = linearModel();
    const Vector x0 = (Vector(2) << 0.2, -0.1).finished();
    const auto plan = lqrLikePlan(model, x0, 10);
    const auto res = filterStep(model, x0, plan[0], plan, kX, kU, 0.0, FilterConfig{});
    std::ostringstream os;
    writeDiagnosticsCsvHeader(os);
    writeDiagnosticsCsv(os, 3, res);
    EXPECT_NE(os.str().find("\n3,1,0.1,0,"), std::string::npos);
}
