#include <random>

#include <gtest/gtest.h>

#include "nnpsf/sls_filter.hpp"

using namespace nnpsf;

namespace {

/// Time-invariant model with a constant envelope half-width on every entry.
UncertaintyModel constantModel(const Matrix& A, const Matrix& B, int T, double envelope = 0.0, double offset = 0.0,
                               double sigmaW = 0.0)
{
    UncertaintyModel model;
    model.sigmaW = sigmaW;
    const auto n = A.rows();
    const auto m = B.cols();
    for (int t = 0; t < T; ++t) {
        UncertaintyModel::Step s;
        s.A = A;
        s.B = B;
        s.c = Vector::Zero(n);
        s.upperD = Matrix::Constant(n, n + m, envelope);
        s.upperd = Vector::Constant(n, offset);
        s.lowerD = -s.upperD;
        s.lowerd = -s.upperd;
        model.steps.push_back(s);
    }
    return model;
}

SlsProblem scalarProblem(double uRef, int T = 3)
{
    SlsProblem p;
    p.model = constantModel(Matrix::Ones(1, 1), Matrix::Ones(1, 1), T);
    p.stateSet = SoftPolytope::box(-Vector::Ones(1), Vector::Ones(1));
    p.inputSet = SoftPolytope::box(-Vector::Ones(1), Vector::Ones(1));
    for (int t = 0; t < T; ++t) {
        p.trustRegions.push_back({Vector::Zero(2), 10.0});
    }
    p.x0 = Vector::Zero(1);
    p.uRef = Vector::Constant(1, uRef);
    return p;
}

} // namespace

TEST(SlsFilter, ScalarReferenceAdmissible)
{
    const auto sol = solve(assemble(scalarProblem(0.5)));
    ASSERT_TRUE(sol.ok());
    EXPECT_NEAR(sol.v[0][0], 0.5, 1e-6);
    EXPECT_NEAR(sol.objective, 0.0, 1e-6);
    EXPECT_EQ(maxSlack(sol), 0.0);
}

TEST(SlsFilter, ScalarBoxProjection)
{
    // the state row at t = 1 is tightened by psi_0 >= psi_min, so v_0 = 1 - psi_min exactly
    auto p = scalarProblem(5.0);
    p.psiMin = 1e-9;
    const auto sol = solve(assemble(p));
    ASSERT_TRUE(sol.ok());
    EXPECT_NEAR(sol.v[0][0], 1.0, 1e-6);
    EXPECT_NEAR(sol.objective, 16.0, 1e-6);
    EXPECT_EQ(maxSlack(sol), 0.0);
}

TEST(SlsFilter, PsiFloorMarginOnActiveStateRow)
{
    const auto p = scalarProblem(5.0);
    const auto sol = solve(assemble(p));
    ASSERT_TRUE(sol.ok());
    EXPECT_NEAR(sol.v[0][0], 1.0 - p.psiMin, 1e-8);
    EXPECT_EQ(maxSlack(sol), 0.0);
}

TEST(SlsFilter, ZeroEnvelopeOverApproximationReducesToPsiPositivity)
{
    const auto p = scalarProblem(0.0, 1);
    const auto program = assemble(p);
    const auto& L = program.layout;
    // rows touching psi_0: two over-approximation rows (-psi <= 0) and the floor (-psi <= -psi_min)
    const Eigen::SparseMatrix<double, Eigen::RowMajor> G = program.qp.G;
    int overApprox = 0;
    for (int r = 0; r < G.rows(); ++r) {
        const double coef = G.coeff(r, L.psi(0, 0));
        if (coef == 0.0) {
            continue;
        }
        if (G.row(r).nonZeros() == 1 && coef == -1.0 && program.qp.h[r] == 0.0) {
            ++overApprox;
        }
    }
    EXPECT_EQ(overApprox, 2);
    const auto sol = solve(program);
    ASSERT_TRUE(sol.ok());
    EXPECT_GE(sol.psiDiag[0][0], p.psiMin * (1 - 1e-6));
}

TEST(SlsFilter, AffineResidualSmall)
{
    auto p = scalarProblem(0.3, 6);
    p.model = constantModel(Matrix::Ones(1, 1), Matrix::Ones(1, 1), 6, 0.05, 0.01, 0.02);
    const auto sol = solve(assemble(p));
    ASSERT_TRUE(sol.ok());
    EXPECT_LE(affineResidual(p.model, sol), 1e-6);
}
