#include <random>

#include <gtest/gtest.h>

#include "nnpsf/qp.hpp"

using namespace nnpsf;

namespace {

SparseMatrix sparse(const Matrix& M)
{
    SparseMatrix S = M.sparseView();
    S.makeCompressed();
    return S;
}

QuadraticProgram denseProgram(const Matrix& P, const Vector& q, const Matrix& A, const Vector& b, const Matrix& G,
                              const Vector& h)
{
    QuadraticProgram qp;
    qp.P = sparse(P);
    qp.q = q;
    qp.A = sparse(A);
    qp.b = b;
    qp.G = sparse(G);
    qp.h = h;
    return qp;
}

} // namespace

TEST(QpSolver, BoxProjection)
{
    // min (x - 5)^2 s.t. -1 <= x <= 1  ->  x = 1, objective 16
    Matrix P(1, 1);
    P << 2.0;
    Vector q(1);
    q << -10.0;
    Matrix G(2, 1);
    G << 1.0, -1.0;
    Vector h(2);
    h << 1.0, 1.0;
    auto qp = denseProgram(P, q, Matrix(0, 1), Vector(0), G, h);
    qp.constant = 25.0;
    const auto res = solveQp(qp);
    ASSERT_EQ(res.status, QpStatus::Solved);
    EXPECT_NEAR(res.x[0], 1.0, 1e-8);
    EXPECT_NEAR(res.objective, 16.0, 1e-7);
}

TEST(QpSolver, EqualityConstrainedLeastNorm)
{
    // min |x|^2 s.t. x0 + x1 + x2 = 3  ->  x = (1,1,1)
    const Matrix P = 2.0 * Matrix::Identity(3, 3);
    Matrix A(1, 3);
    A << 1, 1, 1;
    Vector b(1);
    b << 3.0;
    const auto res = solveQp(denseProgram(P, Vector::Zero(3), A, b, Matrix(0, 3), Vector(0)));
    ASSERT_EQ(res.status, QpStatus::Solved);
    EXPECT_LT((res.x - Vector::Ones(3)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(QpSolver, LinearProgramWithFreeDirection)
{
    // min x0 s.t. x0 >= 2, x1 unconstrained but tied to x2 by equality (zero-curvature direction)
    Matrix A(1, 3);
    A << 0, 1, -1;
    Matrix G(1, 3);
    G << -1, 0, 0;
    Vector q(3);
    q << 1, 0, 0;
    const auto res = solveQp(denseProgram(Matrix::Zero(3, 3), q, A, Vector::Zero(1), G, -2.0 * Vector::Ones(1)));
    ASSERT_TRUE(res.ok());
    EXPECT_NEAR(res.x[0], 2.0, 1e-7);
    EXPECT_NEAR(res.x[1], res.x[2], 1e-7);
}

TEST(QpSolver, RandomProgramsSatisfyKktConditions)
{
    std::mt19937_64 rng(7);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 12, meq = 3, min = 20;
        Matrix R(n, n);
        for (auto& v : R.reshaped()) {
            v = N(rng);
        }
        const Matrix P = R.transpose() * R / n;
        Matrix A(meq, n), G(min, n);
        Vector q(n);
        for (auto& v : A.reshaped()) v = N(rng);
        for (auto& v : G.reshaped()) v = N(rng);
        for (auto& v : q) v = N(rng);
        // feasible by construction: x = 0 satisfies Gx <= 1, choose b = A x_f
        Vector xf(n);
        for (auto& v : xf) v = 0.1 * N(rng);
        const Vector h = G * xf + Vector::Ones(min);
        const auto res = solveQp(denseProgram(P, q, A, A * xf, G, h));
        ASSERT_EQ(res.status, QpStatus::Solved) << "trial " << trial;
        EXPECT_LE(res.primalResidual, 1e-6);
        EXPECT_LE(res.dualResidual, 1e-6);
        EXPECT_LE(res.relativeGap, 1e-6);
        EXPECT_GE(res.z.minCoeff(), 0.0);
    }
}

TEST(QpSolver, LargePenaltyCostKeepsTightTolerance)
{
    // min (x - 5)^2 + 1e4 t  s.t.  x <= 1 + t, t >= 0, x <= 3  ->  x = 1, t = 0, objective 16
    Matrix P = Matrix::Zero(2, 2);
    P(0, 0) = 2.0;
    Vector q(2);
    q << -10.0, 1e4;
    Matrix G(3, 2);
    G << 1, -1, 0, -1, 1, 0;
    Vector h(3);
    h << 1, 0, 3;
    auto qp = denseProgram(P, q, Matrix(0, 2), Vector(0), G, h);
    qp.constant = 25.0;
    const auto res = solveQp(qp);
    ASSERT_EQ(res.status, QpStatus::Solved);
    EXPECT_NEAR(res.x[0], 1.0, 1e-8);
    EXPECT_NEAR(res.x[1], 0.0, 1e-8);
    EXPECT_NEAR(res.objective, 16.0, 1e-7);
    // multipliers are reported for the unscaled problem
    EXPECT_LT(res.dualResidual, 1e-6);
    EXPECT_NEAR(res.z[0], 8.0, 1e-6);
}
