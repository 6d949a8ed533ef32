#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "nnpsf/types.hpp"

namespace nnpsf {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

/**
 * @brief Convex QP  min 1/2 x'Px + q'x + constant  s.t.  A x = b,  G x <= h.
 *
 * P is stored with both triangles and must be positive semidefinite.
 */
struct QuadraticProgram {
    SparseMatrix P;
    Vector q;
    SparseMatrix A;
    Vector b;
    SparseMatrix G;
    Vector h;
    double constant = 0.0;

    [[nodiscard]] int numVariables() const { return static_cast<int>(q.size()); }
    [[nodiscard]] int numEqualities() const { return static_cast<int>(b.size()); }
    [[nodiscard]] int numInequalities() const { return static_cast<int>(h.size()); }

    [[nodiscard]] double objective(const Vector& x) const { return 0.5 * x.dot(P * x) + q.dot(x) + constant; }
};

enum class QpStatus { Solved, SolvedInaccurate, MaxIterations, NumericalFailure };

inline const char* toString(QpStatus s)
{
    switch (s) {
    case QpStatus::Solved: return "solved";
    case QpStatus::SolvedInaccurate: return "solved_inaccurate";
    case QpStatus::MaxIterations: return "max_iterations";
    case QpStatus::NumericalFailure: return "numerical_failure";
    }
    return "unknown";
}

struct QpSettings {
    double tolerance = 1e-9;         ///< scaled primal/dual residual and relative gap target
    double acceptableTolerance = 1e-6; ///< fallback accepted when progress stalls
    int maxIterations = 100;
    double primalRegularization = 1e-8;
    double dualRegularization = 1e-8;
    int refinementSteps = 4;
};

struct QpResult {
    Vector x; ///< primal
    Vector y; ///< equality multipliers
    Vector z; ///< inequality multipliers (>= 0)
    Vector s; ///< inequality slacks h - Gx (>= 0)
    QpStatus status = QpStatus::NumericalFailure;
    int iterations = 0;
    double primalResidual = 0.0; ///< max(|Ax-b|_inf, |max(Gx-h,0)|_inf)
    double dualResidual = 0.0;   ///< |Px + q + A'y + G'z|_inf
    double relativeGap = 0.0;    ///< s'z / max(1, |objective|)
    double objective = 0.0;

    [[nodiscard]] bool ok() const { return status == QpStatus::Solved || status == QpStatus::SolvedInaccurate; }
};

namespace detail {

inline double infNorm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// Largest step in (0, 1] keeping v + alpha dv >= 0.
inline double maxStep(const Vector& v, const Vector& dv)
{
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv[i] < 0.0) {
            alpha = std::min(alpha, -v[i] / dv[i]);
        }
    }
    return alpha;
}

/**
 * Quasi-definite KKT matrix [P + rho I, A', G'; A, -delta I, 0; G, 0, -D - delta I] with a fixed sparsity
 * pattern, so the symbolic analysis is done once and only the diagonal D changes between iterations.
 */
class AugmentedKkt {
public:
    AugmentedKkt(const QuadraticProgram& qp, double rho, double delta)
        : n_(qp.numVariables()), meq_(qp.numEqualities()), min_(qp.numInequalities()), rho_(rho), delta_(delta)
    {
        const int dim = n_ + meq_ + min_;
        std::vector<Triplet> trip;
        for (int j = 0; j < n_; ++j) {
            trip.emplace_back(j, j, rho_);
        }
        for (int k = 0; k < qp.P.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(qp.P, k); it; ++it) {
                if (it.row() <= it.col()) {
                    trip.emplace_back(it.row(), it.col(), it.value());
                }
            }
        }
        for (int k = 0; k < qp.A.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(qp.A, k); it; ++it) {
                trip.emplace_back(it.col(), n_ + it.row(), it.value());
            }
        }
        for (int k = 0; k < qp.G.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(qp.G, k); it; ++it) {
                trip.emplace_back(it.col(), n_ + meq_ + it.row(), it.value());
            }
        }
        for (int e = n_; e < dim; ++e) {
            trip.emplace_back(e, e, -delta_);
        }
        K_.resize(dim, dim);
        K_.setFromTriplets(trip.begin(), trip.end());
        K_.makeCompressed();
        base_.assign(K_.valuePtr(), K_.valuePtr() + K_.nonZeros());
        diag_.resize(static_cast<std::size_t>(min_));
        for (int i = 0; i < min_; ++i) {
            diag_[static_cast<std::size_t>(i)] = slot(n_ + meq_ + i);
        }
        solver_.analyzePattern(K_);
    }

    /// Refactorizes for D = s ./ z.
    bool factorize(const Vector& d)
    {
        double* values = K_.valuePtr();
        std::copy(base_.begin(), base_.end(), values);
        for (int i = 0; i < min_; ++i) {
            values[diag_[static_cast<std::size_t>(i)]] -= d[i];
        }
        solver_.factorize(K_);
        return solver_.info() == Eigen::Success;
    }

    /// Solves the unregularized system using iterative refinement on the regularized factors.
    [[nodiscard]] Vector solve(const Vector& rhs, int refinement) const
    {
        Vector sol = solver_.solve(rhs);
        for (int k = 0; k < refinement; ++k) {
            const Vector residual = rhs - applyUnregularized(sol);
            if (infNorm(residual) <= 1e-14 * (1.0 + infNorm(rhs))) {
                break;
            }
            sol += solver_.solve(residual);
        }
        return sol;
    }

private:
    [[nodiscard]] std::size_t slot(int j) const
    {
        const int* inner = K_.innerIndexPtr();
        const int* begin = inner + K_.outerIndexPtr()[j];
        const int* end = inner + K_.outerIndexPtr()[j + 1];
        return static_cast<std::size_t>(std::lower_bound(begin, end, j) - inner);
    }

    [[nodiscard]] Vector applyUnregularized(const Vector& v) const
    {
        Vector out = K_.selfadjointView<Eigen::Upper>() * v;
        out.head(n_) -= rho_ * v.head(n_);
        out.tail(meq_ + min_) += delta_ * v.tail(meq_ + min_);
        return out;
    }

    int n_;
    int meq_;
    int min_;
    double rho_;
    double delta_;
    SparseMatrix K_;
    std::vector<double> base_;
    std::vector<std::size_t> diag_;
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper, Eigen::AMDOrdering<int>> solver_;
};

/// `costScale` is the factor the objective was multiplied by; stopping tests are measured in original units.
inline QpResult solveQpScaled(const QuadraticProgram& qp, const QpSettings& settings, double costScale)
{
    const int n = qp.numVariables();
    const int meq = qp.numEqualities();
    const int min = qp.numInequalities();
    if (qp.P.rows() != n || qp.P.cols() != n || qp.A.rows() != meq || qp.A.cols() != n || qp.G.rows() != min
        || qp.G.cols() != n) {
        throw DimensionError("solveQp: inconsistent problem dimensions");
    }
    if (!qp.q.allFinite() || !qp.b.allFinite() || !qp.h.allFinite()) {
        throw FormatError("solveQp: non-finite problem data");
    }

    using detail::infNorm;
    QpResult res;
    detail::AugmentedKkt kkt(qp, settings.primalRegularization, settings.dualRegularization);
    const SparseMatrix At = qp.A.transpose();
    const SparseMatrix Gt = qp.G.transpose();

    // Initial point from the W = I system, then shift s and z into the interior.
    if (!kkt.factorize(Vector::Ones(min))) {
        res.status = QpStatus::NumericalFailure;
        return res;
    }
    Vector rhs(n + meq + min);
    rhs << -qp.q, qp.b, qp.h;
    Vector sol = kkt.solve(rhs, settings.refinementSteps);
    Vector x = sol.head(n);
    Vector y = sol.segment(n, meq);
    Vector z = sol.tail(min);
    Vector s = -z;
    if (min > 0) {
        s.array() += std::max(0.0, -1.5 * s.minCoeff());
        z.array() += std::max(0.0, -1.5 * z.minCoeff());
        const double sz = s.dot(z);
        const double ds0 = 0.5 * sz / std::max(z.sum(), 1e-300);
        const double dz0 = 0.5 * sz / std::max(s.sum(), 1e-300);
        s.array() += std::max(ds0, 1e-8);
        z.array() += std::max(dz0, 1e-8);
    }

    const double scaleP = 1.0 + std::max(infNorm(qp.b), infNorm(qp.h));
    const double scaleD = costScale + infNorm(qp.q);
    double bestMerit = std::numeric_limits<double>::infinity();
    constexpr int kStallIterations = 5;
    int sinceImprovement = 0;
    Vector bestX = x, bestY = y, bestZ = z, bestS = s;

    auto evaluate = [&](const Vector& xx, const Vector& yy, const Vector& zz, const Vector& ss, double& pres,
                        double& dres, double& gap, double& pobj) {
        pres = std::max(infNorm(qp.A * xx - qp.b), infNorm(qp.G * xx + ss - qp.h));
        dres = infNorm(qp.P * xx + qp.q + At * yy + Gt * zz);
        pobj = qp.objective(xx);
        gap = (min > 0 ? ss.dot(zz) : 0.0) / std::max(costScale, std::abs(pobj));
    };

    for (int iter = 0; iter <= settings.maxIterations; ++iter) {
        const Vector rd = qp.P * x + qp.q + At * y + Gt * z;
        const Vector rp = qp.A * x - qp.b;
        const Vector rg = qp.G * x + s - qp.h;
        double pres, dres, gap, pobj;
        evaluate(x, y, z, s, pres, dres, gap, pobj);
        res.iterations = iter;

        const double merit = std::max({pres / scaleP, dres / scaleD, gap});
        const bool improved = merit < 0.5 * bestMerit;
        if (merit < bestMerit) {
            bestMerit = merit;
            bestX = x;
            bestY = y;
            bestZ = z;
            bestS = s;
        }
        if (pres <= settings.tolerance * scaleP && dres <= settings.tolerance * scaleD && gap <= settings.tolerance) {
            res.status = QpStatus::Solved;
            break;
        }
        if (improved) {
            sinceImprovement = 0;
        } else if (++sinceImprovement >= kStallIterations && bestMerit <= settings.acceptableTolerance) {
            res.status = QpStatus::SolvedInaccurate;
            break;
        }
        if (iter == settings.maxIterations) {
            res.status = QpStatus::MaxIterations;
            break;
        }

        const double mu = min > 0 ? s.dot(z) / min : 0.0;
        if (!kkt.factorize(s.cwiseQuotient(z))) {
            res.status = QpStatus::NumericalFailure;
            break;
        }

        auto direction = [&](const Vector& rc, Vector& dx, Vector& dy, Vector& dz, Vector& ds) {
            Vector r(n + meq + min);
            r << -rd, -rp, -rg + rc.cwiseQuotient(z);
            const Vector d = kkt.solve(r, settings.refinementSteps);
            dx = d.head(n);
            dy = d.segment(n, meq);
            dz = d.tail(min);
            ds = -(rc + s.cwiseProduct(dz)).cwiseQuotient(z);
        };

        Vector dx, dy, dz, ds;
        // predictor
        Vector rc = s.cwiseProduct(z);
        direction(rc, dx, dy, dz, ds);
        const double alphaAff = std::min(detail::maxStep(s, ds), detail::maxStep(z, dz));
        double sigma = 0.0;
        if (min > 0) {
            const double muAff = (s + alphaAff * ds).dot(z + alphaAff * dz) / min;
            sigma = std::pow(std::clamp(muAff / mu, 0.0, 1.0), 3);
            // corrector
            rc = s.cwiseProduct(z) + ds.cwiseProduct(dz) - Vector::Constant(min, sigma * mu);
            direction(rc, dx, dy, dz, ds);
        }
        const double alpha = std::min(1.0, 0.99 * std::min(detail::maxStep(s, ds), detail::maxStep(z, dz)));
        if (!(alpha > 0.0) || !dx.allFinite()) {
            res.status = QpStatus::NumericalFailure;
            break;
        }
        x += alpha * dx;
        y += alpha * dy;
        z += alpha * dz;
        s += alpha * ds;
    }

    if (res.status != QpStatus::Solved) {
        x = bestX;
        y = bestY;
        z = bestZ;
        s = bestS;
        if (bestMerit <= settings.acceptableTolerance) {
            res.status = QpStatus::SolvedInaccurate;
        }
    }
    res.x = std::move(x);
    res.y = std::move(y);
    res.z = std::move(z);
    res.s = std::move(s);
    // report the true constraint violation rather than the IPM slack residual
    const Vector gx = qp.G * res.x - qp.h;
    res.primalResidual = std::max(infNorm(qp.A * res.x - qp.b), min > 0 ? std::max(0.0, gx.maxCoeff()) : 0.0);
    res.dualResidual = infNorm(qp.P * res.x + qp.q + At * res.y + Gt * res.z);
    res.objective = qp.objective(res.x);
    res.relativeGap = (min > 0 ? res.s.dot(res.z) : 0.0) / std::max(1.0, std::abs(res.objective));
    return res;
}

} // namespace detail

/**
 * @brief Primal-dual interior-point method (Mehrotra predictor-corrector) for sparse convex QPs.
 *
 * Never throws on numerical trouble; the outcome is reported in QpResult::status.
 */
inline QpResult solveQp(const QuadraticProgram& qp, const QpSettings& settings = {})
{
    // normalize the cost so the largest objective coefficient is at most one
    double costNorm = detail::infNorm(qp.q);
    for (int k = 0; k < qp.P.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(qp.P, k); it; ++it) {
            costNorm = std::max(costNorm, std::abs(it.value()));
        }
    }
    const double c = 1.0 / std::max(1.0, costNorm);
    if (c == 1.0) {
        return detail::solveQpScaled(qp, settings, 1.0);
    }
    QuadraticProgram scaled = qp;
    scaled.P *= c;
    scaled.q *= c;
    scaled.constant *= c;
    QpResult res = detail::solveQpScaled(scaled, settings, c);
    if (res.x.size() == 0) {
        return res;
    }
    res.y /= c;
    res.z /= c;
    res.dualResidual = detail::infNorm(qp.P * res.x + qp.q + qp.A.transpose() * res.y + qp.G.transpose() * res.z);
    res.objective = qp.objective(res.x);
    res.relativeGap = (qp.numInequalities() > 0 ? res.s.dot(res.z) : 0.0) / std::max(1.0, std::abs(res.objective));
    return res;
}

/**
 * Sparse triplet text export, constraints written as l <= C x <= u with C = [A; G].
 *
 *   nnpsf-qp 1
 *   n <vars> m <rows>
 *   P <nnz>       then "i j value" lines (upper triangle)
 *   q             then n values
 *   C <nnz>       then "i j value" lines
 *   l             then m values (-inf allowed)
 *   u             then m values
 *   constant <c>
 */
inline void writeQpTriplets(std::ostream& out, const QuadraticProgram& qp)
{
    out.precision(17);
    const int n = qp.numVariables();
    const int meq = qp.numEqualities();
    const int m = meq + qp.numInequalities();
    out << "nnpsf-qp 1\n";
    out << "n " << n << " m " << m << '\n';
    std::vector<Triplet> pUpper;
    for (int k = 0; k < qp.P.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(qp.P, k); it; ++it) {
            if (it.row() <= it.col()) {
                pUpper.emplace_back(it.row(), it.col(), it.value());
            }
        }
    }
    out << "P " << pUpper.size() << '\n';
    for (const auto& t : pUpper) {
        out << t.row() << ' ' << t.col() << ' ' << t.value() << '\n';
    }
    out << "q\n";
    for (int i = 0; i < n; ++i) {
        out << qp.q[i] << '\n';
    }
    out << "C " << qp.A.nonZeros() + qp.G.nonZeros() << '\n';
    auto dump = [&](const SparseMatrix& M, int rowOffset) {
        for (int k = 0; k < M.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(M, k); it; ++it) {
                out << rowOffset + it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
            }
        }
    };
    dump(qp.A, 0);
    dump(qp.G, meq);
    out << "l\n";
    for (int i = 0; i < meq; ++i) {
        out << qp.b[i] << '\n';
    }
    for (int i = 0; i < qp.numInequalities(); ++i) {
        out << "-inf\n";
    }
    out << "u\n";
    for (int i = 0; i < meq; ++i) {
        out << qp.b[i] << '\n';
    }
    for (int i = 0; i < qp.numInequalities(); ++i) {
        out << qp.h[i] << '\n';
    }
    out << "constant " << qp.constant << '\n';
}

} // namespace nnpsf
