#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "nnpsf/blt_operator.hpp"
#include "nnpsf/crown.hpp"
#include "nnpsf/polytope.hpp"
#include "nnpsf/qp.hpp"
#include "nnpsf/types.hpp"

namespace nnpsf {

/// Data of one soft-constrained robust filter program over the horizon T = model.horizon().
struct SlsProblem {
    UncertaintyModel model;
    SoftPolytope stateSet;
    SoftPolytope inputSet;
    std::vector<TrustRegion> trustRegions; ///< one per step t in [0, T-1], over [x; u]
    Vector x0;
    Vector uRef;
    double penaltyEps = 1e4;
    double penaltySigma = 1e3;
    double psiMin = 1e-6;

    void validate() const
    {
        const int T = model.horizon();
        if (T < 1) {
            throw DimensionError("SlsProblem: horizon must be at least 1");
        }
        const int nx = model.nx();
        const int nu = model.nu();
        for (const auto& s : model.steps) {
            if (s.A.rows() != nx || s.A.cols() != nx || s.B.rows() != nx || s.B.cols() != nu || s.c.size() != nx
                || s.upperD.rows() != nx || s.upperD.cols() != nx + nu || s.upperd.size() != nx) {
                throw DimensionError("SlsProblem: inconsistent per-step model dimensions");
            }
            if (!s.A.allFinite() || !s.B.allFinite() || !s.c.allFinite() || !s.upperD.allFinite()
                || !s.upperd.allFinite()) {
                throw FormatError("SlsProblem: non-finite model data");
            }
        }
        if (stateSet.dim() != nx || inputSet.dim() != nu) {
            throw DimensionError("SlsProblem: constraint sets do not match nx/nu");
        }
        if (static_cast<int>(trustRegions.size()) != T) {
            throw DimensionError("SlsProblem: need exactly one trust region per step");
        }
        for (const auto& r : trustRegions) {
            if (r.center.size() != nx + nu || !(r.radius > 0.0)) {
                throw DimensionError("SlsProblem: trust region has wrong size or non-positive radius");
            }
        }
        if (x0.size() != nx || uRef.size() != nu) {
            throw DimensionError("SlsProblem: x0 / uRef have wrong length");
        }
        if (!x0.allFinite() || !uRef.allFinite()) {
            throw FormatError("SlsProblem: non-finite x0 or uRef");
        }
        if (!(psiMin > 0.0) || penaltyEps < 0.0 || penaltySigma < 0.0 || model.sigmaW < 0.0) {
            throw std::invalid_argument("SlsProblem: psiMin must be positive and penalties non-negative");
        }
    }
};

/**
 * @brief Index map of the decision vector.
 *
 * Blocks: Phi_x(t, c) for 0 <= c <= t <= T; Phi_u(t, c) for t <= T-1; the strictly lower
 * blocks Psi(t, c), 1 <= c < t <= T; psi_t; h_t; v_t; slacks; then 1-norm epigraph auxiliaries.
 */
struct SlsLayout {
    int nx = 0;
    int nu = 0;
    int horizon = 0;
    int nStateRows = 0;
    int nInputRows = 0;

    int phiXOffset = 0, phiUOffset = 0, psiOffOffset = 0, psiOffset = 0, hOffset = 0, vOffset = 0;
    int epsXOffset = 0, epsUOffset = 0, sigXOffset = 0, sigUOffset = 0, auxOffset = 0;
    int numBase = 0; ///< variables before the auxiliaries
    int numAux = 0;

    SlsLayout() = default;
    SlsLayout(int n, int m, int T, int stateRows, int inputRows)
        : nx(n), nu(m), horizon(T), nStateRows(stateRows), nInputRows(inputRows)
    {
        int off = 0;
        phiXOffset = off;
        off += n * n * (T + 1) * (T + 2) / 2;
        phiUOffset = off;
        off += m * n * T * (T + 1) / 2;
        psiOffOffset = off;
        off += n * n * T * (T - 1) / 2;
        psiOffset = off;
        off += n * T;
        hOffset = off;
        off += n * (T + 1);
        vOffset = off;
        off += m * T;
        epsXOffset = off;
        off += stateRows * (T + 1);
        epsUOffset = off;
        off += inputRows * T;
        sigXOffset = off;
        off += 2 * n * T;
        sigUOffset = off;
        off += 2 * m * T;
        auxOffset = off;
        numBase = off;
    }

    [[nodiscard]] int numVariables() const { return numBase + numAux; }

    [[nodiscard]] int phiX(int t, int c, int r, int k) const { return phiXOffset + (t * (t + 1) / 2 + c) * nx * nx + r * nx + k; }
    [[nodiscard]] int phiU(int t, int c, int r, int k) const { return phiUOffset + (t * (t + 1) / 2 + c) * nu * nx + r * nx + k; }
    /// Strictly lower Psi block (t, c) with 1 <= c < t.
    [[nodiscard]] int psiOff(int t, int c, int r, int k) const
    {
        return psiOffOffset + ((t - 1) * (t - 2) / 2 + (c - 1)) * nx * nx + r * nx + k;
    }
    [[nodiscard]] int psi(int t, int i) const { return psiOffset + t * nx + i; }
    [[nodiscard]] int h(int t, int i) const { return hOffset + t * nx + i; }
    [[nodiscard]] int v(int t, int j) const { return vOffset + t * nu + j; }
    [[nodiscard]] int epsX(int t, int j) const { return epsXOffset + t * nStateRows + j; }
    [[nodiscard]] int epsU(int t, int j) const { return epsUOffset + t * nInputRows + j; }
    [[nodiscard]] int sigX(int t, int j) const { return sigXOffset + t * 2 * nx + j; }
    [[nodiscard]] int sigU(int t, int j) const { return sigUOffset + t * 2 * nu + j; }
};

/// Assembled filter program together with its index map.
struct SlsProgram {
    QuadraticProgram qp;
    SlsLayout layout;
    double psiMin = 1e-6;
};

struct SlsSolution {
    BltOperator phiX; ///< nx x nx blocks
    BltOperator phiU; ///< nu x nx blocks; row T is unused and kept at zero
    BltOperator psi;  ///< nx x nx; Psi(0,0) = I, Psi(t,t) = diag(psi_{t-1})
    std::vector<Vector> psiDiag; ///< psi_t, t in [0, T-1]
    std::vector<Vector> h;       ///< t in [0, T]
    std::vector<Vector> v;       ///< t in [0, T-1]
    std::vector<Vector> epsX;    ///< t in [0, T]
    std::vector<Vector> epsU;    ///< t in [0, T-1]
    std::vector<Vector> sigmaX;  ///< t in [0, T-1]
    std::vector<Vector> sigmaU;  ///< t in [0, T-1]
    double objective = 0.0;
    QpStatus status = QpStatus::NumericalFailure;
    int solverIterations = 0;
    double primalResidual = 0.0;
    double dualResidual = 0.0;
    double relativeGap = 0.0;

    [[nodiscard]] int horizon() const { return phiX.horizon(); }
    [[nodiscard]] bool ok() const { return status == QpStatus::Solved || status == QpStatus::SolvedInaccurate; }
};

namespace detail {

using LinearTerms = std::vector<std::pair<int, double>>;

/// Incremental builder for the sparse program.
class QpBuilder {
public:
    explicit QpBuilder(int numVariables) : numVariables_(numVariables), q_(Vector::Zero(numVariables)) {}

    int addVariable()
    {
        ++numVariables_;
        q_.conservativeResize(numVariables_);
        q_[numVariables_ - 1] = 0.0;
        return numVariables_ - 1;
    }

    void addEquality(const LinearTerms& terms, double rhs)
    {
        for (const auto& [j, a] : terms) {
            if (a != 0.0) {
                eq_.emplace_back(numEq_, j, a);
            }
        }
        eqRhs_.push_back(rhs);
        ++numEq_;
    }

    /// terms <= rhs
    void addInequality(const LinearTerms& terms, double rhs)
    {
        for (const auto& [j, a] : terms) {
            if (a != 0.0) {
                in_.emplace_back(numIn_, j, a);
            }
        }
        inRhs_.push_back(rhs);
        ++numIn_;
    }

    void addQuadratic(int i, int j, double value) { quad_.emplace_back(i, j, value); }
    void addLinear(int i, double value) { q_[i] += value; }
    void addConstant(double c) { constant_ += c; }
    [[nodiscard]] int numVariables() const { return numVariables_; }

    [[nodiscard]] QuadraticProgram build() const
    {
        QuadraticProgram qp;
        const int n = numVariables_;
        qp.q = q_;
        qp.P.resize(n, n);
        qp.P.setFromTriplets(quad_.begin(), quad_.end());
        qp.A.resize(numEq_, n);
        qp.A.setFromTriplets(eq_.begin(), eq_.end());
        qp.b = Eigen::Map<const Vector>(eqRhs_.data(), static_cast<Eigen::Index>(eqRhs_.size()));
        qp.G.resize(numIn_, n);
        qp.G.setFromTriplets(in_.begin(), in_.end());
        qp.h = Eigen::Map<const Vector>(inRhs_.data(), static_cast<Eigen::Index>(inRhs_.size()));
        qp.constant = constant_;
        qp.P.makeCompressed();
        qp.A.makeCompressed();
        qp.G.makeCompressed();
        return qp;
    }

private:
    int numVariables_;
    Vector q_;
    std::vector<Triplet> quad_, eq_, in_;
    std::vector<double> eqRhs_, inRhs_;
    int numEq_ = 0;
    int numIn_ = 0;
    double constant_ = 0.0;
};

/**
 * Epigraph variables s >= |expr| for linear expressions without constant term.
 * Expressions a'Phi(t,c)e_k that differ only by the sign or scale of a share one variable.
 */
class AbsEpigraphCache {
public:
    explicit AbsEpigraphCache(QpBuilder& builder) : builder_(builder) {}

    /// Returns (aux index, scale) so that scale * aux >= |a' M[:, k]| with M = Phi_x or Phi_u block.
    std::pair<int, double> rowProduct(char op, int t, int c, int k, const Vector& a, const LinearTerms& terms)
    {
        const double scale = a.cwiseAbs().maxCoeff();
        Vector dir = a / scale;
        for (Eigen::Index i = 0; i < dir.size(); ++i) {
            if (dir[i] != 0.0) {
                if (dir[i] < 0.0) {
                    dir = -dir;
                }
                break;
            }
        }
        Key key{op, t, c, k, std::vector<double>(dir.data(), dir.data() + dir.size())};
        auto it = cache_.find(key);
        if (it != cache_.end()) {
            return {it->second, scale};
        }
        LinearTerms scaled;
        scaled.reserve(terms.size());
        for (const auto& [j, coef] : terms) {
            scaled.emplace_back(j, coef / scale);
        }
        const int aux = bound(scaled);
        cache_.emplace(std::move(key), aux);
        return {aux, scale};
    }

    /// Fresh auxiliary s with s >= expr and s >= -expr.
    int bound(const LinearTerms& expr)
    {
        const int aux = builder_.addVariable();
        LinearTerms pos = expr;
        pos.emplace_back(aux, -1.0);
        builder_.addInequality(pos, 0.0);
        LinearTerms neg;
        neg.reserve(expr.size() + 1);
        for (const auto& [j, coef] : expr) {
            neg.emplace_back(j, -coef);
        }
        neg.emplace_back(aux, -1.0);
        builder_.addInequality(neg, 0.0);
        ++count_;
        return aux;
    }

    [[nodiscard]] int count() const { return count_; }

private:
    using Key = std::tuple<char, int, int, int, std::vector<double>>;
    QpBuilder& builder_;
    std::map<Key, int> cache_;
    int count_ = 0;
};

} // namespace detail

/**
 * @brief Builds the soft-constrained robust filter QP.
 *
 * Encodes the SLS affine constraint with the filter Psi, the nominal trajectory (h, v),
 * the envelope over-approximation rows that size psi, and the 1-norm tightened soft
 * state / input / trust-region rows. Objective |v_0 - uRef|^2 + M_eps sum(eps) + M_sigma sum(sigma).
 */
inline SlsProgram assemble(const SlsProblem& problem)
{
    problem.validate();
    const auto& model = problem.model;
    const int T = model.horizon();
    const int n = model.nx();
    const int m = model.nu();
    const auto& X = problem.stateSet;
    const auto& U = problem.inputSet;

    SlsLayout L(n, m, T, X.rows(), U.rows());
    detail::QpBuilder qb(L.numBase);
    detail::AbsEpigraphCache abs(qb);
    using detail::LinearTerms;

    // SLS affine constraint, block (t, c): Phi_x(t,c) - A_{t-1} Phi_x(t-1,c) - B_{t-1} Phi_u(t-1,c) = Psi(t,c)
    for (int t = 0; t <= T; ++t) {
        for (int c = 0; c <= t; ++c) {
            for (int r = 0; r < n; ++r) {
                for (int k = 0; k < n; ++k) {
                    LinearTerms row{{L.phiX(t, c, r, k), 1.0}};
                    double rhs = 0.0;
                    if (t >= 1 && c <= t - 1) {
                        const auto& s = model.steps[static_cast<std::size_t>(t - 1)];
                        for (int l = 0; l < n; ++l) {
                            row.emplace_back(L.phiX(t - 1, c, l, k), -s.A(r, l));
                        }
                        for (int j = 0; j < m; ++j) {
                            row.emplace_back(L.phiU(t - 1, c, j, k), -s.B(r, j));
                        }
                    }
                    if (t == 0) {
                        rhs = r == k ? 1.0 : 0.0;
                    } else if (c == t) {
                        if (r == k) {
                            row.emplace_back(L.psi(t - 1, r), -1.0);
                        }
                    } else if (c >= 1) {
                        row.emplace_back(L.psiOff(t, c, r, k), -1.0);
                    }
                    qb.addEquality(row, rhs);
                }
            }
        }
    }

    // nominal trajectory
    for (int i = 0; i < n; ++i) {
        qb.addEquality({{L.h(0, i), 1.0}}, problem.x0[i]);
    }
    for (int t = 0; t < T; ++t) {
        const auto& s = model.steps[static_cast<std::size_t>(t)];
        for (int r = 0; r < n; ++r) {
            LinearTerms row{{L.h(t + 1, r), 1.0}};
            for (int l = 0; l < n; ++l) {
                row.emplace_back(L.h(t, l), -s.A(r, l));
            }
            for (int j = 0; j < m; ++j) {
                row.emplace_back(L.v(t, j), -s.B(r, j));
            }
            qb.addEquality(row, s.c[r]);
        }
    }

    // Phi(t, c) row entry l, column k: state rows first, then input rows
    auto phiIndex = [&](int t, int c, int l, int k) { return l < n ? L.phiX(t, c, l, k) : L.phiU(t, c, l - n, k); };

    // envelope over-approximation: for both the upper (D = Dbar) and lower (D = Dlow) side
    //   sigma_w + sign * e_i'(D y_t + d) + sum_{c=1..t} |e_i'(D Phi(t,c) - Psi(t+1,c))|_1 <= psi_{t,i}
    for (int t = 0; t < T; ++t) {
        const auto& s = model.steps[static_cast<std::size_t>(t)];
        for (int side = 0; side < 2; ++side) {
            const Matrix& D = side == 0 ? s.upperD : s.lowerD;
            const Vector& d = side == 0 ? s.upperd : s.lowerd;
            const double sign = side == 0 ? 1.0 : -1.0;
            for (int i = 0; i < n; ++i) {
                LinearTerms row{{L.psi(t, i), -1.0}};
                for (int l = 0; l < n + m; ++l) {
                    const int var = l < n ? L.h(t, l) : L.v(t, l - n);
                    row.emplace_back(var, sign * D(i, l));
                }
                for (int c = 1; c <= t; ++c) {
                    for (int k = 0; k < n; ++k) {
                        LinearTerms expr;
                        for (int l = 0; l < n + m; ++l) {
                            if (D(i, l) != 0.0) {
                                expr.emplace_back(phiIndex(t, c, l, k), D(i, l));
                            }
                        }
                        expr.emplace_back(L.psiOff(t + 1, c, i, k), -1.0);
                        row.emplace_back(abs.bound(expr), 1.0);
                    }
                }
                qb.addInequality(row, -model.sigmaW - sign * d[i]);
            }
        }
    }

    // tightened soft row: a'y_t + sum_{c=1..t} |a' Phi(t,c)|_1 - slack <= b
    auto tightenedRow = [&](char op, int t, const Vector& a, double b, int slackIndex) {
        LinearTerms row{{slackIndex, -1.0}};
        const int dim = static_cast<int>(a.size());
        for (int l = 0; l < dim; ++l) {
            row.emplace_back(op == 'x' ? L.h(t, l) : L.v(t, l), a[l]);
        }
        if (a.cwiseAbs().maxCoeff() > 0.0) {
            for (int c = 1; c <= t; ++c) {
                for (int k = 0; k < n; ++k) {
                    LinearTerms expr;
                    for (int l = 0; l < dim; ++l) {
                        if (a[l] != 0.0) {
                            expr.emplace_back(op == 'x' ? L.phiX(t, c, l, k) : L.phiU(t, c, l, k), a[l]);
                        }
                    }
                    const auto [aux, scale] = abs.rowProduct(op, t, c, k, a, expr);
                    row.emplace_back(aux, scale);
                }
            }
        }
        qb.addInequality(row, b);
    };

    for (int t = 0; t <= T; ++t) {
        for (int j = 0; j < X.rows(); ++j) {
            tightenedRow('x', t, X.F.row(j).transpose(), X.b[j], L.epsX(t, j));
        }
    }
    for (int t = 0; t < T; ++t) {
        for (int j = 0; j < U.rows(); ++j) {
            tightenedRow('u', t, U.F.row(j).transpose(), U.b[j], L.epsU(t, j));
        }
    }
    for (int t = 0; t < T; ++t) {
        const auto& region = problem.trustRegions[static_cast<std::size_t>(t)];
        const SoftPolytope xBall = SoftPolytope::ball(region.center.head(n), region.radius);
        const SoftPolytope uBall = SoftPolytope::ball(region.center.tail(m), region.radius);
        for (int j = 0; j < xBall.rows(); ++j) {
            tightenedRow('x', t, xBall.F.row(j).transpose(), xBall.b[j], L.sigX(t, j));
        }
        for (int j = 0; j < uBall.rows(); ++j) {
            tightenedRow('u', t, uBall.F.row(j).transpose(), uBall.b[j], L.sigU(t, j));
        }
    }

    // slacks >= 0, psi >= psi_min
    for (int j = L.epsXOffset; j < L.auxOffset; ++j) {
        qb.addInequality({{j, -1.0}}, 0.0);
    }
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < n; ++i) {
            qb.addInequality({{L.psi(t, i), -1.0}}, -problem.psiMin);
        }
    }

    // objective
    for (int j = 0; j < m; ++j) {
        qb.addQuadratic(L.v(0, j), L.v(0, j), 2.0);
        qb.addLinear(L.v(0, j), -2.0 * problem.uRef[j]);
    }
    qb.addConstant(problem.uRef.squaredNorm());
    for (int j = L.epsXOffset; j < L.sigXOffset; ++j) {
        qb.addLinear(j, problem.penaltyEps);
    }
    for (int j = L.sigXOffset; j < L.auxOffset; ++j) {
        qb.addLinear(j, problem.penaltySigma);
    }

    L.numAux = abs.count();
    return {qb.build(), L, problem.psiMin};
}

/// Reads the structured solution out of a primal vector.
inline SlsSolution unpackSolution(const SlsLayout& L, const Vector& x)
{
    const int T = L.horizon;
    const int n = L.nx;
    const int m = L.nu;
    SlsSolution sol;
    sol.phiX = BltOperator(T, n, n);
    sol.phiU = BltOperator(T, m, n);
    sol.psi = BltOperator(T, n, n);
    for (int t = 0; t <= T; ++t) {
        for (int c = 0; c <= t; ++c) {
            for (int r = 0; r < n; ++r) {
                for (int k = 0; k < n; ++k) {
                    sol.phiX.block(t, c)(r, k) = x[L.phiX(t, c, r, k)];
                }
            }
            if (t < T) {
                for (int r = 0; r < m; ++r) {
                    for (int k = 0; k < n; ++k) {
                        sol.phiU.block(t, c)(r, k) = x[L.phiU(t, c, r, k)];
                    }
                }
            }
        }
    }
    sol.psi.block(0, 0).setIdentity();
    for (int t = 0; t < T; ++t) {
        Vector p(n);
        for (int i = 0; i < n; ++i) {
            p[i] = x[L.psi(t, i)];
        }
        sol.psi.block(t + 1, t + 1) = p.asDiagonal();
        sol.psiDiag.push_back(std::move(p));
    }
    for (int t = 2; t <= T; ++t) {
        for (int c = 1; c < t; ++c) {
            for (int r = 0; r < n; ++r) {
                for (int k = 0; k < n; ++k) {
                    sol.psi.block(t, c)(r, k) = x[L.psiOff(t, c, r, k)];
                }
            }
        }
    }
    auto slice = [&](int offset, int len) { return Vector(x.segment(offset, len)); };
    for (int t = 0; t <= T; ++t) {
        sol.h.push_back(slice(L.h(t, 0), n));
        sol.epsX.push_back(slice(L.epsX(t, 0), L.nStateRows));
    }
    for (int t = 0; t < T; ++t) {
        sol.v.push_back(slice(L.v(t, 0), m));
        sol.epsU.push_back(slice(L.epsU(t, 0), L.nInputRows));
        sol.sigmaX.push_back(slice(L.sigX(t, 0), 2 * n));
        sol.sigmaU.push_back(slice(L.sigU(t, 0), 2 * m));
    }
    return sol;
}

/// Solves the assembled program. Solver trouble is reported through SlsSolution::status.
inline SlsSolution solve(const SlsProgram& program, const QpSettings& settings = {})
{
    const QpResult res = solveQp(program.qp, settings);
    SlsSolution sol = unpackSolution(program.layout, res.x);
    sol.objective = res.objective;
    sol.status = res.status;
    sol.solverIterations = res.iterations;
    sol.primalResidual = res.primalResidual;
    sol.dualResidual = res.dualResidual;
    sol.relativeGap = res.relativeGap;
    return sol;
}

/// Largest slack entry; entries below `tolerance` count as exactly zero.
inline double maxSlack(const SlsSolution& sol, double tolerance = 1e-7)
{
    double worst = 0.0;
    for (const auto* group : {&sol.epsX, &sol.epsU, &sol.sigmaX, &sol.sigmaU}) {
        for (const auto& vec : *group) {
            if (vec.size() > 0) {
                worst = std::max(worst, vec.maxCoeff());
            }
        }
    }
    return worst < tolerance ? 0.0 : worst;
}

/// |[I - ZA, -ZB][Phi_x; Phi_u] - Psi|_inf evaluated block by block.
inline double affineResidual(const UncertaintyModel& model, const SlsSolution& sol)
{
    const int T = sol.horizon();
    double worst = 0.0;
    for (int t = 0; t <= T; ++t) {
        for (int c = 0; c <= t; ++c) {
            Matrix res = sol.phiX.block(t, c) - sol.psi.block(t, c);
            if (t >= 1 && c <= t - 1) {
                const auto& s = model.steps[static_cast<std::size_t>(t - 1)];
                res -= s.A * sol.phiX.block(t - 1, c) + s.B * sol.phiU.block(t - 1, c);
            }
            worst = std::max(worst, res.cwiseAbs().maxCoeff());
        }
    }
    return worst;
}

/**
 * @brief Causal realization of u = K(x - h) + v with K = Phi_u Phi_x^{-1}.
 *
 * Phi_x is never inverted; the virtual disturbances are recovered step by step from the
 * observed error states, which needs the diagonal blocks diag(psi) to be invertible.
 * Holds per-rollout state: call apply() with t = 0, 1, ... and reset() between rollouts.
 */
class FeedbackPolicy {
public:
    FeedbackPolicy() = default;

    explicit FeedbackPolicy(SlsSolution solution, double psiMin = 1e-6) : sol_(std::move(solution))
    {
        for (const auto& p : sol_.psiDiag) {
            // the solver may land a hair below the floor; anything positive at that level is fine
            if (!(p.minCoeff() >= psiMin * (1.0 - 1e-3)) || !(p.minCoeff() > 0.0)) {
                throw NumericalError("FeedbackPolicy: psi entry below psi_min");
            }
        }
    }

    [[nodiscard]] int horizon() const { return sol_.horizon(); }
    [[nodiscard]] const SlsSolution& solution() const { return sol_; }
    [[nodiscard]] const std::vector<Vector>& reconstructed() const { return wTilde_; }

    void reset()
    {
        next_ = 0;
        wTilde_.clear();
    }

    /// Control for step t given the observed state x_t.
    Vector apply(int t, const Vector& x)
    {
        if (t != next_) {
            throw std::logic_error("FeedbackPolicy: expected step " + std::to_string(next_) + ", got "
                                   + std::to_string(t));
        }
        if (t >= horizon()) {
            throw std::out_of_range("FeedbackPolicy: step beyond the horizon");
        }
        if (t > 0) {
            observe(t, x);
        }
        Vector u = sol_.v[static_cast<std::size_t>(t)];
        for (int i = 1; i <= t; ++i) {
            u += sol_.phiU.block(t, i) * wTilde_[static_cast<std::size_t>(i - 1)];
        }
        ++next_;
        return u;
    }

    /// Reconstructs the last virtual disturbance from the terminal state x_T.
    const Vector& observeTerminal(const Vector& x)
    {
        if (next_ != horizon()) {
            throw std::logic_error("FeedbackPolicy: terminal state observed before the last control");
        }
        observe(horizon(), x);
        ++next_;
        return wTilde_.back();
    }

private:
    void observe(int t, const Vector& x)
    {
        Vector acc = x - sol_.h[static_cast<std::size_t>(t)];
        for (int i = 1; i < t; ++i) {
            acc -= sol_.phiX.block(t, i) * wTilde_[static_cast<std::size_t>(i - 1)];
        }
        wTilde_.push_back(acc.cwiseQuotient(sol_.psiDiag[static_cast<std::size_t>(t - 1)]));
    }

    SlsSolution sol_;
    int next_ = 0;
    std::vector<Vector> wTilde_;
};

} // namespace nnpsf
