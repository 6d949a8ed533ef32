#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "nnpsf/model.hpp"
#include "nnpsf/polytope.hpp"

namespace nnpsf {

/**
 * @brief Finite-horizon tracking problem for iLQR.
 *
 * J = sum_{t<T} (x_t - r_t)'Q(x_t - r_t) + u_t'R u_t + (x_T - r_T)'Qf(x_T - r_T)
 *     + rho * sum_{t<=T} sum_j max(0, a_j'x_t - b_j)        (soft state constraints, optional)
 */
struct IlqrSpec {
    int horizon = 20;
    Matrix Q;
    Matrix R;
    Matrix Qf;                    ///< defaults to Q when empty
    std::vector<Vector> reference; ///< r_0..r_T
    Vector uMin;
    Vector uMax;
    double rho = 0.0;
    std::optional<SoftPolytope> stateSet;
    double tolerance = 1e-8; ///< relative cost change
    int maxIterations = 100;
    double regMin = 1e-6;
    double regMax = 1e10;
    double regFactor = 10.0;

    void validate(int nx, int nu) const
    {
        if (horizon < 1 || Q.rows() != nx || Q.cols() != nx || R.rows() != nu || R.cols() != nu) {
            throw DimensionError("IlqrSpec: horizon or cost weights have the wrong shape");
        }
        if (static_cast<int>(reference.size()) != horizon + 1) {
            throw DimensionError("IlqrSpec: reference must hold horizon + 1 states");
        }
        if (uMin.size() != nu || uMax.size() != nu || (uMin.array() > uMax.array()).any()) {
            throw std::invalid_argument("IlqrSpec: invalid control box");
        }
        if (rho < 0.0) {
            throw std::invalid_argument("IlqrSpec: rho must be non-negative");
        }
        if (rho > 0.0 && (!stateSet || stateSet->dim() != nx)) {
            throw std::invalid_argument("IlqrSpec: rho > 0 needs a state polytope");
        }
        Eigen::LLT<Matrix> llt(R);
        if (llt.info() != Eigen::Success || Eigen::SelfAdjointEigenSolver<Matrix>(Q).eigenvalues().minCoeff() < -1e-12) {
            throw std::invalid_argument("IlqrSpec: need Q >= 0 and R > 0");
        }
    }

    [[nodiscard]] const Matrix& terminalWeight() const { return Qf.size() ? Qf : Q; }
};

/// rho * sum_j max(0, a_j'x - b_j)
inline double hingePenalty(const SoftPolytope& set, double rho, const Vector& x)
{
    return rho * (set.F * x - set.b).cwiseMax(0.0).sum();
}

/// Subgradient of hingePenalty; rows exactly on the boundary contribute nothing.
inline Vector hingeGradient(const SoftPolytope& set, double rho, const Vector& x)
{
    const Vector slack = set.F * x - set.b;
    Vector g = Vector::Zero(x.size());
    for (Eigen::Index j = 0; j < slack.size(); ++j) {
        if (slack[j] > 0.0) {
            g += rho * set.F.row(j).transpose();
        }
    }
    return g;
}

/// Running (t < T) or terminal (t == T, u ignored) cost including the soft-constraint term.
inline double stageCost(const IlqrSpec& spec, int t, const Vector& x, const Vector& u)
{
    const Vector e = x - spec.reference[static_cast<std::size_t>(t)];
    double c = t < spec.horizon ? e.dot(spec.Q * e) + u.dot(spec.R * u) : e.dot(spec.terminalWeight() * e);
    if (spec.rho > 0.0) {
        c += hingePenalty(*spec.stateSet, spec.rho, x);
    }
    return c;
}

struct IlqrResult {
    std::vector<Vector> controls; ///< u_0..u_{T-1}
    std::vector<Vector> states;   ///< x_0..x_T
    double cost = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> costTrace; ///< cost after each accepted iteration (first entry: initial)
};

namespace detail {

inline Vector clampBox(const Vector& u, const Vector& lo, const Vector& hi) { return u.cwiseMax(lo).cwiseMin(hi); }

} // namespace detail

/**
 * @brief iLQR over the learned model with control clamping and Levenberg-style regularization.
 *
 * Backward pass linearizes with the analytic network Jacobian. Controls saturated at the box
 * with the step pointing outward get zero feedforward and feedback (clamped directions).
 */
inline IlqrResult ilqrPlan(const LearnedModel& model, const IlqrSpec& spec, const Vector& x0,
                           const std::vector<Vector>& warmStart = {})
{
    const int nx = model.nx();
    const int nu = model.nu();
    spec.validate(nx, nu);
    const int T = spec.horizon;

    std::vector<Vector> u(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        const Vector guess = static_cast<std::size_t>(t) < warmStart.size() ? warmStart[static_cast<std::size_t>(t)]
                             : warmStart.empty()                            ? Vector::Zero(nu)
                                                                            : warmStart.back();
        u[static_cast<std::size_t>(t)] = detail::clampBox(guess, spec.uMin, spec.uMax);
    }

    auto rollout = [&](std::vector<Vector>& states, const std::vector<Vector>& ctrl) {
        states.assign(1, x0);
        double cost = 0.0;
        for (int t = 0; t < T; ++t) {
            cost += stageCost(spec, t, states.back(), ctrl[static_cast<std::size_t>(t)]);
            states.push_back(model.step(states.back(), ctrl[static_cast<std::size_t>(t)]));
        }
        return cost + stageCost(spec, T, states.back(), Vector::Zero(nu));
    };

    IlqrResult res;
    std::vector<Vector> x;
    double cost = rollout(x, u);
    res.costTrace.push_back(cost);
    if (!std::isfinite(cost)) {
        throw NumericalError("ilqrPlan: initial rollout diverged");
    }

    double reg = 0.0;
    std::vector<Vector> kff(static_cast<std::size_t>(T));
    std::vector<Matrix> Kfb(static_cast<std::size_t>(T));
    const Matrix& Qf = spec.terminalWeight();

    for (int iter = 1; iter <= spec.maxIterations; ++iter) {
        res.iterations = iter;
        // backward pass
        bool backwardOk = true;
        {
            const Vector eT = x.back() - spec.reference.back();
            Vector Vx = 2.0 * Qf * eT;
            if (spec.rho > 0.0) {
                Vx += hingeGradient(*spec.stateSet, spec.rho, x.back());
            }
            Matrix Vxx = 2.0 * Qf;
            for (int t = T - 1; t >= 0; --t) {
                const auto ts = static_cast<std::size_t>(t);
                const auto [fx, fu] = model.linearize(x[ts], u[ts]);
                const Vector e = x[ts] - spec.reference[ts];
                Vector lx = 2.0 * spec.Q * e;
                if (spec.rho > 0.0) {
                    lx += hingeGradient(*spec.stateSet, spec.rho, x[ts]);
                }
                const Vector lu = 2.0 * spec.R * u[ts];
                const Vector Qx = lx + fx.transpose() * Vx;
                const Vector Qu = lu + fu.transpose() * Vx;
                const Matrix Qxx = 2.0 * spec.Q + fx.transpose() * Vxx * fx;
                const Matrix Quu = 2.0 * spec.R + fu.transpose() * Vxx * fu;
                const Matrix Qux = fu.transpose() * Vxx * fx;
                const Matrix QuuReg = Quu + reg * Matrix::Identity(nu, nu);
                Eigen::LLT<Matrix> llt(QuuReg);
                if (llt.info() != Eigen::Success) {
                    backwardOk = false;
                    break;
                }
                Vector k = -llt.solve(Qu);
                Matrix K = -llt.solve(Qux);
                for (int i = 0; i < nu; ++i) {
                    const bool atUpper = u[ts][i] >= spec.uMax[i] && k[i] > 0.0;
                    const bool atLower = u[ts][i] <= spec.uMin[i] && k[i] < 0.0;
                    if (atUpper || atLower) {
                        k[i] = 0.0;
                        K.row(i).setZero();
                    }
                }
                Vx = Qx + K.transpose() * Quu * k + K.transpose() * Qu + Qux.transpose() * k;
                Vxx = Qxx + K.transpose() * Quu * K + K.transpose() * Qux + Qux.transpose() * K;
                Vxx = 0.5 * (Vxx + Vxx.transpose()).eval();
                kff[ts] = std::move(k);
                Kfb[ts] = std::move(K);
            }
        }
        if (!backwardOk) {
            reg = std::max(reg * spec.regFactor, spec.regMin);
            if (reg > spec.regMax) {
                break;
            }
            continue;
        }

        // forward pass with backtracking
        bool accepted = false;
        double newCost = cost;
        std::vector<Vector> xNew, uNew(static_cast<std::size_t>(T));
        for (double alpha = 1.0; alpha > 1e-4; alpha *= 0.5) {
            xNew.assign(1, x0);
            double c = 0.0;
            for (int t = 0; t < T; ++t) {
                const auto ts = static_cast<std::size_t>(t);
                uNew[ts] = detail::clampBox(u[ts] + alpha * kff[ts] + Kfb[ts] * (xNew.back() - x[ts]), spec.uMin,
                                            spec.uMax);
                c += stageCost(spec, t, xNew.back(), uNew[ts]);
                xNew.push_back(model.step(xNew.back(), uNew[ts]));
            }
            c += stageCost(spec, T, xNew.back(), Vector::Zero(nu));
            if (std::isfinite(c) && c < cost) {
                newCost = c;
                accepted = true;
                break;
            }
        }

        if (!accepted) {
            reg = std::max(reg * spec.regFactor, spec.regMin);
            if (reg > spec.regMax) {
                res.converged = true; // no descent direction left at any regularization
                break;
            }
            continue;
        }
        const double change = (cost - newCost) / std::max(std::abs(cost), 1e-12);
        x = std::move(xNew);
        u = uNew;
        cost = newCost;
        res.costTrace.push_back(cost);
        reg = reg / spec.regFactor < spec.regMin ? 0.0 : reg / spec.regFactor;
        if (change < spec.tolerance) {
            res.converged = true;
            break;
        }
    }

    if (!std::isfinite(cost)) {
        std::ostringstream os;
        os << "ilqrPlan: cost became non-finite; trace:";
        for (double c : res.costTrace) {
            os << ' ' << c;
        }
        throw NumericalError(os.str());
    }
    res.controls = std::move(u);
    res.states = std::move(x);
    res.cost = cost;
    return res;
}

/// Output of the primary controller at one time step.
struct PrimaryOutput {
    Vector uRef;
    std::vector<Vector> plan; ///< full planned control sequence, plan[0] == uRef
};

/**
 * @brief Receding-horizon wrapper around ilqrPlan, warm-started with the shifted previous plan.
 *
 * The reference is a function of the absolute time step so tracking targets can switch
 * during a run.
 */
class PrimaryController {
public:
    PrimaryController(LearnedModel model, IlqrSpec spec, std::function<Vector(int)> referenceAt)
        : model_(std::move(model)), spec_(std::move(spec)), referenceAt_(std::move(referenceAt))
    {
    }

    PrimaryOutput operator()(int k, const Vector& x)
    {
        spec_.reference.resize(static_cast<std::size_t>(spec_.horizon + 1));
        for (int t = 0; t <= spec_.horizon; ++t) {
            spec_.reference[static_cast<std::size_t>(t)] = referenceAt_(k + t);
        }
        std::vector<Vector> warm;
        if (!previous_.empty()) {
            warm.assign(previous_.begin() + 1, previous_.end());
            warm.push_back(previous_.back());
        }
        IlqrResult plan = ilqrPlan(model_, spec_, x, warm);
        previous_ = plan.controls;
        return {plan.controls.front(), std::move(plan.controls)};
    }

    void reset() { previous_.clear(); }
    [[nodiscard]] const IlqrSpec& spec() const { return spec_; }

private:
    LearnedModel model_;
    IlqrSpec spec_;
    std::function<Vector(int)> referenceAt_;
    std::vector<Vector> previous_;
};

} // namespace nnpsf
