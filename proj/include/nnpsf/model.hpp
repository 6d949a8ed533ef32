#pragma once

#include <string>
#include <vector>

#include "nnpsf/network.hpp"
#include "nnpsf/types.hpp"

namespace nnpsf {

/// x+ = A x + B u + f(x, u): linear plant plus learned residual network.
struct LearnedModel {
    LinearPlant plant;
    MlpNetwork net;

    LearnedModel() = default;
    LearnedModel(LinearPlant p, MlpNetwork n) : plant(std::move(p)), net(std::move(n))
    {
        if (net.inputDim() != plant.nx() + plant.nu() || net.outputDim() != plant.nx()) {
            throw DimensionError("LearnedModel: network dimensions do not match the plant");
        }
    }

    [[nodiscard]] int nx() const { return plant.nx(); }
    [[nodiscard]] int nu() const { return plant.nu(); }

    [[nodiscard]] Vector step(const Vector& x, const Vector& u) const
    {
        return plant.A * x + plant.B * u + net.forward(stack(x, u));
    }

    /// (df/dx, df/du) of the full one-step map.
    [[nodiscard]] std::pair<Matrix, Matrix> linearize(const Vector& x, const Vector& u) const
    {
        const Matrix J = net.jacobian(stack(x, u));
        return {plant.A + J.leftCols(nx()), plant.B + J.rightCols(nu())};
    }
};

/// Disturbance-free rollout x_{t+1} = A x_t + B u_t + f(x_t, u_t), x_0 = x0.
inline std::vector<Vector> rolloutNominal(const LearnedModel& model, const Vector& x0, const std::vector<Vector>& controls)
{
    std::vector<Vector> states;
    states.reserve(controls.size() + 1);
    states.push_back(x0);
    for (std::size_t t = 0; t < controls.size(); ++t) {
        Vector next = model.step(states.back(), controls[t]);
        if (!next.allFinite()) {
            throw NumericalError("rolloutNominal: non-finite state at step " + std::to_string(t + 1));
        }
        states.push_back(std::move(next));
    }
    return states;
}

} // namespace nnpsf
