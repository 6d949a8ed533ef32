#pragma once

#include <cmath>
#include <ostream>
#include <vector>

#include "nnpsf/network.hpp"
#include "nnpsf/types.hpp"

namespace nnpsf {

/// l-infinity ball B(center, radius) over the stacked state-input vector.
struct TrustRegion {
    Vector center;
    double radius = 0.0;

    [[nodiscard]] bool contains(const Vector& z, double tol = 0.0) const
    {
        return ((z - center).cwiseAbs().array() <= radius + tol).all();
    }
};

/// A_L z + b_L <= f(z) <= A_U z + b_U over a trust region.
struct LinearBounds {
    Matrix lowerA;
    Vector lowerB;
    Matrix upperA;
    Vector upperB;

    [[nodiscard]] Vector lower(const Vector& z) const { return lowerA * z + lowerB; }
    [[nodiscard]] Vector upper(const Vector& z) const { return upperA * z + upperB; }
};

namespace detail {

/// Linear relaxation of one ReLU neuron given its pre-activation interval [l, u].
struct ReluRelaxation {
    double upperSlope = 0.0;
    double upperIntercept = 0.0;
    double lowerSlope = 0.0;
};

inline ReluRelaxation relaxRelu(double l, double u)
{
    if (u <= 0.0) {
        return {};
    }
    if (l >= 0.0) {
        return {1.0, 0.0, 1.0};
    }
    const double slope = u / (u - l);
    // area-minimising lower line: identity when the positive side dominates
    return {slope, -slope * l, u >= -l ? 1.0 : 0.0};
}

/// Backward propagation of layer `target`'s pre-activation to an affine function of the input.
inline std::pair<Matrix, Vector> backSubstitute(const MlpNetwork& net, std::size_t target,
                                                const std::vector<std::vector<ReluRelaxation>>& relax, bool upper)
{
    const auto& layers = net.layers();
    Matrix coef = layers[target].weight;
    Vector offset = layers[target].bias;
    for (std::size_t j = target; j-- > 0;) {
        // coef acts on ReLU(y_j)
        const auto& neurons = relax[j];
        for (Eigen::Index n = 0; n < coef.cols(); ++n) {
            const auto& rl = neurons[static_cast<std::size_t>(n)];
            for (Eigen::Index r = 0; r < coef.rows(); ++r) {
                const double c = coef(r, n);
                if (c == 0.0) {
                    continue;
                }
                if ((c > 0.0) == upper) {
                    offset[r] += c * rl.upperIntercept;
                    coef(r, n) = c * rl.upperSlope;
                } else {
                    coef(r, n) = c * rl.lowerSlope;
                }
            }
        }
        offset += coef * layers[j].bias;
        coef = coef * layers[j].weight;
    }
    return {std::move(coef), std::move(offset)};
}

} // namespace detail

/**
 * @brief Sound linear lower/upper bounds of the network output over an l-inf trust region.
 *
 * Backward (CROWN-style) bound propagation. Intermediate pre-activation intervals are
 * computed with the same backward pass applied to every truncated sub-network.
 */
inline LinearBounds relax(const MlpNetwork& net, const TrustRegion& region)
{
    if (net.empty()) {
        throw DimensionError("relax: empty network");
    }
    if (region.center.size() != net.inputDim()) {
        throw DimensionError("relax: trust-region center has length " + std::to_string(region.center.size())
                             + ", network expects " + std::to_string(net.inputDim()));
    }
    if (!(region.radius > 0.0) || !std::isfinite(region.radius)) {
        throw std::invalid_argument("relax: trust-region radius must be positive and finite");
    }
    if (!region.center.allFinite()) {
        throw FormatError("relax: trust-region center is not finite");
    }

    const std::size_t hidden = net.numLayers() - 1;
    std::vector<std::vector<detail::ReluRelaxation>> relaxations(hidden);
    for (std::size_t k = 0; k < hidden; ++k) {
        const auto [lowCoef, lowOff] = detail::backSubstitute(net, k, relaxations, false);
        const auto [upCoef, upOff] = detail::backSubstitute(net, k, relaxations, true);
        const Vector lo = lowCoef * region.center + lowOff - region.radius * lowCoef.cwiseAbs().rowwise().sum();
        const Vector hi = upCoef * region.center + upOff + region.radius * upCoef.cwiseAbs().rowwise().sum();
        auto& layerRelax = relaxations[k];
        layerRelax.resize(static_cast<std::size_t>(lo.size()));
        for (Eigen::Index n = 0; n < lo.size(); ++n) {
            layerRelax[static_cast<std::size_t>(n)] = detail::relaxRelu(lo[n], hi[n]);
        }
    }

    auto [lowerA, lowerB] = detail::backSubstitute(net, hidden, relaxations, false);
    auto [upperA, upperB] = detail::backSubstitute(net, hidden, relaxations, true);
    return {std::move(lowerA), std::move(lowerB), std::move(upperA), std::move(upperB)};
}

/// Per-step bounds along a reference trajectory; entry t is relax(net, regions[t]).
inline std::vector<LinearBounds> boundsAlongTrajectory(const MlpNetwork& net, const std::vector<TrustRegion>& regions)
{
    std::vector<LinearBounds> out;
    out.reserve(regions.size());
    for (const auto& region : regions) {
        out.push_back(relax(net, region));
    }
    return out;
}

/**
 * @brief LTV nominal model plus symmetric envelope of the residual, one entry per step.
 *
 * x_{t+1} = A_t x_t + B_t u_t + c_t + Delta_t(x_t, u_t) + w_t with
 * -(Dbar_t z + dbar_t) <= Delta_t <= Dbar_t z + dbar_t inside the trust region.
 */
struct UncertaintyModel {
    struct Step {
        Matrix A;
        Matrix B;
        Vector c;
        Matrix upperD; ///< [Dbar^x  Dbar^u]
        Vector upperd;
        Matrix lowerD; ///< [Dlow^x  Dlow^u] == -upperD
        Vector lowerd;
    };

    std::vector<Step> steps;
    double sigmaW = 0.0;

    [[nodiscard]] int horizon() const { return static_cast<int>(steps.size()); }
    [[nodiscard]] int nx() const { return static_cast<int>(steps.front().A.rows()); }
    [[nodiscard]] int nu() const { return static_cast<int>(steps.front().B.cols()); }
};

/// Merges the bound means into the plant and keeps the half-gaps as the uncertainty envelope.
inline UncertaintyModel extractUncertainty(const LinearPlant& plant, const std::vector<LinearBounds>& bounds,
                                           double sigma_w)
{
    const int nx = plant.nx();
    const int nu = plant.nu();
    if (plant.A.cols() != nx || plant.B.rows() != nx) {
        throw DimensionError("extractUncertainty: plant A must be nx x nx and B nx x nu");
    }
    if (sigma_w < 0.0) {
        throw std::invalid_argument("extractUncertainty: sigma_w must be non-negative");
    }
    UncertaintyModel model;
    model.sigmaW = sigma_w;
    model.steps.reserve(bounds.size());
    for (const auto& b : bounds) {
        if (b.lowerA.rows() != nx || b.lowerA.cols() != nx + nu || b.upperA.rows() != nx
            || b.upperA.cols() != nx + nu || b.lowerB.size() != nx || b.upperB.size() != nx) {
            throw DimensionError("extractUncertainty: bounds do not match the plant dimensions");
        }
        UncertaintyModel::Step s;
        const Matrix mean = (b.lowerA + b.upperA) / 2.0;
        s.A = plant.A + mean.leftCols(nx);
        s.B = plant.B + mean.rightCols(nu);
        s.c = (b.lowerB + b.upperB) / 2.0;
        s.upperD = (b.upperA - b.lowerA) / 2.0;
        s.upperd = (b.upperB - b.lowerB) / 2.0;
        s.lowerD = -s.upperD;
        s.lowerd = -s.upperd;
        model.steps.push_back(std::move(s));
    }
    return model;
}

/// True when every lower envelope is the bitwise negation of the upper one.
inline bool envelopeIsSymmetric(const UncertaintyModel& model)
{
    for (const auto& s : model.steps) {
        if (!(s.lowerD.array() == -s.upperD.array()).all() || !(s.lowerd.array() == -s.upperd.array()).all()) {
            return false;
        }
    }
    return true;
}

/// Debug dump: one row per (step, row, col) with the bound coefficients and the row offsets.
inline void writeBoundsCsv(std::ostream& out, const std::vector<LinearBounds>& bounds)
{
    out << "step,row,col,A_L,A_U,b_L,b_U\n";
    out.precision(17);
    for (std::size_t t = 0; t < bounds.size(); ++t) {
        const auto& b = bounds[t];
        for (Eigen::Index r = 0; r < b.lowerA.rows(); ++r) {
            for (Eigen::Index c = 0; c < b.lowerA.cols(); ++c) {
                out << t << ',' << r << ',' << c << ',' << b.lowerA(r, c) << ',' << b.upperA(r, c) << ','
                    << b.lowerB[r] << ',' << b.upperB[r] << '\n';
            }
        }
    }
}

} // namespace nnpsf
