#pragma once

#include <random>
#include <vector>

#include "nnpsf/network.hpp"

namespace nnpsf::testutil {

/// Random ReLU network with the given layer widths (input first), He-style scaling.
inline MlpNetwork randomNetwork(std::mt19937_64& rng, const std::vector<int>& widths, double scale = 1.0)
{
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<DenseLayer> layers;
    for (std::size_t i = 1; i < widths.size(); ++i) {
        DenseLayer layer;
        layer.weight = Matrix(widths[i], widths[i - 1]);
        layer.bias = Vector(widths[i]);
        const double s = scale * std::sqrt(2.0 / widths[i - 1]);
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                layer.weight(r, c) = s * gauss(rng);
            }
            layer.bias[r] = 0.1 * gauss(rng);
        }
        layers.push_back(std::move(layer));
    }
    return MlpNetwork(std::move(layers));
}

inline Vector randomVector(std::mt19937_64& rng, int n, double lo, double hi)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    Vector v(n);
    for (int i = 0; i < n; ++i) {
        v[i] = dist(rng);
    }
    return v;
}

} // namespace nnpsf::testutil
