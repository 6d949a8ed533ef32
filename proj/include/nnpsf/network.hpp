#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nnpsf/types.hpp"

namespace nnpsf {

/// One affine layer y = W a + b. Hidden layers are followed by ReLU, the last one is not.
struct DenseLayer {
    Matrix weight;
    Vector bias;
};

/**
 * @brief Feedforward ReLU network f: R^{nx+nu} -> R^{nx}.
 *
 * Immutable after construction. All hidden layers use ReLU, the output layer is affine.
 */
class MlpNetwork {
public:
    MlpNetwork() = default;

    explicit MlpNetwork(std::vector<DenseLayer> layers) : layers_(std::move(layers))
    {
        validate();
    }

    [[nodiscard]] int inputDim() const { return static_cast<int>(layers_.front().weight.cols()); }
    [[nodiscard]] int outputDim() const { return static_cast<int>(layers_.back().weight.rows()); }
    [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }
    [[nodiscard]] std::size_t numLayers() const { return layers_.size(); }
    [[nodiscard]] bool empty() const { return layers_.empty(); }

    [[nodiscard]] Vector forward(const Vector& z) const
    {
        checkInput(z);
        Vector a = z;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            Vector y = layers_[l].weight * a + layers_[l].bias;
            if (l + 1 < layers_.size()) {
                a = y.cwiseMax(0.0);
            } else {
                a = std::move(y);
            }
        }
        return a;
    }

    /// Column-wise forward pass over a batch of inputs.
    [[nodiscard]] Matrix forwardBatch(const Matrix& Z) const
    {
        if (layers_.empty() || Z.rows() != inputDim()) {
            throw DimensionError("MlpNetwork: batch has " + std::to_string(Z.rows()) + " rows, expected "
                                 + std::to_string(inputDim()));
        }
        Matrix a = Z;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            Matrix y = layers_[l].weight * a;
            y.colwise() += layers_[l].bias;
            a = l + 1 < layers_.size() ? Matrix(y.cwiseMax(0.0)) : std::move(y);
        }
        return a;
    }

    /// d forward / dz. A neuron with pre-activation exactly 0 is treated as inactive.
    [[nodiscard]] Matrix jacobian(const Vector& z) const
    {
        checkInput(z);
        Vector a = z;
        Matrix jac = Matrix::Identity(inputDim(), inputDim());
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Vector y = layers_[l].weight * a + layers_[l].bias;
            jac = layers_[l].weight * jac;
            if (l + 1 < layers_.size()) {
                for (Eigen::Index i = 0; i < y.size(); ++i) {
                    if (!(y[i] > 0.0)) {
                        jac.row(i).setZero();
                    }
                }
                a = y.cwiseMax(0.0);
            }
        }
        return jac;
    }

    /// A network whose output is identically zero (linear-plant special case).
    static MlpNetwork zero(int input_dim, int output_dim)
    {
        return MlpNetwork({DenseLayer{Matrix::Zero(output_dim, input_dim), Vector::Zero(output_dim)}});
    }

private:
    void checkInput(const Vector& z) const
    {
        if (layers_.empty()) {
            throw std::logic_error("MlpNetwork: evaluating an empty network");
        }
        if (z.size() != inputDim()) {
            throw DimensionError("MlpNetwork: input has length " + std::to_string(z.size()) + ", expected "
                                 + std::to_string(inputDim()));
        }
    }

    void validate() const
    {
        if (layers_.empty()) {
            throw DimensionError("MlpNetwork: at least one layer is required");
        }
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& layer = layers_[l];
            if (layer.weight.rows() == 0 || layer.weight.cols() == 0) {
                throw DimensionError("MlpNetwork: layer " + std::to_string(l) + " has an empty weight matrix");
            }
            if (layer.bias.size() != layer.weight.rows()) {
                throw DimensionError("MlpNetwork: layer " + std::to_string(l) + " bias length does not match rows");
            }
            if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
                throw DimensionError("MlpNetwork: layer " + std::to_string(l) + " has "
                                     + std::to_string(layer.weight.cols()) + " columns but layer "
                                     + std::to_string(l - 1) + " has " + std::to_string(layers_[l - 1].weight.rows())
                                     + " outputs");
            }
            if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
                throw FormatError("MlpNetwork: layer " + std::to_string(l) + " contains a non-finite entry");
            }
        }
    }

    std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// Weight-file (JSON) I/O
// ---------------------------------------------------------------------------

namespace detail {

inline double finiteNumber(const nlohmann::json& j, const std::string& where)
{
    if (!j.is_number()) {
        throw FormatError("weight file: expected a number at " + where);
    }
    const double v = j.get<double>();
    if (!std::isfinite(v)) {
        throw FormatError("weight file: non-finite entry at " + where);
    }
    return v;
}

} // namespace detail

inline MlpNetwork networkFromJson(const nlohmann::json& doc)
{
    if (!doc.is_object()) {
        throw FormatError("weight file: top level must be an object");
    }
    for (const char* key : {"input_dim", "output_dim", "activation", "layers"}) {
        if (!doc.contains(key)) {
            throw FormatError(std::string("weight file: missing key '") + key + "'");
        }
    }
    if (!doc["activation"].is_string() || doc["activation"].get<std::string>() != "relu") {
        throw FormatError("weight file: unsupported activation " + doc["activation"].dump());
    }
    if (!doc["input_dim"].is_number_integer() || !doc["output_dim"].is_number_integer()) {
        throw FormatError("weight file: input_dim/output_dim must be integers");
    }
    const auto& jl = doc["layers"];
    if (!jl.is_array() || jl.empty()) {
        throw FormatError("weight file: 'layers' must be a non-empty array");
    }

    std::vector<DenseLayer> layers;
    layers.reserve(jl.size());
    for (std::size_t l = 0; l < jl.size(); ++l) {
        const auto& entry = jl[l];
        const std::string where = "layers[" + std::to_string(l) + "]";
        if (!entry.is_object() || !entry.contains("weights") || !entry.contains("bias")) {
            throw FormatError("weight file: " + where + " needs 'weights' and 'bias'");
        }
        const auto& jw = entry["weights"];
        const auto& jb = entry["bias"];
        if (!jw.is_array() || jw.empty() || !jw[0].is_array() || !jb.is_array()) {
            throw FormatError("weight file: " + where + " has malformed arrays");
        }
        const auto rows = static_cast<Eigen::Index>(jw.size());
        const auto cols = static_cast<Eigen::Index>(jw[0].size());
        DenseLayer layer{Matrix(rows, cols), Vector(static_cast<Eigen::Index>(jb.size()))};
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto& row = jw[static_cast<std::size_t>(r)];
            if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
                throw DimensionError("weight file: " + where + " has ragged weight rows");
            }
            for (Eigen::Index c = 0; c < cols; ++c) {
                layer.weight(r, c) = detail::finiteNumber(row[static_cast<std::size_t>(c)], where + ".weights");
            }
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
            layer.bias[r] = detail::finiteNumber(jb[static_cast<std::size_t>(r)], where + ".bias");
        }
        layers.push_back(std::move(layer));
    }

    MlpNetwork net(std::move(layers));
    if (net.inputDim() != doc["input_dim"].get<int>() || net.outputDim() != doc["output_dim"].get<int>()) {
        throw DimensionError("weight file: declared input_dim/output_dim disagree with the layer shapes");
    }
    return net;
}

inline nlohmann::json networkToJson(const MlpNetwork& net)
{
    nlohmann::json doc;
    doc["input_dim"] = net.inputDim();
    doc["output_dim"] = net.outputDim();
    doc["activation"] = "relu";
    doc["layers"] = nlohmann::json::array();
    for (const auto& layer : net.layers()) {
        nlohmann::json weights = nlohmann::json::array();
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                row.push_back(layer.weight(r, c));
            }
            weights.push_back(std::move(row));
        }
        nlohmann::json bias = nlohmann::json::array();
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
            bias.push_back(layer.bias[r]);
        }
        doc["layers"].push_back({{"weights", std::move(weights)}, {"bias", std::move(bias)}});
    }
    return doc;
}

inline MlpNetwork loadNetwork(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open weight file '" + path + "'");
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("weight file '" + path + "': " + e.what());
    }
    return networkFromJson(doc);
}

inline void saveNetwork(const MlpNetwork& net, const std::string& path)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write weight file '" + path + "'");
    }
    out << networkToJson(net).dump();
}

} // namespace nnpsf
