#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "nnpsf/network.hpp"
#include "test_support.hpp"

using namespace nnpsf;
using nnpsf::testutil::randomNetwork;
using nnpsf::testutil::randomVector;

namespace {

std::string writeTemp(const std::string& name, const std::string& content)
{
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream(path) << content;
    return path.string();
}

/// Plain loop evaluation, independent of the Eigen expression path.
Vector referenceForward(const MlpNetwork& net, const Vector& z)
{
    std::vector<double> a(z.data(), z.data() + z.size());
    for (std::size_t l = 0; l < net.numLayers(); ++l) {
        const auto& L = net.layers()[l];
        std::vector<double> y(static_cast<std::size_t>(L.weight.rows()));
        for (Eigen::Index r = 0; r < L.weight.rows(); ++r) {
            double s = L.bias[r];
            for (Eigen::Index c = 0; c < L.weight.cols(); ++c) {
                s += L.weight(r, c) * a[static_cast<std::size_t>(c)];
            }
            y[static_cast<std::size_t>(r)] = (l + 1 < net.numLayers() && s < 0.0) ? 0.0 : s;
        }
        a = std::move(y);
    }
    return Eigen::Map<Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
}

} // namespace

TEST(Network, IdentityLayerFromJson)
{
    const auto net = networkFromJson(nlohmann::json::parse(
        R"({"input_dim":2,"output_dim":2,"activation":"relu","layers":[{"weights":[[1,0],[0,1]],"bias":[0,0]}]})"));
    const Vector z = (Vector(2) << 0.3, 1.7).finished();
    EXPECT_EQ(net.forward(z), z);
}

TEST(Network, ReluClampsNegativeInput)
{
    // z -> ReLU(z) -> identity output layer
    MlpNetwork net({DenseLayer{Matrix::Ones(1, 1), Vector::Zero(1)}, DenseLayer{Matrix::Ones(1, 1), Vector::Zero(1)}});
    EXPECT_DOUBLE_EQ(net.forward(Vector::Constant(1, -1.0))[0], 0.0);
    EXPECT_DOUBLE_EQ(net.forward(Vector::Constant(1, 2.5))[0], 2.5);
}

TEST(Network, ForwardMatchesLoopEvaluation)
{
    std::mt19937_64 rng(7);
    const auto net = randomNetwork(rng, {3, 64, 64, 64, 2});
    for (int i = 0; i < 100; ++i) {
        const Vector z = randomVector(rng, 3, -3.0, 3.0);
        EXPECT_LE((net.forward(z) - referenceForward(net, z)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Network, JacobianMatchesFiniteDifferences)
{
    std::mt19937_64 rng(11);
    const auto net = randomNetwork(rng, {3, 32, 32, 2});
    const double h = 1e-6;
    for (int i = 0; i < 20; ++i) {
        const Vector z = randomVector(rng, 3, -2.0, 2.0);
        const Matrix J = net.jacobian(z);
        Matrix fd(2, 3);
        for (int k = 0; k < 3; ++k) {
            Vector e = Vector::Zero(3);
            e[k] = h;
            fd.col(k) = (net.forward(z + e) - net.forward(z - e)) / (2.0 * h);
        }
        EXPECT_LE((J - fd).cwiseAbs().maxCoeff(), 1e-5);
    }
}

TEST(Network, ZeroNetworkIsZero)
{
    const auto net = MlpNetwork::zero(3, 2);
    EXPECT_EQ(net.forward(Vector::Ones(3)), Vector::Zero(2));
    EXPECT_EQ(net.jacobian(Vector::Ones(3)), Matrix::Zero(2, 3));
}

TEST(Network, RejectsWrongInputLength)
{
    const auto net = MlpNetwork::zero(3, 2);
    EXPECT_THROW((void)net.forward(Vector::Ones(2)), DimensionError);
}

TEST(Network, LoadErrors)
{
    EXPECT_THROW(loadNetwork("/nonexistent/weights.json"), IoError);
    EXPECT_THROW(loadNetwork(writeTemp("nnpsf_bad.json", "{not json")), FormatError);
    EXPECT_THROW(networkFromJson(nlohmann::json::parse(
                     R"({"input_dim":2,"output_dim":2,"activation":"tanh","layers":[{"weights":[[1,0],[0,1]],"bias":[0,0]}]})")),
                 FormatError);
    EXPECT_THROW(networkFromJson(nlohmann::json::parse(
                     R"({"input_dim":2,"output_dim":2,"activation":"relu","layers":[{"weights":[[1,0],[0]],"bias":[0,0]}]})")),
                 DimensionError);
    EXPECT_THROW(networkFromJson(nlohmann::json::parse(
                     R"({"input_dim":3,"output_dim":2,"activation":"relu","layers":[{"weights":[[1,0],[0,1]],"bias":[0,0]}]})")),
                 DimensionError);
    EXPECT_THROW(networkFromJson(nlohmann::json::parse(
                     R"({"input_dim":2,"output_dim":2,"activation":"relu","layers":[{"weights":[[1,0],[0,1]],"bias":[0]}]})")),
                 DimensionError);
    EXPECT_THROW(networkFromJson(nlohmann::json::parse(
                     R"({"input_dim":2,"output_dim":1,"activation":"relu","layers":[{"weights":[[1,0],[0,1]],"bias":[0,0]},{"weights":[[1,1,1]],"bias":[0]}]})")),
                 DimensionError);
    EXPECT_THROW(networkFromJson(nlohmann::json::parse(R"({"input_dim":2,"output_dim":2,"activation":"relu"})")),
                 FormatError);
}

TEST(Network, SaveLoadRoundTripIsExact)
{
    std::mt19937_64 rng(3);
    const auto net = randomNetwork(rng, {3, 16, 16, 2});
    const auto path = (std::filesystem::temp_directory_path() / "nnpsf_roundtrip.json").string();
    saveNetwork(net, path);
    const auto back = loadNetwork(path);
    ASSERT_EQ(back.numLayers(), net.numLayers());
    for (std::size_t l = 0; l < net.numLayers(); ++l) {
        EXPECT_EQ(back.layers()[l].weight, net.layers()[l].weight);
        EXPECT_EQ(back.layers()[l].bias, net.layers()[l].bias);
    }
    std::remove(path.c_str());
}

TEST(Network, CheckedInWeightsLoad)
{
    const auto net = loadNetwork(std::string(NNPSF_DATA_DIR) + "/pendulum_residual.json");
    EXPECT_EQ(net.inputDim(), 3);
    EXPECT_EQ(net.outputDim(), 2);
    EXPECT_EQ(net.numLayers(), 4u);
}
