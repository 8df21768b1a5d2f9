#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <ws3d/kernels.hpp>
#include <ws3d/matrix.hpp>
#include <ws3d/synthgen.hpp>

namespace ws3d {

struct NetworkDims {
    int input = 7; // centred xyz, normal, radial distance
    int hidden = 64;
    int classes = 15; // K + 1
    int embed = 32;
    int conf_hidden = 32;
    int knn = 16;

    void validate() const;
    friend bool operator==(const NetworkDims&, const NetworkDims&) = default;
};

/// Layers in checkpoint declaration order.
enum class Layer : int {
    Encoder1,   // input -> hidden
    Encoder2,   // hidden -> hidden
    Mixer,      // [hidden, pooled] -> hidden
    SegHead,    // hidden -> classes
    ConfHidden, // hidden -> conf_hidden
    ConfOut,    // conf_hidden -> 1, sigmoid
    Proj1,      // hidden -> hidden
    Proj2,      // hidden -> embed
};
inline constexpr std::size_t kNumLayers = 8;

/// Confidence is `floor + (1 - 2 floor) * sigmoid(z)`, so it never reaches
/// the range where the confidence-weighted cross-entropy stops training the
/// segmentation head.
inline constexpr double kConfidenceFloor = 0.1;

struct LayerShape {
    std::string_view name;
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;

    friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// All weights and biases in one flat vector; layers are views into it.
class NetworkParams {
public:
    NetworkParams() = default;
    explicit NetworkParams(const NetworkDims& dims);

    const NetworkDims& dims() const noexcept { return m_dims; }
    std::size_t size() const noexcept { return m_values.size(); }
    std::vector<double>& values() noexcept { return m_values; }
    const std::vector<double>& values() const noexcept { return m_values; }
    const LayerShape& shape(Layer layer) const { return m_layers[static_cast<std::size_t>(layer)]; }
    const std::array<LayerShape, kNumLayers>& layers() const noexcept { return m_layers; }

    kernels::LinearView view(Layer layer) const;
    kernels::LinearGradView grad_view(Layer layer, std::span<double> grads) const;

    bool all_finite() const;

    friend bool operator==(const NetworkParams&, const NetworkParams&) = default;

private:
    NetworkDims m_dims;
    std::array<LayerShape, kNumLayers> m_layers{};
    std::vector<double> m_values;
};

/// Xavier-uniform weights within +-sqrt(6 / (fan_in + fan_out)), zero biases.
NetworkParams init_params(const NetworkDims& dims, std::uint64_t seed);

/// Per-scan network input: point features plus the k-NN pooling table. Pure
/// function of the positions and normals, so it is built once per scan.
struct ScanInput {
    Matrix features;
    kernels::NeighborTable neighbors;
};

ScanInput prepare_input(const LabeledScan& scan, int knn);

struct Prediction {
    Matrix logits;                 // N x (K + 1)
    std::vector<double> confidence; // N, strictly inside (0, 1)
    Matrix hidden;                 // N x hidden
    Matrix embedding;              // N x embed, projection head

    std::size_t size() const noexcept { return confidence.size(); }
};

/// Upstream gradients of a scalar loss with respect to the prediction. Empty
/// members count as zero.
struct PredictionGrad {
    Matrix logits;
    std::vector<double> confidence;
    Matrix embedding;

    static PredictionGrad zeros_like(const Prediction& pred);
    PredictionGrad& operator+=(const PredictionGrad& other);
    PredictionGrad& scale(double s);
};

/// Intermediate activations kept by `forward` for `backward`.
class ForwardTape {
public:
    bool recorded() const noexcept { return m_input != nullptr; }
    void clear() { *this = ForwardTape{}; }

private:
    friend Prediction forward(const ScanInput&, const NetworkParams&, ForwardTape*);
    friend std::vector<double> backward(const ForwardTape&, const NetworkParams&, const PredictionGrad&);

    const ScanInput* m_input = nullptr;
    Matrix m_h1, m_h2, m_pooled, m_concat, m_hidden, m_conf_hidden, m_proj_hidden;
    std::vector<double> m_gate; // sigmoid output of the confidence head
};

/// Runs the network. When `tape` is given it records what `backward` needs;
/// the tape refers to `input`, which must outlive it.
Prediction forward(const ScanInput& input, const NetworkParams& params, ForwardTape* tape = nullptr);

/// Exact reverse-mode gradient of the loss whose prediction gradients are
/// `grad`, flattened like NetworkParams::values(). Throws UsageError when
/// the tape holds no forward pass.
std::vector<double> backward(const ForwardTape& tape, const NetworkParams& params,
                             const PredictionGrad& grad);

/// "WSNN" checkpoint, version 1.
inline constexpr std::uint8_t kCheckpointVersion = 1;
std::vector<std::uint8_t> encode_params(const NetworkParams& params);
NetworkParams decode_params(const std::vector<std::uint8_t>& bytes);
void save_params(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_params(const std::filesystem::path& path);

} // namespace ws3d
