#pragma once

#include "pcad/geometry.hpp"

#include <array>
#include <cstdint>

namespace pcad {

/// Layer widths of the encoder/decoder. The default is the canonical
/// full-scale network; tiny() is a miniature used by gradient checks.
struct ModelConfig {
    int latent_dim = 512;                 // d
    std::array<int, 3> enc_widths{64, 64, 64};
    int graph_a_width = 128;
    int graph_b_width = 1024;
    int bottleneck_width = 512;
    std::array<int, 2> fold_widths{512, 512};

    static ModelConfig standard() { return {}; }
    static ModelConfig tiny() {
        ModelConfig c;
        c.latent_dim = 8;
        c.enc_widths = {8, 8, 8};
        c.graph_a_width = 8;
        c.graph_b_width = 16;
        c.bottleneck_width = 16;
        c.fold_widths = {16, 16};
        return c;
    }

    int skip_width() const { return enc_widths[2] + graph_a_width + graph_b_width; }
    bool operator==(const ModelConfig&) const = default;
};

/// Per-cloud diagonal Gaussian: mean and log variance, both latent_dim long.
struct LatentGaussian {
    Eigen::VectorXd mu;
    Eigen::VectorXd logvar;
};

/// A standard-normal draw with its seed recorded for provenance.
struct NoiseDraw {
    Eigen::VectorXd eps;
    std::uint64_t seed = 0;
};

NoiseDraw draw_noise(int dim, std::uint64_t seed);

struct DenseLayer {
    Eigen::MatrixXd w; // in x out
    Eigen::VectorXd b; // out
};

/// All weights, in the fixed flatten order:
/// enc1..enc3, graph_a, graph_b, bottleneck, mu_head, logvar_head,
/// fold1[0..2], fold2[0..2]; per layer the matrix (column-major) then the
/// bias. The checkpoint format serializes exactly this order.
struct ModelParams {
    ModelConfig config;
    DenseLayer enc1, enc2, enc3;
    DenseLayer graph_a, graph_b;
    DenseLayer bottleneck;
    DenseLayer mu_head, logvar_head;
    std::array<DenseLayer, 3> fold1;
    std::array<DenseLayer, 3> fold2;

    std::int64_t parameter_count() const;
    Eigen::VectorXd flatten() const;
    void unflatten(const Eigen::VectorXd& flat);

    template <typename F>
    void for_each_layer(F f) {
        f(enc1); f(enc2); f(enc3); f(graph_a); f(graph_b); f(bottleneck);
        f(mu_head); f(logvar_head);
        for (auto& l : fold1) f(l);
        for (auto& l : fold2) f(l);
    }
    template <typename F>
    void for_each_layer(F f) const {
        f(enc1); f(enc2); f(enc3); f(graph_a); f(graph_b); f(bottleneck);
        f(mu_head); f(logvar_head);
        for (const auto& l : fold1) f(l);
        for (const auto& l : fold2) f(l);
    }
};

/// Weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero;
/// deterministic in seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Zero-valued parameter set with the same shapes (gradient accumulator).
ModelParams zeros_like(const ModelParams& params);

/// Parameter-independent encoder inputs of a cloud: its k-NN graph and the
/// xyz | local-covariance feature rows. Training loops precompute these
/// once per cloud.
struct EncoderInputs {
    NeighborGraph graph;
    Eigen::MatrixXd features; // n x 12
};

EncoderInputs make_encoder_inputs(const PointCloud& cloud, int k);

/// Covariance-augmented graph encoder. Permutation-invariant in the point
/// order; requires more than k points.
LatentGaussian encode(const ModelParams& params, const PointCloud& cloud, int k);

/// z = mu + eps .* exp(logvar / 2)
Eigen::VectorXd reparameterize(const LatentGaussian& latent, const NoiseDraw& noise);

/// Two-fold decoder: each grid point is deformed by an MLP on [z | point],
/// then refined by a second MLP on [z | fold1 point].
PointCloud decode(const ModelParams& params, const Eigen::VectorXd& z, const SphereGrid& grid);

/// Which terms of the composite loss are active.
struct LossSpec {
    bool rec = true;
    bool kl_ori = true;
    bool kl_rec = true;
};

/// Scalar loss terms of one forward pass.
struct LossValues {
    double rec = 0.0;
    double kl_ori = 0.0;
    double kl_rec = 0.0;
};

/// Loss terms without gradients. Disabled terms are reported as zero.
/// `inputs`, when given, must be make_encoder_inputs(cloud, k).
LossValues forward_loss(const ModelParams& params, const PointCloud& cloud,
                        const NoiseDraw& noise, const SphereGrid& grid, int k,
                        const LossSpec& spec, const EncoderInputs* inputs = nullptr);

/// Gradient of the selected loss sum with respect to every parameter, in
/// flatten order. Nearest-neighbor matches, k-NN selections, and argmaxes
/// are held fixed (piecewise-constant); the reconstruction's encoder pass
/// is differentiated through, including its covariance features.
Eigen::VectorXd param_gradients(const ModelParams& params, const PointCloud& cloud,
                                const NoiseDraw& noise, const SphereGrid& grid, int k,
                                const LossSpec& spec, LossValues* values_out = nullptr,
                                const EncoderInputs* inputs = nullptr);

} // namespace pcad
