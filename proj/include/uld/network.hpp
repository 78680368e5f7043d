#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "uld/covariance.hpp"
#include "uld/heatmap.hpp"
#include "uld/tape.hpp"
#include "uld/tensor.hpp"

namespace uld {

// Encoder/decoder + covariance-branch layout. Parameter shapes (and hence
// the checkpoint layout) are a pure function of this struct.
struct ModelConfig {
    int input_h = 64;
    int input_w = 64;
    int num_landmarks = 4;
    // Five stages; stages 1-2 feed the low-level pyramid, 3-5 the high-level.
    std::array<int, 5> encoder_channels{8, 16, 32, 32, 32};
    // Output channels of the four decoder fusion blocks, coarse to fine.
    std::array<int, 4> decoder_channels{32, 32, 16, 8};
    std::vector<int> msfd_dilations{1, 2, 4};
    int attention_dim = 16;
    int pooled_h = 4;
    int pooled_w = 4;
    PositivityMode positivity_mode = PositivityMode::all_positive;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

// One named parameter tensor. fan_in drives initialization scale.
struct ParamSpec {
    std::string name;
    std::vector<int> shape;
    int fan_in = 1;
    double init_bias = 0.0;  // constant offset added after the random fill
};

// The full spec list in checkpoint order.
std::vector<ParamSpec> param_specs(const ModelConfig& cfg);

std::int64_t param_count(const ModelConfig& cfg);

struct ModelParams {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    int index_of(const std::string& name) const;  // -1 when absent
    std::int64_t total_size() const;
};

// Fan-in-scaled uniform init, U(-sqrt(3/fan_in), sqrt(3/fan_in)), plus the
// per-spec constant offset. Bit-reproducible for a given seed.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Gradient buffers aligned index-for-index with ModelParams::tensors.
std::vector<Tensor> zero_grads(const ModelParams& params);

using PyramidFeatures = std::array<Tensor, 5>;

struct ModelOutput {
    Tensor heatmaps;      // {N, H, W}
    Tensor raw_cholesky;  // {N, 3}, pre-positivity
};

// A retained forward pass: the tape plus the node ids needed to seed
// gradients and read parameter gradients back out.
struct ForwardTrace {
    Tape tape;
    std::vector<int> param_nodes;  // aligned with ModelParams order
    int heatmaps = -1;             // {N,H,W}
    int raw = -1;                  // {3N}
};

ForwardTrace forward_trace(const Tensor& image, const ModelParams& params, const ModelConfig& cfg);

// Convenience wrappers over one-shot tapes.
ModelOutput model_forward(const Tensor& image, const ModelParams& params, const ModelConfig& cfg);
PyramidFeatures encoder_forward(const Tensor& image, const ModelParams& params,
                                const ModelConfig& cfg);
Tensor decoder_forward(const PyramidFeatures& pyramid, const ModelParams& params,
                       const ModelConfig& cfg);
Tensor covariance_branch(const PyramidFeatures& pyramid, const ModelParams& params,
                         const ModelConfig& cfg);  // {N,3}

// Parallel dilated 3x3 convolutions, channel concat, 1x1 fusion; all relu.
// Weight layout: ws[i]/bs[i] per dilation, then fuse_w/fuse_b.
Tensor msfd_block(const Tensor& x, const std::vector<Tensor>& ws, const std::vector<Tensor>& bs,
                  const Tensor& fuse_w, const Tensor& fuse_b, const std::vector<int>& dilations);

// S = softmax(Q K^T / sqrt(d)) V with Q=XWq, K=XWk, V=XWv.
// X: {T,D}, wq/wk: {D,d}, wv: {D,D}; returns {T,D}.
Tensor self_attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv);

// Graph builders shared by the wrappers and the training path.
namespace graph {
struct ParamNodes {
    const ModelParams* params = nullptr;
    std::vector<int> nodes;  // tape leaf per tensor, aligned with params
    int at(const std::string& name) const;
};
ParamNodes bind_params(Tape& tape, const ModelParams& params);
std::array<int, 5> encoder(Tape& t, int image, const ParamNodes& p, const ModelConfig& cfg);
int msfd(Tape& t, int x, const ParamNodes& p, const std::string& prefix, const ModelConfig& cfg);
int decoder(Tape& t, const std::array<int, 5>& stages, const ParamNodes& p, const ModelConfig& cfg);
int attention(Tape& t, int x, int wq, int wk, int wv);
int covariance_head(Tape& t, const std::array<int, 5>& stages, const ParamNodes& p,
                    const ModelConfig& cfg);
}  // namespace graph

// Checkpoint: magic, little-endian u64 JSON-manifest length, manifest
// (config, decode settings, tensor names/shapes), then raw little-endian
// f64 data.
void save_checkpoint(const std::string& path, const ModelParams& params, const ModelConfig& cfg,
                     const HeatmapConfig& decode = HeatmapConfig{});
struct Checkpoint {
    ModelParams params;
    ModelConfig config;
    HeatmapConfig decode;  // decode settings the model was trained with
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace uld
