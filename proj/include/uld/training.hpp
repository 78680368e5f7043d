#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uld/data.hpp"
#include "uld/heatmap.hpp"
#include "uld/loss.hpp"
#include "uld/network.hpp"

namespace uld {

// Baseline objective selector. The fixed-sigma baseline regresses the
// predicted heatmaps onto isotropic targets rendered at the annotations
// with pixelwise MSE; the covariance branch receives no gradient.
enum class TrainObjective { nll, mse_fixed_sigma };

struct TrainConfig {
    double learning_rate = 3e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 8;
    int steps = 3000;
    std::uint64_t seed = 0;
    double alpha = 0.1;  // log-det weight of the objective
    Activation decode_activation = Activation::relu;
    double decode_gamma = 1000.0;
    int checkpoint_every = 1000;
    int threads = 0;  // 0: min(hardware, batch_size)
    TrainObjective objective = TrainObjective::nll;
    double baseline_sigma = 2.0;

    void validate() const;
};

struct TrainLogEntry {
    int step = 0;
    double total = 0.0;
    double mahalanobis = 0.0;  // unused by the mse baseline
    double logdet = 0.0;       // unused by the mse baseline
    double wall_ms = 0.0;
    std::string checkpoint;    // path written at this step, if any
};

struct TrainLog {
    bool baseline = false;
    std::vector<TrainLogEntry> entries;
};

// CSV: "step,total,mahalanobis,logdet,wall_ms,checkpoint" or
// "step,mse,wall_ms,checkpoint" for the baseline.
void write_train_log(const TrainLog& log, const std::string& path);

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t t = 0;
};

AdamState make_adam_state(const ModelParams& params);

// Bias-corrected Adam with decoupled weight decay
// (theta -= lr * wd * theta applied after the adaptive step).
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& cfg);

// Per-sample objective value and parameter gradient. Exposed for the
// gradient audits; train() composes it over batches.
struct SampleLoss {
    double total = 0.0;
    double mahalanobis = 0.0;
    double logdet = 0.0;
};
// signature, when non-null, receives the relu masks of the pass (network
// relus plus the decode activation pattern); two passes with equal
// signatures evaluated the same smooth piece of the objective.
SampleLoss sample_loss_and_grad(const Sample& sample, const ModelParams& params,
                                const ModelConfig& mcfg, const TrainConfig& tcfg,
                                std::vector<Tensor>* grads,
                                std::vector<std::uint8_t>* signature = nullptr);

struct TrainResult {
    ModelParams params;
    TrainLog log;
};

// Deterministic minibatch loop: seeded shuffling, per-sample forward and
// backward (optionally in parallel), fixed-order gradient reduction, Adam.
// Writes checkpoint_<step>.uld into ckpt_dir every checkpoint_every steps
// (step 0 included) plus final.uld; pass an empty dir to skip checkpoints.
// Throws DivergenceError when the loss becomes non-finite.
TrainResult train(const Dataset& data, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::string& ckpt_dir);

}  // namespace uld
