#include "uld/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <thread>

#include "uld/errors.hpp"

namespace fs = std::filesystem;

namespace uld {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (steps < 0) throw ConfigError("steps must be non-negative");
    if (alpha < 0.0) throw ConfigError("alpha must be non-negative");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (threads < 0) throw ConfigError("threads must be non-negative");
    if (!(baseline_sigma > 0.0)) throw ConfigError("baseline_sigma must be positive");
    if (!(decode_gamma > 0.0)) throw ConfigError("decode_gamma must be positive");
}

AdamState make_adam_state(const ModelParams& params) {
    AdamState s;
    s.m = zero_grads(params);
    s.v = zero_grads(params);
    s.t = 0;
    return s;
}

void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& cfg) {
    if (grads.size() != params.tensors.size()) throw ShapeError("adam_step gradient count mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        Tensor& p = params.tensors[i];
        const Tensor& g = grads[i];
        if (!p.same_shape(g)) throw ShapeError("adam_step shape mismatch at tensor " + params.names[i]);
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.v.size(); ++j) {
            m.v[j] = cfg.beta1 * m.v[j] + (1.0 - cfg.beta1) * g.v[j];
            v.v[j] = cfg.beta2 * v.v[j] + (1.0 - cfg.beta2) * g.v[j] * g.v[j];
            const double mhat = m.v[j] / bc1;
            const double vhat = v.v[j] / bc2;
            p.v[j] -= cfg.learning_rate * (mhat / (std::sqrt(vhat) + cfg.epsilon));
            p.v[j] -= cfg.learning_rate * cfg.weight_decay * p.v[j];
        }
    }
}

namespace {

// Seeds heatmap/raw gradients for the objective and runs the tape backward,
// accumulating into grads (which must be zero_grads-shaped).
SampleLoss nll_sample_pass(const Sample& sample, const ModelParams& params, const ModelConfig& mcfg,
                           const TrainConfig& tcfg, std::vector<Tensor>* grads,
                           std::vector<std::uint8_t>* signature) {
    const int n = mcfg.num_landmarks;
    ForwardTrace tr = forward_trace(sample.image, params, mcfg);
    const Tensor& hm = tr.tape.val(tr.heatmaps);
    const Tensor& raw = tr.tape.val(tr.raw);
    const HeatmapConfig hcfg{tcfg.decode_gamma, tcfg.decode_activation};
    const LossConfig lcfg{tcfg.alpha};

    const int H = mcfg.input_h, W = mcfg.input_w;
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    std::vector<Vec2> preds(static_cast<std::size_t>(n));
    std::vector<std::array<double, 3>> raws(static_cast<std::size_t>(n));
    Heatmap view;
    view.grid = {H, W};
    for (int i = 0; i < n; ++i) {
        view.values.assign(hm.v.begin() + static_cast<std::ptrdiff_t>(i * plane),
                           hm.v.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane));
        preds[static_cast<std::size_t>(i)] = soft_argmax(view, hcfg);
        raws[static_cast<std::size_t>(i)] = {raw.v[static_cast<std::size_t>(3 * i)],
                                             raw.v[static_cast<std::size_t>(3 * i + 1)],
                                             raw.v[static_cast<std::size_t>(3 * i + 2)]};
    }

    const LossBreakdown lb =
        batch_loss(preds, sample.annotation, raws, mcfg.positivity_mode, lcfg);

    if (signature) {
        *signature = tr.tape.relu_signature();
        if (tcfg.decode_activation != Activation::exp_softmax) {
            signature->reserve(signature->size() + hm.v.size());
            for (double v : hm.v) signature->push_back(v > 0.0 ? 1 : 0);
        }
    }

    SampleLoss out;
    out.total = lb.total;
    out.mahalanobis = lb.mahalanobis_term;
    out.logdet = lb.logdet_term;
    if (!grads) return out;

    // Mean over the sample's landmarks; the caller averages over the batch.
    const double inv_n = 1.0 / n;
    Tensor& ghm = tr.tape.grad(tr.heatmaps);
    Tensor& graw = tr.tape.grad(tr.raw);
    for (int i = 0; i < n; ++i) {
        const NllGrad g = nll_loss_grad(preds[static_cast<std::size_t>(i)],
                                        sample.annotation[static_cast<std::size_t>(i)],
                                        raws[static_cast<std::size_t>(i)], mcfg.positivity_mode, lcfg);
        view.values.assign(hm.v.begin() + static_cast<std::ptrdiff_t>(i * plane),
                           hm.v.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane));
        const std::vector<double> dh =
            soft_argmax_backward(view, hcfg, {g.d_pred.x * inv_n, g.d_pred.y * inv_n});
        double* dst = ghm.data() + static_cast<std::size_t>(i) * plane;
        for (std::size_t j = 0; j < plane; ++j) dst[j] += dh[j];
        for (int k = 0; k < 3; ++k)
            graw.v[static_cast<std::size_t>(3 * i + k)] += g.d_raw[static_cast<std::size_t>(k)] * inv_n;
    }
    tr.tape.backward();
    for (std::size_t i = 0; i < grads->size(); ++i) {
        const Tensor& pg = tr.tape.grad(tr.param_nodes[i]);
        for (std::size_t j = 0; j < pg.v.size(); ++j) (*grads)[i].v[j] += pg.v[j];
    }
    return out;
}

SampleLoss mse_sample_pass(const Sample& sample, const ModelParams& params, const ModelConfig& mcfg,
                           const TrainConfig& tcfg, std::vector<Tensor>* grads,
                           std::vector<std::uint8_t>* signature) {
    const int n = mcfg.num_landmarks;
    const int H = mcfg.input_h, W = mcfg.input_w;
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    ForwardTrace tr = forward_trace(sample.image, params, mcfg);
    const Tensor& hm = tr.tape.val(tr.heatmaps);

    // Unit-peak isotropic targets at the annotated positions.
    const double sigma = tcfg.baseline_sigma;
    HeatmapConfig target_cfg;
    target_cfg.gamma = 2.0 * 3.14159265358979323846 * sigma * sigma;
    const Grid grid{H, W};

    double se = 0.0;
    Tensor* ghm = grads ? &tr.tape.grad(tr.heatmaps) : nullptr;
    const double inv_count = 1.0 / (static_cast<double>(n) * plane);
    for (int i = 0; i < n; ++i) {
        const Heatmap target =
            render_isotropic(sample.annotation[static_cast<std::size_t>(i)], sigma, target_cfg, grid);
        const double* pred = hm.data() + static_cast<std::size_t>(i) * plane;
        for (std::size_t j = 0; j < plane; ++j) {
            const double d = pred[j] - target.values[j];
            se += d * d;
            if (ghm) ghm->v[static_cast<std::size_t>(i) * plane + j] += 2.0 * d * inv_count;
        }
    }

    SampleLoss out;
    out.total = se * inv_count;
    if (signature) *signature = tr.tape.relu_signature();
    if (grads) {
        tr.tape.backward();
        for (std::size_t i = 0; i < grads->size(); ++i) {
            const Tensor& pg = tr.tape.grad(tr.param_nodes[i]);
            for (std::size_t j = 0; j < pg.v.size(); ++j) (*grads)[i].v[j] += pg.v[j];
        }
    }
    return out;
}

}  // namespace

SampleLoss sample_loss_and_grad(const Sample& sample, const ModelParams& params,
                                const ModelConfig& mcfg, const TrainConfig& tcfg,
                                std::vector<Tensor>* grads, std::vector<std::uint8_t>* signature) {
    return tcfg.objective == TrainObjective::nll
               ? nll_sample_pass(sample, params, mcfg, tcfg, grads, signature)
               : mse_sample_pass(sample, params, mcfg, tcfg, grads, signature);
}

void write_train_log(const TrainLog& log, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    if (log.baseline) {
        f << "step,mse,wall_ms,checkpoint\n";
        for (const auto& e : log.entries) {
            f << e.step << "," << e.total << "," << e.wall_ms << "," << e.checkpoint << "\n";
        }
    } else {
        f << "step,total,mahalanobis,logdet,wall_ms,checkpoint\n";
        for (const auto& e : log.entries) {
            f << e.step << "," << e.total << "," << e.mahalanobis << "," << e.logdet << ","
              << e.wall_ms << "," << e.checkpoint << "\n";
        }
    }
    if (!f) throw IoError("write failure: " + path);
}

TrainResult train(const Dataset& data, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::string& ckpt_dir) {
    mcfg.validate();
    tcfg.validate();
    if (data.samples.empty()) throw ConfigError("training needs a non-empty dataset");
    if (data.num_landmarks != mcfg.num_landmarks || data.image_h != mcfg.input_h ||
        data.image_w != mcfg.input_w) {
        throw ShapeError("dataset geometry does not match the model config");
    }

    TrainResult res;
    res.params = init_params(mcfg, mcfg.seed);
    res.log.baseline = tcfg.objective == TrainObjective::mse_fixed_sigma;
    AdamState adam = make_adam_state(res.params);

    const bool checkpoints = !ckpt_dir.empty();
    auto ckpt_path = [&](int step) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "checkpoint_%06d.uld", step);
        return (fs::path(ckpt_dir) / buf).string();
    };
    const HeatmapConfig decode{tcfg.decode_gamma, tcfg.decode_activation};
    if (checkpoints) {
        std::error_code ec;
        fs::create_directories(ckpt_dir, ec);
        if (ec) throw IoError("cannot create checkpoint dir " + ckpt_dir + ": " + ec.message());
        save_checkpoint(ckpt_path(0), res.params, mcfg, decode);
    }

    const int nthreads = tcfg.threads > 0
                             ? tcfg.threads
                             : std::max(1, std::min<int>(static_cast<int>(std::thread::hardware_concurrency()),
                                                         tcfg.batch_size));

    Rng shuffle_rng(derive_seed(tcfg.seed, 0x0bad));
    std::vector<std::size_t> order(data.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);
    std::size_t cursor = 0;
    auto next_batch = [&](int size) {
        std::vector<std::size_t> batch;
        batch.reserve(static_cast<std::size_t>(size));
        for (int i = 0; i < size; ++i) {
            if (cursor == order.size()) {
                shuffle_rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }
        return batch;
    };

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Tensor> batch_grads = zero_grads(res.params);

    for (int step = 1; step <= tcfg.steps; ++step) {
        const std::vector<std::size_t> batch = next_batch(tcfg.batch_size);

        // One gradient buffer per batch slot so the reduction order is the
        // batch order, independent of thread scheduling.
        std::vector<std::vector<Tensor>> slot_grads(batch.size());
        std::vector<SampleLoss> slot_loss(batch.size());
        try {
            std::vector<std::future<void>> futures;
            const std::size_t stride = batch.size();
            auto worker = [&](std::size_t first) {
                for (std::size_t k = first; k < stride; k += static_cast<std::size_t>(nthreads)) {
                    slot_grads[k] = zero_grads(res.params);
                    slot_loss[k] = sample_loss_and_grad(data.samples[batch[k]], res.params, mcfg,
                                                        tcfg, &slot_grads[k]);
                }
            };
            futures.reserve(static_cast<std::size_t>(nthreads));
            for (int w = 1; w < nthreads; ++w) {
                futures.push_back(std::async(std::launch::async, worker, static_cast<std::size_t>(w)));
            }
            worker(0);
            for (auto& fu : futures) fu.get();
        } catch (const DegenerateHeatmapError& e) {
            throw DivergenceError("training diverged at step " + std::to_string(step) + ": " +
                                  e.what());
        }

        for (auto& g : batch_grads)
            std::fill(g.v.begin(), g.v.end(), 0.0);
        double total = 0.0, mahal = 0.0, logdet = 0.0;
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        for (std::size_t k = 0; k < batch.size(); ++k) {
            total += slot_loss[k].total * inv_b;
            mahal += slot_loss[k].mahalanobis * inv_b;
            logdet += slot_loss[k].logdet * inv_b;
            for (std::size_t i = 0; i < batch_grads.size(); ++i) {
                const Tensor& sg = slot_grads[k][i];
                for (std::size_t j = 0; j < sg.v.size(); ++j) batch_grads[i].v[j] += sg.v[j] * inv_b;
            }
        }

        if (!std::isfinite(total)) {
            throw DivergenceError("loss became non-finite at step " + std::to_string(step) +
                                  " (total=" + std::to_string(total) + ")");
        }

        adam_step(res.params, batch_grads, adam, tcfg);

        TrainLogEntry e;
        e.step = step;
        e.total = total;
        e.mahalanobis = mahal;
        e.logdet = logdet;
        e.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (checkpoints && (step % tcfg.checkpoint_every == 0)) {
            e.checkpoint = ckpt_path(step);
            save_checkpoint(e.checkpoint, res.params, mcfg, decode);
        }
        res.log.entries.push_back(std::move(e));
    }

    if (checkpoints) {
        save_checkpoint((fs::path(ckpt_dir) / "final.uld").string(), res.params, mcfg, decode);
    }
    return res;
}

}  // namespace uld
