#include "uld/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "uld/heatmap.hpp"
#include "uld/loss.hpp"
#include "uld/network.hpp"
#include "uld/rng.hpp"
#include "uld/training.hpp"

namespace uld {

namespace {

// Standard gradcheck comparison: relative where the gradients are sizable,
// absolute where both are essentially zero (dead paths legitimately give
// exact zeros on both sides).
double grad_error(double analytic, double fd) {
    const double denom = std::max(std::fabs(analytic), std::fabs(fd));
    if (denom < 1e-7) return std::fabs(analytic - fd) < 1e-7 ? 0.0 : 1.0;
    return std::fabs(analytic - fd) / denom;
}

double audit_loss_grads(const AuditOptions& opts, Rng& rng) {
    double max_rel = 0.0;
    for (int trial = 0; trial < opts.loss_trials; ++trial) {
        const PositivityMode mode =
            (trial % 2 == 0) ? PositivityMode::all_positive : PositivityMode::diag_only;
        const Vec2 gt{rng.uniform(0.0, 32.0), rng.uniform(0.0, 32.0)};
        const Vec2 pred{gt.x + rng.uniform(-5.0, 5.0), gt.y + rng.uniform(-5.0, 5.0)};
        const std::array<double, 3> raw{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0),
                                        rng.uniform(-3.0, 3.0)};
        const LossConfig cfg{rng.uniform(0.0, 0.5)};

        const NllGrad g = nll_loss_grad(pred, gt, raw, mode, cfg);
        auto f = [&](Vec2 p, const std::array<double, 3>& r) {
            return nll_loss(p, gt, cholesky_from_raw(r, mode), cfg);
        };
        const double h = opts.fd_step;

        const double fd_px = (f({pred.x + h, pred.y}, raw) - f({pred.x - h, pred.y}, raw)) / (2 * h);
        const double fd_py = (f({pred.x, pred.y + h}, raw) - f({pred.x, pred.y - h}, raw)) / (2 * h);
        max_rel = std::max(max_rel, grad_error(g.d_pred.x, fd_px));
        max_rel = std::max(max_rel, grad_error(g.d_pred.y, fd_py));
        for (int k = 0; k < 3; ++k) {
            std::array<double, 3> rp = raw, rm = raw;
            rp[static_cast<std::size_t>(k)] += h;
            rm[static_cast<std::size_t>(k)] -= h;
            const double fd = (f(pred, rp) - f(pred, rm)) / (2 * h);
            max_rel = std::max(max_rel, grad_error(g.d_raw[static_cast<std::size_t>(k)], fd));
        }
    }
    return max_rel;
}

double audit_softargmax(const AuditOptions& opts, Rng& rng) {
    double max_rel = 0.0;
    const Grid grid{12, 14};
    for (int trial = 0; trial < opts.softargmax_trials; ++trial) {
        HeatmapConfig cfg;
        cfg.activation = (trial % 2 == 0) ? Activation::relu : Activation::exp_softmax;
        Heatmap hm;
        hm.grid = grid;
        hm.values.resize(static_cast<std::size_t>(grid.height) * grid.width);
        for (double& v : hm.values) {
            if (cfg.activation == Activation::exp_softmax) {
                v = rng.uniform(-1.0, 1.0);
            } else {
                // Keep values clear of the relu kink by more than the step.
                v = rng.uniform(0.01, 1.0);
                if (rng.uniform() < 0.3) v = -v;
            }
        }

        const std::vector<double> gx = soft_argmax_backward(hm, cfg, {1.0, 0.0});
        const std::vector<double> gy = soft_argmax_backward(hm, cfg, {0.0, 1.0});
        const double h = opts.fd_step;
        for (int probe = 0; probe < 6; ++probe) {
            const std::size_t i = static_cast<std::size_t>(rng.uniform_int(hm.values.size()));
            const double orig = hm.values[i];
            hm.values[i] = orig + h;
            const Vec2 plus = soft_argmax(hm, cfg);
            hm.values[i] = orig - h;
            const Vec2 minus = soft_argmax(hm, cfg);
            hm.values[i] = orig;
            max_rel = std::max(max_rel, grad_error(gx[i], (plus.x - minus.x) / (2 * h)));
            max_rel = std::max(max_rel, grad_error(gy[i], (plus.y - minus.y) / (2 * h)));
        }
    }
    return max_rel;
}

struct NetworkAudit {
    double max_rel = 0.0;
    int trials = 0;
    int kink_skips = 0;
};

NetworkAudit audit_network(const AuditOptions& opts, Rng& rng) {
    NetworkAudit res;
    bool fault_pending = opts.fault_injection != 0.0;
    while (res.trials < opts.network_trials) {
        ModelConfig mcfg;
        mcfg.input_h = 16;
        mcfg.input_w = 16;
        mcfg.num_landmarks = 2;
        mcfg.positivity_mode =
            rng.uniform() < 0.5 ? PositivityMode::all_positive : PositivityMode::diag_only;
        mcfg.seed = rng.raw();

        TrainConfig tcfg;
        tcfg.alpha = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.05, 1.0);
        tcfg.decode_activation = rng.uniform() < 0.5 ? Activation::relu : Activation::exp_softmax;

        ModelParams params = init_params(mcfg, mcfg.seed);

        Sample sample;
        sample.image = Tensor::zeros({1, 16, 16});
        for (double& v : sample.image.v) v = rng.uniform(0.0, 1.0);
        for (int i = 0; i < mcfg.num_landmarks; ++i) {
            sample.annotation.push_back({rng.uniform(3.0, 13.0), rng.uniform(3.0, 13.0)});
            sample.gt_landmarks.push_back(sample.annotation.back());
        }

        std::vector<Tensor> grads = zero_grads(params);
        sample_loss_and_grad(sample, params, mcfg, tcfg, &grads);

        const int probes = std::min(opts.params_per_network, opts.network_trials - res.trials);
        const double h = opts.fd_step;
        int attempts = 0;
        for (int probe = 0; probe < probes && attempts < 8 * probes; ++attempts) {
            const std::size_t ti = static_cast<std::size_t>(rng.uniform_int(params.tensors.size()));
            const std::size_t ei =
                static_cast<std::size_t>(rng.uniform_int(params.tensors[ti].v.size()));
            double analytic = grads[ti].v[ei];
            if (fault_pending) {
                analytic += opts.fault_injection;
                fault_pending = false;
            }

            double& theta = params.tensors[ti].v[ei];
            const double orig = theta;
            std::vector<std::uint8_t> sig_plus, sig_minus;
            theta = orig + h;
            const double lp = sample_loss_and_grad(sample, params, mcfg, tcfg, nullptr, &sig_plus).total;
            theta = orig - h;
            const double lm = sample_loss_and_grad(sample, params, mcfg, tcfg, nullptr, &sig_minus).total;
            theta = orig;

            if (sig_plus != sig_minus) {
                ++res.kink_skips;
                continue;  // not a valid smooth window; probe another parameter
            }
            const double fd = (lp - lm) / (2 * h);
            res.max_rel = std::max(res.max_rel, grad_error(analytic, fd));
            ++probe;
            ++res.trials;
        }
    }
    return res;
}

}  // namespace

std::string AuditResult::summary() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "objective-grad: %d trials, max rel err %.3e\n"
                  "decode-jacobian: %d trials, max rel err %.3e\n"
                  "network-grad: %d trials, max rel err %.3e (%d kink probes resampled)\n"
                  "result: %s",
                  loss_trials, loss_max_rel, softargmax_trials, softargmax_max_rel, network_trials,
                  network_max_rel, kink_skips, pass ? "PASS" : "FAIL");
    return buf;
}

AuditResult run_gradient_audit(const AuditOptions& opts) {
    AuditResult r;
    Rng rng(derive_seed(opts.seed, 0x6ad17));
    r.loss_trials = opts.loss_trials;
    r.loss_max_rel = audit_loss_grads(opts, rng);
    r.softargmax_trials = opts.softargmax_trials;
    r.softargmax_max_rel = audit_softargmax(opts, rng);
    const NetworkAudit na = audit_network(opts, rng);
    r.network_trials = na.trials;
    r.network_max_rel = na.max_rel;
    r.kink_skips = na.kink_skips;
    r.pass = r.loss_max_rel < opts.tol_loss && r.softargmax_max_rel < opts.tol_loss &&
             r.network_max_rel < opts.tol_network;
    return r;
}

}  // namespace uld
