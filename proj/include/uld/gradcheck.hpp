#pragma once

#include <cstdint>
#include <string>

namespace uld {

// Central-difference audits of the analytic gradients: the objective
// directly (through the factor construction), the decode Jacobian, and the
// end-to-end objective through the full network.
struct AuditOptions {
    std::uint64_t seed = 0;
    int loss_trials = 1000;        // random (pred, gt, raw, alpha, mode) tuples
    int softargmax_trials = 1000;  // random heatmaps, several pixels each
    int network_trials = 1000;     // random parameter probes across configs
    int params_per_network = 25;   // probes per sampled config
    double fd_step = 1e-5;
    double tol_loss = 1e-4;
    double tol_network = 1e-3;
    // Test hook: offset added to the first audited analytic network
    // gradient, to prove the audit actually fails on a wrong gradient.
    double fault_injection = 0.0;
};

struct AuditResult {
    int loss_trials = 0;
    double loss_max_rel = 0.0;
    int softargmax_trials = 0;
    double softargmax_max_rel = 0.0;
    int network_trials = 0;
    double network_max_rel = 0.0;
    // Probes discarded because a relu changed linear region inside the
    // central-difference window (the comparison is only valid on a single
    // smooth piece); they are resampled, not counted as trials.
    int kink_skips = 0;
    bool pass = false;
    std::string summary() const;
};

AuditResult run_gradient_audit(const AuditOptions& opts);

}  // namespace uld
