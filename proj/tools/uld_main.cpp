// uld: synthesize landmark datasets, train the detector, evaluate, render
// overlays, and audit the analytic gradients.
//
// Exit codes: 0 ok, 2 config/usage error, 3 I/O error, 4 training
// divergence, 5 shape incompatibility, 6 gradient audit failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "uld/config_io.hpp"
#include "uld/data.hpp"
#include "uld/errors.hpp"
#include "uld/eval.hpp"
#include "uld/gradcheck.hpp"
#include "uld/heatmap.hpp"
#include "uld/network.hpp"
#include "uld/pgm.hpp"
#include "uld/svg.hpp"
#include "uld/training.hpp"

namespace fs = std::filesystem;
using namespace uld;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitShape = 5;
constexpr int kExitAudit = 6;

struct CommonFlags {
    std::string config_path;
    std::string out;
};

int cmd_synth(const std::string& config_path, const std::string& out, int count,
              std::uint64_t seed) {
    SceneConfig scene;
    if (!config_path.empty()) scene = scene_config_from_json(load_json_file(config_path));
    scene.validate();

    const Dataset ds = generate_dataset(scene, count, seed);
    write_dataset(ds, out);

    // Machine-readable summary: per-landmark mean generator covariance.
    nlohmann::json summary;
    summary["out"] = out;
    summary["samples"] = ds.samples.size();
    summary["num_landmarks"] = ds.num_landmarks;
    summary["image_size"] = {ds.image_h, ds.image_w};
    summary["pixel_spacing_mm"] = ds.pixel_spacing_mm;
    nlohmann::json covs = nlohmann::json::array();
    for (int i = 0; i < ds.num_landmarks; ++i) {
        Covariance2x2 mean{0.0, 0.0, 0.0};
        for (const Sample& s : ds.samples) {
            mean.sxx += s.true_cov[static_cast<std::size_t>(i)].sxx;
            mean.sxy += s.true_cov[static_cast<std::size_t>(i)].sxy;
            mean.syy += s.true_cov[static_cast<std::size_t>(i)].syy;
        }
        const double m = ds.samples.empty() ? 1.0 : static_cast<double>(ds.samples.size());
        covs.push_back({{"sxx", mean.sxx / m}, {"sxy", mean.sxy / m}, {"syy", mean.syy / m}});
    }
    if (!ds.samples.empty()) summary["mean_true_cov"] = covs;
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

int cmd_train(const std::string& data_dir, const std::string& config_path, const std::string& out,
              const std::string& baseline, const CLI::App* sub, double lr_flag, int steps_flag,
              std::uint64_t seed_flag, int batch_flag, double alpha_flag,
              const std::string& activation_flag, const std::string& positivity_flag,
              int threads_flag) {
    TrainFileConfig cfg;
    if (!config_path.empty()) cfg = train_file_from_json(load_json_file(config_path));

    // Flags override file values.
    if (sub->count("--lr")) cfg.train.learning_rate = lr_flag;
    if (sub->count("--steps")) cfg.train.steps = steps_flag;
    if (sub->count("--seed")) cfg.train.seed = seed_flag;
    if (sub->count("--batch-size")) cfg.train.batch_size = batch_flag;
    if (sub->count("--alpha")) cfg.train.alpha = alpha_flag;
    if (sub->count("--activation"))
        cfg.train.decode_activation = activation_from_string(activation_flag);
    if (sub->count("--positivity"))
        cfg.model.positivity_mode = positivity_mode_from_string(positivity_flag);
    if (sub->count("--threads")) cfg.train.threads = threads_flag;
    if (!baseline.empty()) {
        if (baseline != "mse-fixed-sigma") {
            throw ConfigError("unknown baseline '" + baseline + "' (only mse-fixed-sigma)");
        }
        cfg.train.objective = TrainObjective::mse_fixed_sigma;
    }

    const Dataset ds = read_dataset(data_dir);
    cfg.model.input_h = ds.image_h;
    cfg.model.input_w = ds.image_w;
    cfg.model.num_landmarks = ds.num_landmarks;
    cfg.model.validate();
    cfg.train.validate();

    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create " + out + ": " + ec.message());
    {
        nlohmann::json effective;
        effective["model"] = model_config_to_json(cfg.model);
        effective["train"] = train_config_to_json(cfg.train);
        std::ofstream f(fs::path(out) / "train_config.json");
        if (!f) throw IoError("cannot write train_config.json in " + out);
        f << effective.dump(2) << "\n";
    }

    const TrainResult res = train(ds, cfg.model, cfg.train, out);
    write_train_log(res.log, (fs::path(out) / "train_log.csv").string());

    nlohmann::json summary;
    summary["checkpoint"] = (fs::path(out) / "final.uld").string();
    summary["steps"] = cfg.train.steps;
    if (!res.log.entries.empty()) {
        summary["initial_loss"] = res.log.entries.front().total;
        summary["final_loss"] = res.log.entries.back().total;
    }
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

void write_eval_svgs(const std::string& dir, const Dataset& ds, const EvalReport& rep,
                     const std::vector<PerSamplePrediction>& per_sample) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

    const int n = ds.num_landmarks;
    for (std::size_t s = 0; s < ds.samples.size(); ++s) {
        SvgOverlay svg(ds.image_w, ds.image_h);
        for (int i = 0; i < n; ++i) {
            const Vec2 gt = ds.samples[s].gt_landmarks[static_cast<std::size_t>(i)];
            const Vec2 pred = per_sample[s].preds[static_cast<std::size_t>(i)];
            if (!ds.samples[s].true_cov.empty()) {
                svg.add_ellipse(
                    ellipse_from_covariance(ds.samples[s].true_cov[static_cast<std::size_t>(i)], gt, 2.0),
                    "#00e5ff");
            }
            svg.add_ellipse(
                ellipse_from_covariance(per_sample[s].cov[static_cast<std::size_t>(i)], pred, 2.0),
                "#ffd400");
            svg.add_point(gt, 0.8, "#5a4fcf", std::to_string(i));
            svg.add_point(pred, 0.8, "#ffd400");
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), "sample_%05zu.svg", s);
        svg.write((fs::path(dir) / buf).string());
    }

    // Displacement clouds about the per-landmark mean position, with the
    // empirical (red) and mean predicted (yellow) 2-sigma ellipses.
    SvgOverlay cloud(ds.image_w, ds.image_h);
    for (int i = 0; i < n; ++i) {
        Vec2 mean_gt{0.0, 0.0};
        for (const Sample& s : ds.samples) {
            mean_gt.x += s.gt_landmarks[static_cast<std::size_t>(i)].x / static_cast<double>(ds.samples.size());
            mean_gt.y += s.gt_landmarks[static_cast<std::size_t>(i)].y / static_cast<double>(ds.samples.size());
        }
        for (std::size_t s = 0; s < ds.samples.size(); ++s) {
            const Vec2 d = per_sample[s].preds[static_cast<std::size_t>(i)] -
                           ds.samples[s].gt_landmarks[static_cast<std::size_t>(i)];
            cloud.add_point(mean_gt + d, 0.3, "#d0d0d0");
        }
        cloud.add_ellipse(ellipse_from_covariance(rep.empirical_cov[static_cast<std::size_t>(i)], mean_gt, 2.0),
                          "#ff5252");
        cloud.add_ellipse(
            ellipse_from_covariance(rep.mean_predicted_cov[static_cast<std::size_t>(i)], mean_gt, 2.0),
            "#ffd400");
        cloud.add_point(mean_gt, 0.6, "#5a4fcf", std::to_string(i));
    }
    cloud.write((fs::path(dir) / "displacements.svg").string());
}

int cmd_eval(const std::string& data_dir, const std::string& ckpt_path, const std::string& out,
             const std::string& svg_dir, const CLI::App* sub, double cov_scale,
             const std::string& activation_flag, double gamma_flag) {
    const Dataset ds = read_dataset(data_dir);
    const Checkpoint ck = load_checkpoint(ckpt_path);

    EvalOptions opts;
    opts.decode = ck.decode;
    if (sub->count("--activation")) opts.decode.activation = activation_from_string(activation_flag);
    if (sub->count("--gamma")) opts.decode.gamma = gamma_flag;
    opts.covariance_scale = cov_scale;

    std::vector<PerSamplePrediction> per_sample;
    const EvalReport rep = evaluate(ds, ck.params, ck.config, opts, &per_sample);

    {
        std::ofstream f(out);
        if (!f) throw IoError("cannot open for writing: " + out);
        f << report_to_json(rep);
        if (!f) throw IoError("write failure: " + out);
    }

    // Per-sample predictions for independent recounts.
    const std::string pred_path = out + ".pred.csv";
    {
        std::ofstream f(pred_path);
        if (!f) throw IoError("cannot open for writing: " + pred_path);
        f << "sample,landmark,pred_x,pred_y,gt_x,gt_y,cov_sxx,cov_sxy,cov_syy\n";
        char buf[256];
        for (std::size_t s = 0; s < ds.samples.size(); ++s) {
            for (int i = 0; i < ds.num_landmarks; ++i) {
                const Vec2 p = per_sample[s].preds[static_cast<std::size_t>(i)];
                const Vec2 g = ds.samples[s].gt_landmarks[static_cast<std::size_t>(i)];
                const Covariance2x2& c = per_sample[s].cov[static_cast<std::size_t>(i)];
                std::snprintf(buf, sizeof(buf), "%zu,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", s, i,
                              p.x, p.y, g.x, g.y, c.sxx, c.sxy, c.syy);
                f << buf;
            }
        }
    }

    if (!svg_dir.empty()) write_eval_svgs(svg_dir, ds, rep, per_sample);

    std::cout << report_to_json(rep);
    return kExitOk;
}

int cmd_render(const std::string& ckpt_path, const std::string& sample_path,
               const std::string& out) {
    const Checkpoint ck = load_checkpoint(ckpt_path);

    if (sample_path.size() < 4 || sample_path.substr(sample_path.size() - 4) != ".pgm") {
        throw ConfigError("--sample must point to the sample's .pgm image");
    }
    const std::string stem = sample_path.substr(0, sample_path.size() - 4);

    const Pgm16 img = read_pgm16(sample_path);
    if (img.width != ck.config.input_w || img.height != ck.config.input_h) {
        throw ShapeError("sample is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         " but the checkpoint expects " + std::to_string(ck.config.input_w) + "x" +
                         std::to_string(ck.config.input_h));
    }
    Tensor image;
    image.shape = {1, img.height, img.width};
    image.v = dequantize_unit(img);

    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create " + out + ": " + ec.message());

    const ModelOutput mo = model_forward(image, ck.params, ck.config);
    const int n = ck.config.num_landmarks;
    const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;

    SvgOverlay svg(img.width, img.height);
    Heatmap view;
    view.grid = {img.height, img.width};
    for (int i = 0; i < n; ++i) {
        view.values.assign(mo.heatmaps.v.begin() + static_cast<std::ptrdiff_t>(i * plane),
                           mo.heatmaps.v.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane));

        // Max-normalized 16-bit export.
        double vmax = 0.0;
        for (double v : view.values) vmax = std::max(vmax, v);
        std::vector<double> unit(view.values.size(), 0.0);
        if (vmax > 0.0) {
            for (std::size_t j = 0; j < unit.size(); ++j)
                unit[j] = std::max(view.values[j], 0.0) / vmax;
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), "heatmap_%02d.pgm", i);
        write_pgm16((fs::path(out) / buf).string(), quantize_unit(unit, img.width, img.height));

        const Vec2 pred = soft_argmax(view, ck.decode);
        const std::array<double, 3> raw{mo.raw_cholesky.v[static_cast<std::size_t>(3 * i)],
                                        mo.raw_cholesky.v[static_cast<std::size_t>(3 * i + 1)],
                                        mo.raw_cholesky.v[static_cast<std::size_t>(3 * i + 2)]};
        const Covariance2x2 cov = reconstruct(cholesky_from_raw(raw, ck.config.positivity_mode));
        svg.add_ellipse(ellipse_from_covariance(cov, pred, 2.0), "#ffd400");
        svg.add_point(pred, 0.8, "#ffd400", std::to_string(i));
    }

    // Ground truth, when stored next to the image.
    const std::string gt_path = stem + "_gt.csv";
    if (fs::exists(gt_path)) {
        std::ifstream f(gt_path);
        std::string line;
        int i = 0;
        while (std::getline(f, line) && i < n) {
            double x = 0.0, y = 0.0;
            if (std::sscanf(line.c_str(), "%lf,%lf", &x, &y) == 2) {
                svg.add_point({x, y}, 0.8, "#5a4fcf");
            }
            ++i;
        }
    }
    svg.write((fs::path(out) / "overlay.svg").string());

    nlohmann::json summary;
    summary["out"] = out;
    summary["heatmaps"] = n;
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, int trials, double inject_fault) {
    if (trials == 0) {
        std::cerr << "warning: --trials 0 makes the audit vacuous\n";
        std::cout << "vacuous pass (0 trials)\n";
        return kExitOk;
    }
    AuditOptions opts;
    opts.seed = seed;
    opts.loss_trials = trials;
    opts.softargmax_trials = trials;
    opts.network_trials = trials;
    opts.fault_injection = inject_fault;
    const AuditResult res = run_gradient_audit(opts);
    std::cout << res.summary() << "\n";
    return res.pass ? kExitOk : kExitAudit;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-aware landmark detection pipeline"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    std::string synth_config, synth_out;
    int synth_count = 100;
    std::uint64_t synth_seed = 0;
    synth->add_option("--config", synth_config, "Scene config JSON");
    synth->add_option("--out", synth_out, "Output dataset directory")->required();
    synth->add_option("--count", synth_count, "Number of samples");
    synth->add_option("--seed", synth_seed, "Master seed");

    // train
    auto* tr = app.add_subcommand("train", "Train on a dataset directory");
    std::string tr_data, tr_config, tr_out, tr_baseline, tr_activation, tr_positivity;
    double tr_lr = 3e-4, tr_alpha = 0.1;
    int tr_steps = 3000, tr_batch = 8, tr_threads = 0;
    std::uint64_t tr_seed = 0;
    tr->add_option("--data", tr_data, "Dataset directory")->required();
    tr->add_option("--config", tr_config, "Train config JSON ({model, train})");
    tr->add_option("--out", tr_out, "Checkpoint/log output directory")->required();
    tr->add_option("--baseline", tr_baseline, "Baseline objective (mse-fixed-sigma)");
    tr->add_option("--lr", tr_lr, "Learning rate");
    tr->add_option("--steps", tr_steps, "Training steps");
    tr->add_option("--seed", tr_seed, "Shuffle/init seed");
    tr->add_option("--batch-size", tr_batch, "Batch size");
    tr->add_option("--alpha", tr_alpha, "Log-det regularization weight");
    tr->add_option("--activation", tr_activation, "Decode activation");
    tr->add_option("--positivity", tr_positivity, "Positivity mode (all_positive|diag_only)");
    tr->add_option("--threads", tr_threads, "Worker threads (0 = auto)");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string ev_data, ev_ckpt, ev_out, ev_svg, ev_activation;
    double ev_cov_scale = 1.0, ev_gamma = 1000.0;
    ev->add_option("--data", ev_data, "Dataset directory")->required();
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required();
    ev->add_option("--out", ev_out, "Report JSON path")->required();
    ev->add_option("--svg", ev_svg, "Directory for SVG overlays");
    ev->add_option("--cov-scale", ev_cov_scale,
                   "Scale applied to predicted covariances before comparison");
    ev->add_option("--activation", ev_activation, "Decode activation override");
    ev->add_option("--gamma", ev_gamma, "Decode gamma override");

    // render
    auto* rd = app.add_subcommand("render", "Render heatmaps and an overlay for one sample");
    std::string rd_ckpt, rd_sample, rd_out;
    rd->add_option("--ckpt", rd_ckpt, "Checkpoint file")->required();
    rd->add_option("--sample", rd_sample, "Path to the sample's .pgm image")->required();
    rd->add_option("--out", rd_out, "Output directory")->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference audit of analytic gradients");
    std::uint64_t gc_seed = 0;
    int gc_trials = 1000;
    double gc_fault = 0.0;
    gc->add_option("--seed", gc_seed, "Audit seed");
    gc->add_option("--trials", gc_trials, "Randomized trials per audit family");
    gc->add_option("--inject-fault", gc_fault, "Perturb one analytic gradient (audit must fail)")
        ->group("");  // hidden test hook

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_config, synth_out, synth_count, synth_seed);
        if (tr->parsed()) {
            return cmd_train(tr_data, tr_config, tr_out, tr_baseline, tr, tr_lr, tr_steps, tr_seed,
                             tr_batch, tr_alpha, tr_activation, tr_positivity, tr_threads);
        }
        if (ev->parsed()) {
            return cmd_eval(ev_data, ev_ckpt, ev_out, ev_svg, ev, ev_cov_scale, ev_activation,
                            ev_gamma);
        }
        if (rd->parsed()) return cmd_render(rd_ckpt, rd_sample, rd_out);
        if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_trials, gc_fault);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return kExitShape;
    } catch (const AuditError& e) {
        std::cerr << "audit error: " << e.what() << "\n";
        return kExitAudit;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
