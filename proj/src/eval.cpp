#include "uld/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <thread>

#include "json.hpp"
#include "uld/errors.hpp"

namespace uld {

double mre(const std::vector<Vec2>& preds, const std::vector<Vec2>& gts, double spacing_mm) {
    if (preds.size() != gts.size()) throw ShapeError("mre length mismatch");
    if (preds.empty()) throw ShapeError("mre needs at least one instance");
    if (!(spacing_mm > 0.0)) throw ConfigError("pixel spacing must be positive");
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double dx = preds[i].x - gts[i].x;
        const double dy = preds[i].y - gts[i].y;
        sum += std::sqrt(dx * dx + dy * dy);
    }
    return spacing_mm * sum / static_cast<double>(preds.size());
}

std::map<double, double> sdr(const std::vector<Vec2>& preds, const std::vector<Vec2>& gts,
                             const std::vector<double>& radii_mm, double spacing_mm) {
    if (preds.size() != gts.size()) throw ShapeError("sdr length mismatch");
    if (preds.empty()) throw ShapeError("sdr needs at least one instance");
    std::map<double, double> out;
    for (double radius : radii_mm) {
        if (!(radius > 0.0)) throw ConfigError("sdr radius must be positive");
        std::size_t acc = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const double dx = (preds[i].x - gts[i].x) * spacing_mm;
            const double dy = (preds[i].y - gts[i].y) * spacing_mm;
            if (std::sqrt(dx * dx + dy * dy) < radius) ++acc;
        }
        out[radius] = 100.0 * static_cast<double>(acc) / static_cast<double>(preds.size());
    }
    return out;
}

Covariance2x2 empirical_covariance(const std::vector<Vec2>& displacements) {
    if (displacements.size() < 2) {
        throw InsufficientSamplesError("empirical covariance needs at least 2 displacements, got " +
                                       std::to_string(displacements.size()));
    }
    Covariance2x2 s{0.0, 0.0, 0.0};
    const double inv = 1.0 / static_cast<double>(displacements.size());
    for (const Vec2& d : displacements) {
        s.sxx += d.x * d.x * inv;
        s.sxy += d.x * d.y * inv;
        s.syy += d.y * d.y * inv;
    }
    if (!(s.sxx > 0.0 && s.syy > 0.0 && s.det() > 0.0)) {
        s.sxx += 1e-9;
        s.syy += 1e-9;
    }
    return s;
}

namespace {

double dominant_angle(const Covariance2x2& s) {
    return 0.5 * std::atan2(2.0 * s.sxy, s.sxx - s.syy);
}

bool is_isotropic(const Covariance2x2& s) {
    const double mean = 0.5 * (s.sxx + s.syy);
    const double diff = 0.5 * (s.sxx - s.syy);
    const double disc = std::sqrt(diff * diff + s.sxy * s.sxy);
    return disc <= 1e-12 * std::max(1.0, mean);
}

double frobenius(const Covariance2x2& s) {
    return std::sqrt(s.sxx * s.sxx + 2.0 * s.sxy * s.sxy + s.syy * s.syy);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

AgreementScore covariance_agreement(const Covariance2x2& predicted, const Covariance2x2& reference) {
    AgreementScore sc;
    const Covariance2x2 diff{predicted.sxx - reference.sxx, predicted.sxy - reference.sxy,
                             predicted.syy - reference.syy};
    sc.frobenius_rel = frobenius(diff) / frobenius(reference);
    if (is_isotropic(reference)) {
        sc.angle_error_rad = 0.0;
    } else {
        double d = std::fabs(dominant_angle(predicted) - dominant_angle(reference));
        d = std::fmod(d, 3.14159265358979323846);
        if (d > 0.5 * 3.14159265358979323846) d = 3.14159265358979323846 - d;
        sc.angle_error_rad = d;
    }
    return sc;
}

EvalReport evaluate(const Dataset& data, const ModelParams& params, const ModelConfig& cfg,
                    const EvalOptions& opts, std::vector<PerSamplePrediction>* per_sample) {
    if (data.image_h != cfg.input_h || data.image_w != cfg.input_w ||
        data.num_landmarks != cfg.num_landmarks) {
        throw ShapeError("checkpoint expects " + std::to_string(cfg.input_h) + "x" +
                         std::to_string(cfg.input_w) + "/" + std::to_string(cfg.num_landmarks) +
                         " landmarks, dataset is " + std::to_string(data.image_h) + "x" +
                         std::to_string(data.image_w) + "/" + std::to_string(data.num_landmarks));
    }
    if (data.samples.empty()) throw ConfigError("evaluation needs a non-empty dataset");

    const int n = cfg.num_landmarks;
    const std::size_t M = data.samples.size();
    const std::size_t plane = static_cast<std::size_t>(cfg.input_h) * cfg.input_w;

    std::vector<PerSamplePrediction> results(M);
    const int nthreads = std::max(1, std::min<int>(static_cast<int>(std::thread::hardware_concurrency()),
                                                   static_cast<int>(M)));
    auto worker = [&](std::size_t first) {
        for (std::size_t s = first; s < M; s += static_cast<std::size_t>(nthreads)) {
            const ModelOutput out = model_forward(data.samples[s].image, params, cfg);
            PerSamplePrediction& r = results[s];
            r.preds.resize(static_cast<std::size_t>(n));
            r.cov.resize(static_cast<std::size_t>(n));
            Heatmap view;
            view.grid = {cfg.input_h, cfg.input_w};
            for (int i = 0; i < n; ++i) {
                view.values.assign(out.heatmaps.v.begin() + static_cast<std::ptrdiff_t>(i * plane),
                                   out.heatmaps.v.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane));
                r.preds[static_cast<std::size_t>(i)] = soft_argmax(view, opts.decode);
                const std::array<double, 3> raw{out.raw_cholesky.v[static_cast<std::size_t>(3 * i)],
                                                out.raw_cholesky.v[static_cast<std::size_t>(3 * i + 1)],
                                                out.raw_cholesky.v[static_cast<std::size_t>(3 * i + 2)]};
                Covariance2x2 c = reconstruct(cholesky_from_raw(raw, cfg.positivity_mode));
                c.sxx *= opts.covariance_scale;
                c.sxy *= opts.covariance_scale;
                c.syy *= opts.covariance_scale;
                r.cov[static_cast<std::size_t>(i)] = c;
            }
        }
    };
    {
        std::vector<std::future<void>> futures;
        for (int w = 1; w < nthreads; ++w)
            futures.push_back(std::async(std::launch::async, worker, static_cast<std::size_t>(w)));
        worker(0);
        for (auto& fu : futures) fu.get();
    }

    EvalReport rep;
    std::vector<Vec2> all_preds, all_gts;
    all_preds.reserve(M * static_cast<std::size_t>(n));
    all_gts.reserve(M * static_cast<std::size_t>(n));
    for (std::size_t s = 0; s < M; ++s) {
        for (int i = 0; i < n; ++i) {
            all_preds.push_back(results[s].preds[static_cast<std::size_t>(i)]);
            all_gts.push_back(data.samples[s].gt_landmarks[static_cast<std::size_t>(i)]);
        }
    }
    rep.mre_mm = mre(all_preds, all_gts, data.pixel_spacing_mm);
    rep.sdr = sdr(all_preds, all_gts, opts.radii_mm, data.pixel_spacing_mm);

    const bool has_true = !data.samples.front().true_cov.empty();
    for (int i = 0; i < n; ++i) {
        std::vector<Vec2> lm_preds, lm_gts, displacements;
        Covariance2x2 mean_cov{0.0, 0.0, 0.0};
        std::vector<double> frob, angle;
        for (std::size_t s = 0; s < M; ++s) {
            const Vec2 p = results[s].preds[static_cast<std::size_t>(i)];
            const Vec2 g = data.samples[s].gt_landmarks[static_cast<std::size_t>(i)];
            lm_preds.push_back(p);
            lm_gts.push_back(g);
            displacements.push_back(p - g);
            const Covariance2x2& c = results[s].cov[static_cast<std::size_t>(i)];
            mean_cov.sxx += c.sxx / static_cast<double>(M);
            mean_cov.sxy += c.sxy / static_cast<double>(M);
            mean_cov.syy += c.syy / static_cast<double>(M);
            if (has_true) {
                const AgreementScore sc =
                    covariance_agreement(c, data.samples[s].true_cov[static_cast<std::size_t>(i)]);
                frob.push_back(sc.frobenius_rel);
                angle.push_back(sc.angle_error_rad);
            }
        }
        rep.per_landmark_mre.push_back(mre(lm_preds, lm_gts, data.pixel_spacing_mm));
        const Covariance2x2 emp = M >= 2 ? empirical_covariance(displacements)
                                         : Covariance2x2{1e-9, 0.0, 1e-9};
        rep.empirical_cov.push_back(emp);
        rep.mean_predicted_cov.push_back(mean_cov);
        const AgreementScore disp_sc = covariance_agreement(mean_cov, emp);
        rep.displacement_agreement.push_back({disp_sc.frobenius_rel, disp_sc.angle_error_rad});
        if (has_true) {
            rep.covariance_agreement.push_back({median(frob), median(angle)});
        }
    }

    if (per_sample) *per_sample = std::move(results);
    return rep;
}

namespace {

std::string fmt_radius(double r) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", r);
    return buf;
}

nlohmann::json cov_json(const Covariance2x2& c) {
    return {{"sxx", c.sxx}, {"sxy", c.sxy}, {"syy", c.syy}};
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["mre_mm"] = report.mre_mm;
    nlohmann::json sdrj = nlohmann::json::object();
    for (const auto& [radius, pct] : report.sdr) sdrj[fmt_radius(radius)] = pct;
    j["sdr"] = sdrj;
    j["per_landmark_mre_mm"] = report.per_landmark_mre;

    auto agreements = [](const std::vector<LandmarkAgreement>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& a : v) {
            arr.push_back({{"frobenius_rel", a.frobenius_rel}, {"angle_error_rad", a.angle_error_rad}});
        }
        return arr;
    };
    if (!report.covariance_agreement.empty()) j["covariance_agreement"] = agreements(report.covariance_agreement);
    j["displacement_agreement"] = agreements(report.displacement_agreement);

    nlohmann::json emp = nlohmann::json::array(), pred = nlohmann::json::array();
    for (const auto& c : report.empirical_cov) emp.push_back(cov_json(c));
    for (const auto& c : report.mean_predicted_cov) pred.push_back(cov_json(c));
    j["empirical_covariance"] = emp;
    j["mean_predicted_covariance"] = pred;
    return j.dump(2) + "\n";
}

}  // namespace uld
