#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "uld/errors.hpp"
#include "uld/eval.hpp"

using namespace uld;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("mre closed-form cases") {
    CHECK(mre({{3, 4}}, {{0, 0}}, 0.1) == doctest::Approx(0.5));  // 3-4-5 triangle
    CHECK(mre({{7, 9}, {1, 2}}, {{7, 9}, {1, 2}}, 0.1) == doctest::Approx(0.0));
    // radial errors 1 and 3 px -> mean 2 px
    CHECK(mre({{1, 0}, {0, 3}}, {{0, 0}, {0, 0}}, 0.1) == doctest::Approx(0.2));
    CHECK_THROWS_AS(mre({{1, 1}}, {}, 0.1), ShapeError);
}

TEST_CASE("mre is translation invariant and linear in spacing") {
    Rng rng(3);
    std::vector<Vec2> preds, gts, preds_t, gts_t;
    for (int i = 0; i < 50; ++i) {
        preds.push_back({rng.uniform(0.0, 50.0), rng.uniform(0.0, 50.0)});
        gts.push_back({rng.uniform(0.0, 50.0), rng.uniform(0.0, 50.0)});
        preds_t.push_back({preds.back().x + 11.5, preds.back().y - 3.25});
        gts_t.push_back({gts.back().x + 11.5, gts.back().y - 3.25});
    }
    CHECK(mre(preds_t, gts_t, 0.1) == doctest::Approx(mre(preds, gts, 0.1)).epsilon(1e-12));
    CHECK(mre(preds, gts, 0.3) == doctest::Approx(3.0 * mre(preds, gts, 0.1)).epsilon(1e-12));
}

TEST_CASE("sdr threshold is strict and values match a recount") {
    // distances 1.9 mm and 2.1 mm at spacing 0.1 (19 px and 21 px)
    const std::vector<Vec2> preds{{19, 0}, {21, 0}};
    const std::vector<Vec2> gts{{0, 0}, {0, 0}};
    const auto r = sdr(preds, gts, {2.0}, 0.1);
    CHECK(r.at(2.0) == doctest::Approx(50.0));

    // boundary-equal counts as failure
    const auto rb = sdr({{20, 0}}, {{0, 0}}, {2.0}, 0.1);
    CHECK(rb.at(2.0) == doctest::Approx(0.0));

    const auto perfect = sdr(gts, gts, kDefaultSdrRadiiMm, 0.1);
    for (const auto& [radius, pct] : perfect) CHECK(pct == doctest::Approx(100.0));
}

TEST_CASE("sdr equals the brute-force recount and is monotone in radius") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Vec2> preds, gts;
        const int n = 20;
        for (int i = 0; i < n; ++i) {
            gts.push_back({rng.uniform(0.0, 60.0), rng.uniform(0.0, 60.0)});
            preds.push_back({gts.back().x + rng.normal(0.0, 10.0), gts.back().y + rng.normal(0.0, 10.0)});
        }
        const double spacing = 0.1;
        const auto result = sdr(preds, gts, kDefaultSdrRadiiMm, spacing);
        double prev = -1.0;
        for (const double radius : kDefaultSdrRadiiMm) {
            int acc = 0;
            for (int i = 0; i < n; ++i) {
                const double dx = preds[static_cast<std::size_t>(i)].x - gts[static_cast<std::size_t>(i)].x;
                const double dy = preds[static_cast<std::size_t>(i)].y - gts[static_cast<std::size_t>(i)].y;
                if (spacing * std::sqrt(dx * dx + dy * dy) < radius) ++acc;
            }
            const double expected = 100.0 * acc / n;
            CHECK(result.at(radius) == expected);  // exact equality
            CHECK(result.at(radius) >= prev);
            prev = result.at(radius);
        }
    }
}

TEST_CASE("empirical covariance closed-form cases") {
    const Covariance2x2 collinear = empirical_covariance({{1, 0}, {-1, 0}});
    CHECK(collinear.sxx == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(collinear.syy == doctest::Approx(1e-9).epsilon(0.1));
    CHECK(collinear.det() > 0.0);

    const Covariance2x2 sym = empirical_covariance({{1, 1}, {-1, -1}, {1, -1}, {-1, 1}});
    CHECK(sym.sxx == doctest::Approx(1.0));
    CHECK(sym.sxy == doctest::Approx(0.0));
    CHECK(sym.syy == doctest::Approx(1.0));

    CHECK_THROWS_AS(empirical_covariance({{1, 1}}), InsufficientSamplesError);
}

TEST_CASE("empirical covariance equals the outer-product mean on any input") {
    Rng rng(9);
    std::vector<Vec2> d;
    Covariance2x2 manual{0, 0, 0};
    const int m = 777;
    for (int i = 0; i < m; ++i) {
        d.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
        manual.sxx += d.back().x * d.back().x / m;
        manual.sxy += d.back().x * d.back().y / m;
        manual.syy += d.back().y * d.back().y / m;
    }
    const Covariance2x2 emp = empirical_covariance(d);
    CHECK(emp.sxx == doctest::Approx(manual.sxx).epsilon(1e-12));
    CHECK(emp.sxy == doctest::Approx(manual.sxy).epsilon(1e-12));
    CHECK(emp.syy == doctest::Approx(manual.syy).epsilon(1e-12));
}

TEST_CASE("empirical covariance recovers a known matrix from draws") {
    Rng rng(11);
    const Covariance2x2 s{4, 2, 5};
    std::vector<Vec2> draws;
    for (int i = 0; i < 100000; ++i) draws.push_back(sample_gaussian_2d(s, rng));
    const Covariance2x2 emp = empirical_covariance(draws);
    CHECK(test::frobenius_diff(emp, s) / test::frobenius(s) < 0.05);
}

TEST_CASE("covariance agreement scores") {
    const AgreementScore same = covariance_agreement({4, 1, 2}, {4, 1, 2});
    CHECK(same.frobenius_rel == doctest::Approx(0.0));
    CHECK(same.angle_error_rad == doctest::Approx(0.0));

    const AgreementScore swapped = covariance_agreement({4, 0, 1}, {1, 0, 4});
    CHECK(swapped.angle_error_rad == doctest::Approx(kPi / 2.0));

    // reference rotated by 10 degrees
    const double th = 10.0 * kPi / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const Covariance2x2 rot{4 * c * c + 1 * s * s, (4 - 1) * c * s, 4 * s * s + 1 * c * c};
    const AgreementScore ten = covariance_agreement({4, 0, 1}, rot);
    CHECK(std::fabs(ten.angle_error_rad - th) < 1e-9);

    // isotropic reference reports angle 0 by convention
    const AgreementScore iso = covariance_agreement({4, 1, 2}, {3, 0, 3});
    CHECK(iso.angle_error_rad == doctest::Approx(0.0));
}

TEST_CASE("evaluate rejects mismatched geometry") {
    SceneConfig scene;
    scene.image_h = 32;
    scene.image_w = 32;
    scene.num_landmarks = 2;
    scene.semi_axis_x_min = 6;
    scene.semi_axis_x_max = 7;
    scene.semi_axis_y_min = 5;
    scene.semi_axis_y_max = 6;
    scene.noise_tangent_sigma = 1.5;
    scene.noise_normal_sigma = 0.6;
    scene.center_jitter_px = 1.0;
    const Dataset ds = generate_dataset(scene, 2, 3);

    ModelConfig mcfg;
    mcfg.input_h = 32;
    mcfg.input_w = 32;
    mcfg.num_landmarks = 4;  // dataset has 2
    mcfg.encoder_channels = {4, 8, 8, 8, 8};
    mcfg.decoder_channels = {8, 8, 8, 4};
    const ModelParams params = init_params(mcfg, 1);
    EvalOptions opts;
    CHECK_THROWS_AS(evaluate(ds, params, mcfg, opts), ShapeError);
}

TEST_CASE("evaluate produces a sane report and stable json") {
    SceneConfig scene;
    scene.image_h = 32;
    scene.image_w = 32;
    scene.num_landmarks = 2;
    scene.semi_axis_x_min = 6;
    scene.semi_axis_x_max = 7;
    scene.semi_axis_y_min = 5;
    scene.semi_axis_y_max = 6;
    scene.noise_tangent_sigma = 1.5;
    scene.noise_normal_sigma = 0.6;
    scene.center_jitter_px = 1.0;
    const Dataset ds = generate_dataset(scene, 4, 21);

    ModelConfig mcfg;
    mcfg.input_h = 32;
    mcfg.input_w = 32;
    mcfg.num_landmarks = 2;
    mcfg.encoder_channels = {4, 8, 8, 8, 8};
    mcfg.decoder_channels = {8, 8, 8, 4};
    const ModelParams params = init_params(mcfg, 2);

    EvalOptions opts;
    std::vector<PerSamplePrediction> per_sample;
    const EvalReport rep = evaluate(ds, params, mcfg, opts, &per_sample);
    CHECK(rep.mre_mm > 0.0);
    CHECK(std::isfinite(rep.mre_mm));
    CHECK(rep.per_landmark_mre.size() == 2);
    CHECK(rep.covariance_agreement.size() == 2);
    CHECK(per_sample.size() == 4);
    for (const auto& [radius, pct] : rep.sdr) {
        CHECK(pct >= 0.0);
        CHECK(pct <= 100.0);
    }
    // monotone in radius
    double prev = -1.0;
    for (const auto& [radius, pct] : rep.sdr) {
        CHECK(pct >= prev);
        prev = pct;
    }

    const std::string j1 = report_to_json(rep);
    const std::string j2 = report_to_json(rep);
    CHECK(j1 == j2);
    CHECK(j1.find("\"mre_mm\"") != std::string::npos);
    CHECK(j1.find("\"sdr\"") != std::string::npos);
    CHECK(j1.find("\"2.5\"") != std::string::npos);
}
